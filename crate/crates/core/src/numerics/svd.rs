//! One-sided (Hestenes) Jacobi singular value decomposition.
//!
//! Column pairs of a working copy of the input are rotated until mutually
//! orthogonal; the column norms are then the singular values and the
//! accumulated rotations form `V`. Accurate to working precision for the
//! small dense matrices used by Procrustes alignment.

use super::matrix::{dot, Matrix};
use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Sweep cap before reporting non-convergence.
pub const MAX_SWEEPS: usize = 100;

/// Largest supported dimension.
pub const MAX_DIM: usize = 1024;

/// Thin SVD `a = u · diag(s) · vᵀ` with `s` non-negative and descending.
///
/// For an `m × n` input with `k = min(m, n)`: `u` is `m × k`, `s` has `k`
/// entries, `v` is `n × k`. Columns of `u` and `v` are orthonormal even when
/// `a` is rank deficient.
#[derive(Debug, Clone)]
pub struct Svd<T = f64> {
    pub u: Matrix<T>,
    pub s: Vec<T>,
    pub v: Matrix<T>,
}

impl<T: Scalar> Svd<T> {
    pub fn reconstruct(&self) -> Matrix<T> {
        let k = self.s.len();
        let mut us = self.u.clone();
        for r in 0..us.rows() {
            for c in 0..k {
                us[(r, c)] *= self.s[c];
            }
        }
        us.matmul(&self.v.transpose())
            .expect("svd factor shapes are consistent")
    }
}

pub fn svd<T: Scalar>(a: &Matrix<T>) -> Result<Svd<T>> {
    let (m, n) = a.shape();
    if m > MAX_DIM || n > MAX_DIM {
        return Err(Error::dims("svd", format!("dims <= {MAX_DIM}"), format!("{m}x{n}")));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("svd input"));
    }
    if m < n {
        let t = svd_tall(&a.transpose())?;
        return Ok(Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    svd_tall(a)
}

/// Requires `m >= n`.
fn svd_tall<T: Scalar>(a: &Matrix<T>) -> Result<Svd<T>> {
    let (m, n) = a.shape();
    // columns stored contiguously
    let mut work: Vec<Vec<T>> = (0..n).map(|c| a.column(c)).collect();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|c| {
            let mut e = vec![T::zero(); n];
            e[c] = T::one();
            e
        })
        .collect();

    let tol = T::epsilon() * T::cast(m.max(1) as f64).sqrt();
    let mut converged = n < 2;
    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&work[p], &work[p]);
                let beta = dot(&work[q], &work[q]);
                let gamma = dot(&work[p], &work[q]);
                if gamma == T::zero() || alpha == T::zero() || beta == T::zero() {
                    continue;
                }
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let two = T::cast(2.0);
                let zeta = (beta - alpha) / (two * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut work, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence { sweeps: MAX_SWEEPS });
    }

    let mut sigma: Vec<T> = work.iter().map(|col| dot(col, col).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap().then(i.cmp(&j)));

    let s_max = order.first().map_or(T::zero(), |&i| sigma[i]);
    let null_tol = s_max * T::epsilon() * T::cast(m.max(n) as f64);

    let mut u_cols: Vec<Option<Vec<T>>> = Vec::with_capacity(n);
    let mut s_sorted = Vec::with_capacity(n);
    let mut v_sorted = Vec::with_capacity(n);
    for &i in &order {
        let sv = sigma[i];
        if sv > null_tol && sv > T::zero() {
            u_cols.push(Some(work[i].iter().map(|&x| x / sv).collect()));
        } else {
            sigma[i] = T::zero();
            u_cols.push(None);
        }
        s_sorted.push(sigma[i]);
        v_sorted.push(v[i].clone());
    }
    let u_cols = complete_orthonormal(u_cols, m);

    let mut u = Matrix::zeros(m, n);
    for (c, col) in u_cols.iter().enumerate() {
        for r in 0..m {
            u[(r, c)] = col[r];
        }
    }
    let mut vm = Matrix::zeros(n, n);
    for (c, col) in v_sorted.iter().enumerate() {
        for r in 0..n {
            vm[(r, c)] = col[r];
        }
    }
    Ok(Svd {
        u,
        s: s_sorted,
        v: vm,
    })
}

fn rotate<T: Scalar>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let xq = *y;
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Fills missing columns with unit vectors orthogonal to every other column.
fn complete_orthonormal<T: Scalar>(cols: Vec<Option<Vec<T>>>, m: usize) -> Vec<Vec<T>> {
    let mut basis: Vec<Vec<T>> = cols.iter().flatten().cloned().collect();
    let mut out = Vec::with_capacity(cols.len());
    for col in cols {
        match col {
            Some(c) => out.push(c),
            None => {
                let fresh = next_orthogonal(&basis, m);
                basis.push(fresh.clone());
                out.push(fresh);
            }
        }
    }
    out
}

fn next_orthogonal<T: Scalar>(basis: &[Vec<T>], m: usize) -> Vec<T> {
    let mut best: Option<(T, Vec<T>)> = None;
    for k in 0..m {
        let mut cand = vec![T::zero(); m];
        cand[k] = T::one();
        // two Gram-Schmidt passes
        for _ in 0..2 {
            for b in basis {
                let proj = dot(&cand, b);
                for (x, &bv) in cand.iter_mut().zip(b) {
                    *x -= proj * bv;
                }
            }
        }
        let nrm = dot(&cand, &cand).sqrt();
        if best.as_ref().is_none_or(|(bn, _)| nrm > *bn) {
            best = Some((nrm, cand));
        }
    }
    let (nrm, mut cand) = best.expect("m > 0 when completing a basis");
    cand.iter_mut().for_each(|x| *x /= nrm);
    cand
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn random(rng: &mut Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.normal()).collect()).unwrap()
    }

    fn orthonormality_error(q: &Matrix) -> f64 {
        let g = q.transpose().matmul(q).unwrap();
        g.sub(&Matrix::identity(q.cols())).unwrap().frobenius_norm()
    }

    fn check(a: &Matrix) {
        let d = svd(a).unwrap();
        let rec = d.reconstruct();
        let rel = rec.sub(a).unwrap().frobenius_norm() / a.frobenius_norm().max(1e-300);
        assert!(rel < 1e-9, "reconstruction {rel}");
        assert!(orthonormality_error(&d.u) < 1e-9);
        assert!(orthonormality_error(&d.v) < 1e-9);
        assert!(d.s.iter().all(|&s| s >= 0.0));
        assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn identity_singular_values() {
        let d = svd(&Matrix::<f64>::identity(3)).unwrap();
        for s in &d.s {
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn diagonal_singular_values() {
        let d = svd(&Matrix::<f64>::from_diag(&[3.0, 2.0])).unwrap();
        assert!((d.s[0] - 3.0).abs() < 1e-15);
        assert!((d.s[1] - 2.0).abs() < 1e-15);
        // ordering is enforced even when the input is not sorted
        let d = svd(&Matrix::<f64>::from_diag(&[2.0, 3.0])).unwrap();
        assert_eq!(d.s, vec![3.0, 2.0]);
    }

    #[test]
    fn random_tall_reconstructs() {
        let mut rng = Rng::new(1);
        check(&random(&mut rng, 6, 4));
    }

    #[test]
    fn shape_classes_property() {
        let mut rng = Rng::new(2024);
        for &(r, c) in &[(6, 4), (4, 6), (8, 8), (1, 5), (5, 1), (32, 32)] {
            for _ in 0..100 {
                check(&random(&mut rng, r, c));
            }
        }
    }

    #[test]
    fn rank_deficient_still_orthonormal() {
        let mut rng = Rng::new(3);
        let x = random(&mut rng, 6, 2);
        let y = random(&mut rng, 2, 5);
        let a = x.matmul(&y).unwrap(); // rank 2
        check(&a);
        let d = svd(&a).unwrap();
        assert!(d.s[2] < 1e-12 * d.s[0]);
        check(&Matrix::from_rows(&vec![vec![1.0, 1.0, 1.0]; 3]).unwrap());
        let z = svd(&Matrix::<f64>::zeros(3, 3)).unwrap();
        assert!(orthonormality_error(&z.u) < 1e-12);
    }

    #[test]
    fn f32_decomposition() {
        let a = Matrix::<f32>::from_rows(&[vec![2.0, 0.5], vec![1.0, 3.0], vec![0.0, 1.0]]).unwrap();
        let d = svd(&a).unwrap();
        let rec = d.reconstruct();
        assert!(rec.sub(&a).unwrap().frobenius_norm() < 1e-5);
    }

    #[test]
    fn rejects_oversized() {
        assert!(svd(&Matrix::<f64>::zeros(1025, 1)).is_err());
    }
}
