use std::ops::{Index, IndexMut};

use super::scalar::{Scalar, NORM_EPS};
use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Builds a matrix from row-major data. Rejects wrong lengths and non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims("Matrix::from_vec", rows * cols, data.len()));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("matrix data"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::dims("Matrix::from_rows", cols, bad.len()));
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<T> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        matmul(self, other)
    }

    /// `self · x`.
    pub fn matvec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.cols {
            return Err(Error::dims("matvec", self.cols, x.len()));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), x)).collect())
    }

    /// `selfᵀ · y`.
    pub fn t_matvec(&self, y: &[T]) -> Result<Vec<T>> {
        if y.len() != self.rows {
            return Err(Error::dims("t_matvec", self.rows, y.len()));
        }
        let mut out = vec![T::zero(); self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o += a * yr;
            }
        }
        Ok(out)
    }

    /// `self += alpha · u vᵀ`.
    pub fn add_outer(&mut self, alpha: T, u: &[T], v: &[T]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for (r, &ur) in u.iter().enumerate() {
            let s = alpha * ur;
            if s == T::zero() {
                continue;
            }
            for (a, &vc) in self.row_mut(r).iter_mut().zip(v) {
                *a += s * vc;
            }
        }
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::dims(
                "Matrix::sub",
                format!("{:?}", self.shape()),
                format!("{:?}", other.shape()),
            ));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &T {
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut T {
        &mut self.data[r * self.cols + c]
    }
}

/// Standard matrix product `a · b`.
pub fn matmul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols != b.rows {
        return Err(Error::dims(
            "matmul",
            format!("lhs cols = rhs rows = {}", a.cols),
            format!("rhs rows = {}", b.rows),
        ));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == T::zero() {
                continue;
            }
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    if !out.is_finite() {
        return Err(Error::NonFinite("matmul result"));
    }
    Ok(out)
}

/// Dense vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Vector<T = f64>(Vec<T>);

impl<T: Scalar> Vector<T> {
    pub fn new(data: Vec<T>) -> Result<Self> {
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("vector data"));
        }
        Ok(Self(data))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![T::zero(); dim])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<T> {
        self.0
    }

    pub fn dot(&self, other: &Self) -> T {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> T {
        norm(&self.0)
    }
}

impl<T> From<Vector<T>> for Vec<T> {
    fn from(v: Vector<T>) -> Self {
        v.0
    }
}

impl<T> std::ops::Deref for Vector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

#[inline]
pub fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Scales `v` to unit L2 norm.
pub fn l2_normalize<T: Scalar>(v: &Vector<T>) -> Result<Vector<T>> {
    let n = v.norm();
    if !(n > T::cast(NORM_EPS)) {
        return Err(Error::NearZeroNorm { norm: n.as_f64() });
    }
    Ok(Vector(v.0.iter().map(|&x| x / n).collect()))
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine<T: Scalar>(u: &Vector<T>, v: &Vector<T>) -> Result<T> {
    if u.dim() != v.dim() {
        return Err(Error::dims("cosine", u.dim(), v.dim()));
    }
    let nu = u.norm();
    let nv = v.norm();
    let eps = T::cast(NORM_EPS);
    if !(nu > eps) {
        return Err(Error::NearZeroNorm { norm: nu.as_f64() });
    }
    if !(nv > eps) {
        return Err(Error::NearZeroNorm { norm: nv.as_f64() });
    }
    // the product nu * nv is commutative, so cosine(u, v) == cosine(v, u) bitwise
    let c = u.dot(v) / (nu * nv);
    Ok(c.max(-T::one()).min(T::one()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn naive_product(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    fn random(rng: &mut Rng, r: usize, c: usize) -> Matrix {
        let data = (0..r * c).map(|_| rng.normal()).collect();
        Matrix::from_vec(r, c, data).unwrap()
    }

    #[test]
    fn identity_product() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(Matrix::identity(2).matmul(&a).unwrap(), a);
    }

    #[test]
    fn hand_product() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.as_slice(), &[3.0, 7.0]);
    }

    #[test]
    fn random_product_matches_triple_loop() {
        let mut rng = Rng::new(11);
        let a = random(&mut rng, 5, 4);
        let b = random(&mut rng, 4, 3);
        // same summation order as the triple loop, so equality is exact
        assert_eq!(matmul(&a, &b).unwrap(), naive_product(&a, &b));
    }

    #[test]
    fn product_dimension_mismatch() {
        let a = Matrix::<f64>::zeros(2, 3);
        assert!(matches!(
            matmul(&a, &a),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn associativity() {
        let mut rng = Rng::new(5);
        for _ in 0..20 {
            let a = random(&mut rng, 3, 4);
            let b = random(&mut rng, 4, 2);
            let c = random(&mut rng, 2, 5);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let rel = left.sub(&right).unwrap().frobenius_norm() / left.frobenius_norm();
            assert!(rel < 1e-9, "{rel}");
        }
    }

    #[test]
    fn matvec_and_transpose_agree() {
        let mut rng = Rng::new(2);
        let a = random(&mut rng, 4, 3);
        let y = [1.0, -2.0, 0.5, 3.0];
        let lhs = a.t_matvec(&y).unwrap();
        let rhs = a.transpose().matvec(&y).unwrap();
        for (l, r) in lhs.iter().zip(&rhs) {
            assert!((l - r).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Matrix::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Vector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn normalize_examples() {
        let v = l2_normalize(&Vector::<f64>::new(vec![3.0, 4.0]).unwrap()).unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15 && (v[1] - 0.8).abs() < 1e-15);
        let unit = Vector::new(vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(l2_normalize(&unit).unwrap(), unit);
        assert!(matches!(
            l2_normalize(&Vector::<f64>::zeros(2)),
            Err(Error::NearZeroNorm { .. })
        ));
    }

    #[test]
    fn cosine_examples() {
        let u = Vector::<f64>::new(vec![0.3, -1.2, 2.0]).unwrap();
        assert!((cosine(&u, &u).unwrap() - 1.0).abs() < 1e-15);
        let e1 = Vector::<f64>::new(vec![1.0, 0.0]).unwrap();
        let e2 = Vector::new(vec![0.0, 1.0]).unwrap();
        let neg = Vector::new(vec![-1.0, 0.0]).unwrap();
        assert_eq!(cosine(&e1, &e2).unwrap(), 0.0);
        assert_eq!(cosine(&e1, &neg).unwrap(), -1.0);
        assert!(cosine(&e1, &Vector::zeros(2)).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vec_strategy() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(-100.0f64..100.0, 1..16)
                .prop_filter("non-zero", |v| norm(v) > 1e-6)
        }

        proptest! {
            #[test]
            fn normalize_is_idempotent(v in vec_strategy()) {
                let once = l2_normalize(&Vector::new(v).unwrap()).unwrap();
                let twice = l2_normalize(&once).unwrap();
                prop_assert!((once.norm() - 1.0).abs() < 1e-12);
                for (a, b) in once.iter().zip(twice.iter()) {
                    prop_assert!((a - b).abs() <= 1e-15);
                }
            }

            #[test]
            fn cosine_is_symmetric(
                (u, v) in (1usize..12).prop_flat_map(|d| (
                    prop::collection::vec(-10.0f64..10.0, d),
                    prop::collection::vec(-10.0f64..10.0, d),
                ))
            ) {
                prop_assume!(norm(&u) > 1e-6 && norm(&v) > 1e-6);
                let u = Vector::new(u).unwrap();
                let v = Vector::new(v).unwrap();
                prop_assert_eq!(cosine(&u, &v).unwrap(), cosine(&v, &u).unwrap());
            }
        }
    }
}
