use crate::dataset::Modality;
use crate::error::{Error, Result};
use crate::numerics::{dot, l2_normalize, Matrix, Scalar, Vector, NORM_EPS};

use super::ModelParams;

/// Unit-norm point in the shared space, tagged with how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T = f64> {
    pub vector: Vector<T>,
    pub modality: Modality,
    /// Normalized time the projection was made at.
    pub t: f64,
}

/// Intermediate activations kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache<T = f64> {
    pub h: Vec<T>,
    pub tau: Vec<T>,
    pub z: Vec<T>,
    pub z_norm: T,
    /// Unit-norm output.
    pub e: Vec<T>,
    /// Time value actually fed to the time layer.
    pub u: T,
}

impl<T: Scalar> ModelParams<T> {
    fn branch(&self, modality: Modality) -> (&Matrix<T>, &[T], &Matrix<T>, &[T]) {
        match modality {
            Modality::Visual => (&self.w_vh, &self.b_vh, &self.w_vo, &self.b_vo),
            Modality::Text => (&self.w_th, &self.b_th, &self.w_to, &self.b_to),
        }
    }

    fn input_dim(&self, modality: Modality) -> usize {
        match modality {
            Modality::Visual => self.config.d_v,
            Modality::Text => self.config.d_t,
        }
    }

    /// Time value seen by the time layer; 0 for static models.
    pub fn time_input(&self, u: T) -> T {
        if self.config.static_time {
            T::zero()
        } else {
            u
        }
    }
}

fn affine_tanh<T: Scalar>(w: &Matrix<T>, b: &[T], x: &[T]) -> Result<Vec<T>> {
    let mut a = w.matvec(x)?;
    for (v, &bi) in a.iter_mut().zip(b) {
        *v = (*v + bi).tanh();
    }
    Ok(a)
}

/// `tanh(W_time · [u] + b_time)`.
pub fn time_embed<T: Scalar>(p: &ModelParams<T>, u: T) -> Vec<T> {
    p.w_time
        .as_slice()
        .iter()
        .zip(&p.b_time)
        .map(|(&w, &b)| (w * u + b).tanh())
        .collect()
}

/// Forward pass keeping activations.
pub fn forward<T: Scalar>(
    p: &ModelParams<T>,
    x: &[T],
    modality: Modality,
    u: T,
) -> Result<ForwardCache<T>> {
    let expected = p.input_dim(modality);
    if x.len() != expected {
        return Err(Error::dims(
            match modality {
                Modality::Visual => "project(visual)",
                Modality::Text => "project(text)",
            },
            expected,
            x.len(),
        ));
    }
    let (w_h, b_h, w_o, b_o) = p.branch(modality);
    let h = affine_tanh(w_h, b_h, x)?;
    let u = p.time_input(u);
    let tau = time_embed(p, u);
    let mut joint = Vec::with_capacity(h.len() + tau.len());
    joint.extend_from_slice(&h);
    joint.extend_from_slice(&tau);
    let z = affine_tanh(w_o, b_o, &joint)?;
    let z_norm = dot(&z, &z).sqrt();
    if !(z_norm > T::cast(NORM_EPS)) {
        return Err(Error::NearZeroNorm {
            norm: z_norm.as_f64(),
        });
    }
    let e = z.iter().map(|&v| v / z_norm).collect();
    Ok(ForwardCache {
        h,
        tau,
        z,
        z_norm,
        e,
        u,
    })
}

/// Projects one image or text at normalized time `u` onto the unit sphere.
pub fn project<T: Scalar>(
    p: &ModelParams<T>,
    x: &Vector<T>,
    modality: Modality,
    u: f64,
) -> Result<Embedding<T>> {
    let cache = forward(p, x, modality, T::cast(u))?;
    let vector = l2_normalize(&Vector::new(cache.z)?)?;
    Ok(Embedding {
        vector,
        modality,
        t: u,
    })
}

/// Accumulates into `grads` the parameter gradient of a scalar loss whose
/// gradient with respect to the unit-norm output is `g_e`.
pub fn backward<T: Scalar>(
    p: &ModelParams<T>,
    x: &[T],
    modality: Modality,
    cache: &ForwardCache<T>,
    g_e: &[T],
    grads: &mut ModelParams<T>,
) {
    let use_bias = p.config.use_bias;
    let hidden = p.config.hidden_dim;

    // through the normalization: (I - e eᵀ) g / ‖z‖
    let proj = dot(&cache.e, g_e);
    let g_a2: Vec<T> = g_e
        .iter()
        .zip(&cache.e)
        .zip(&cache.z)
        .map(|((&g, &e), &z)| (g - e * proj) / cache.z_norm * (T::one() - z * z))
        .collect();

    let (_, _, w_o, _) = p.branch(modality);
    let mut joint = Vec::with_capacity(hidden + cache.tau.len());
    joint.extend_from_slice(&cache.h);
    joint.extend_from_slice(&cache.tau);
    let g_joint = w_o.t_matvec(&g_a2).expect("shapes fixed by config");

    let (gw_h, gb_h, gw_o, gb_o) = match modality {
        Modality::Visual => (&mut grads.w_vh, &mut grads.b_vh, &mut grads.w_vo, &mut grads.b_vo),
        Modality::Text => (&mut grads.w_th, &mut grads.b_th, &mut grads.w_to, &mut grads.b_to),
    };
    gw_o.add_outer(T::one(), &g_a2, &joint);
    if use_bias {
        for (b, &g) in gb_o.iter_mut().zip(&g_a2) {
            *b += g;
        }
    }

    let g_a1: Vec<T> = g_joint[..hidden]
        .iter()
        .zip(&cache.h)
        .map(|(&g, &h)| g * (T::one() - h * h))
        .collect();
    gw_h.add_outer(T::one(), &g_a1, x);
    if use_bias {
        for (b, &g) in gb_h.iter_mut().zip(&g_a1) {
            *b += g;
        }
    }

    for (k, (&g, &t)) in g_joint[hidden..].iter().zip(&cache.tau).enumerate() {
        let g_at = g * (T::one() - t * t);
        grads.w_time.as_mut_slice()[k] += g_at * cache.u;
        if use_bias {
            grads.b_time[k] += g_at;
        }
    }
}
