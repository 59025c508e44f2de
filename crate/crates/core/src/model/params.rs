use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng, Scalar};

/// Network shape. Defaults follow the reference configuration
/// (1024 hidden units, 200 time units, 200-dimensional embedding).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_v: usize,
    pub d_t: usize,
    pub hidden_dim: usize,
    pub time_dim: usize,
    pub embed_dim: usize,
    pub seed: u64,
    /// Bias terms on every layer. `false` reproduces pure matrix products.
    pub use_bias: bool,
    /// Freeze the time-branch input at 0 (static, time-agnostic model).
    pub static_time: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_v: 2048,
            d_t: 5000,
            hidden_dim: 1024,
            time_dim: 200,
            embed_dim: 200,
            seed: 0,
            use_bias: true,
            static_time: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_v", self.d_v),
            ("d_t", self.d_t),
            ("hidden_dim", self.hidden_dim),
            ("time_dim", self.time_dim),
            ("embed_dim", self.embed_dim),
        ];
        for (name, d) in dims {
            if d == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// Width of the concatenated `[hidden; time]` layer.
    pub fn joint_dim(&self) -> usize {
        self.hidden_dim + self.time_dim
    }
}

/// All weights and biases. The same layout doubles as a gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f64> {
    pub config: ModelConfig,
    /// hidden × d_v
    pub w_vh: Matrix<T>,
    pub b_vh: Vec<T>,
    /// hidden × d_t
    pub w_th: Matrix<T>,
    pub b_th: Vec<T>,
    /// time_dim × 1
    pub w_time: Matrix<T>,
    pub b_time: Vec<T>,
    /// D × (hidden + time_dim)
    pub w_vo: Matrix<T>,
    pub b_vo: Vec<T>,
    /// D × (hidden + time_dim)
    pub w_to: Matrix<T>,
    pub b_to: Vec<T>,
}

/// Tensor names in storage order.
pub const TENSOR_NAMES: [&str; 10] = [
    "W_vh", "b_vh", "W_th", "b_th", "W_time", "b_time", "W_vo", "b_vo", "W_to", "b_to",
];

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(config: &ModelConfig) -> Self {
        let c = config;
        Self {
            config: c.clone(),
            w_vh: Matrix::zeros(c.hidden_dim, c.d_v),
            b_vh: vec![T::zero(); c.hidden_dim],
            w_th: Matrix::zeros(c.hidden_dim, c.d_t),
            b_th: vec![T::zero(); c.hidden_dim],
            w_time: Matrix::zeros(c.time_dim, 1),
            b_time: vec![T::zero(); c.time_dim],
            w_vo: Matrix::zeros(c.embed_dim, c.joint_dim()),
            b_vo: vec![T::zero(); c.embed_dim],
            w_to: Matrix::zeros(c.embed_dim, c.joint_dim()),
            b_to: vec![T::zero(); c.embed_dim],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    /// Expected `(rows, cols)` of each tensor, biases as `(len, 1)`.
    pub fn expected_shapes(config: &ModelConfig) -> [(usize, usize); 10] {
        let c = config;
        [
            (c.hidden_dim, c.d_v),
            (c.hidden_dim, 1),
            (c.hidden_dim, c.d_t),
            (c.hidden_dim, 1),
            (c.time_dim, 1),
            (c.time_dim, 1),
            (c.embed_dim, c.joint_dim()),
            (c.embed_dim, 1),
            (c.embed_dim, c.joint_dim()),
            (c.embed_dim, 1),
        ]
    }

    pub fn tensors(&self) -> [&[T]; 10] {
        [
            self.w_vh.as_slice(),
            &self.b_vh,
            self.w_th.as_slice(),
            &self.b_th,
            self.w_time.as_slice(),
            &self.b_time,
            self.w_vo.as_slice(),
            &self.b_vo,
            self.w_to.as_slice(),
            &self.b_to,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [T]; 10] {
        [
            self.w_vh.as_mut_slice(),
            &mut self.b_vh,
            self.w_th.as_mut_slice(),
            &mut self.b_th,
            self.w_time.as_mut_slice(),
            &mut self.b_time,
            self.w_vo.as_mut_slice(),
            &mut self.b_vo,
            self.w_to.as_mut_slice(),
            &mut self.b_to,
        ]
    }

    pub fn bias_mask() -> [bool; 10] {
        [false, true, false, true, false, true, false, true, false, true]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: T, other: &Self) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Largest absolute entry over all tensors.
    pub fn max_abs(&self) -> T {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let m = |x: &Matrix<T>| x.map(|v| U::cast(v.as_f64()));
        let v = |x: &[T]| x.iter().map(|&e| U::cast(e.as_f64())).collect::<Vec<U>>();
        ModelParams {
            config: self.config.clone(),
            w_vh: m(&self.w_vh),
            b_vh: v(&self.b_vh),
            w_th: m(&self.w_th),
            b_th: v(&self.b_th),
            w_time: m(&self.w_time),
            b_time: v(&self.b_time),
            w_vo: m(&self.w_vo),
            b_vo: v(&self.b_vo),
            w_to: m(&self.w_to),
            b_to: v(&self.b_to),
        }
    }
}

/// Glorot-uniform weights, zero biases. Deterministic in `config.seed`.
pub fn init<T: Scalar>(config: &ModelConfig) -> Result<ModelParams<T>> {
    config.validate()?;
    let mut p = ModelParams::zeros(config);
    let root = Rng::new(config.seed);
    let fill = |m: &mut Matrix<T>, stream: u64| -> Result<()> {
        let mut rng = root.split(stream);
        let bound = glorot_bound(m.cols(), m.rows());
        for v in m.as_mut_slice() {
            *v = T::cast(rng.uniform(-bound, bound)?);
        }
        Ok(())
    };
    fill(&mut p.w_vh, 1)?;
    fill(&mut p.w_th, 2)?;
    fill(&mut p.w_time, 3)?;
    fill(&mut p.w_vo, 4)?;
    fill(&mut p.w_to, 5)?;
    Ok(p)
}

/// `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            d_v: 7,
            d_t: 5,
            hidden_dim: 6,
            time_dim: 3,
            embed_dim: 4,
            seed: 17,
            ..Default::default()
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a: ModelParams = init(&small()).unwrap();
        let b: ModelParams = init(&small()).unwrap();
        assert_eq!(a, b);
        let mut other = small();
        other.seed = 18;
        assert_ne!(a, init::<f64>(&other).unwrap());
    }

    #[test]
    fn biases_start_at_zero() {
        let p: ModelParams = init(&small()).unwrap();
        for (t, is_bias) in p.tensors().iter().zip(ModelParams::<f64>::bias_mask()) {
            if is_bias {
                assert!(t.iter().all(|&v| v == 0.0));
            } else {
                assert!(t.iter().any(|&v| v != 0.0));
            }
        }
    }

    #[test]
    fn weights_within_glorot_bound() {
        let p: ModelParams = init(&small()).unwrap();
        let bound = glorot_bound(7, 6);
        assert!(p.w_vh.as_slice().iter().all(|v| v.abs() < bound));
        let bound_o = glorot_bound(9, 4);
        assert!(p.w_to.as_slice().iter().all(|v| v.abs() < bound_o));
    }

    #[test]
    fn shapes_follow_config() {
        let c = small();
        let p: ModelParams = init(&c).unwrap();
        for (t, (r, k)) in p.tensors().iter().zip(ModelParams::<f64>::expected_shapes(&c)) {
            assert_eq!(t.len(), r * k);
        }
        assert_eq!(p.num_params(), 6 * 7 + 6 + 6 * 5 + 6 + 3 + 3 + 4 * 9 * 2 + 4 * 2);
    }

    #[test]
    fn zero_dim_rejected() {
        let mut c = small();
        c.time_dim = 0;
        assert!(init::<f64>(&c).is_err());
    }
}
