//! The diachronic projection network.
//!
//! Each modality has an encoding layer `h = tanh(W_h x + b_h)`. A time layer
//! `τ = tanh(W_time u + b_time)`, shared by both modalities, embeds the
//! normalized timestamp `u`. The output layer maps `[h; τ]` through
//! `tanh(W_o · + b_o)` and the result is scaled to unit length.

pub mod checkpoint;
mod network;
mod params;

pub use checkpoint::{load, save, Checkpoint, FORMAT_VERSION};
pub use network::{backward, forward, project, time_embed, Embedding, ForwardCache};
pub use params::{glorot_bound, init, ModelConfig, ModelParams, TENSOR_NAMES};

use crate::dataset::{Modality, Timespan};
use crate::error::Result;
use crate::numerics::{Scalar, Vector};

/// Trained parameters bound to the timespan they were trained over, so
/// callers can project at absolute timestamps.
#[derive(Debug, Clone)]
pub struct DiachronicModel<T = f64> {
    pub params: ModelParams<T>,
    pub timespan: Timespan,
    /// Clamp timestamps outside the span instead of failing.
    pub clamp_time: bool,
}

impl<T: Scalar> DiachronicModel<T> {
    pub fn new(params: ModelParams<T>, timespan: Timespan) -> Self {
        Self {
            params,
            timespan,
            clamp_time: false,
        }
    }

    pub fn normalized_time(&self, ts: i64) -> Result<f64> {
        if self.clamp_time {
            Ok(self.timespan.normalize_clamped(ts))
        } else {
            self.timespan.normalize(ts)
        }
    }

    pub fn project_at(&self, x: &Vector<T>, modality: Modality, ts: i64) -> Result<Embedding<T>> {
        project(&self.params, x, modality, self.normalized_time(ts)?)
    }
}

impl<T: Scalar> From<Checkpoint<T>> for DiachronicModel<T> {
    fn from(c: Checkpoint<T>) -> Self {
        Self::new(c.params, c.timespan)
    }
}
