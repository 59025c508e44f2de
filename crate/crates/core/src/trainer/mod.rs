//! Optimization: SGD with momentum for the continuous model, and the binned
//! baseline (one static model per month, chained by Procrustes rotations).

mod binned;

pub use binned::{
    align_chain, procrustes, train_binned, BinnedModel, DEFAULT_ALIGN_SAMPLE_CAP, ROTATIONS_FILE,
};

use std::fmt::Write as _;
use std::time::Instant;

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::loss::{batch_loss, batch_loss_and_grads, sample_batch_triplets, LossConfig};
use crate::model::{init, ModelConfig, ModelParams};
use crate::numerics::{Rng, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Drives shuffling and triplet sampling. Weight init uses `model.seed`.
    pub seed: u64,
    pub loss: LossConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.005,
            momentum: 0.9,
            epochs: 25,
            batch_size: 64,
            seed: 0,
            loss: LossConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "batch size must be at least 2, got {}",
                self.batch_size
            )));
        }
        self.loss.validate()?;
        self.model.validate()
    }

    /// The time-agnostic baseline: time input frozen at 0 and no intra term.
    pub fn static_baseline(&self) -> Self {
        let mut c = self.clone();
        c.model.static_time = true;
        c.loss.intra_enabled = false;
        c
    }

    /// Copies the feature dimensions of `ds` into the model config.
    pub fn with_dims_of<T: Scalar>(mut self, ds: &Dataset<T>) -> Self {
        self.model.d_v = ds.d_v;
        self.model.d_t = ds.d_t;
        self
    }
}

/// Plain momentum SGD: `v ← μ v − η g`, `θ ← θ + v`.
#[derive(Debug, Clone)]
pub struct Sgd<T = f64> {
    pub learning_rate: T,
    pub momentum: T,
    pub velocity: ModelParams<T>,
}

impl<T: Scalar> Sgd<T> {
    /// Zero velocity shaped like `params`.
    pub fn new(params: &ModelParams<T>, learning_rate: f64, momentum: f64) -> Self {
        Self {
            learning_rate: T::cast(learning_rate),
            momentum: T::cast(momentum),
            velocity: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>) {
        self.velocity.scale(self.momentum);
        self.velocity.axpy(-self.learning_rate, grads);
        params.axpy(T::one(), &self.velocity);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean loss per instance over the epoch's batches, measured before each step.
    pub train_loss: f64,
    /// Mean loss per instance on the validation set after the epoch.
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were returned.
    pub selected_epoch: usize,
    pub wall_time_secs: f64,
}

impl TrainReport {
    /// `epoch,train_loss,val_loss`; an empty cell when there was no validation set.
    /// Wall time is left out so reruns produce identical files.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,selected\n");
        for e in &self.epochs {
            let val = e.val_loss.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{}",
                e.epoch,
                e.train_loss,
                val,
                (e.epoch == self.selected_epoch) as u8
            );
        }
        s
    }
}

fn check_compatible<T: Scalar>(train: &Dataset<T>, val: &Dataset<T>, cfg: &TrainConfig) -> Result<()> {
    if train.d_v != cfg.model.d_v {
        return Err(Error::dims("train visual dim vs model", cfg.model.d_v, train.d_v));
    }
    if train.d_t != cfg.model.d_t {
        return Err(Error::dims("train text dim vs model", cfg.model.d_t, train.d_t));
    }
    if !val.is_empty() {
        if (val.d_v, val.d_t) != (train.d_v, train.d_t) {
            return Err(Error::dims(
                "validation dims",
                format!("{}x{}", train.d_v, train.d_t),
                format!("{}x{}", val.d_v, val.d_t),
            ));
        }
        if val.timespan != train.timespan {
            return Err(Error::InvalidConfig(
                "train and validation sets must share one timespan".into(),
            ));
        }
    }
    Ok(())
}

/// Summed loss over fixed-order batches, per instance. The sampler is
/// recreated from the same stream each call so epochs are comparable.
fn dataset_loss<T: Scalar>(p: &ModelParams<T>, ds: &Dataset<T>, cfg: &TrainConfig, sampler: &Rng) -> Result<f64> {
    let mut rng = sampler.clone();
    let rows: Vec<usize> = (0..ds.len()).collect();
    let mut total = 0.0;
    for chunk in rows.chunks(cfg.batch_size) {
        if chunk.len() < 2 {
            continue;
        }
        let triplets = sample_batch_triplets(ds, chunk, &mut rng, &cfg.loss);
        total += batch_loss(p, ds, chunk, &triplets, &cfg.loss)?.total;
    }
    Ok(total / ds.len().max(1) as f64)
}

/// Trains the continuous model and returns the parameters of the epoch with
/// the lowest validation loss (training loss when `val` is empty).
pub fn train_continuous<T: Scalar>(
    train: &Dataset<T>,
    val: &Dataset<T>,
    cfg: &TrainConfig,
) -> Result<(ModelParams<T>, TrainReport)> {
    cfg.validate()?;
    check_compatible(train, val, cfg)?;
    if train.len() < 2 {
        return Err(Error::TooSmall(format!(
            "training set has {} instances, need at least 2",
            train.len()
        )));
    }
    let clock = Instant::now();
    let root = Rng::new(cfg.seed);
    let mut shuffler = root.split(2);
    let mut sampler = root.split(3);
    let val_sampler = root.split(4);

    let mut params: ModelParams<T> = init(&cfg.model)?;
    let mut sgd = Sgd::new(&params, cfg.learning_rate, cfg.momentum);
    let mut best: Option<(f64, usize, ModelParams<T>)> = None;
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        shuffler.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let triplets = sample_batch_triplets(train, chunk, &mut sampler, &cfg.loss);
            let (value, grads) = batch_loss_and_grads(&params, train, chunk, &triplets, &cfg.loss)?;
            if !value.total.is_finite() || !grads.is_finite() {
                return Err(Error::NanLoss { epoch, batch });
            }
            epoch_loss += value.total;
            sgd.step(&mut params, &grads);
            if !params.is_finite() {
                return Err(Error::NanLoss { epoch, batch });
            }
        }
        let train_loss = epoch_loss / train.len() as f64;
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(dataset_loss(&params, val, cfg, &val_sampler)?)
        };
        debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:?}");
        let score = val_loss.unwrap_or(train_loss);
        if best.as_ref().is_none_or(|(b, _, _)| score < *b) {
            best = Some((score, epoch, params.clone()));
        }
        epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
    }

    let (selected_epoch, params) = match best {
        Some((_, e, p)) => (e, p),
        None => (0, params),
    };
    info!(
        "trained {} epochs on {} instances, selected epoch {selected_epoch}",
        cfg.epochs,
        train.len()
    );
    Ok((
        params,
        TrainReport {
            epochs,
            selected_epoch,
            wall_time_secs: clock.elapsed().as_secs_f64(),
        },
    ))
}

#[cfg(test)]
mod tests;
