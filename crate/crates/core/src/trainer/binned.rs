use std::fs;
use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::Deserialize;

use super::{train_continuous, TrainConfig};
use crate::dataset::{month_key, Bin, Binning, Dataset, Modality, Timespan};
use crate::error::{Error, Result};
use crate::model::checkpoint::{self, matrix_from_record, matrix_to_record};
use crate::model::{project, ModelParams};
use crate::numerics::{svd, Matrix, Rng, Scalar, Vector};

/// Instances per bin used to estimate each alignment.
pub const DEFAULT_ALIGN_SAMPLE_CAP: usize = 2000;

pub const ROTATIONS_FILE: &str = "rotations.json";

/// Orthogonal `Ω` minimizing `‖M_t Ω − M_next‖_F`: `U Vᵀ` from the SVD of `M_tᵀ M_next`.
pub fn procrustes<T: Scalar>(m_t: &Matrix<T>, m_next: &Matrix<T>) -> Result<Matrix<T>> {
    if m_t.shape() != m_next.shape() {
        return Err(Error::dims(
            "procrustes",
            format!("{:?}", m_t.shape()),
            format!("{:?}", m_next.shape()),
        ));
    }
    let cross = m_t.transpose().matmul(m_next)?;
    let d = svd(&cross)?;
    d.u.matmul(&d.v.transpose())
}

/// One static model per month, each rotated into the final month's space.
#[derive(Debug, Clone)]
pub struct BinnedModel<T = f64> {
    /// Chronological. `members` index the dataset the bins were built from
    /// and are empty after loading from disk.
    pub bins: Vec<Bin>,
    pub models: Vec<ModelParams<T>>,
    /// `rotations[b]` maps bin `b`'s space into the last bin's; the last is the identity.
    pub rotations: Vec<Matrix<T>>,
    pub timespan: Timespan,
}

impl<T: Scalar> BinnedModel<T> {
    /// Unaligned model: every rotation is the identity.
    pub fn new(bins: Vec<Bin>, models: Vec<ModelParams<T>>, timespan: Timespan) -> Result<Self> {
        if bins.is_empty() || bins.len() != models.len() {
            return Err(Error::InvalidConfig(format!(
                "{} bins for {} models",
                bins.len(),
                models.len()
            )));
        }
        let d = models[0].config.embed_dim;
        if models.iter().any(|m| m.config.embed_dim != d) {
            return Err(Error::InvalidConfig("per-bin models disagree on embedding size".into()));
        }
        Ok(Self {
            rotations: vec![Matrix::identity(d); bins.len()],
            bins,
            models,
            timespan,
        })
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Bin holding the month of `ts`; otherwise the nearest kept month,
    /// the earlier one on ties.
    pub fn bin_for(&self, ts: i64) -> usize {
        let key = month_key(ts);
        let mut best = 0;
        let mut best_gap = i64::MAX;
        for (b, bin) in self.bins.iter().enumerate() {
            let gap = (month_key(bin.month_start) - key).abs();
            if gap < best_gap {
                best = b;
                best_gap = gap;
            }
        }
        best
    }

    /// Embedding from bin `b`'s own model, before rotation.
    pub fn embed_raw(&self, b: usize, x: &[T], modality: Modality, ts: i64) -> Result<Vec<T>> {
        let u = self.timespan.normalize_clamped(ts);
        Ok(project(&self.models[b], &Vector::new(x.to_vec())?, modality, u)?
            .vector
            .into_vec())
    }

    /// Embedding at `ts` in the shared (final-bin) space.
    pub fn embed(&self, x: &[T], modality: Modality, ts: i64) -> Result<Vec<T>> {
        let b = self.bin_for(ts);
        let e = self.embed_raw(b, x, modality, ts)?;
        self.rotations[b].t_matvec(&e)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut entries = Vec::with_capacity(self.len());
        for (b, bin) in self.bins.iter().enumerate() {
            let file = format!("bin_{:03}.json", bin.index);
            checkpoint::save(&self.models[b], &self.timespan, None, dir.join(&file))?;
            entries.push(serde_json::json!({
                "index": bin.index,
                "month_start": bin.month_start,
                "month_end": bin.month_end,
                "size": bin.len(),
                "checkpoint": file,
                "rotation": matrix_to_record(&self.rotations[b]),
            }));
        }
        let doc = serde_json::json!({
            "format_version": checkpoint::FORMAT_VERSION,
            "timespan": self.timespan,
            "bins": entries,
        });
        fs::write(dir.join(ROTATIONS_FILE), serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Entry {
            index: usize,
            month_start: i64,
            month_end: i64,
            checkpoint: String,
            rotation: serde_json::Value,
        }
        #[derive(Deserialize)]
        struct Doc {
            format_version: u32,
            timespan: Timespan,
            bins: Vec<Entry>,
        }
        let dir = dir.as_ref();
        let text = fs::read_to_string(dir.join(ROTATIONS_FILE))?;
        let doc: Doc = serde_json::from_str(&text).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        if doc.format_version != checkpoint::FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: doc.format_version,
                expected: checkpoint::FORMAT_VERSION,
            });
        }
        let mut bins = Vec::new();
        let mut models = Vec::new();
        let mut rotations = Vec::new();
        for e in doc.bins {
            let ck = checkpoint::load::<T>(dir.join(&e.checkpoint))?;
            let rot: Matrix<T> = matrix_from_record(&e.rotation)?;
            let d = ck.params.config.embed_dim;
            if rot.shape() != (d, d) {
                return Err(Error::CorruptCheckpoint(format!(
                    "rotation for bin {} is {:?}, expected {d}x{d}",
                    e.index,
                    rot.shape()
                )));
            }
            bins.push(Bin {
                index: e.index,
                month_start: e.month_start,
                month_end: e.month_end,
                members: Vec::new(),
            });
            models.push(ck.params);
            rotations.push(rot);
        }
        let mut bm = Self::new(bins, models, Timespan::new(doc.timespan.start, doc.timespan.end)?)?;
        bm.rotations = rotations;
        Ok(bm)
    }
}

/// Rows of `bin` used for alignment: all of them, or `cap` chosen uniformly
/// with a seeded shuffle, kept in dataset order.
fn alignment_rows(bin: &Bin, cap: usize, rng: &mut Rng) -> Vec<usize> {
    let mut rows = bin.members.clone();
    if rows.len() > cap {
        rng.shuffle(&mut rows);
        rows.truncate(cap);
        rows.sort_unstable();
    }
    rows
}

/// Both modalities of `rows`, embedded by bin `b`'s model at each instance's own time.
fn embed_rows<T: Scalar>(bm: &BinnedModel<T>, b: usize, sample: &Dataset<T>, rows: &[usize]) -> Result<Matrix<T>> {
    let d = bm.models[b].config.embed_dim;
    let mut data = Vec::with_capacity(2 * rows.len() * d);
    for &r in rows {
        let inst = &sample.instances[r];
        for modality in [Modality::Visual, Modality::Text] {
            data.extend(bm.embed_raw(b, inst.features(modality).as_slice(), modality, inst.ts)?);
        }
    }
    Matrix::from_vec(2 * rows.len(), d, data)
}

/// Fits `Ω_b` between each adjacent pair of bins on bin `b`'s instances from
/// `sample` (the dataset the bins index), then composes them toward the last
/// bin: `R_last = I`, `R_b = Ω_b R_{b+1}`.
pub fn align_chain<T: Scalar>(bm: &mut BinnedModel<T>, sample: &Dataset<T>, cap: usize, rng: &mut Rng) -> Result<()> {
    let n = bm.len();
    let d = bm.models[0].config.embed_dim;
    let mut omegas = Vec::with_capacity(n.saturating_sub(1));
    for b in 0..n.saturating_sub(1) {
        let rows = alignment_rows(&bm.bins[b], cap, rng);
        if rows.is_empty() {
            return Err(Error::Empty(format!("bin {} has no instances to align", bm.bins[b].index)));
        }
        let m_t = embed_rows(bm, b, sample, &rows)?;
        let m_next = embed_rows(bm, b + 1, sample, &rows)?;
        omegas.push(procrustes(&m_t, &m_next)?);
    }
    let mut rotations = vec![Matrix::identity(d); n];
    for b in (0..omegas.len()).rev() {
        rotations[b] = omegas[b].matmul(&rotations[b + 1])?;
    }
    bm.rotations = rotations;
    Ok(())
}

/// Trains one static model per bin of `train` and aligns the chain.
///
/// Validation for bin `b` is the subset of `val` in the same month. Bins
/// train independently and in parallel; results do not depend on thread count.
pub fn train_binned<T: Scalar>(
    train: &Dataset<T>,
    val: &Dataset<T>,
    cfg: &TrainConfig,
    binning: &Binning,
) -> Result<BinnedModel<T>> {
    if binning.bins.is_empty() {
        return Err(Error::Empty("no bins to train".into()));
    }
    if let Some(bin) = binning.bins.iter().find(|b| b.len() < 2) {
        return Err(Error::TooSmall(format!(
            "bin {} has {} instances, need at least 2 to form a batch",
            bin.index,
            bin.len()
        )));
    }
    let base = cfg.static_baseline();
    let models = binning
        .bins
        .par_iter()
        .enumerate()
        .map(|(b, bin)| {
            let bin_train = train.subset(&bin.members);
            let val_rows: Vec<usize> = (0..val.len())
                .filter(|&r| (bin.month_start..bin.month_end).contains(&val.instances[r].ts))
                .collect();
            let bin_val = val.subset(&val_rows);
            let mut c = base.clone();
            c.seed = cfg.seed.wrapping_add(b as u64);
            c.model.seed = cfg.model.seed.wrapping_add(b as u64);
            let (params, report) = train_continuous(&bin_train, &bin_val, &c)?;
            info!(
                "bin {} ({} instances): selected epoch {}",
                bin.index,
                bin.len(),
                report.selected_epoch
            );
            Ok(params)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut bm = BinnedModel::new(binning.bins.clone(), models, train.timespan)?;
    let mut rng = Rng::new(cfg.seed).split(5);
    align_chain(&mut bm, train, DEFAULT_ALIGN_SAMPLE_CAP, &mut rng)?;
    Ok(bm)
}
