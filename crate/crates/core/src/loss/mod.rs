//! Diachronic ranking loss.
//!
//! Two kinds of triplet are combined. Inter-category triplets pull an
//! instance's image and text together while pushing away the opposite
//! modality of an instance from another category. Intra-category triplets
//! apply only to same-category pairs further apart than a window: the
//! distant instance must rank below the anchor's own counterpart, with the
//! hinge scaled by `ρ = 1 − exp(−|Δt| λ)` so older pairs are pushed harder.

mod sampling;

pub use sampling::sample_batch_triplets;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Modality};
use crate::error::{Error, Result};
use crate::model::{backward, forward, ForwardCache, ModelParams};
use crate::numerics::{dot, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub margin: f64,
    /// Months within which same-category pairs are left alone.
    pub window_months: f64,
    /// `λ` in `ρ`, per month.
    pub decay: f64,
    /// Margin of the intra-category hinge; the inter margin when unset.
    pub intra_margin: Option<f64>,
    /// Inter-category negatives per anchor.
    pub k_neg: usize,
    /// Distant same-category partners per anchor.
    pub k_pos: usize,
    /// Static and binned baselines train with the intra term switched off.
    pub intra_enabled: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            window_months: 4.0,
            decay: 0.1,
            intra_margin: None,
            k_neg: 1,
            k_pos: 1,
            intra_enabled: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) || !self.margin.is_finite() {
            return Err(Error::InvalidConfig(format!("margin must be > 0, got {}", self.margin)));
        }
        if !(self.window_months >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "window must be >= 0 months, got {}",
                self.window_months
            )));
        }
        if !(self.decay > 0.0) || !self.decay.is_finite() {
            return Err(Error::InvalidConfig(format!("decay must be > 0, got {}", self.decay)));
        }
        if let Some(m) = self.intra_margin {
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::InvalidConfig(format!("intra margin must be > 0, got {m}")));
            }
        }
        Ok(())
    }

    pub fn intra_margin(&self) -> f64 {
        self.intra_margin.unwrap_or(self.margin)
    }
}

/// `[m − s_ap + s_an]₊`.
pub fn hinge(m: f64, s_ap: f64, s_an: f64) -> f64 {
    (m - s_ap + s_an).max(0.0)
}

/// Temporal decay `1 − exp(−|t_a − t_b| λ)`, times in months.
pub fn rho(t_a: f64, t_b: f64, decay: f64) -> f64 {
    -(-(t_a - t_b).abs() * decay).exp_m1()
}

/// Intra-category term for an anchor whose counterpart scores `s_counterpart`
/// and whose same-category partner, `dt_months` away, scores `s_distant`.
pub fn intra_loss(dt_months: f64, s_counterpart: f64, s_distant: f64, cfg: &LossConfig) -> f64 {
    if dt_months.abs() <= cfg.window_months {
        return 0.0;
    }
    rho(dt_months, 0.0, cfg.decay) * hinge(cfg.intra_margin(), s_counterpart, s_distant)
}

/// Inter-category term: the counterpart is the positive.
pub fn inter_loss(s_counterpart: f64, s_negative: f64, cfg: &LossConfig) -> f64 {
    hinge(cfg.margin, s_counterpart, s_negative)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TripletKind {
    Inter,
    Intra,
}

/// One side of a triplet: a batch position and the modality used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Member {
    pub pos: usize,
    pub modality: Modality,
}

impl Member {
    pub fn new(pos: usize, modality: Modality) -> Self {
        Self { pos, modality }
    }
}

/// A ranking constraint `s(anchor, positive) ≥ s(anchor, negative) + margin`.
///
/// `positive` is always the anchor's own cross-modal counterpart. For intra
/// triplets `negative` is the temporally distant same-category instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: Member,
    pub positive: Member,
    pub negative: Member,
    pub kind: TripletKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossValue {
    pub total: f64,
    pub inter_part: f64,
    pub intra_part: f64,
    /// Triplets with a non-zero contribution.
    pub active_triplet_count: usize,
}

/// Batch rows in dataset order plus month distances between them.
struct BatchView<'a, T> {
    ds: &'a Dataset<T>,
    rows: &'a [usize],
    months: f64,
}

impl<T: Scalar> BatchView<'_, T> {
    fn dt_months(&self, a: usize, b: usize) -> f64 {
        (self.ds.time_of(self.rows[a]) - self.ds.time_of(self.rows[b])).abs() * self.months
    }

    fn check(&self, t: &Triplet) -> Result<()> {
        let n = self.rows.len();
        for m in [t.anchor, t.positive, t.negative] {
            if m.pos >= n {
                return Err(Error::InvalidTriplet(format!("position {} outside batch of {n}", m.pos)));
            }
        }
        if t.positive.pos != t.anchor.pos || t.positive.modality != t.anchor.modality.opposite() {
            return Err(Error::InvalidTriplet(
                "positive must be the anchor's cross-modal counterpart".into(),
            ));
        }
        if t.negative.modality != t.anchor.modality.opposite() {
            return Err(Error::InvalidTriplet("negative must use the opposite modality".into()));
        }
        let cat = |pos: usize| self.ds.instances[self.rows[pos]].category;
        match t.kind {
            TripletKind::Inter if cat(t.negative.pos) == cat(t.anchor.pos) => Err(Error::InvalidTriplet(
                "inter-category negative shares the anchor's category".into(),
            )),
            TripletKind::Intra
                if cat(t.negative.pos) != cat(t.anchor.pos) || t.negative.pos == t.anchor.pos =>
            {
                Err(Error::InvalidTriplet(
                    "intra partner must be another instance of the anchor's category".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

/// Scalar weight on the hinge for one triplet: 0 when it cannot contribute.
fn triplet_weight<T: Scalar>(view: &BatchView<'_, T>, t: &Triplet, cfg: &LossConfig) -> (f64, f64) {
    match t.kind {
        TripletKind::Inter => (1.0, cfg.margin),
        TripletKind::Intra => {
            let dt = view.dt_months(t.anchor.pos, t.negative.pos);
            if dt <= cfg.window_months {
                (0.0, cfg.intra_margin())
            } else {
                (rho(dt, 0.0, cfg.decay), cfg.intra_margin())
            }
        }
    }
}

fn slot(m: Member) -> usize {
    2 * m.pos + (m.modality == Modality::Text) as usize
}

/// Forward caches for every (position, modality) the triplets touch.
fn forward_all<T: Scalar>(
    p: &ModelParams<T>,
    view: &BatchView<'_, T>,
    triplets: &[Triplet],
) -> Result<Vec<Option<ForwardCache<T>>>> {
    let mut caches: Vec<Option<ForwardCache<T>>> = vec![None; 2 * view.rows.len()];
    for t in triplets {
        view.check(t)?;
        for m in [t.anchor, t.positive, t.negative] {
            let s = slot(m);
            if caches[s].is_none() {
                let row = view.rows[m.pos];
                let x = view.ds.instances[row].features(m.modality);
                let u = T::cast(view.ds.time_of(row));
                caches[s] = Some(forward(p, x.as_slice(), m.modality, u)?);
            }
        }
    }
    Ok(caches)
}

fn evaluate<T: Scalar>(
    p: &ModelParams<T>,
    ds: &Dataset<T>,
    rows: &[usize],
    triplets: &[Triplet],
    cfg: &LossConfig,
    grads: Option<&mut ModelParams<T>>,
) -> Result<LossValue> {
    cfg.validate()?;
    let view = BatchView {
        ds,
        rows,
        months: ds.timespan.months(),
    };
    let caches = forward_all(p, &view, triplets)?;
    let e = |m: Member| &caches[slot(m)].as_ref().expect("cached above").e;
    let mut value = LossValue::default();
    let mut g_e: Vec<Vec<T>> = vec![Vec::new(); caches.len()];
    let want_grads = grads.is_some();

    for t in triplets {
        let (weight, margin) = triplet_weight(&view, t, cfg);
        if weight == 0.0 {
            continue;
        }
        let (ea, ep, en) = (e(t.anchor), e(t.positive), e(t.negative));
        let s_ap = dot(ea, ep).as_f64();
        let s_an = dot(ea, en).as_f64();
        let h = hinge(margin, s_ap, s_an);
        if h <= 0.0 {
            continue;
        }
        let contribution = weight * h;
        value.active_triplet_count += 1;
        match t.kind {
            TripletKind::Inter => value.inter_part += contribution,
            TripletKind::Intra => value.intra_part += contribution,
        }
        if want_grads {
            // ∂/∂e_a = w (e_n − e_p), ∂/∂e_p = −w e_a, ∂/∂e_n = w e_a
            let w = T::cast(weight);
            let d = ea.len();
            for (m, coeffs) in [
                (t.anchor, en.iter().zip(ep).map(|(&n, &p)| w * (n - p)).collect::<Vec<T>>()),
                (t.positive, ea.iter().map(|&a| -w * a).collect()),
                (t.negative, ea.iter().map(|&a| w * a).collect()),
            ] {
                let acc = &mut g_e[slot(m)];
                if acc.is_empty() {
                    acc.resize(d, T::zero());
                }
                for (g, c) in acc.iter_mut().zip(coeffs) {
                    *g += c;
                }
            }
        }
    }
    value.total = value.inter_part + value.intra_part;

    if let Some(grads) = grads {
        for (s, g) in g_e.iter().enumerate() {
            if g.is_empty() {
                continue;
            }
            let cache = caches[s].as_ref().expect("gradient slots have caches");
            let pos = s / 2;
            let modality = if s % 2 == 0 { Modality::Visual } else { Modality::Text };
            let x = ds.instances[rows[pos]].features(modality);
            backward(p, x.as_slice(), modality, cache, g, grads);
        }
    }
    Ok(value)
}

/// Loss over `triplets`, whose positions index into `rows` of `ds`.
pub fn batch_loss<T: Scalar>(
    p: &ModelParams<T>,
    ds: &Dataset<T>,
    rows: &[usize],
    triplets: &[Triplet],
    cfg: &LossConfig,
) -> Result<LossValue> {
    evaluate(p, ds, rows, triplets, cfg, None)
}

/// Loss and its exact gradient with respect to every parameter.
pub fn batch_loss_and_grads<T: Scalar>(
    p: &ModelParams<T>,
    ds: &Dataset<T>,
    rows: &[usize],
    triplets: &[Triplet],
    cfg: &LossConfig,
) -> Result<(LossValue, ModelParams<T>)> {
    let mut grads = p.zeros_like();
    let value = evaluate(p, ds, rows, triplets, cfg, Some(&mut grads))?;
    Ok((value, grads))
}
