//! Synthetic timestamped multimodal data with planted temporal structure.
//!
//! Every category owns a visual centroid and a text centroid. Instances are
//! the centroid plus isotropic Gaussian noise, stamped with a time drawn from
//! the category's temporal pattern. A shift swaps the text centroids of a
//! category and its partner from the changepoint month onward, so an image of
//! category `c` is described by `c`'s text before the changepoint and by the
//! partner's text after it.

use serde::{Deserialize, Serialize};

use crate::dataset::{month_key, month_start, parse_iso, Dataset, Instance, Timespan};
use crate::error::{Error, Result};
use crate::numerics::{Rng, Scalar, Vector};

/// Temporal distribution of one category's timestamps, in months from the start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pattern {
    /// Normal around the middle of `center_month` with standard deviation
    /// `width` months, redrawn until it falls inside the range.
    Spike { center_month: f64, width: f64 },
    /// Density proportional to `cos²(π t / period_months)`.
    Recurrent { period_months: f64 },
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shift {
    pub category: usize,
    pub changepoint_month: usize,
    /// Category whose text centroid is swapped in. Defaults to the next category.
    #[serde(default)]
    pub partner: Option<usize>,
}

impl Shift {
    pub fn partner(&self, n_categories: usize) -> usize {
        self.partner.unwrap_or((self.category + 1) % n_categories)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_categories: usize,
    pub instances_per_category: usize,
    pub d_v: usize,
    pub d_t: usize,
    pub months: usize,
    /// First month, ISO-8601.
    pub start: String,
    /// One per category; missing entries are uniform.
    pub patterns: Vec<Pattern>,
    pub shifts: Vec<Shift>,
    pub cluster_separation: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    /// Four categories over two years: a spike, a yearly recurrence, and two
    /// uniform categories whose texts swap at month 12.
    fn default() -> Self {
        Self {
            n_categories: 4,
            instances_per_category: 500,
            d_v: 64,
            d_t: 48,
            months: 24,
            start: "2015-01-01T00:00:00Z".into(),
            patterns: vec![
                Pattern::Spike {
                    center_month: 6.0,
                    width: 2.0,
                },
                Pattern::Recurrent { period_months: 12.0 },
                Pattern::Uniform,
                Pattern::Uniform,
            ],
            shifts: vec![Shift {
                category: 2,
                changepoint_month: 12,
                partner: Some(3),
            }],
            cluster_separation: 1.0,
            noise_sigma: 0.15,
            seed: 7,
        }
    }
}

impl SynthConfig {
    /// The default layout without any shift.
    pub fn stationary() -> Self {
        Self {
            shifts: Vec::new(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_categories == 0 || self.instances_per_category == 0 {
            return bad("need at least one category and one instance per category".into());
        }
        if self.d_v == 0 || self.d_t == 0 || self.months == 0 {
            return bad("d_v, d_t and months must be positive".into());
        }
        if self.patterns.len() > self.n_categories {
            return bad(format!(
                "{} patterns for {} categories",
                self.patterns.len(),
                self.n_categories
            ));
        }
        if !(self.cluster_separation > 0.0) || !self.cluster_separation.is_finite() {
            return bad(format!("cluster_separation must be > 0, got {}", self.cluster_separation));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        self.start_ts()?;
        for p in &self.patterns {
            match *p {
                Pattern::Spike { center_month, width } => {
                    if !center_month.is_finite() || !(width > 0.0) || !width.is_finite() {
                        return bad(format!("spike needs finite center and width > 0, got {p:?}"));
                    }
                }
                Pattern::Recurrent { period_months } => {
                    if !(period_months > 0.0) || !period_months.is_finite() {
                        return bad(format!("recurrent period must be > 0, got {period_months}"));
                    }
                }
                Pattern::Uniform => {}
            }
        }
        let mut seen = vec![false; self.n_categories];
        for s in &self.shifts {
            if s.category >= self.n_categories {
                return bad(format!("shift category {} out of range", s.category));
            }
            if s.changepoint_month >= self.months {
                return bad(format!(
                    "changepoint month {} must be < months ({})",
                    s.changepoint_month, self.months
                ));
            }
            let partner = s.partner(self.n_categories);
            if partner >= self.n_categories || partner == s.category {
                return bad(format!("shift partner {partner} invalid for category {}", s.category));
            }
            for c in [s.category, partner] {
                if std::mem::replace(&mut seen[c], true) {
                    return bad(format!("category {c} appears in more than one shift"));
                }
            }
        }
        Ok(())
    }

    pub fn pattern(&self, category: usize) -> &Pattern {
        self.patterns.get(category).unwrap_or(&Pattern::Uniform)
    }

    fn start_ts(&self) -> Result<i64> {
        parse_iso(&self.start)
            .ok_or_else(|| Error::InvalidConfig(format!("unparseable start {:?}", self.start)))
    }

    /// Whole months `[first day of month 0, last second of the final month]`.
    pub fn timespan(&self) -> Result<Timespan> {
        let k0 = month_key(self.start_ts()?);
        Timespan::new(month_start(k0), month_start(k0 + self.months as i64) - 1)
    }

    pub fn category_name(c: usize) -> String {
        format!("cat{c:02}")
    }
}

/// Generative parameters behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub categories: Vec<String>,
    pub visual_centroids: Vec<Vec<f64>>,
    pub text_centroids: Vec<Vec<f64>>,
}

impl GroundTruth {
    /// Centroids are a pure function of the config seed and dimensions.
    pub fn new(cfg: &SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let root = Rng::new(cfg.seed);
        let mut rng = root.split(1);
        let mut centroid = |d: usize| -> Vec<f64> {
            loop {
                let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 1e-6 {
                    return v.iter().map(|x| x / n * cfg.cluster_separation).collect();
                }
            }
        };
        let visual_centroids = (0..cfg.n_categories).map(|_| centroid(cfg.d_v)).collect();
        let text_centroids = (0..cfg.n_categories).map(|_| centroid(cfg.d_t)).collect();
        Ok(Self {
            config: cfg.clone(),
            categories: (0..cfg.n_categories).map(SynthConfig::category_name).collect(),
            visual_centroids,
            text_centroids,
        })
    }

    /// Index of the text centroid that category `c` uses in month `month`.
    pub fn text_source(&self, c: usize, month: usize) -> usize {
        let n = self.config.n_categories;
        for s in &self.config.shifts {
            let partner = s.partner(n);
            if month >= s.changepoint_month {
                if s.category == c {
                    return partner;
                }
                if partner == c {
                    return s.category;
                }
            }
        }
        c
    }

    pub fn text_centroid(&self, c: usize, month: usize) -> &[f64] {
        &self.text_centroids[self.text_source(c, month)]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Draws a month offset in `[0, months)` from `pattern`.
fn draw_month(pattern: &Pattern, months: usize, rng: &mut Rng) -> f64 {
    let hi = months as f64;
    match *pattern {
        Pattern::Spike { center_month, width } => loop {
            let t = center_month + 0.5 + width * rng.normal();
            if (0.0..hi).contains(&t) {
                return t;
            }
        },
        Pattern::Recurrent { period_months } => loop {
            let t = rng.unit() * hi;
            let c = (std::f64::consts::PI * t / period_months).cos();
            if rng.unit() < c * c {
                return t;
            }
        },
        Pattern::Uniform => rng.unit() * hi,
    }
}

/// Maps a fractional month offset onto the calendar, so the instance lands in
/// calendar month `k0 + floor(t)`.
fn month_offset_to_ts(k0: i64, t: f64) -> i64 {
    let m = t.floor() as i64;
    let lo = month_start(k0 + m);
    let len = month_start(k0 + m + 1) - lo;
    (lo + ((t - m as f64) * len as f64) as i64).min(lo + len - 1)
}

/// Generates the dataset described by `cfg`. Bitwise deterministic under the seed.
pub fn generate<T: Scalar>(cfg: &SynthConfig) -> Result<Dataset<T>> {
    generate_with_truth(cfg).map(|(ds, _)| ds)
}

pub fn generate_with_truth<T: Scalar>(cfg: &SynthConfig) -> Result<(Dataset<T>, GroundTruth)> {
    let truth = GroundTruth::new(cfg)?;
    let span = cfg.timespan()?;
    let k0 = month_key(span.start);
    let root = Rng::new(cfg.seed);
    let mut instances = Vec::with_capacity(cfg.n_categories * cfg.instances_per_category);
    for c in 0..cfg.n_categories {
        let mut rng = root.split(100 + c as u64);
        for i in 0..cfg.instances_per_category {
            let t = draw_month(cfg.pattern(c), cfg.months, &mut rng);
            let month = t.floor() as usize;
            let mut noisy = |centre: &[f64]| -> Result<Vector<T>> {
                Vector::new(
                    centre
                        .iter()
                        .map(|&m| T::cast(m + cfg.noise_sigma * rng.normal()))
                        .collect(),
                )
            };
            let visual = noisy(&truth.visual_centroids[c])?;
            let text = noisy(truth.text_centroid(c, month))?;
            instances.push(Instance {
                id: format!("c{c}-{i:05}"),
                visual,
                text,
                ts: month_offset_to_ts(k0, t),
                category: c,
            });
        }
    }
    let ds = Dataset::new(instances, truth.categories.clone(), span)?;
    Ok((ds, truth))
}
