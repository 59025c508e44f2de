//! Instances, timespans, ingestion, text featurization, monthly binning and
//! train/validation/test splitting.

mod binning;
mod jsonl;
mod split;
mod tfidf;
mod time;

pub use binning::{bin_monthly, Bin, Binning};
pub use jsonl::{
    load_jsonl, load_jsonl_with, read_jsonl, write_jsonl, LoadOptions, TextEncoding,
    DEFAULT_VOCAB_SIZE,
};
pub use split::{split, split_sizes, Split, SplitMode};
pub use tfidf::{tfidf_featurize, TfidfModel};
pub use time::{
    format_iso, month_key, month_start, normalize_ts, parse_iso, Timespan, SECONDS_PER_MONTH,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Scalar, Vector};

/// Default threshold: bins with fewer members are dropped.
pub const DEFAULT_MIN_BIN_SIZE: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Visual,
    Text,
}

impl Modality {
    pub fn opposite(self) -> Self {
        match self {
            Modality::Visual => Modality::Text,
            Modality::Text => Modality::Visual,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Visual => "visual",
            Modality::Text => "text",
        }
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "visual" | "image" | "v" => Ok(Modality::Visual),
            "text" | "t" => Ok(Modality::Text),
            other => Err(Error::InvalidConfig(format!("unknown modality {other:?}"))),
        }
    }
}

/// One multimodal document.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance<T = f64> {
    pub id: String,
    pub visual: Vector<T>,
    pub text: Vector<T>,
    /// UTC epoch seconds.
    pub ts: i64,
    /// Index into [`Dataset::categories`].
    pub category: usize,
}

impl<T: Scalar> Instance<T> {
    pub fn features(&self, modality: Modality) -> &Vector<T> {
        match modality {
            Modality::Visual => &self.visual,
            Modality::Text => &self.text,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset<T = f64> {
    pub instances: Vec<Instance<T>>,
    pub timespan: Timespan,
    pub categories: Vec<String>,
    pub d_v: usize,
    pub d_t: usize,
    /// Present when texts were featurized from raw tokens.
    pub text_encoder: Option<TfidfModel>,
}

impl<T: Scalar> Dataset<T> {
    /// Validates shared dimensions, category indices and timestamps.
    pub fn new(
        instances: Vec<Instance<T>>,
        categories: Vec<String>,
        timespan: Timespan,
    ) -> Result<Self> {
        let first = instances
            .first()
            .ok_or_else(|| Error::Empty("dataset has no instances".into()))?;
        let d_v = first.visual.dim();
        let d_t = first.text.dim();
        for (i, inst) in instances.iter().enumerate() {
            if inst.visual.dim() != d_v {
                return Err(Error::dims("Dataset visual dim", d_v, format!("{} (instance {i})", inst.visual.dim())));
            }
            if inst.text.dim() != d_t {
                return Err(Error::dims("Dataset text dim", d_t, format!("{} (instance {i})", inst.text.dim())));
            }
            if inst.category >= categories.len() {
                return Err(Error::InvalidConfig(format!(
                    "instance {} has category index {} but only {} categories exist",
                    inst.id,
                    inst.category,
                    categories.len()
                )));
            }
            if !timespan.contains(inst.ts) {
                return Err(Error::OutOfSpan {
                    ts: inst.ts,
                    start: timespan.start,
                    end: timespan.end,
                });
            }
        }
        Ok(Self {
            instances,
            timespan,
            categories,
            d_v,
            d_t,
            text_encoder: None,
        })
    }

    /// Timespan taken as `[min ts, max ts]`.
    pub fn from_instances(instances: Vec<Instance<T>>, categories: Vec<String>) -> Result<Self> {
        let min = instances.iter().map(|i| i.ts).min();
        let max = instances.iter().map(|i| i.ts).max();
        let (Some(min), Some(max)) = (min, max) else {
            return Err(Error::Empty("dataset has no instances".into()));
        };
        Self::new(instances, categories, Timespan::new(min, max)?)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Instances at `rows`, keeping the timespan, category table and encoder.
    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            instances: rows.iter().map(|&r| self.instances[r].clone()).collect(),
            timespan: self.timespan,
            categories: self.categories.clone(),
            d_v: self.d_v,
            d_t: self.d_t,
            text_encoder: self.text_encoder.clone(),
        }
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.instances.iter().position(|i| i.id == id)
    }

    /// Normalized time of instance `row`.
    pub fn time_of(&self, row: usize) -> f64 {
        self.timespan.normalize_clamped(self.instances[row].ts)
    }

    pub fn category_count(&self) -> usize {
        self.categories.len()
    }

    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        let conv = |v: &Vector<T>| Vector::new(v.iter().map(|x| U::cast(x.as_f64())).collect()).expect("finite");
        Dataset {
            instances: self
                .instances
                .iter()
                .map(|i| Instance {
                    id: i.id.clone(),
                    visual: conv(&i.visual),
                    text: conv(&i.text),
                    ts: i.ts,
                    category: i.category,
                })
                .collect(),
            timespan: self.timespan,
            categories: self.categories.clone(),
            d_v: self.d_v,
            d_t: self.d_t,
            text_encoder: self.text_encoder.clone(),
        }
    }
}
