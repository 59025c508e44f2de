//! Retrieval evaluation.
//!
//! Every protocol ranks opposite-modality candidates by cosine similarity to
//! a query embedding and scores the ranking with average precision. Rankings
//! break similarity ties by ascending instance id, so all metrics are
//! reproducible.

mod dispersion;
mod protocols;

pub use dispersion::{dispersion, evolution_timeline, DispersionPoint, DispersionSeries, TimelineEntry};
pub use protocols::{
    bounded_semantics, coarse_alignment, local_alignment, time_period_inference, BinReport,
    BoundedReport, LocalConfig,
};

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{Dataset, Modality};
use crate::error::{Error, Result};
use crate::model::DiachronicModel;
use crate::numerics::{dot, Scalar, Vector};
use crate::trainer::BinnedModel;

/// Anything that maps features at an instant to a unit vector in a shared space.
pub trait Embedder<T: Scalar>: Sync {
    fn embed(&self, x: &[T], modality: Modality, ts: i64) -> Result<Vec<T>>;
}

impl<T: Scalar> Embedder<T> for DiachronicModel<T> {
    fn embed(&self, x: &[T], modality: Modality, ts: i64) -> Result<Vec<T>> {
        Ok(self
            .project_at(&Vector::new(x.to_vec())?, modality, ts)?
            .vector
            .into_vec())
    }
}

impl<T: Scalar> Embedder<T> for BinnedModel<T> {
    fn embed(&self, x: &[T], modality: Modality, ts: i64) -> Result<Vec<T>> {
        BinnedModel::embed(self, x, modality, ts)
    }
}

/// Both modalities of every instance, each embedded at its own timestamp.
#[derive(Debug, Clone)]
pub struct EmbeddingTable<T = f64> {
    pub visual: Vec<Vec<T>>,
    pub text: Vec<Vec<T>>,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn build<E: Embedder<T> + ?Sized>(model: &E, ds: &Dataset<T>) -> Result<Self> {
        let embed = |modality: Modality| -> Result<Vec<Vec<T>>> {
            ds.instances
                .par_iter()
                .map(|i| model.embed(i.features(modality).as_slice(), modality, i.ts))
                .collect()
        };
        Ok(Self {
            visual: embed(Modality::Visual)?,
            text: embed(Modality::Text)?,
        })
    }

    pub fn get(&self, modality: Modality) -> &[Vec<T>] {
        match modality {
            Modality::Visual => &self.visual,
            Modality::Text => &self.text,
        }
    }
}

/// Retrieval direction: the query modality and the opposite candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    #[serde(rename = "I2T")]
    ImageToText,
    #[serde(rename = "T2I")]
    TextToImage,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::ImageToText, Direction::TextToImage];

    pub fn query_modality(self) -> Modality {
        match self {
            Direction::ImageToText => Modality::Visual,
            Direction::TextToImage => Modality::Text,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Direction::ImageToText => "I2T",
            Direction::TextToImage => "T2I",
        }
    }
}

/// Candidate rows ordered by descending similarity, ties by ascending id.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub items: Vec<(usize, f64)>,
}

impl Ranking {
    /// Ranks `candidates` (dataset rows) of `ds` by similarity to `query`.
    pub fn new<'a, T: Scalar>(query: &[T], candidates: impl IntoIterator<Item = (usize, &'a [T])>, ds: &Dataset<T>) -> Self {
        let mut items: Vec<(usize, f64)> = candidates
            .into_iter()
            .map(|(row, e)| (row, dot(query, e).as_f64().clamp(-1.0, 1.0)))
            .collect();
        items.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("similarities are finite")
                .then_with(|| ds.instances[a.0].id.cmp(&ds.instances[b.0].id))
        });
        Self { items }
    }

    pub fn relevance(&self, relevant: impl Fn(usize) -> bool) -> Vec<bool> {
        self.items.iter().map(|&(row, _)| relevant(row)).collect()
    }
}

/// Mean over relevant positions `k` of precision at `k`; 0 with no relevant items.
pub fn average_precision(relevance: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &r) in relevance.iter().enumerate() {
        if r {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// Average precision of the top `k` positions alone.
pub fn average_precision_at(relevance: &[bool], k: usize) -> f64 {
    average_precision(&relevance[..k.min(relevance.len())])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryResult {
    pub id: String,
    pub direction: Direction,
    pub value: f64,
}

/// Per-query values of one metric with aggregates per direction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub metric: String,
    pub queries: Vec<QueryResult>,
    pub i2t: f64,
    pub t2i: f64,
    /// Mean over all per-query values.
    pub avg: f64,
    pub config: serde_json::Value,
    pub notes: Vec<String>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl EvalReport {
    pub fn new(metric: impl Into<String>, queries: Vec<QueryResult>, config: serde_json::Value) -> Self {
        let dir_mean = |d: Direction| mean(queries.iter().filter(|q| q.direction == d).map(|q| q.value));
        Self {
            metric: metric.into(),
            i2t: dir_mean(Direction::ImageToText),
            t2i: dir_mean(Direction::TextToImage),
            avg: mean(queries.iter().map(|q| q.value)),
            queries,
            config,
            notes: Vec::new(),
        }
    }

    pub fn value(&self, direction: Option<Direction>) -> f64 {
        match direction {
            Some(Direction::ImageToText) => self.i2t,
            Some(Direction::TextToImage) => self.t2i,
            None => self.avg,
        }
    }

    /// One row per query: `query_id,direction,value`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("query_id,direction,value\n");
        for q in &self.queries {
            let _ = writeln!(s, "{},{},{}", q.id, q.direction.label(), q.value);
        }
        s
    }

    /// Aggregates, config and notes without the per-query rows.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "metric": self.metric,
            "i2t": self.i2t,
            "t2i": self.t2i,
            "avg": self.avg,
            "queries": self.queries.len(),
            "config": self.config,
            "notes": self.notes,
        })
    }
}

pub(crate) fn require_nonempty<T>(ds: &Dataset<T>) -> Result<()> {
    if ds.instances.is_empty() {
        Err(Error::Empty("evaluation set has no instances".into()))
    } else {
        Ok(())
    }
}
