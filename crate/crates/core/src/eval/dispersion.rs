use std::fmt::Write as _;

use serde::Serialize;

use super::{Embedder, EmbeddingTable, Ranking};
use crate::dataset::{format_iso, Binning, Dataset, Modality};
use crate::error::{Error, Result};
use crate::numerics::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionPoint {
    pub index: usize,
    pub month_start: i64,
    /// Mean cosine to the nearest candidates; `None` when the bin had none.
    pub value: Option<f64>,
    /// Candidates averaged (at most K).
    pub neighbours: usize,
    /// Fewer than K candidates were available.
    pub short: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispersionSeries {
    pub query_id: String,
    pub modality: Modality,
    pub k: usize,
    pub points: Vec<DispersionPoint>,
}

impl DispersionSeries {
    /// Bin position (not month index) of the largest value. Ties go to the earliest bin.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in self.points.iter().enumerate() {
            if let Some(v) = p.value {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
        }
        best.map(|(i, _)| i)
    }

    /// `month_index,month_start,dispersion,neighbours,short`; empty cell for gaps.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("month_index,month_start,dispersion,neighbours,short\n");
        for p in &self.points {
            let v = p.value.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                p.index,
                format_iso(p.month_start),
                v,
                p.neighbours,
                p.short as u8
            );
        }
        s
    }
}

fn query_row<T: Scalar>(ds: &Dataset<T>, query: usize) -> Result<()> {
    if query >= ds.len() {
        return Err(Error::InvalidConfig(format!(
            "query row {query} outside dataset of {}",
            ds.len()
        )));
    }
    Ok(())
}

/// Semantic dispersion of instance `query` seen through `modality`: the
/// query is embedded once at its own time, then for each bin the mean cosine
/// to its `k` nearest embeddings among that bin's instances (both
/// modalities, the query itself excluded).
pub fn dispersion<T: Scalar, E: Embedder<T> + ?Sized>(
    model: &E,
    ds: &Dataset<T>,
    table: &EmbeddingTable<T>,
    binning: &Binning,
    query: usize,
    modality: Modality,
    k: usize,
) -> Result<DispersionSeries> {
    query_row(ds, query)?;
    let inst = &ds.instances[query];
    let q = model.embed(inst.features(modality).as_slice(), modality, inst.ts)?;
    let points = binning
        .bins
        .iter()
        .map(|bin| {
            let mut sims: Vec<f64> = Vec::with_capacity(2 * bin.len());
            for m in [Modality::Visual, Modality::Text] {
                let emb = table.get(m);
                sims.extend(
                    bin.members
                        .iter()
                        .filter(|&&r| r != query)
                        .map(|&r| crate::numerics::dot(&q, &emb[r]).as_f64()),
                );
            }
            sims.sort_by(|a, b| b.partial_cmp(a).expect("finite similarities"));
            let n = sims.len().min(k);
            DispersionPoint {
                index: bin.index,
                month_start: bin.month_start,
                value: (n > 0).then(|| sims[..n].iter().sum::<f64>() / n as f64),
                neighbours: n,
                short: n < k,
            }
        })
        .collect();
    Ok(DispersionSeries {
        query_id: inst.id.clone(),
        modality,
        k,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimelineEntry {
    pub index: usize,
    pub month_start: i64,
    pub best_similarity: f64,
    /// `(instance id, similarity)`, best first.
    pub matches: Vec<(String, f64)>,
}

/// Bins ranked by their single closest opposite-modality instance to the
/// query (embedded at its own time); the top `top_bins`, each with its
/// `per_bin` best matches. The query instance is never its own match.
pub fn evolution_timeline<T: Scalar, E: Embedder<T> + ?Sized>(
    model: &E,
    ds: &Dataset<T>,
    table: &EmbeddingTable<T>,
    binning: &Binning,
    query: usize,
    modality: Modality,
    top_bins: usize,
    per_bin: usize,
) -> Result<Vec<TimelineEntry>> {
    query_row(ds, query)?;
    let inst = &ds.instances[query];
    let q = model.embed(inst.features(modality).as_slice(), modality, inst.ts)?;
    let emb = table.get(modality.opposite());
    let mut entries: Vec<TimelineEntry> = binning
        .bins
        .iter()
        .filter_map(|bin| {
            let ranking = Ranking::new(
                &q,
                bin.members
                    .iter()
                    .filter(|&&r| r != query)
                    .map(|&r| (r, emb[r].as_slice())),
                ds,
            );
            let best = ranking.items.first()?.1;
            Some(TimelineEntry {
                index: bin.index,
                month_start: bin.month_start,
                best_similarity: best,
                matches: ranking
                    .items
                    .iter()
                    .take(per_bin)
                    .map(|&(r, s)| (ds.instances[r].id.clone(), s))
                    .collect(),
            })
        })
        .collect();
    entries.sort_by(|a, b| {
        b.best_similarity
            .partial_cmp(&a.best_similarity)
            .expect("finite similarities")
            .then(a.index.cmp(&b.index))
    });
    entries.truncate(top_bins);
    Ok(entries)
}
