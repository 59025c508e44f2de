use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    average_precision, average_precision_at, mean, require_nonempty, Direction, EmbeddingTable, Embedder,
    EvalReport, QueryResult, Ranking,
};
use crate::dataset::{bin_monthly, Binning, Dataset};
use crate::error::Result;
use crate::numerics::{Rng, Scalar};

/// Ranks, for each query row and direction, the opposite modality of
/// `candidates` and scores it with AP (AP@k when `k` is set).
fn rank_and_score<T: Scalar>(
    ds: &Dataset<T>,
    table: &EmbeddingTable<T>,
    queries: &[usize],
    candidates: &[usize],
    k: Option<usize>,
    relevant: &(dyn Fn(usize, usize) -> bool + Sync),
) -> Vec<QueryResult> {
    Direction::BOTH
        .iter()
        .flat_map(|&dir| {
            let qm = dir.query_modality();
            let q_emb = table.get(qm);
            let c_emb = table.get(qm.opposite());
            queries
                .par_iter()
                .map(|&q| {
                    let ranking = Ranking::new(
                        &q_emb[q],
                        candidates.iter().map(|&c| (c, c_emb[c].as_slice())),
                        ds,
                    );
                    let rel = ranking.relevance(|c| relevant(q, c));
                    QueryResult {
                        id: ds.instances[q].id.clone(),
                        direction: dir,
                        value: match k {
                            Some(k) => average_precision_at(&rel, k),
                            None => average_precision(&rel),
                        },
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Every test instance queries all opposite-modality test embeddings, each
/// projected at its own timestamp; relevance is a shared category.
pub fn coarse_alignment<T: Scalar, E: Embedder<T> + ?Sized>(model: &E, test: &Dataset<T>) -> Result<EvalReport> {
    require_nonempty(test)?;
    let table = EmbeddingTable::build(model, test)?;
    let rows: Vec<usize> = (0..test.len()).collect();
    let same_cat = |a: usize, b: usize| test.instances[a].category == test.instances[b].category;
    let queries = rank_and_score(test, &table, &rows, &rows, None, &same_cat);
    Ok(EvalReport::new("coarse_map", queries, serde_json::json!({ "protocol": "coarse" })))
}

/// mAP@k where a neighbour counts only if it shares the category and lies
/// within `window_months` calendar months of the query. `f64::INFINITY`
/// gives category-only relevance.
pub fn time_period_inference<T: Scalar, E: Embedder<T> + ?Sized>(
    model: &E,
    test: &Dataset<T>,
    k: usize,
    window_months: f64,
) -> Result<EvalReport> {
    require_nonempty(test)?;
    let table = EmbeddingTable::build(model, test)?;
    let rows: Vec<usize> = (0..test.len()).collect();
    let months: Vec<i64> = test.instances.iter().map(|i| test.timespan.month_index(i.ts)).collect();
    let relevant = |a: usize, b: usize| {
        test.instances[a].category == test.instances[b].category
            && ((months[a] - months[b]).abs() as f64) <= window_months
    };
    let queries = rank_and_score(test, &table, &rows, &rows, Some(k), &relevant);
    let window = if window_months.is_finite() {
        serde_json::json!(window_months)
    } else {
        serde_json::json!("inf")
    };
    Ok(EvalReport::new(
        format!("period_map@{k}"),
        queries,
        serde_json::json!({ "protocol": "period", "k": k, "window_months": window }),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalConfig {
    pub queries_per_cat: usize,
    pub k: usize,
    /// Months with fewer test instances are skipped.
    pub min_bin_size: usize,
    pub seed: u64,
}

impl Default for LocalConfig {
    fn default() -> Self {
        Self {
            queries_per_cat: 50,
            k: 10,
            min_bin_size: 1,
            seed: 0,
        }
    }
}

/// Up to `per_cat` rows of each category, sampled without replacement.
fn sample_queries<T: Scalar>(ds: &Dataset<T>, per_cat: usize, rng: &mut Rng) -> Vec<usize> {
    let mut out = Vec::new();
    for c in 0..ds.categories.len() {
        let mut rows: Vec<usize> = (0..ds.len()).filter(|&r| ds.instances[r].category == c).collect();
        if rows.len() > per_cat {
            rng.shuffle(&mut rows);
            rows.truncate(per_cat);
            rows.sort_unstable();
        }
        out.extend(rows);
    }
    out
}

/// Each sampled query is re-projected at every bin's midpoint and ranked
/// against that bin's opposite-modality embeddings (at their own times).
/// The per-query value is mAP@k averaged over bins.
pub fn local_alignment<T: Scalar, E: Embedder<T> + ?Sized>(
    model: &E,
    test: &Dataset<T>,
    cfg: &LocalConfig,
) -> Result<EvalReport> {
    require_nonempty(test)?;
    let table = EmbeddingTable::build(model, test)?;
    let binning = bin_monthly(test, cfg.min_bin_size.max(1));
    let queries = sample_queries(test, cfg.queries_per_cat, &mut Rng::new(cfg.seed));

    let mut results = Vec::with_capacity(2 * queries.len());
    for dir in Direction::BOTH {
        let qm = dir.query_modality();
        let c_emb = table.get(qm.opposite());
        let per_query: Vec<Result<QueryResult>> = queries
            .par_iter()
            .map(|&q| {
                let inst = &test.instances[q];
                let mut aps = Vec::with_capacity(binning.bins.len());
                for bin in &binning.bins {
                    let e = model.embed(inst.features(qm).as_slice(), qm, bin.midpoint())?;
                    let ranking = Ranking::new(&e, bin.members.iter().map(|&c| (c, c_emb[c].as_slice())), test);
                    let rel = ranking.relevance(|c| test.instances[c].category == inst.category);
                    aps.push(average_precision_at(&rel, cfg.k));
                }
                Ok(QueryResult {
                    id: inst.id.clone(),
                    direction: dir,
                    value: mean(aps.into_iter()),
                })
            })
            .collect();
        for r in per_query {
            results.push(r?);
        }
    }
    let mut report = EvalReport::new(
        format!("local_map@{}", cfg.k),
        results,
        serde_json::json!({
            "protocol": "local",
            "k": cfg.k,
            "queries_per_cat": cfg.queries_per_cat,
            "min_bin_size": cfg.min_bin_size,
            "bins": binning.bins.len(),
        }),
    );
    for bin in binning.bins.iter().filter(|b| b.len() < cfg.k) {
        report.notes.push(format!(
            "bin {} has {} candidates (< k = {}); ranked all of them",
            bin.index,
            bin.len(),
            cfg.k
        ));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinReport {
    pub index: usize,
    pub month_start: i64,
    pub size: usize,
    pub report: EvalReport,
}

/// Full cross-modal mAP inside each bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundedReport {
    pub bins: Vec<BinReport>,
    /// Means of the per-bin aggregates.
    pub i2t: f64,
    pub t2i: f64,
    pub avg: f64,
}

impl BoundedReport {
    /// `month_index,month_start,instances,i2t,t2i,avg`, one row per bin.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("month_index,month_start,instances,i2t,t2i,avg\n");
        for b in &self.bins {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                b.index,
                crate::dataset::format_iso(b.month_start),
                b.size,
                b.report.i2t,
                b.report.t2i,
                b.report.avg
            );
        }
        s
    }

    /// All per-query rows across bins, for one flat report.
    pub fn flatten(&self) -> EvalReport {
        let queries = self.bins.iter().flat_map(|b| b.report.queries.clone()).collect();
        let mut r = EvalReport::new("bounded_map", queries, serde_json::json!({ "protocol": "bounded" }));
        r.i2t = self.i2t;
        r.t2i = self.t2i;
        r.avg = self.avg;
        r
    }
}

/// The test set is binned by month and each bin evaluated on its own.
pub fn bounded_semantics<T: Scalar, E: Embedder<T> + ?Sized>(
    model: &E,
    test: &Dataset<T>,
    binning: &Binning,
) -> Result<BoundedReport> {
    require_nonempty(test)?;
    let table = EmbeddingTable::build(model, test)?;
    let same_cat = |a: usize, b: usize| test.instances[a].category == test.instances[b].category;
    let bins: Vec<BinReport> = binning
        .bins
        .iter()
        .filter(|b| !b.is_empty())
        .map(|bin| {
            let queries = rank_and_score(test, &table, &bin.members, &bin.members, None, &same_cat);
            BinReport {
                index: bin.index,
                month_start: bin.month_start,
                size: bin.len(),
                report: EvalReport::new(
                    "bounded_map",
                    queries,
                    serde_json::json!({ "protocol": "bounded", "month_index": bin.index }),
                ),
            }
        })
        .collect();
    Ok(BoundedReport {
        i2t: mean(bins.iter().map(|b| b.report.i2t)),
        t2i: mean(bins.iter().map(|b| b.report.t2i)),
        avg: mean(bins.iter().map(|b| b.report.avg)),
        bins,
    })
}
