use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use log::{info, warn};
use serde::Deserialize;

use dcm::dataset::{
    bin_monthly, format_iso, load_jsonl_with, parse_iso, split, write_jsonl, Dataset, LoadOptions, Modality,
    SplitMode, TextEncoding, TfidfModel, Timespan, DEFAULT_MIN_BIN_SIZE, DEFAULT_VOCAB_SIZE,
};
use dcm::eval::{
    bounded_semantics, coarse_alignment, dispersion as dispersion_series, evolution_timeline,
    local_alignment, time_period_inference, Embedder, EmbeddingTable, EvalReport, LocalConfig,
};
use dcm::model::{self, DiachronicModel};
use dcm::synth::{generate_with_truth, SynthConfig};
use dcm::trainer::{train_binned as fit_binned, train_continuous, BinnedModel, TrainConfig};
use dcm::Rng;

use crate::output::{sibling, RunMeta};
use crate::{
    DispersionArgs, EmbedArgs, EvalArgs, ModelArgs, NeighborsArgs, Protocol, SynthArgs, TrainArgs,
    TrainBinnedArgs, TrainOverrides, UsageError,
};

const TEXT_ENCODER_FILE: &str = "text_encoder.json";

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| dcm::Error::InvalidConfig(format!("{}: {e}", path.display())).into())
}

fn parse_ts(s: &str) -> Result<i64> {
    parse_iso(s).ok_or_else(|| UsageError(format!("not an ISO-8601 timestamp: {s}")).into())
}

fn load_data(path: &Path, encoder: Option<&TfidfModel>) -> Result<Dataset> {
    let opts = match encoder {
        Some(enc) => LoadOptions {
            text: TextEncoding::Fixed(enc.clone()),
        },
        None => LoadOptions {
            text: TextEncoding::Fit {
                vocab_size: DEFAULT_VOCAB_SIZE,
            },
        },
    };
    load_jsonl_with(path, &opts).with_context(|| format!("loading {}", path.display()))
}

// ---------------------------------------------------------------------------

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let (ds, truth) = generate_with_truth::<f64>(&cfg)?;
    let meta = RunMeta::new(cfg.seed, &serde_json::json!({ "command": "synth", "synth": cfg, "split": a.split }))?;
    write_jsonl(&ds, &a.out)?;
    meta.write_json(&sibling(&a.out, ".truth.json"), serde_json::to_value(&truth)?)?;
    info!(
        "{} instances over {} .. {}",
        ds.len(),
        format_iso(ds.timespan.start),
        format_iso(ds.timespan.end)
    );
    if a.split {
        let parts = split(&ds, &mut Rng::new(cfg.seed).split(900), SplitMode::Stratified)?;
        for (name, part) in [("train", &parts.train), ("val", &parts.val), ("test", &parts.test)] {
            write_jsonl(part, sibling(&a.out, &format!(".{name}.jsonl")))?;
        }
        info!(
            "split {}/{}/{}",
            parts.train.len(),
            parts.val.len(),
            parts.test.len()
        );
    }
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct FileConfig {
    train: TrainConfig,
    min_bin_size: Option<usize>,
}

fn resolve_train(o: &TrainOverrides) -> Result<(TrainConfig, Option<usize>)> {
    let file: FileConfig = match &o.config {
        Some(p) => read_json(p)?,
        None => FileConfig::default(),
    };
    let mut c = file.train;
    if let Some(v) = o.seed {
        c.seed = v;
        c.model.seed = v;
    }
    if let Some(v) = o.epochs {
        c.epochs = v;
    }
    if let Some(v) = o.learning_rate {
        c.learning_rate = v;
    }
    if let Some(v) = o.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = o.hidden_dim {
        c.model.hidden_dim = v;
    }
    if let Some(v) = o.time_dim {
        c.model.time_dim = v;
    }
    if let Some(v) = o.embed_dim {
        c.model.embed_dim = v;
    }
    if o.no_bias {
        c.model.use_bias = false;
    }
    Ok((c, file.min_bin_size))
}

/// Loads the training (and validation) files onto one shared timeline.
fn load_training(data: &Path, val: Option<&Path>, span: Option<&Vec<String>>) -> Result<(Dataset, Dataset)> {
    let mut train = load_data(data, None)?;
    let mut val = match val {
        Some(p) => load_data(p, train.text_encoder.as_ref())?,
        None => train.subset(&[]),
    };
    let timespan = match span {
        Some(s) => Timespan::new(parse_ts(&s[0])?, parse_ts(&s[1])?)?,
        None if val.is_empty() => train.timespan,
        None => Timespan::new(
            train.timespan.start.min(val.timespan.start),
            train.timespan.end.max(val.timespan.end),
        )?,
    };
    for ds in [&mut train, &mut val] {
        if let Some(i) = ds.instances.iter().find(|i| !timespan.contains(i.ts)) {
            return Err(dcm::Error::OutOfSpan {
                ts: i.ts,
                start: timespan.start,
                end: timespan.end,
            }
            .into());
        }
        ds.timespan = timespan;
    }
    Ok((train, val))
}

fn span_json(span: &Timespan) -> serde_json::Value {
    serde_json::json!([format_iso(span.start), format_iso(span.end)])
}

pub fn train(a: TrainArgs) -> Result<()> {
    let (cfg, _) = resolve_train(&a.overrides)?;
    let (train, val) = load_training(&a.data, a.val.as_deref(), a.overrides.span.as_ref())?;
    let mut cfg = cfg.with_dims_of(&train);
    if a.static_model {
        cfg = cfg.static_baseline();
    }
    cfg.validate()?;
    let meta = RunMeta::new(
        cfg.seed,
        &serde_json::json!({ "command": "train", "train": cfg, "span": span_json(&train.timespan) }),
    )?;
    info!(
        "training on {} instances ({} validation), {} parameters",
        train.len(),
        val.len(),
        model::ModelParams::<f64>::zeros(&cfg.model).num_params()
    );
    let (params, report) = train_continuous(&train, &val, &cfg)?;
    info!(
        "selected epoch {} in {:.1}s",
        report.selected_epoch, report.wall_time_secs
    );
    model::save(&params, &train.timespan, train.text_encoder.as_ref(), &a.out)?;
    meta.stamp_json(&a.out)?;
    let report_path = a.report.unwrap_or_else(|| sibling(&a.out, ".train.csv"));
    meta.write_csv(&report_path, &report.to_csv())
}

pub fn train_binned(a: TrainBinnedArgs) -> Result<()> {
    let (cfg, file_min) = resolve_train(&a.overrides)?;
    let min_bin_size = a.min_bin_size.or(file_min).unwrap_or(DEFAULT_MIN_BIN_SIZE);
    let (train, val) = load_training(&a.data, a.val.as_deref(), a.overrides.span.as_ref())?;
    let cfg = cfg.with_dims_of(&train);
    cfg.validate()?;
    let binning = bin_monthly(&train, min_bin_size.max(2));
    if !binning.excluded.is_empty() {
        warn!(
            "{} instances fall in months with fewer than {min_bin_size} and are not used",
            binning.excluded.len()
        );
    }
    let meta = RunMeta::new(
        cfg.seed,
        &serde_json::json!({
            "command": "train-binned",
            "train": cfg.static_baseline(),
            "min_bin_size": min_bin_size,
            "span": span_json(&train.timespan),
        }),
    )?;
    info!("training {} monthly models", binning.bins.len());
    let bm = fit_binned(&train, &val, &cfg, &binning)?;
    bm.save(&a.out)?;
    meta.stamp_json(&a.out.join(dcm::trainer::ROTATIONS_FILE))?;
    if let Some(enc) = &train.text_encoder {
        fs::write(a.out.join(TEXT_ENCODER_FILE), serde_json::to_string_pretty(enc)?)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------

/// A binned model that refuses timestamps outside its timeline unless told to clamp.
struct Checked {
    inner: BinnedModel,
    clamp: bool,
}

impl Embedder<f64> for Checked {
    fn embed(&self, x: &[f64], modality: Modality, ts: i64) -> dcm::Result<Vec<f64>> {
        let span = self.inner.timespan;
        if !self.clamp && !span.contains(ts) {
            return Err(dcm::Error::OutOfSpan {
                ts,
                start: span.start,
                end: span.end,
            });
        }
        self.inner.embed(x, modality, ts)
    }
}

struct Loaded {
    model: Box<dyn Embedder<f64>>,
    encoder: Option<TfidfModel>,
    /// Continuous model trained without the time input.
    is_static: bool,
    summary: serde_json::Value,
}

fn load_model(a: &ModelArgs) -> Result<Loaded> {
    let path = &a.ckpt;
    if path.is_dir() {
        let bm = BinnedModel::load(path).with_context(|| format!("loading {}", path.display()))?;
        let enc_path = path.join(TEXT_ENCODER_FILE);
        let encoder = if enc_path.exists() { Some(read_json(&enc_path)?) } else { None };
        let summary = serde_json::json!({ "kind": "binned", "bins": bm.len(), "model": bm.models[0].config });
        Ok(Loaded {
            model: Box::new(Checked {
                inner: bm,
                clamp: a.clamp_time,
            }),
            encoder,
            is_static: false,
            summary,
        })
    } else {
        let ck = model::load::<f64>(path).with_context(|| format!("loading {}", path.display()))?;
        let encoder = ck.text_encoder.clone();
        let mut m = DiachronicModel::from(ck);
        m.clamp_time = a.clamp_time;
        Ok(Loaded {
            is_static: m.params.config.static_time,
            summary: serde_json::json!({ "kind": "continuous", "model": m.params.config }),
            model: Box::new(m),
            encoder,
        })
    }
}

fn find_row(ds: &Dataset, id: &str) -> Result<usize> {
    ds.position(id)
        .ok_or_else(|| anyhow::anyhow!("no instance with id {id}"))
}

fn emit(out: Option<&Path>, meta: &RunMeta, body: &str) -> Result<()> {
    match out {
        Some(p) => meta.write_csv(p, body),
        None => {
            print!("{}{body}", meta.csv_header());
            Ok(())
        }
    }
}

fn dispersion_csv(
    loaded: &Loaded,
    data: &Dataset,
    query_id: &str,
    modality: Modality,
    k: usize,
) -> Result<(String, serde_json::Value)> {
    if loaded.is_static {
        warn!("the model ignores time; dispersion reflects neighbourhood density only");
    }
    let row = find_row(data, query_id)?;
    let binning = bin_monthly(data, 0);
    let table = EmbeddingTable::build(&*loaded.model, data)?;
    let series = dispersion_series(&*loaded.model, data, &table, &binning, row, modality, k)?;
    let peak = series.argmax().map(|b| format_iso(series.points[b].month_start));
    let short = series.points.iter().filter(|p| p.short).count();
    Ok((
        series.to_csv(),
        serde_json::json!({ "metric": "dispersion", "query_id": query_id, "peak_month": peak, "short_bins": short }),
    ))
}

fn report_line(r: &EvalReport) {
    println!("{}: I2T {:.4} T2I {:.4} avg {:.4}", r.metric, r.i2t, r.t2i, r.avg);
}

pub fn eval(a: EvalArgs) -> Result<()> {
    if a.protocol == Protocol::Dispersion && a.query_id.is_none() {
        return Err(UsageError("--protocol dispersion needs --query-id".into()).into());
    }
    let loaded = load_model(&a.model)?;
    let test = load_data(&a.test, loaded.encoder.as_ref())?;
    let k = a.k.unwrap_or(match a.protocol {
        Protocol::Period => 50,
        Protocol::Local => 10,
        Protocol::Dispersion => 5,
        _ => 0,
    });
    let window = if a.window.is_finite() {
        serde_json::json!(a.window)
    } else {
        serde_json::json!("inf")
    };
    let meta = RunMeta::new(
        a.seed,
        &serde_json::json!({
            "command": "eval",
            "protocol": format!("{:?}", a.protocol).to_lowercase(),
            "k": k,
            "window_months": window,
            "queries_per_cat": a.queries_per_cat,
            "min_bin_size": a.min_bin_size,
            "query_id": a.query_id,
            "modality": Modality::from(a.modality),
            "clamp_time": a.model.clamp_time,
            "model": loaded.summary,
        }),
    )?;
    let model = &*loaded.model;
    let summary = match a.protocol {
        Protocol::Coarse | Protocol::Period | Protocol::Local => {
            let report = match a.protocol {
                Protocol::Coarse => coarse_alignment(model, &test)?,
                Protocol::Period => time_period_inference(model, &test, k, a.window)?,
                _ => local_alignment(
                    model,
                    &test,
                    &LocalConfig {
                        queries_per_cat: a.queries_per_cat,
                        k,
                        min_bin_size: a.min_bin_size,
                        seed: a.seed,
                    },
                )?,
            };
            if !report.notes.is_empty() {
                warn!("{} notes, see the JSON summary; first: {}", report.notes.len(), report.notes[0]);
            }
            report_line(&report);
            meta.write_csv(&a.out, &report.to_csv())?;
            report.summary_json()
        }
        Protocol::Bounded => {
            let bounded = bounded_semantics(model, &test, &bin_monthly(&test, a.min_bin_size))?;
            let flat = bounded.flatten();
            report_line(&flat);
            meta.write_csv(&a.out, &flat.to_csv())?;
            meta.write_csv(&sibling(&a.out, ".bins.csv"), &bounded.to_csv())?;
            flat.summary_json()
        }
        Protocol::Dispersion => {
            let id = a.query_id.as_deref().unwrap_or_default();
            let (csv, summary) = dispersion_csv(&loaded, &test, id, a.modality.into(), k)?;
            meta.write_csv(&a.out, &csv)?;
            summary
        }
    };
    meta.write_json(&sibling(&a.out, ".json"), summary)
}

pub fn embed(a: EmbedArgs) -> Result<()> {
    let loaded = load_model(&a.model)?;
    let x: Vec<f64> = read_json(&a.input)?;
    let e = loaded.model.embed(&x, a.modality.into(), parse_ts(&a.ts)?)?;
    println!("{}", serde_json::to_string(&e)?);
    Ok(())
}

pub fn neighbors(a: NeighborsArgs) -> Result<()> {
    let loaded = load_model(&a.model)?;
    let data = load_data(&a.data, loaded.encoder.as_ref())?;
    let row = find_row(&data, &a.query_id)?;
    let modality = Modality::from(a.modality);
    let meta = RunMeta::new(
        0,
        &serde_json::json!({
            "command": "neighbors",
            "query_id": a.query_id,
            "modality": modality,
            "top_bins": a.top_bins,
            "per_bin": a.per_bin,
            "clamp_time": a.model.clamp_time,
            "model": loaded.summary,
        }),
    )?;
    let binning = bin_monthly(&data, 0);
    let table = EmbeddingTable::build(&*loaded.model, &data)?;
    let timeline = evolution_timeline(&*loaded.model, &data, &table, &binning, row, modality, a.top_bins, a.per_bin)?;
    let mut body = String::from("rank,month_index,month_start,best_similarity,match_rank,match_id,similarity\n");
    for (rank, entry) in timeline.iter().enumerate() {
        for (m, (id, sim)) in entry.matches.iter().enumerate() {
            let _ = writeln!(
                body,
                "{},{},{},{},{},{},{}",
                rank + 1,
                entry.index,
                format_iso(entry.month_start),
                entry.best_similarity,
                m + 1,
                id,
                sim
            );
        }
    }
    emit(a.out.as_deref(), &meta, &body)
}

pub fn dispersion(a: DispersionArgs) -> Result<()> {
    let loaded = load_model(&a.model)?;
    let data = load_data(&a.data, loaded.encoder.as_ref())?;
    let modality = Modality::from(a.modality);
    let meta = RunMeta::new(
        0,
        &serde_json::json!({
            "command": "dispersion",
            "query_id": a.query_id,
            "modality": modality,
            "k": a.k,
            "clamp_time": a.model.clamp_time,
            "model": loaded.summary,
        }),
    )?;
    let (csv, summary) = dispersion_csv(&loaded, &data, &a.query_id, modality, a.k)?;
    if let Some(p) = &a.out {
        meta.write_json(&sibling(p, ".json"), summary)?;
    }
    emit(a.out.as_deref(), &meta, &csv)
}
