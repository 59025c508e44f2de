use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tfidf::TfidfModel;
use super::time::{format_iso, parse_iso};
use super::{Dataset, Instance};
use crate::error::{Error, Result};
use crate::numerics::{Scalar, Vector};

pub const DEFAULT_VOCAB_SIZE: usize = 5000;

/// How raw-token texts are turned into vectors.
#[derive(Debug, Clone)]
pub enum TextEncoding {
    /// Fit a TF-IDF vocabulary on the file being loaded.
    Fit { vocab_size: usize },
    /// Reuse a vocabulary fitted elsewhere (e.g. on the training split).
    Fixed(TfidfModel),
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub text: TextEncoding,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            text: TextEncoding::Fit {
                vocab_size: DEFAULT_VOCAB_SIZE,
            },
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    visual: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text_tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<Vec<f64>>,
    ts: String,
    category: String,
}

enum TextField {
    Tokens(Vec<String>),
    Vector(Vec<f64>),
}

pub fn load_jsonl<T: Scalar>(path: impl AsRef<Path>) -> Result<Dataset<T>> {
    load_jsonl_with(path, &LoadOptions::default())
}

pub fn load_jsonl_with<T: Scalar>(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset<T>> {
    let file = File::open(path)?;
    read_jsonl(BufReader::new(file), opts)
}

/// Parses dataset JSONL. Stable input order is preserved and categories are
/// indexed in lexicographic order of their names.
pub fn read_jsonl<T: Scalar, R: BufRead>(reader: R, opts: &LoadOptions) -> Result<Dataset<T>> {
    let mut rows: Vec<(usize, String, Vec<f64>, TextField, i64, String)> = Vec::new();
    let mut token_mode: Option<bool> = None;
    let mut d_v: Option<usize> = None;
    let mut d_t: Option<usize> = None;

    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: lineno, msg };
        let rec: Record = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let text = match (rec.text_tokens, rec.text) {
            (Some(tokens), None) => TextField::Tokens(tokens),
            (None, Some(v)) => TextField::Vector(v),
            (Some(_), Some(_)) => {
                return Err(parse_err("record has both `text_tokens` and `text`".into()))
            }
            (None, None) => return Err(parse_err("record has neither `text_tokens` nor `text`".into())),
        };
        let is_tokens = matches!(text, TextField::Tokens(_));
        match token_mode {
            None => token_mode = Some(is_tokens),
            Some(m) if m != is_tokens => {
                return Err(parse_err(
                    "file mixes raw `text_tokens` with precomputed `text` vectors".into(),
                ))
            }
            _ => {}
        }
        if rec.visual.iter().any(|v| !v.is_finite()) {
            return Err(parse_err("non-finite visual feature".into()));
        }
        match d_v {
            None => d_v = Some(rec.visual.len()),
            Some(d) if d != rec.visual.len() => {
                return Err(parse_err(format!(
                    "visual dimension {} differs from {d} on earlier lines",
                    rec.visual.len()
                )))
            }
            _ => {}
        }
        if let TextField::Vector(v) = &text {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(parse_err("non-finite text feature".into()));
            }
            match d_t {
                None => d_t = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(parse_err(format!(
                        "text dimension {} differs from {d} on earlier lines",
                        v.len()
                    )))
                }
                _ => {}
            }
        }
        let ts = parse_iso(&rec.ts)
            .ok_or_else(|| parse_err(format!("invalid ISO-8601 timestamp {:?}", rec.ts)))?;
        rows.push((lineno, rec.id, rec.visual, text, ts, rec.category));
    }
    if rows.is_empty() {
        return Err(Error::Empty("dataset file has no records".into()));
    }

    let categories: Vec<String> = rows
        .iter()
        .map(|r| r.5.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let encoder = if token_mode == Some(true) {
        let texts: Vec<&Vec<String>> = rows
            .iter()
            .map(|r| match &r.3 {
                TextField::Tokens(t) => t,
                TextField::Vector(_) => unreachable!("mode checked per line"),
            })
            .collect();
        Some(match &opts.text {
            TextEncoding::Fit { vocab_size } => {
                let owned: Vec<Vec<String>> = texts.iter().map(|t| (*t).clone()).collect();
                TfidfModel::fit(&owned, *vocab_size)?
            }
            TextEncoding::Fixed(model) => model.clone(),
        })
    } else {
        None
    };

    let to_vec = |v: &[f64]| Vector::new(v.iter().map(|&x| T::cast(x)).collect());
    let mut instances = Vec::with_capacity(rows.len());
    for (lineno, id, visual, text, ts, cat) in rows {
        let text_vec = match (&text, &encoder) {
            (TextField::Tokens(t), Some(enc)) => enc.transform(t),
            (TextField::Vector(v), _) => v.clone(),
            (TextField::Tokens(_), None) => unreachable!("encoder exists in token mode"),
        };
        let category = categories.binary_search(&cat).expect("category collected above");
        instances.push(Instance {
            id,
            visual: to_vec(&visual).map_err(|e| Error::Parse {
                line: lineno,
                msg: e.to_string(),
            })?,
            text: to_vec(&text_vec).map_err(|e| Error::Parse {
                line: lineno,
                msg: e.to_string(),
            })?,
            ts,
            category,
        });
    }
    let mut ds = Dataset::from_instances(instances, categories)?;
    ds.text_encoder = encoder;
    Ok(ds)
}

/// Writes `ds` as JSONL with precomputed `text` vectors.
pub fn write_jsonl<T: Scalar>(ds: &Dataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for inst in &ds.instances {
        let rec = Record {
            id: inst.id.clone(),
            visual: inst.visual.iter().map(|v| v.as_f64()).collect(),
            text_tokens: None,
            text: Some(inst.text.iter().map(|v| v.as_f64()).collect()),
            ts: format_iso(inst.ts),
            category: ds.categories[inst.category].clone(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
