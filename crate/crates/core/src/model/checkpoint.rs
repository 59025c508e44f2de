use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams, TENSOR_NAMES};
use crate::dataset::{TfidfModel, Timespan};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Scalar};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorRecord {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    config: ModelConfig,
    timespan: Timespan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text_encoder: Option<TfidfModel>,
    weights: BTreeMap<String, TensorRecord>,
}

/// Everything restored from a checkpoint.
#[derive(Debug, Clone)]
pub struct Checkpoint<T = f64> {
    pub params: ModelParams<T>,
    pub timespan: Timespan,
    pub text_encoder: Option<TfidfModel>,
}

/// Serializes to the JSON checkpoint format. Floats use the shortest
/// representation that parses back to the identical `f64`.
pub fn to_json<T: Scalar>(
    p: &ModelParams<T>,
    span: &Timespan,
    text_encoder: Option<&TfidfModel>,
) -> Result<String> {
    let shapes = ModelParams::<T>::expected_shapes(&p.config);
    let weights = TENSOR_NAMES
        .iter()
        .zip(p.tensors())
        .zip(shapes)
        .map(|((name, data), (rows, cols))| {
            (
                name.to_string(),
                TensorRecord {
                    rows,
                    cols,
                    data: data.iter().map(|v| v.as_f64()).collect(),
                },
            )
        })
        .collect();
    let file = CheckpointFile {
        format_version: FORMAT_VERSION,
        config: p.config.clone(),
        timespan: *span,
        text_encoder: text_encoder.cloned(),
        weights,
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn from_json<T: Scalar>(text: &str) -> Result<Checkpoint<T>> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::CorruptCheckpoint("missing format_version".into()))?;
    if version != FORMAT_VERSION as u64 {
        return Err(Error::VersionMismatch {
            found: version as u32,
            expected: FORMAT_VERSION,
        });
    }
    let file: CheckpointFile =
        serde_json::from_value(value).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    file.config.validate()?;
    let mut params = ModelParams::<T>::zeros(&file.config);
    let shapes = ModelParams::<T>::expected_shapes(&file.config);
    for ((name, dst), (rows, cols)) in TENSOR_NAMES.iter().zip(params.tensors_mut()).zip(shapes) {
        let rec = file
            .weights
            .get(*name)
            .ok_or_else(|| Error::CorruptCheckpoint(format!("missing tensor {name}")))?;
        if (rec.rows, rec.cols) != (rows, cols) || rec.data.len() != rows * cols {
            return Err(Error::CorruptCheckpoint(format!(
                "tensor {name} has shape {}x{} ({} values), config expects {rows}x{cols}",
                rec.rows,
                rec.cols,
                rec.data.len()
            )));
        }
        for (d, &s) in dst.iter_mut().zip(&rec.data) {
            if !s.is_finite() {
                return Err(Error::CorruptCheckpoint(format!("non-finite value in {name}")));
            }
            *d = T::cast(s);
        }
    }
    let timespan = Timespan::new(file.timespan.start, file.timespan.end)?;
    Ok(Checkpoint {
        params,
        timespan,
        text_encoder: file.text_encoder,
    })
}

pub fn save<T: Scalar>(
    p: &ModelParams<T>,
    span: &Timespan,
    text_encoder: Option<&TfidfModel>,
    path: impl AsRef<Path>,
) -> Result<()> {
    fs::write(path, to_json(p, span, text_encoder)?)?;
    Ok(())
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    from_json(&fs::read_to_string(path)?)
}

/// Matrix helper for JSON side files (rotations).
pub(crate) fn matrix_to_record<T: Scalar>(m: &Matrix<T>) -> serde_json::Value {
    serde_json::json!({
        "rows": m.rows(),
        "cols": m.cols(),
        "data": m.as_slice().iter().map(|v| v.as_f64()).collect::<Vec<_>>(),
    })
}

pub(crate) fn matrix_from_record<T: Scalar>(v: &serde_json::Value) -> Result<Matrix<T>> {
    let rec: TensorRecord =
        serde_json::from_value(v.clone()).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    Matrix::from_vec(rec.rows, rec.cols, rec.data.into_iter().map(T::cast).collect())
        .map_err(|e| Error::CorruptCheckpoint(e.to_string()))
}
