//! Checkpoint files: a flat JSON list of named parameter tensors.
//! serde_json prints f64 with shortest round-trip formatting, so the
//! values survive save/load bit-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NnError, Parameter};

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

pub fn save_checkpoint(path: &Path, params: &[&Parameter]) -> Result<(), NnError> {
    let records: Vec<TensorRecord> = params
        .iter()
        .map(|p| TensorRecord {
            name: p.name.clone(),
            shape: p.shape.clone(),
            values: p.values.clone(),
        })
        .collect();
    let text = serde_json::to_string_pretty(&records)
        .map_err(|e| NnError::Checkpoint(format!("serialize: {e}")))?;
    fs::write(path, text).map_err(|e| NnError::Checkpoint(format!("write {}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<Parameter>, NnError> {
    let text = fs::read_to_string(path)
        .map_err(|e| NnError::Checkpoint(format!("read {}: {e}", path.display())))?;
    let records: Vec<TensorRecord> = serde_json::from_str(&text)
        .map_err(|e| NnError::Checkpoint(format!("parse {}: {e}", path.display())))?;
    records
        .into_iter()
        .map(|r| {
            let numel: usize = r.shape.iter().product();
            if r.values.len() != numel {
                return Err(NnError::Checkpoint(format!(
                    "tensor '{}' has {} values but shape {:?}",
                    r.name,
                    r.values.len(),
                    r.shape
                )));
            }
            if r.values.iter().any(|v| !v.is_finite()) {
                return Err(NnError::Checkpoint(format!(
                    "tensor '{}' has non-finite values",
                    r.name
                )));
            }
            Ok(Parameter::new(r.name, r.shape, r.values))
        })
        .collect()
}
