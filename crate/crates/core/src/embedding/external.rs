//! Newline-delimited embedding records:
//!
//! ```text
//! {"id": "1", "model": "all-mpnet-base-v2", "vector": [0.12, -0.03, ...]}
//! ```
//!
//! Every line of a file shares `model` and vector length. Vectors are
//! normalized to unit length on load.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingSource, EmbeddingTable, EmbeddingVector};

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    model: String,
    vector: Vec<f64>,
}

pub fn load_external_embeddings<R: BufRead>(reader: R) -> Result<EmbeddingTable, EmbeddingError> {
    let mut model: Option<String> = None;
    let mut dim = 0;
    let mut rows = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = match serde_json::from_str(&line) {
            Ok(r) => r,
            // JSON has no NaN literal; Python's encoder emits one anyway.
            Err(_) if line.contains("NaN") || line.contains("Infinity") => {
                return Err(EmbeddingError::NonFiniteLine { line: line_no })
            }
            Err(e) => return Err(EmbeddingError::Parse { line: line_no, message: e.to_string() }),
        };
        match &model {
            None => {
                model = Some(record.model.clone());
                dim = record.vector.len();
            }
            Some(m) if *m != record.model => {
                return Err(EmbeddingError::ModelMismatch { line: line_no, expected: m.clone(), found: record.model })
            }
            Some(_) if record.vector.len() != dim => {
                return Err(EmbeddingError::InconsistentDim {
                    line: line_no,
                    expected: dim,
                    found: record.vector.len(),
                })
            }
            Some(_) => {}
        }
        if !seen.insert(record.id.clone()) {
            return Err(EmbeddingError::DuplicateId { line: line_no, id: record.id });
        }
        let vector = EmbeddingVector::new(record.vector).map_err(|e| match e {
            EmbeddingError::NonFinite(_) => EmbeddingError::NonFiniteLine { line: line_no },
            EmbeddingError::EmptyVector => EmbeddingError::Parse { line: line_no, message: "empty vector".into() },
            other => other,
        })?;
        let unit =
            vector.normalized().ok_or_else(|| EmbeddingError::ZeroLine { line: line_no, id: record.id.clone() })?;
        rows.push((record.id, unit));
    }
    let model = model.ok_or(EmbeddingError::EmptyFile)?;
    EmbeddingTable::new(EmbeddingSource::External(model), rows)
}

/// Writes `table` in the record format under the given model name.
pub fn write_embeddings(table: &EmbeddingTable, model: &str) -> String {
    let mut out = String::new();
    for (id, v) in table.iter() {
        let rec = Record { id: id.to_string(), model: model.to_string(), vector: v.values().to_vec() };
        out.push_str(&serde_json::to_string(&rec).expect("records serialize"));
        out.push('\n');
    }
    out
}
