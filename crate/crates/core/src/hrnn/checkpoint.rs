//! Versioned text checkpoints: named 64-bit tensors in row-major order,
//! string metadata, and optional vocabularies. Values are written with
//! Rust's shortest-round-trip float formatting, so save/load is bit-exact.

use ndarray::Array2;
use std::collections::BTreeMap;
use thiserror::Error;

const HEADER: &str = "uchunk-checkpoint v1";

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("checkpoint is missing {what}")]
    Missing { what: String },
    #[error("tensor {name}: expected {want}, found {got}")]
    Shape { name: String, want: String, got: String },
    #[error("unsupported checkpoint header {got:?}")]
    Version { got: String },
}

/// Everything a checkpoint can hold.
#[derive(Debug, Clone, Default)]
pub struct Container {
    pub meta: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, Array2<f64>>,
    pub vocabs: BTreeMap<String, BTreeMap<String, usize>>,
}

impl Container {
    pub fn meta_usize(&self, key: &str) -> Result<usize, CheckpointError> {
        self.meta
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CheckpointError::Missing { what: format!("meta {key}") })
    }

    pub fn tensor(&self, name: &str) -> Result<&Array2<f64>, CheckpointError> {
        self.tensors.get(name).ok_or_else(|| CheckpointError::Missing { what: format!("tensor {name}") })
    }

    /// Fetches a tensor and enforces its shape.
    pub fn tensor_shaped(&self, name: &str, rows: usize, cols: usize) -> Result<&Array2<f64>, CheckpointError> {
        let t = self.tensor(name)?;
        if t.nrows() != rows || t.ncols() != cols {
            return Err(CheckpointError::Shape {
                name: name.to_string(),
                want: format!("{rows}x{cols}"),
                got: format!("{}x{}", t.nrows(), t.ncols()),
            });
        }
        Ok(t)
    }

    /// Serializes with an optional leading comment block (provenance).
    pub fn to_text(&self, comments: &[String]) -> String {
        let mut out = String::new();
        out.push_str(HEADER);
        out.push('\n');
        for c in comments {
            out.push_str(&format!("# {c}\n"));
        }
        for (k, v) in &self.meta {
            out.push_str(&format!("meta {k} {v}\n"));
        }
        for (name, t) in &self.tensors {
            out.push_str(&format!("tensor {name} {} {}\n", t.nrows(), t.ncols()));
            for row in t.rows() {
                let fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
                out.push_str(&fields.join(" "));
                out.push('\n');
            }
        }
        for (name, vocab) in &self.vocabs {
            out.push_str(&format!("vocab {name} {}\n", vocab.len()));
            for (word, idx) in vocab {
                out.push_str(&format!("{word} {idx}\n"));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Container, CheckpointError> {
        let mut lines = text.lines().enumerate().peekable();
        let (_, first) = lines
            .next()
            .ok_or_else(|| CheckpointError::Version { got: String::new() })?;
        if first.trim() != HEADER {
            return Err(CheckpointError::Version { got: first.to_string() });
        }
        let mut out = Container::default();
        while let Some((lineno, raw)) = lines.next() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: &str| CheckpointError::Parse { line: lineno + 1, reason: reason.to_string() };
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["meta", k, v] => {
                    out.meta.insert((*k).to_string(), (*v).to_string());
                }
                ["tensor", name, r, c] => {
                    let rows: usize = r.parse().map_err(|_| err("bad row count"))?;
                    let cols: usize = c.parse().map_err(|_| err("bad column count"))?;
                    let mut values = Vec::with_capacity(rows * cols);
                    for _ in 0..rows {
                        let (rl, row_line) = lines
                            .next()
                            .ok_or_else(|| err("tensor truncated"))?;
                        let parsed: Result<Vec<f64>, _> =
                            row_line.split_whitespace().map(str::parse::<f64>).collect();
                        let parsed = parsed.map_err(|_| CheckpointError::Parse {
                            line: rl + 1,
                            reason: "bad float".to_string(),
                        })?;
                        if parsed.len() != cols {
                            return Err(CheckpointError::Parse {
                                line: rl + 1,
                                reason: format!("expected {cols} values, found {}", parsed.len()),
                            });
                        }
                        values.extend(parsed);
                    }
                    let tensor = Array2::from_shape_vec((rows, cols), values)
                        .map_err(|_| err("tensor shape"))?;
                    out.tensors.insert((*name).to_string(), tensor);
                }
                ["vocab", name, count] => {
                    let count: usize = count.parse().map_err(|_| err("bad vocab count"))?;
                    let mut vocab = BTreeMap::new();
                    for _ in 0..count {
                        let (vl, vline) = lines.next().ok_or_else(|| err("vocab truncated"))?;
                        let parts: Vec<&str> = vline.split_whitespace().collect();
                        if parts.len() != 2 {
                            return Err(CheckpointError::Parse {
                                line: vl + 1,
                                reason: "expected `word index`".to_string(),
                            });
                        }
                        let idx: usize = parts[1].parse().map_err(|_| CheckpointError::Parse {
                            line: vl + 1,
                            reason: "bad index".to_string(),
                        })?;
                        vocab.insert(parts[0].to_string(), idx);
                    }
                    out.vocabs.insert((*name).to_string(), vocab);
                }
                _ => return Err(err("unrecognized record")),
            }
        }
        Ok(out)
    }
}

/// Conversions between HRNN parameters and container tensors.
pub(crate) mod hrnn_io {
    use super::{CheckpointError, Container};
    use crate::hrnn::{HrnnParams, RnnCell};
    use ndarray::{Array1, Array2};

    fn as_row(v: &Array1<f64>) -> Array2<f64> {
        v.clone().insert_axis(ndarray::Axis(0))
    }

    fn row_of(c: &Container, name: &str, len: usize) -> Result<Array1<f64>, CheckpointError> {
        Ok(c.tensor_shaped(name, 1, len)?.row(0).to_owned())
    }

    pub fn pack(params: &HrnnParams, into: &mut Container) {
        into.meta.insert("d".to_string(), params.d.to_string());
        into.meta.insert("h".to_string(), params.h.to_string());
        into.tensors.insert("hrnn.gate_w".to_string(), as_row(&params.gate_w));
        into.tensors.insert(
            "hrnn.gate_b".to_string(),
            Array2::from_elem((1, 1), params.gate_b),
        );
        for (prefix, cell) in [("lower", &params.lower), ("upper", &params.upper)] {
            into.tensors.insert(format!("hrnn.{prefix}.w_in"), cell.w_in.clone());
            into.tensors.insert(format!("hrnn.{prefix}.w_rec"), cell.w_rec.clone());
            into.tensors.insert(format!("hrnn.{prefix}.bias"), as_row(&cell.bias));
        }
        into.tensors.insert("hrnn.start_lower".to_string(), as_row(&params.start_lower));
        into.tensors.insert("hrnn.start_upper".to_string(), as_row(&params.start_upper));
    }

    pub fn unpack(c: &Container) -> Result<HrnnParams, CheckpointError> {
        let d = c.meta_usize("d")?;
        let h = c.meta_usize("h")?;
        let cell = |prefix: &str, in_dim: usize| -> Result<RnnCell, CheckpointError> {
            Ok(RnnCell {
                w_in: c.tensor_shaped(&format!("hrnn.{prefix}.w_in"), h, in_dim)?.clone(),
                w_rec: c.tensor_shaped(&format!("hrnn.{prefix}.w_rec"), h, h)?.clone(),
                bias: row_of(c, &format!("hrnn.{prefix}.bias"), h)?,
            })
        };
        Ok(HrnnParams {
            d,
            h,
            gate_w: row_of(c, "hrnn.gate_w", 2 * h + d)?,
            gate_b: c.tensor_shaped("hrnn.gate_b", 1, 1)?[(0, 0)],
            lower: cell("lower", d)?,
            upper: cell("upper", h)?,
            start_lower: row_of(c, "hrnn.start_lower", h)?,
            start_upper: row_of(c, "hrnn.start_upper", h)?,
        })
    }
}

impl crate::hrnn::HrnnParams {
    /// Adds this parameter set (and its dimensions) to a container.
    pub fn pack(&self, into: &mut Container) {
        hrnn_io::pack(self, into);
    }

    /// Restores from a container, rejecting any shape mismatch.
    pub fn unpack(c: &Container) -> Result<Self, CheckpointError> {
        hrnn_io::unpack(c)
    }
}
