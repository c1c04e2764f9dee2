//! Checkpoint files: GCN weights as JSON with row-major weight arrays.
//! serde_json prints the shortest round-tripping form of every f64, so a
//! save/load cycle reproduces the weights bit for bit.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::GcnParams;
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    num_features: usize,
    hidden_dim: usize,
    num_classes: usize,
    w1: Vec<f64>,
    w2: Vec<f64>,
}

pub fn save_checkpoint(params: &GcnParams, path: &Path) -> Result<()> {
    let (d, h, c) = params.dims();
    let file = CheckpointFile {
        num_features: d,
        hidden_dim: h,
        num_classes: c,
        w1: params.w1.iter().copied().collect(),
        w2: params.w2.iter().copied().collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("serializable");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<GcnParams> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Format {
        file: path.display().to_string(),
        line: 0,
        msg: format!("missing or unreadable: {e}"),
    })?;
    let file: CheckpointFile = serde_json::from_str(&text).map_err(|e| Error::Format {
        file: path.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let expect = |name: &str, got: usize, want: usize| -> Result<()> {
        if got != want {
            return Err(Error::Format {
                file: path.display().to_string(),
                line: 0,
                msg: format!("{name} has {got} values, header implies {want}"),
            });
        }
        Ok(())
    };
    expect("w1", file.w1.len(), file.num_features * file.hidden_dim)?;
    expect("w2", file.w2.len(), file.hidden_dim * file.num_classes)?;
    Ok(GcnParams {
        w1: Array2::from_shape_vec((file.num_features, file.hidden_dim), file.w1)
            .expect("length checked"),
        w2: Array2::from_shape_vec((file.hidden_dim, file.num_classes), file.w2)
            .expect("length checked"),
    })
}
