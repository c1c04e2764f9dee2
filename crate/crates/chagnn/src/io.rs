//! On-disk dataset format.
//!
//! A dataset directory holds:
//! - `meta.json`: `{"num_nodes": N, "num_features": D, "num_classes": C}`
//! - `edges.tsv`: one `u<TAB>v` line per undirected edge
//! - `features.csv`: N rows of D comma-separated reals
//! - `labels.csv`: N lines of one integer each, `-1` for unknown
//! - `splits.json`: `{"train": [...], "val": [...], "test": [...]}`
//!
//! Poisoned datasets add `injected.json`:
//! `{"injected_ids": [...], "targets": [...]}`.
//!
//! Floats are written with the shortest round-tripping representation, so
//! save -> load -> save is byte-stable.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::SparseGraph;

#[derive(Serialize, Deserialize)]
struct Meta {
    num_nodes: usize,
    num_features: usize,
    num_classes: usize,
}

#[derive(Serialize, Deserialize)]
struct Splits {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

/// Injection metadata stored next to a poisoned dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectedMeta {
    pub injected_ids: Vec<usize>,
    pub targets: Vec<usize>,
}

fn fmt_err(file: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        file: file.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| fmt_err(path, 0, format!("missing or unreadable: {e}")))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_file(path)?;
    serde_json::from_str(&text).map_err(|e| fmt_err(path, e.line(), e.to_string()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_json(
        &dir.join("meta.json"),
        &Meta {
            num_nodes: ds.num_nodes(),
            num_features: ds.num_features(),
            num_classes: ds.num_classes,
        },
    )?;

    let mut edges = String::new();
    for (u, v) in ds.graph.edges() {
        writeln!(edges, "{u}\t{v}").expect("string write");
    }
    std::fs::write(dir.join("edges.tsv"), edges)?;

    let mut feats = String::new();
    for row in ds.features.rows() {
        let line: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
        writeln!(feats, "{}", line.join(",")).expect("string write");
    }
    std::fs::write(dir.join("features.csv"), feats)?;

    let mut labels = String::new();
    for &y in &ds.labels {
        writeln!(labels, "{y}").expect("string write");
    }
    std::fs::write(dir.join("labels.csv"), labels)?;

    write_json(
        &dir.join("splits.json"),
        &Splits {
            train: Dataset::mask_nodes(&ds.train_mask),
            val: Dataset::mask_nodes(&ds.val_mask),
            test: Dataset::mask_nodes(&ds.test_mask),
        },
    )?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let meta: Meta = parse_json(&dir.join("meta.json"))?;
    let n = meta.num_nodes;

    let edges_path = dir.join("edges.tsv");
    let mut edges = Vec::new();
    for (i, line) in read_file(&edges_path)?.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (u, v) = match (parts.next(), parts.next(), parts.next()) {
            (Some(u), Some(v), None) => (u, v),
            _ => return Err(fmt_err(&edges_path, lineno, "expected exactly u<TAB>v")),
        };
        let parse = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| fmt_err(&edges_path, lineno, format!("bad node id {s:?}")))
        };
        let (u, v) = (parse(u)?, parse(v)?);
        if u >= n || v >= n {
            return Err(fmt_err(
                &edges_path,
                lineno,
                format!("edge ({u}, {v}) out of range for {n} nodes"),
            ));
        }
        edges.push((u, v));
    }
    let graph = SparseGraph::from_edges(&edges, n).expect("ids checked above");

    let feat_path = dir.join("features.csv");
    let mut flat = Vec::with_capacity(n * meta.num_features);
    let mut rows = 0usize;
    for (i, line) in read_file(&feat_path)?.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let vals: Vec<&str> = line.split(',').collect();
        if vals.len() != meta.num_features {
            return Err(fmt_err(
                &feat_path,
                lineno,
                format!("expected {} values, got {}", meta.num_features, vals.len()),
            ));
        }
        for s in vals {
            flat.push(s.trim().parse::<f64>().map_err(|_| {
                fmt_err(&feat_path, lineno, format!("bad feature value {s:?}"))
            })?);
        }
        rows += 1;
    }
    if rows != n {
        return Err(fmt_err(
            &feat_path,
            0,
            format!("feature row count {rows} does not match {n} nodes"),
        ));
    }
    let features = Array2::from_shape_vec((n, meta.num_features), flat).expect("shape checked");

    let labels_path = dir.join("labels.csv");
    let mut labels = Vec::with_capacity(n);
    for (i, line) in read_file(&labels_path)?.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let y: i64 = line
            .trim()
            .parse()
            .map_err(|_| fmt_err(&labels_path, lineno, format!("bad label {line:?}")))?;
        if y < -1 || y >= meta.num_classes as i64 {
            return Err(fmt_err(
                &labels_path,
                lineno,
                format!("label {y} outside -1..{}", meta.num_classes),
            ));
        }
        labels.push(y);
    }
    if labels.len() != n {
        return Err(fmt_err(
            &labels_path,
            0,
            format!("label count {} does not match {n} nodes", labels.len()),
        ));
    }

    let splits_path = dir.join("splits.json");
    let splits: Splits = parse_json(&splits_path)?;
    let mut masks = (vec![false; n], vec![false; n], vec![false; n]);
    for (ids, mask, name) in [
        (&splits.train, &mut masks.0, "train"),
        (&splits.val, &mut masks.1, "val"),
        (&splits.test, &mut masks.2, "test"),
    ] {
        for &v in ids {
            if v >= n {
                return Err(fmt_err(
                    &splits_path,
                    1,
                    format!("{name} split id {v} out of range for {n} nodes"),
                ));
            }
            mask[v] = true;
        }
    }
    for v in 0..n {
        if masks.0[v] as u8 + masks.1[v] as u8 + masks.2[v] as u8 > 1 {
            return Err(fmt_err(
                &splits_path,
                1,
                format!("node {v} appears in more than one split"),
            ));
        }
    }

    let ds = Dataset {
        graph,
        features,
        labels,
        num_classes: meta.num_classes,
        train_mask: masks.0,
        val_mask: masks.1,
        test_mask: masks.2,
    };
    ds.validate()
        .map_err(|e| fmt_err(dir, 0, format!("inconsistent dataset: {e}")))?;
    Ok(ds)
}

pub fn save_injected(meta: &InjectedMeta, dir: &Path) -> Result<()> {
    write_json(&dir.join("injected.json"), meta)
}

pub fn load_injected(dir: &Path) -> Result<InjectedMeta> {
    parse_json(&dir.join("injected.json"))
}
