//! Seeded end-to-end experiment pipelines.
//!
//! One experiment = `runs` independent pipelines (train a clean surrogate,
//! poison the graph, defend, evaluate) with per-run seeds derived as
//! `master_seed + run_index`. Results aggregate into a self-describing
//! record carrying the resolved configuration and a content hash over
//! everything except wall time, so identical configs reproduce identical
//! payloads byte for byte.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;
use std::time::Instant;

use crate::attack::{fga_inject, heuristic_inject, mga_inject, AttackBudget, PoisonedDataset};
use crate::dataset::Dataset;
use crate::defense::{
    baseline_adaedge, baseline_jaccard, chagnn_run, DefenseConfig, IterationRecord,
};
use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::models::{accuracy, gcn_forward, train, TrainConfig};
use crate::parallel::map_range;
use crate::synth::{generate_synthetic, SyntheticSpec};

/// Where the clean dataset comes from. A path is loaded once and shared by
/// all runs; a synthetic spec is re-generated per run from the run seed so
/// runs are fully independent replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Path(PathBuf),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    Heuristic,
    Fga,
    Mga,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackSection {
    pub kind: AttackKind,
    pub budget: AttackBudget,
    /// When set, overrides `budget.num_inject` with
    /// `round(inject_ratio * num_nodes)` at run time.
    pub inject_ratio: Option<f64>,
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            kind: AttackKind::None,
            budget: AttackBudget::default(),
            inject_ratio: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefenseKind {
    None,
    Chagnn,
    Adaedge,
    Jaccard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DefenseSection {
    pub kind: DefenseKind,
    pub params: DefenseConfig,
    /// Similarity cutoff for the Jaccard baseline only.
    pub jaccard_threshold: f64,
}

impl Default for DefenseSection {
    fn default() -> Self {
        DefenseSection {
            kind: DefenseKind::None,
            params: DefenseConfig::default(),
            jaccard_threshold: 0.01,
        }
    }
}

fn default_runs() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub defense: DefenseSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            spec.validate()?;
        }
        self.attack.budget.validate()?;
        if let Some(ratio) = self.attack.inject_ratio {
            if !(0.0..=1.0).contains(&ratio) {
                return Err(Error::Config(format!(
                    "inject_ratio {ratio} outside [0, 1]"
                )));
            }
        }
        self.defense.params.validate()?;
        if !(0.0..=1.0).contains(&self.defense.jaccard_threshold) {
            return Err(Error::Config(format!(
                "jaccard_threshold {} outside [0, 1]",
                self.defense.jaccard_threshold
            )));
        }
        self.train.validate()
    }
}

/// One pipeline execution. `defended_acc` equals `attacked_acc` when no
/// defense is configured, and both equal `clean_acc` when nothing is
/// injected. Accuracies always count original test nodes only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub seed: u64,
    pub clean_acc: f64,
    pub attacked_acc: f64,
    pub defended_acc: f64,
    /// Defense iteration history (empty unless the defense iterates).
    pub history: Vec<IterationRecord>,
}

/// Aggregated experiment output. `payload_sha256` covers every field
/// except `wall_time_secs` and the hash itself.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRecord {
    /// The configuration with run-time resolutions applied (e.g. the
    /// injection count derived from `inject_ratio`).
    pub config: ExperimentConfig,
    pub runs: Vec<RunResult>,
    /// Defended accuracy per run, aligned with `runs`.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub payload_sha256: String,
    pub wall_time_secs: f64,
}

/// Aggregate plus any per-run failures; a failed run is dropped from the
/// record but reported here so callers can preserve partial results.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub record: ResultRecord,
    /// (run index, error message) for each failed run.
    pub failures: Vec<(usize, String)>,
}

fn population_std(values: &[f64], mean: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    var.sqrt()
}

fn test_accuracy(ds: &Dataset, params: &crate::models::GcnParams) -> Result<f64> {
    let adj = NormalizedAdjacency::symmetric(&ds.graph);
    let pred = gcn_forward(&adj, &ds.features, params)?.pseudo_labels();
    accuracy(&pred, &ds.labels, &ds.test_mask)
}

fn poison(
    ds: &Dataset,
    attack: &AttackSection,
    surrogate: &crate::models::GcnParams,
    seed: u64,
) -> Result<Option<PoisonedDataset>> {
    let mut budget = attack.budget;
    if let Some(ratio) = attack.inject_ratio {
        budget.num_inject = (ratio * ds.num_nodes() as f64).round() as usize;
    }
    match attack.kind {
        AttackKind::None => Ok(None),
        AttackKind::Heuristic => heuristic_inject(ds, &budget, seed).map(Some),
        AttackKind::Fga => fga_inject(ds, &budget, surrogate, seed).map(Some),
        AttackKind::Mga => mga_inject(ds, &budget, surrogate, seed).map(Some),
    }
}

fn single_run(cfg: &ExperimentConfig, base: &Dataset, seed: u64) -> Result<RunResult> {
    // Clean surrogate: the defender's model and the attacker's gradient
    // source.
    let (surrogate, _) = train(base, &cfg.train, seed)?;
    let clean_acc = test_accuracy(base, &surrogate)?;

    let poisoned = poison(base, &cfg.attack, &surrogate, seed)?;
    let (merged, injected): (Dataset, Vec<usize>) = match &poisoned {
        Some(p) => (p.merged.clone(), p.injected_ids.clone()),
        None => (base.clone(), Vec::new()),
    };

    // The victim trains on the (possibly) poisoned graph.
    let (victim, _) = train(&merged, &cfg.train, seed)?;
    let attacked_acc = test_accuracy(&merged, &victim)?;

    let (defended_acc, history) = match cfg.defense.kind {
        DefenseKind::None => (attacked_acc, Vec::new()),
        DefenseKind::Chagnn => {
            let (params, cleaned, history) =
                chagnn_run(&merged, &injected, &cfg.defense.params, &cfg.train, seed)?;
            (test_accuracy(&cleaned, &params)?, history)
        }
        DefenseKind::Adaedge => {
            let adj = NormalizedAdjacency::symmetric(&merged.graph);
            let pseudo = gcn_forward(&adj, &merged.features, &victim)?.pseudo_labels();
            let cleaned = baseline_adaedge(&merged, &injected, &pseudo)?;
            let tuned = crate::models::fine_tune(&victim, &cleaned, &cfg.train)?;
            (test_accuracy(&cleaned, &tuned)?, Vec::new())
        }
        DefenseKind::Jaccard => {
            // Preprocessing defense: prune first, then train from scratch.
            let cleaned = baseline_jaccard(&merged, cfg.defense.jaccard_threshold)?;
            let (params, _) = train(&cleaned, &cfg.train, seed)?;
            (test_accuracy(&cleaned, &params)?, Vec::new())
        }
    };

    Ok(RunResult {
        seed,
        clean_acc,
        attacked_acc,
        defended_acc,
        history,
    })
}

/// Execute all runs (in parallel when the `parallel` feature is on) and
/// aggregate. Component errors inside a run are collected per run rather
/// than aborting the experiment; configuration and dataset-loading errors
/// abort immediately.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let start = Instant::now();

    // A file-backed dataset is loaded once and shared; synthetic data is
    // regenerated per run from the run seed.
    let shared: Option<Dataset> = match &cfg.dataset {
        DatasetSource::Path(dir) => {
            let ds = crate::io::load_dataset(dir)?;
            Some(ds)
        }
        DatasetSource::Synthetic(_) => None,
    };

    let results: Vec<std::result::Result<RunResult, String>> = map_range(cfg.runs, |idx| {
        let seed = cfg.master_seed.wrapping_add(idx as u64);
        let base = match (&shared, &cfg.dataset) {
            (Some(ds), _) => Ok(ds.clone()),
            (None, DatasetSource::Synthetic(spec)) => generate_synthetic(spec, seed),
            (None, DatasetSource::Path(_)) => unreachable!("path datasets are preloaded"),
        };
        base.and_then(|ds| single_run(cfg, &ds, seed))
            .map_err(|e| e.to_string())
    });

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (idx, r) in results.into_iter().enumerate() {
        match r {
            Ok(run) => runs.push(run),
            Err(msg) => failures.push((idx, msg)),
        }
    }

    // Resolve run-time values into the recorded config so the artifact is
    // self-describing.
    let mut resolved = cfg.clone();
    if let Some(ratio) = cfg.attack.inject_ratio {
        let n = match (&shared, &cfg.dataset) {
            (Some(ds), _) => ds.num_nodes(),
            (None, DatasetSource::Synthetic(spec)) => spec.num_classes * spec.nodes_per_class,
            (None, DatasetSource::Path(_)) => unreachable!("path datasets are preloaded"),
        };
        resolved.attack.budget.num_inject = (ratio * n as f64).round() as usize;
    }

    let accuracies: Vec<f64> = runs.iter().map(|r| r.defended_acc).collect();
    let mean = if accuracies.is_empty() {
        f64::NAN
    } else {
        accuracies.iter().sum::<f64>() / accuracies.len() as f64
    };
    let std = population_std(&accuracies, mean);

    let mut record = ResultRecord {
        config: resolved,
        runs,
        accuracies,
        mean,
        std,
        payload_sha256: String::new(),
        wall_time_secs: 0.0,
    };
    record.payload_sha256 = payload_hash(&record)?;
    record.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(ExperimentOutcome { record, failures })
}

/// SHA-256 over the deterministic portion of a record: everything except
/// wall time and the hash field itself.
pub fn payload_hash(record: &ResultRecord) -> Result<String> {
    #[derive(Serialize)]
    struct Payload<'a> {
        config: &'a ExperimentConfig,
        runs: &'a [RunResult],
        accuracies: &'a [f64],
        mean: f64,
        std: f64,
    }
    let bytes = serde_json::to_vec(&Payload {
        config: &record.config,
        runs: &record.runs,
        accuracies: &record.accuracies,
        mean: record.mean,
        std: record.std,
    })
    .map_err(|e| Error::Input(format!("serializing result payload: {e}")))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Which knob a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    InjectRatio,
    EliminationRate,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::InjectRatio => "inject_ratio",
            SweepParam::EliminationRate => "elimination_rate",
        }
    }
}

/// One experiment per swept value, sequentially (each experiment already
/// parallelizes its runs). Returns the outcomes in input order.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<ExperimentOutcome>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut out = Vec::with_capacity(values.len());
    for &v in values {
        let mut point = cfg.clone();
        match param {
            SweepParam::InjectRatio => point.attack.inject_ratio = Some(v),
            SweepParam::EliminationRate => point.defense.params.elimination_rate = v,
        }
        out.push(run_experiment(&point)?);
    }
    Ok(out)
}

/// Render sweep outcomes as CSV. Column order: the swept parameter name,
/// its value, mean and population std of the defended accuracy, mean clean
/// and mean attacked accuracy, then one `run<i>` column per run with the
/// per-run defended accuracy.
pub fn sweep_csv(param: SweepParam, values: &[f64], outcomes: &[ExperimentOutcome]) -> String {
    let max_runs = outcomes
        .iter()
        .map(|o| o.record.runs.len())
        .max()
        .unwrap_or(0);
    let mut csv = format!("{},value,mean,std,clean_mean,attacked_mean", param.name());
    for i in 0..max_runs {
        csv.push_str(&format!(",run{i}"));
    }
    csv.push('\n');
    for (v, o) in values.iter().zip(outcomes) {
        let r = &o.record;
        let clean_mean = if r.runs.is_empty() {
            f64::NAN
        } else {
            r.runs.iter().map(|x| x.clean_acc).sum::<f64>() / r.runs.len() as f64
        };
        let attacked_mean = if r.runs.is_empty() {
            f64::NAN
        } else {
            r.runs.iter().map(|x| x.attacked_acc).sum::<f64>() / r.runs.len() as f64
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{}",
            param.name(),
            v,
            r.mean,
            r.std,
            clean_mean,
            attacked_mean
        ));
        for i in 0..max_runs {
            match r.accuracies.get(i) {
                Some(a) => csv.push_str(&format!(",{a}")),
                None => csv.push(','),
            }
        }
        csv.push('\n');
    }
    csv
}
