//! Multi-seed experiment execution and aggregation.
//!
//! Output layout under the output directory:
//!
//! ```text
//! config.toml                 resolved configuration
//! summary.json                per-kind statistics, sign tests, metadata
//! <kind>/trace_seed<s>.csv    one trace per seed
//! <kind>/aggregate.csv        per-iteration mean and sd of every column
//! ```
//!
//! Seeds run on the rayon pool; files are written afterwards by the caller's
//! thread. Aggregates only use complete traces.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hetpbo_core::acquisition::AcqKind;
use hetpbo_core::trial::{Trial, TraceRow, TrialConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::stats::{mean, sd, sign_test_less, SignTest};
use crate::trace::{self, Table};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct TrialResult {
    pub kind: AcqKind,
    pub seed: u64,
    pub rows: Vec<TraceRow>,
    pub aborted: Option<String>,
}

/// Runs one trial, optionally timing each round.
pub fn run_one(cfg: &TrialConfig, kind: AcqKind, seed: u64, timed: bool) -> TrialResult {
    let mut rows = Vec::with_capacity(cfg.iterations);
    let aborted = match Trial::new(cfg.clone(), seed) {
        Err(e) => Some(e.to_string()),
        Ok(mut trial) => loop {
            if trial.is_finished() {
                break None;
            }
            let start = Instant::now();
            match trial.step() {
                Ok(mut row) => {
                    if timed {
                        row.wall_ms = start.elapsed().as_millis() as u64;
                    }
                    rows.push(row);
                }
                Err(e) => break Some(e.to_string()),
            }
        },
    };
    TrialResult { kind, seed, rows, aborted }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(xs: &[f64]) -> Self {
        Self { mean: mean(xs), sd: sd(xs) }
    }
}

/// Per-seed scalar metrics of one trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub rows: usize,
    pub complete: bool,
    /// Final value of every regret column.
    pub final_regret: BTreeMap<String, f64>,
    /// Smallest `ρ = 0` simple regret over the trace.
    pub best_simple_regret: f64,
    pub best_f: f64,
    pub mean_sigma2_true: f64,
    pub mean_sigma2_hat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub kind: AcqKind,
    pub trials: usize,
    pub complete: usize,
    pub aborted: Vec<AbortRecord>,
    pub final_regret: BTreeMap<String, MeanSd>,
    pub best_simple_regret: MeanSd,
    pub best_f: MeanSd,
    pub mean_sigma2_true: MeanSd,
    pub mean_sigma2_hat: MeanSd,
    pub seeds: Vec<SeedMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbortRecord {
    pub seed: u64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub candidate: AcqKind,
    pub baseline: AcqKind,
    pub metric: String,
    /// Candidate smaller than baseline counts as a win.
    pub test: SignTestRecord,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignTestRecord {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    pub p_value: f64,
}

impl From<SignTest> for SignTestRecord {
    fn from(t: SignTest) -> Self {
        Self { wins: t.wins, losses: t.losses, ties: t.ties, p_value: t.p_value }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub benchmark: String,
    pub dim: usize,
    pub x_max: Vec<f64>,
    pub f_max: f64,
    pub noise_scale: f64,
    pub n_anchors: usize,
    pub n_initial_duels: usize,
    pub iterations: usize,
    /// Hyperparameters are refit before every proposal.
    pub refit_schedule: String,
    pub rho_labels: Vec<String>,
    pub rho_values: Vec<f64>,
}

impl Metadata {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let kind = cfg.acquisition.kinds[0];
        let t = cfg.trial_config(kind)?;
        Ok(Self {
            benchmark: t.spec.function.to_string(),
            dim: t.spec.dim(),
            x_max: t.spec.x_max.clone(),
            f_max: t.spec.f_max,
            noise_scale: t.spec.noise_scale(),
            n_anchors: t.n_anchors,
            n_initial_duels: t.n_initial_duels,
            iterations: t.iterations,
            refit_schedule: if t.engine.refit { "every round".into() } else { "never".into() },
            rho_labels: trace::rho_labels(&t.rhos),
            rho_values: t.rho_values(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub metadata: Option<Metadata>,
    pub kinds: Vec<KindSummary>,
    pub comparisons: Vec<Comparison>,
}

impl Summary {
    pub fn kind(&self, kind: AcqKind) -> Option<&KindSummary> {
        self.kinds.iter().find(|k| k.kind == kind)
    }

    pub fn comparison(&self, candidate: AcqKind, metric: &str) -> Option<&Comparison> {
        self.comparisons.iter().find(|c| c.candidate == candidate && c.metric == metric)
    }
}

pub fn seed_metrics(seed: u64, table: &Table, expected_rows: usize) -> Result<SeedMetrics> {
    let col = |name: &str| {
        table.values(name).ok_or_else(|| Error::Config(format!("trace is missing column {name:?}")))
    };
    let mut final_regret = BTreeMap::new();
    for name in table.header.iter().filter(|h| h.contains("regret")) {
        final_regret.insert(name.clone(), col(name)?.last().copied().unwrap_or(f64::NAN));
    }
    let f = col("f")?;
    Ok(SeedMetrics {
        seed,
        rows: table.rows.len(),
        complete: table.rows.len() == expected_rows,
        final_regret,
        best_simple_regret: col("simple_regret")?.into_iter().fold(f64::INFINITY, f64::min),
        best_f: f.into_iter().fold(f64::NEG_INFINITY, f64::max),
        mean_sigma2_true: mean(&col("sigma2_true")?),
        mean_sigma2_hat: mean(&col("sigma2_hat")?),
    })
}

/// Per-iteration mean and sd of every column over the given traces, which
/// must share a header and length.
pub fn aggregate_tables(tables: &[&Table]) -> Result<Table> {
    let first = tables.first().ok_or_else(|| Error::Config("nothing to aggregate".into()))?;
    if tables.iter().any(|t| t.header != first.header || t.rows.len() != first.rows.len()) {
        return Err(Error::Config("traces differ in header or length".into()));
    }
    let mut header = vec![String::from("iteration")];
    let cols: Vec<usize> = (0..first.header.len()).filter(|c| first.header[*c] != "iteration").collect();
    for c in &cols {
        header.push(format!("{}_mean", first.header[*c]));
        header.push(format!("{}_sd", first.header[*c]));
    }
    let it = first.column("iteration");
    let rows = (0..first.rows.len())
        .map(|r| {
            let mut row = vec![it.map_or((r + 1) as f64, |c| first.rows[r][c])];
            for c in &cols {
                let xs: Vec<f64> = tables.iter().map(|t| t.rows[r][*c]).collect();
                row.push(mean(&xs));
                row.push(sd(&xs));
            }
            row
        })
        .collect();
    Ok(Table { header, rows })
}

pub fn table_to_csv(table: &Table) -> Result<String> {
    let records: Vec<Vec<String>> =
        table.rows.iter().map(|r| r.iter().map(|v| v.to_string()).collect()).collect();
    trace::to_csv_string(&table.header, &records)
}

pub fn summarize_kind(kind: AcqKind, traces: &[(u64, Table)], aborted: Vec<AbortRecord>, expected_rows: usize) -> Result<KindSummary> {
    let seeds = traces
        .iter()
        .map(|(s, t)| seed_metrics(*s, t, expected_rows))
        .collect::<Result<Vec<_>>>()?;
    let done: Vec<&SeedMetrics> = seeds.iter().filter(|m| m.complete).collect();
    let stat = |f: &dyn Fn(&SeedMetrics) -> f64| MeanSd::of(&done.iter().map(|m| f(m)).collect::<Vec<_>>());
    let mut final_regret = BTreeMap::new();
    if let Some(m) = done.first() {
        for name in m.final_regret.keys() {
            final_regret.insert(name.clone(), stat(&|s: &SeedMetrics| s.final_regret[name]));
        }
    }
    Ok(KindSummary {
        kind,
        trials: seeds.len().max(aborted.len()),
        complete: done.len(),
        aborted,
        final_regret,
        best_simple_regret: stat(&|s| s.best_simple_regret),
        best_f: stat(&|s| s.best_f),
        mean_sigma2_true: stat(&|s| s.mean_sigma2_true),
        mean_sigma2_hat: stat(&|s| s.mean_sigma2_hat),
        seeds,
    })
}

/// Sign tests of each risk-averse kind against its risk-neutral baseline on
/// seeds where both completed.
pub fn compare(kinds: &[KindSummary]) -> Vec<Comparison> {
    let mut out = Vec::new();
    for cand in kinds.iter().filter(|k| k.kind.is_risk_averse()) {
        let Some(base) = kinds.iter().find(|k| k.kind == cand.kind.baseline()) else { continue };
        let paired: Vec<(&SeedMetrics, &SeedMetrics)> = cand
            .seeds
            .iter()
            .filter(|m| m.complete)
            .filter_map(|m| base.seeds.iter().find(|b| b.seed == m.seed && b.complete).map(|b| (m, b)))
            .collect();
        if paired.is_empty() {
            continue;
        }
        let mut metrics: Vec<(String, Vec<f64>, Vec<f64>)> = vec![(
            "mean_sigma2_true".into(),
            paired.iter().map(|p| p.0.mean_sigma2_true).collect(),
            paired.iter().map(|p| p.1.mean_sigma2_true).collect(),
        )];
        for name in paired[0].0.final_regret.keys().filter(|n| n.starts_with("cum_regret")) {
            metrics.push((
                format!("final_{name}"),
                paired.iter().map(|p| p.0.final_regret[name]).collect(),
                paired.iter().map(|p| p.1.final_regret[name]).collect(),
            ));
        }
        for (metric, a, b) in metrics {
            out.push(Comparison {
                candidate: cand.kind,
                baseline: base.kind,
                metric,
                test: sign_test_less(&a, &b).into(),
            });
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct SuiteResult {
    pub trials: Vec<TrialResult>,
    pub summary: Summary,
}

/// Runs every (kind, seed) pair. With `out_dir`, traces, aggregates, the
/// resolved config and `summary.json` are written there. Fails when more than
/// 20% of the trials abort; the files are still written in that case.
pub fn run_suite(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<SuiteResult> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for kind in &cfg.acquisition.kinds {
        let t = cfg.trial_config(*kind)?;
        for seed in cfg.seeds() {
            jobs.push((*kind, seed, t.clone()));
        }
    }
    let timed = cfg.output.wall_time;
    let trials: Vec<TrialResult> = jobs.par_iter().map(|(k, s, t)| run_one(t, *k, *s, timed)).collect();

    let metadata = Metadata::from_config(cfg)?;
    let mut kinds = Vec::new();
    for kind in &cfg.acquisition.kinds {
        let mine: Vec<&TrialResult> = trials.iter().filter(|t| t.kind == *kind).collect();
        let mut traces = Vec::new();
        let mut csvs = Vec::new();
        for t in &mine {
            let records: Vec<Vec<String>> = t.rows.iter().map(trace::record).collect();
            let text = trace::to_csv_string(&trace::header(metadata.dim, &metadata.rho_labels), &records)?;
            traces.push((t.seed, trace::parse_table(&text)?));
            csvs.push((t.seed, text));
        }
        let aborted = mine
            .iter()
            .filter_map(|t| t.aborted.as_ref().map(|r| AbortRecord { seed: t.seed, reason: r.clone() }))
            .collect();
        let summary = summarize_kind(*kind, &traces, aborted, metadata.iterations)?;
        if let Some(dir) = out_dir {
            let kdir = dir.join(kind.name());
            std::fs::create_dir_all(&kdir).map_err(|e| Error::io(&kdir, e))?;
            for (seed, text) in &csvs {
                write(&kdir.join(format!("trace_seed{seed}.csv")), text)?;
            }
            let complete: Vec<&Table> = traces
                .iter()
                .filter(|(s, _)| summary.seeds.iter().any(|m| m.seed == *s && m.complete))
                .map(|(_, t)| t)
                .collect();
            if !complete.is_empty() {
                write(&kdir.join("aggregate.csv"), &table_to_csv(&aggregate_tables(&complete)?)?)?;
            }
        }
        kinds.push(summary);
    }
    let summary = Summary { metadata: Some(metadata), comparisons: compare(&kinds), kinds };
    if let Some(dir) = out_dir {
        write(&dir.join("config.toml"), &cfg.to_toml_string())?;
        write(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    }
    let aborted = trials.iter().filter(|t| t.aborted.is_some()).count();
    if aborted * 5 > trials.len() {
        return Err(Error::TooManyAborts { aborted, total: trials.len() });
    }
    Ok(SuiteResult { trials, summary })
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn seed_of(path: &Path) -> Option<u64> {
    path.file_name()?.to_str()?.strip_prefix("trace_seed")?.strip_suffix(".csv")?.parse().ok()
}

/// Recomputes aggregates and `summary.json` from the trace files of a run
/// directory. A trace counts as complete when it has `experiment.iterations`
/// rows per `config.toml`, or the longest length seen when that file is absent.
pub fn aggregate_dir(dir: &Path) -> Result<Summary> {
    let cfg_path = dir.join("config.toml");
    let cfg = if cfg_path.exists() { Some(ExperimentConfig::load(&cfg_path)?) } else { None };
    let mut kinds = Vec::new();
    for kind in AcqKind::ALL {
        let kdir = dir.join(kind.name());
        if !kdir.is_dir() {
            continue;
        }
        let mut files: Vec<(u64, PathBuf)> = std::fs::read_dir(&kdir)
            .map_err(|e| Error::io(&kdir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter_map(|p| seed_of(&p).map(|s| (s, p)))
            .collect();
        files.sort();
        if files.is_empty() {
            continue;
        }
        let traces =
            files.iter().map(|(s, p)| Ok((*s, trace::read_table(p)?))).collect::<Result<Vec<(u64, Table)>>>()?;
        let expected = match &cfg {
            Some(c) => c.experiment.iterations,
            None => traces.iter().map(|(_, t)| t.rows.len()).max().unwrap_or(0),
        };
        let aborted = traces
            .iter()
            .filter(|(_, t)| t.rows.len() != expected)
            .map(|(s, t)| AbortRecord { seed: *s, reason: format!("trace has {} of {expected} rows", t.rows.len()) })
            .collect();
        let summary = summarize_kind(kind, &traces, aborted, expected)?;
        let complete: Vec<&Table> = traces.iter().filter(|(_, t)| t.rows.len() == expected).map(|(_, t)| t).collect();
        if !complete.is_empty() {
            write(&kdir.join("aggregate.csv"), &table_to_csv(&aggregate_tables(&complete)?)?)?;
        }
        kinds.push(summary);
    }
    if kinds.is_empty() {
        return Err(Error::Config(format!("no traces found under {}", dir.display())));
    }
    let metadata = cfg.as_ref().map(Metadata::from_config).transpose()?;
    let summary = Summary { metadata, comparisons: compare(&kinds), kinds };
    write(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
