use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::Result;

/// One trained model evaluated once. Columns that do not apply to a task
/// are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub gamma: Option<f64>,
    pub train_per_class: Option<usize>,
    pub d: Option<usize>,
    pub fold: Option<usize>,
    pub repetition: usize,
    pub seed: u64,
    pub test_acc: f64,
    pub val_acc: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub gamma: Option<f64>,
    pub train_per_class: Option<usize>,
    pub d: Option<usize>,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub series: String,
    pub nodes: usize,
    pub edges: usize,
    pub d: usize,
    pub seconds: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub bench: Vec<BenchRow>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub toolkit_version: String,
    pub config: ExperimentConfig,
    pub repetition_seeds: Vec<u64>,
    pub notes: Vec<String>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn mean_of(&self, method: &str, gamma: Option<f64>, train_per_class: Option<usize>, d: Option<usize>) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.method == method && s.gamma == gamma && s.train_per_class == train_per_class && s.d == d)
            .map(|s| s.mean)
    }

    /// `results.csv` (per-run rows, or timings for the scaling bench),
    /// `summary.csv` and `manifest.json` in `dir`.
    pub fn write(&self, dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("results.csv"))?;
        if self.bench.is_empty() {
            for r in &self.rows {
                w.serialize(r)?;
            }
        } else {
            for r in &self.bench {
                w.serialize(r)?;
            }
        }
        w.flush()?;
        if !self.summary.is_empty() {
            let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
            for r in &self.summary {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        let manifest = Manifest {
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            config: ExperimentConfig {
                methods: cfg.resolved_methods(),
                ..cfg.clone()
            },
            repetition_seeds: repetition_seeds(cfg),
            notes: self.notes.clone(),
            checks: self.checks.clone(),
            passed: self.passed(),
        };
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

pub fn repetition_seeds(cfg: &ExperimentConfig) -> Vec<u64> {
    (0..cfg.repetitions as u64).map(|r| cfg.seed.wrapping_add(r)).collect()
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

type GroupKey = (String, Option<u64>, Option<usize>, Option<usize>);

/// Mean and spread per (method, gamma, train size, d), ordered by gamma,
/// train size and d, then by position in `method_order`.
pub fn summarize(rows: &[ResultRow], method_order: &[String]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(usize, GroupKey), Vec<f64>> = BTreeMap::new();
    for r in rows {
        let rank = method_order.iter().position(|m| *m == r.method).unwrap_or(usize::MAX);
        let key = (r.method.clone(), r.gamma.map(f64::to_bits), r.train_per_class, r.d);
        groups.entry((rank, key)).or_default().push(r.test_acc);
    }
    let mut out: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((_, (method, gamma, train_per_class, d)), accs)| {
            let (mean, std) = mean_std(&accs);
            SummaryRow {
                method,
                gamma: gamma.map(f64::from_bits),
                train_per_class,
                d,
                runs: accs.len(),
                mean,
                std,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        let ra = method_order.iter().position(|m| *m == a.method);
        let rb = method_order.iter().position(|m| *m == b.method);
        (a.gamma.unwrap_or(0.0), a.train_per_class, a.d, ra)
            .partial_cmp(&(b.gamma.unwrap_or(0.0), b.train_per_class, b.d, rb))
            .expect("finite gammas")
    });
    out
}
