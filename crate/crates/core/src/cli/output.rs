use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{ExperimentConfig, LearningCurves};

/// One filter's curves in dB, as written to CSV.
#[derive(Debug, Clone)]
pub struct CurveSet {
    pub label: String,
    pub mse_db: Vec<f64>,
    pub emse_db: Vec<f64>,
    pub msd_db: Option<Vec<f64>>,
}

pub fn curve_sets(curves: &LearningCurves) -> Vec<CurveSet> {
    curves
        .filters
        .iter()
        .map(|f| CurveSet {
            label: f.label.clone(),
            mse_db: f.mse_db(),
            emse_db: f.emse_db(),
            msd_db: f.msd_db(),
        })
        .collect()
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `iteration,filter,mse_db,emse_db,msd_db`, one row per filter and
/// iteration, filters in order. Floats use shortest round-trip formatting.
pub fn write_curves(sets: &[CurveSet], path: &Path) -> Result<()> {
    let rows: usize = sets.iter().map(|s| s.mse_db.len()).sum();
    let mut text = String::with_capacity(64 * (rows + 1));
    text.push_str("iteration,filter,mse_db,emse_db,msd_db\n");
    for s in sets {
        for (n, (mse, emse)) in s.mse_db.iter().zip(&s.emse_db).enumerate() {
            let _ = write!(text, "{},{},{},{},", n + 1, s.label, mse, emse);
            if let Some(msd) = &s.msd_db {
                let _ = write!(text, "{}", msd[n]);
            }
            text.push('\n');
        }
    }
    write_text(path, &text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergedRun {
    pub filter: String,
    pub run: usize,
    pub iteration: usize,
}

/// Replay record stored next to a results file. Passing it back through
/// `--config` reruns the same experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub config: ExperimentConfig,
    pub run_seeds: Vec<u64>,
    pub noise_variance: f64,
    pub diverged: Vec<DivergedRun>,
    pub version: String,
}

impl Sidecar {
    pub fn new(config: &ExperimentConfig, curves: &LearningCurves) -> Self {
        Self {
            config: config.clone(),
            run_seeds: curves.run_seeds.clone(),
            noise_variance: curves.noise_variance,
            diverged: curves
                .filters
                .iter()
                .flat_map(|f| {
                    f.diverged.iter().map(|&(run, iteration)| DivergedRun {
                        filter: f.label.clone(),
                        run,
                        iteration,
                    })
                })
                .collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Writes the sidecar as `<results basename>.json`.
pub fn write_sidecar(sidecar: &Sidecar, results: &Path) -> Result<()> {
    let path = results.with_extension("json");
    let text = serde_json::to_string_pretty(sidecar).expect("sidecar serializes");
    write_text(&path, &text)
}
