use std::time::Instant;

use super::config::ExperimentConfig;
use super::{build_filters, plant_map, run_seed};
use crate::error::Result;
use crate::filters::FilterKind;
use crate::scenarios::ScenarioSeeds;

const BLOCKS: usize = 20;
const WARMUP: usize = 200;

#[derive(Debug, Clone)]
pub struct BenchEntry {
    pub label: String,
    pub kind: FilterKind,
    pub total_secs: f64,
    pub mean_update_secs: f64,
    /// Slope of log(per-update cost) against log(update index).
    pub growth_exponent: Option<f64>,
    /// `(mean update index, seconds per update)` per timing block.
    pub blocks: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    pub samples: usize,
    pub entries: Vec<BenchEntry>,
}

fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Times each configured filter over the same `samples`-long stream of run 0.
///
/// A discarded warm-up pass over the head of the stream precedes each timed
/// pass. The growth exponent is fitted on all timing blocks but the first.
pub fn timing_benchmark(cfg: &ExperimentConfig, samples: usize) -> Result<BenchReport> {
    cfg.validate()?;
    if samples == 0 {
        return Ok(BenchReport::default());
    }
    let seed = run_seed(cfg.run.seed, 0);
    let seeds = ScenarioSeeds::derive(seed, cfg.run.seed);
    let mut data = cfg
        .scenario
        .realize(samples, seeds, plant_map(cfg, seed)?)?;
    let mut xs = Vec::with_capacity(samples * cfg.scenario.m);
    let mut ys = Vec::with_capacity(samples);
    let w0 = data.walk().map(|w| w.w_opt().to_vec());
    for n in 0..samples {
        let step = data.step(n)?;
        xs.extend_from_slice(step.regressor);
        ys.push(step.desired());
    }
    let m = cfg.scenario.m;
    let fresh = build_filters(cfg, seed, w0.as_deref())?;
    let block = samples.div_ceil(BLOCKS);
    let mut entries = Vec::with_capacity(fresh.len());
    for (filter, spec) in fresh.into_iter().zip(&cfg.filters) {
        let mut warm = filter.clone();
        for n in 0..WARMUP.min(samples) {
            let _ = warm.update(&xs[n * m..(n + 1) * m], ys[n]);
        }
        drop(warm);
        let mut f = filter;
        let mut blocks = Vec::new();
        let mut total = 0.0;
        for start in (0..samples).step_by(block) {
            let end = (start + block).min(samples);
            let t0 = Instant::now();
            for n in start..end {
                // divergence does not change the per-update work
                let _ = f.update(&xs[n * m..(n + 1) * m], ys[n]);
            }
            let dt = t0.elapsed().as_secs_f64();
            total += dt;
            let center = (start + end) as f64 / 2.0;
            blocks.push((center, dt / (end - start) as f64));
        }
        let growth_exponent = loglog_slope(blocks.get(1..).unwrap_or(&[]));
        entries.push(BenchEntry {
            label: spec.display_label(),
            kind: spec.kind,
            total_secs: total,
            mean_update_secs: total / samples as f64,
            growth_exponent,
            blocks,
        });
    }
    Ok(BenchReport { samples, entries })
}
