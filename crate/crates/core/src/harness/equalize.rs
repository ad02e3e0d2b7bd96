use num_complex::Complex64;

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::filters::FilterState;
use crate::rng;
use crate::scenarios::{ScenarioSeeds, QPSK};

/// Index of the closest QPSK symbol. Ties go to the earlier symbol in
/// `s₁, s₂, s₃, s₄` order.
pub fn nearest_symbol(y: Complex64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, s) in QPSK.iter().enumerate() {
        let d = (y - s).norm_sqr();
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    best
}

fn symbol_index(s: Complex64) -> Result<usize> {
    QPSK.iter()
        .position(|&q| q == s)
        .ok_or_else(|| Error::invalid(format!("{s} is not a QPSK symbol")))
}

/// Fraction of outputs whose nearest symbol differs from the transmitted one.
pub fn symbol_error_rate(outputs: &[Complex64], truth: &[Complex64]) -> Result<f64> {
    if outputs.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: outputs.len(),
        });
    }
    if outputs.is_empty() {
        return Err(Error::EmptyStream);
    }
    let mut errors = 0usize;
    for (&y, &s) in outputs.iter().zip(truth) {
        if nearest_symbol(y) != symbol_index(s)? {
            errors += 1;
        }
    }
    Ok(errors as f64 / outputs.len() as f64)
}

/// Output clusters grouped by transmitted symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStats {
    pub centroids: [Option<Complex64>; 4],
    /// `sqrt(mean |ŷ − centroid|²)` per symbol.
    pub spread: [f64; 4],
    pub min_centroid_distance: f64,
}

impl ClusterStats {
    pub fn max_spread(&self) -> f64 {
        self.spread.iter().copied().fold(0.0, f64::max)
    }

    /// Largest spread below half the closest centroid distance.
    pub fn is_separable(&self) -> bool {
        self.max_spread() < self.min_centroid_distance / 2.0
    }
}

pub fn cluster_statistics(outputs: &[Complex64], truth: &[Complex64]) -> Result<ClusterStats> {
    if outputs.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: outputs.len(),
        });
    }
    if outputs.is_empty() {
        return Err(Error::EmptyStream);
    }
    let mut sum = [Complex64::new(0.0, 0.0); 4];
    let mut count = [0usize; 4];
    for (&y, &s) in outputs.iter().zip(truth) {
        let k = symbol_index(s)?;
        sum[k] += y;
        count[k] += 1;
    }
    let centroids: [Option<Complex64>; 4] =
        std::array::from_fn(|k| (count[k] > 0).then(|| sum[k] / count[k] as f64));
    let mut sq = [0.0; 4];
    for (&y, &s) in outputs.iter().zip(truth) {
        let k = symbol_index(s)?;
        if let Some(c) = centroids[k] {
            sq[k] += (y - c).norm_sqr();
        }
    }
    let spread = std::array::from_fn(|k| {
        if count[k] > 0 {
            (sq[k] / count[k] as f64).sqrt()
        } else {
            0.0
        }
    });
    let present: Vec<Complex64> = centroids.iter().flatten().copied().collect();
    let mut min_d = f64::INFINITY;
    for i in 0..present.len() {
        for j in i + 1..present.len() {
            min_d = min_d.min((present[i] - present[j]).norm());
        }
    }
    Ok(ClusterStats {
        centroids,
        spread,
        min_centroid_distance: min_d,
    })
}

#[derive(Debug, Clone)]
pub struct EqualizerReport {
    pub label: String,
    pub ser: f64,
    pub clusters: ClusterStats,
    /// Leading outputs of the test stream, for eye diagrams.
    pub eye: Vec<Complex64>,
}

/// Freezes `filters` and measures SER on a fresh test stream.
pub fn evaluate_equalizers(
    cfg: &ExperimentConfig,
    filters: &[FilterState],
) -> Result<Vec<EqualizerReport>> {
    if !cfg.scenario.is_equalization() {
        return Err(Error::Config(
            "equalizer evaluation needs the eq_channel plant".into(),
        ));
    }
    let spec = cfg.equalization.clone().unwrap_or_default();
    let test_seed = rng::derive_seed(cfg.run.seed, rng::tag::TEST, 0);
    let mut data = cfg.scenario.realize(
        spec.test_symbols,
        ScenarioSeeds::derive(test_seed, test_seed),
        None,
    )?;
    let mut truth = Vec::with_capacity(data.len());
    let mut inputs = Vec::with_capacity(data.len() * cfg.scenario.m);
    for n in 0..data.len() {
        let step = data.step(n)?;
        truth.push(step.clean);
        inputs.extend_from_slice(step.regressor);
    }
    let m = cfg.scenario.m;
    filters
        .iter()
        .zip(&cfg.filters)
        .map(|(f, spec_f)| {
            let outputs = inputs
                .chunks_exact(m)
                .map(|x| f.predict(x))
                .collect::<Result<Vec<_>>>()?;
            Ok(EqualizerReport {
                label: spec_f.display_label(),
                ser: symbol_error_rate(&outputs, &truth)?,
                clusters: cluster_statistics(&outputs, &truth)?,
                eye: outputs[..spec.eye_samples.min(outputs.len())].to_vec(),
            })
        })
        .collect()
}
