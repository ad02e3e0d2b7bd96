//! Monte Carlo experiment runner.
//!
//! Every run derives its own seed from the master seed, realizes the scenario
//! once and feeds the same `(x_n, y_n, υ_n)` stream to all filters. Runs are
//! executed in parallel and summed in run order, so results do not depend on
//! the number of worker threads.

mod analysis;
mod bench;
mod config;
mod equalize;

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::feature_map::EulerFeatureMap;
use crate::filters::{FilterKind, FilterState};
use crate::rng;
use crate::scenarios::{PlantSpec, RandomWalkPlant, ScenarioSeeds, WalkInit};

pub use analysis::{initial_covariance, plant_moments, predict_filters, FilterPrediction};
pub use bench::{timing_benchmark, BenchEntry, BenchReport};
pub use config::{
    EqualizationSpec, ExperimentConfig, FeatureSpec, FilterSpec, InitSpec, RunSpec, SweepSpec,
    TheorySpec,
};
pub use equalize::{
    cluster_statistics, evaluate_equalizers, nearest_symbol, symbol_error_rate, ClusterStats,
    EqualizerReport,
};

/// `10·log10(v)`
pub fn to_db(v: f64) -> f64 {
    10.0 * v.log10()
}

/// Averaged learning curves of one filter, in linear scale.
#[derive(Debug, Clone)]
pub struct FilterCurves {
    pub label: String,
    pub kind: FilterKind,
    pub mu: f64,
    pub mse: Vec<f64>,
    pub emse: Vec<f64>,
    /// Present when the filter estimates the plant's weight vector.
    pub msd: Option<Vec<f64>>,
    /// Mean `|e_n|²` over the steady-state tail, one entry per kept run.
    pub run_tail_mse: Vec<f64>,
    /// `(run, iteration)` of every diverged run.
    pub diverged: Vec<(usize, usize)>,
    pub runs_used: usize,
}

impl FilterCurves {
    pub fn mse_db(&self) -> Vec<f64> {
        self.mse.iter().map(|&v| to_db(v)).collect()
    }

    pub fn emse_db(&self) -> Vec<f64> {
        self.emse.iter().map(|&v| to_db(v)).collect()
    }

    pub fn msd_db(&self) -> Option<Vec<f64>> {
        self.msd
            .as_ref()
            .map(|m| m.iter().map(|&v| to_db(v)).collect())
    }

    /// Mean of the final `fraction` of a curve.
    pub fn tail_mean(curve: &[f64], fraction: f64) -> f64 {
        let k = ((curve.len() as f64 * fraction).ceil() as usize).clamp(1, curve.len().max(1));
        let tail = &curve[curve.len().saturating_sub(k)..];
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct LearningCurves {
    pub config: ExperimentConfig,
    pub filters: Vec<FilterCurves>,
    pub run_seeds: Vec<u64>,
    /// Per run, per filter: checksum of the stream the filter consumed.
    pub stream_checksums: Vec<Vec<u64>>,
    /// Noise variance averaged over runs.
    pub noise_variance: f64,
    /// Filters as left at the end of run 0.
    pub trained: Vec<FilterState>,
}

impl LearningCurves {
    pub fn filter(&self, label: &str) -> Option<&FilterCurves> {
        self.filters.iter().find(|f| f.label == label)
    }

    /// Steady-state MSE of every filter: tail mean of the averaged curve.
    pub fn steady_mse(&self) -> Vec<f64> {
        self.filters
            .iter()
            .map(|f| FilterCurves::tail_mean(&f.mse, self.config.run.tail_fraction))
            .collect()
    }

    pub fn diverged_count(&self) -> usize {
        self.filters.iter().map(|f| f.diverged.len()).sum()
    }

    pub fn check_divergence(&self) -> Result<()> {
        let runs = self.config.run.runs;
        for f in &self.filters {
            let frac = f.diverged.len() as f64 / runs as f64;
            if frac > self.config.run.max_divergence_fraction {
                return Err(Error::DivergenceLimit {
                    label: f.label.clone(),
                    diverged: f.diverged.len(),
                    runs,
                });
            }
        }
        Ok(())
    }
}

pub fn run_seed(master: u64, run: usize) -> u64 {
    rng::derive_seed(master, rng::tag::RUN, run as u64)
}

/// `w_opt,0` shared by all runs when the walk start is fixed.
pub fn walk_initial_weights(cfg: &ExperimentConfig) -> Option<Vec<Complex64>> {
    match cfg.scenario.plant {
        PlantSpec::RandomWalk {
            d,
            augmented,
            init: WalkInit::Fixed,
            ..
        } => Some(RandomWalkPlant::random_initial(
            if augmented { 2 * d } else { d },
            ScenarioSeeds::derive(0, cfg.run.seed).walk_init,
        )),
        _ => None,
    }
}

/// Feature maps of one run, keyed by `(D, σ²)`. All maps come from the same
/// seed, so filters with equal parameters share one map.
struct MapCache {
    m: usize,
    seed: u64,
    maps: Vec<((usize, u64), Arc<EulerFeatureMap>)>,
}

impl MapCache {
    fn new(m: usize, seed: u64) -> Self {
        Self {
            m,
            seed,
            maps: Vec::new(),
        }
    }

    fn get(&mut self, fs: FeatureSpec) -> Result<Arc<EulerFeatureMap>> {
        let key = (fs.d, fs.sigma2.to_bits());
        if let Some((_, map)) = self.maps.iter().find(|(k, _)| *k == key) {
            return Ok(map.clone());
        }
        let map = Arc::new(EulerFeatureMap::new(self.m, fs.d, fs.sigma2, self.seed)?);
        self.maps.push((key, map.clone()));
        Ok(map)
    }
}

pub(crate) fn map_seed(cfg: &ExperimentConfig, run_seed: u64) -> u64 {
    let parent = if cfg.run.freeze_map {
        cfg.run.seed
    } else {
        run_seed
    };
    rng::derive_seed(parent, rng::tag::MAP, 0)
}

/// The random-walk plant's map for a given run seed.
pub fn plant_map(cfg: &ExperimentConfig, run_seed: u64) -> Result<Option<Arc<EulerFeatureMap>>> {
    match cfg.scenario.plant {
        PlantSpec::RandomWalk { d, sigma2, .. } => {
            let mut cache = MapCache::new(cfg.scenario.m, map_seed(cfg, run_seed));
            Ok(Some(cache.get(FeatureSpec { d, sigma2 })?))
        }
        _ => Ok(None),
    }
}

fn build_filter(
    cfg: &ExperimentConfig,
    i: usize,
    maps: &mut MapCache,
    w_opt0: Option<&[Complex64]>,
) -> Result<FilterState> {
    let spec = &cfg.filters[i];
    let map = match cfg.filter_features(i) {
        Some(fs) if spec.kind.uses_feature_map() => Some(maps.get(fs)?),
        _ => None,
    };
    let kernel = spec
        .kernel_sigma2
        .or(cfg.filter_features(i).map(|f| f.sigma2));
    let mu = if spec.mu > 0.0 { spec.mu } else { 1.0 };
    let mut filter = FilterState::new(spec.kind, mu, cfg.scenario.m, map, kernel)?;
    if spec.mu == 0.0 {
        filter.set_step_size_unchecked(0.0);
    }
    if let Some(cap) = spec.max_dictionary {
        filter = filter.with_dictionary_cap(cap);
    }
    match spec.init {
        InitSpec::Zero => Ok(filter),
        InitSpec::Ones => {
            let ones = vec![Complex64::new(1.0, 0.0); filter.weights().len()];
            filter.with_initial_weights(&ones)
        }
        InitSpec::Optimal => {
            let w = w_opt0.ok_or_else(|| {
                Error::Config("init \"optimal\" needs a random-walk plant".into())
            })?;
            filter.with_initial_weights(w)
        }
    }
}

/// Filters of one run with their initial weights.
pub fn build_filters(
    cfg: &ExperimentConfig,
    run_seed: u64,
    w_opt0: Option<&[Complex64]>,
) -> Result<Vec<FilterState>> {
    let mut maps = MapCache::new(cfg.scenario.m, map_seed(cfg, run_seed));
    (0..cfg.filters.len())
        .map(|i| build_filter(cfg, i, &mut maps, w_opt0))
        .collect()
}

struct FilterTrace {
    mse: Vec<f64>,
    emse: Vec<f64>,
    msd: Option<Vec<f64>>,
    diverged: Option<usize>,
    checksum: u64,
}

struct RunTrace {
    filters: Vec<FilterTrace>,
    noise_variance: f64,
    trained: Option<Vec<FilterState>>,
}

// FNV-1a over the raw bits
fn fold_checksum(mut h: u64, values: &[Complex64]) -> u64 {
    for v in values {
        for bits in [v.re.to_bits(), v.im.to_bits()] {
            h ^= bits;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

const CHECKSUM_INIT: u64 = 0xcbf29ce484222325;

fn run_once(cfg: &ExperimentConfig, run: usize, keep_filters: bool) -> Result<RunTrace> {
    let seed = run_seed(cfg.run.seed, run);
    let walk_parent = match cfg.scenario.plant {
        PlantSpec::RandomWalk {
            init: WalkInit::PerRun,
            ..
        } => seed,
        _ => cfg.run.seed,
    };
    let seeds = ScenarioSeeds::derive(seed, walk_parent);
    let n = cfg.run.samples;
    let mut maps = MapCache::new(cfg.scenario.m, map_seed(cfg, seed));
    let walk_map = match cfg.scenario.plant {
        PlantSpec::RandomWalk { d, sigma2, .. } => Some(maps.get(FeatureSpec { d, sigma2 })?),
        _ => None,
    };
    let mut data = cfg.scenario.realize(n, seeds, walk_map)?;
    let w_opt0 = data.walk().map(|w| w.w_opt().to_vec());
    let mut filters = (0..cfg.filters.len())
        .map(|i| build_filter(cfg, i, &mut maps, w_opt0.as_deref()))
        .collect::<Result<Vec<_>>>()?;
    let tracks: Vec<bool> = (0..filters.len()).map(|i| cfg.tracks_plant(i)).collect();
    let mut traces: Vec<FilterTrace> = tracks
        .iter()
        .map(|&t| FilterTrace {
            mse: Vec::with_capacity(n),
            emse: Vec::with_capacity(n),
            msd: t.then(|| Vec::with_capacity(n)),
            diverged: None,
            checksum: CHECKSUM_INIT,
        })
        .collect();
    for t in 0..n {
        let step = data.step(t)?;
        let y = step.desired();
        let triple = [y, step.noise];
        for (filter, trace) in filters.iter_mut().zip(traces.iter_mut()) {
            if trace.diverged.is_some() {
                continue;
            }
            trace.checksum = fold_checksum(fold_checksum(trace.checksum, step.regressor), &triple);
            match filter.update(step.regressor, y) {
                Ok((e, y_hat)) => {
                    trace.mse.push(e.norm_sqr());
                    trace.emse.push((step.clean - y_hat).norm_sqr());
                    if let (Some(msd), Some(w)) = (trace.msd.as_mut(), step.w_opt) {
                        msd.push(filter.weight_error(w)?);
                    }
                }
                Err(Error::Divergence { iteration }) => trace.diverged = Some(iteration),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(RunTrace {
        filters: traces,
        noise_variance: data.noise_variance(),
        trained: keep_filters.then_some(filters),
    })
}

/// Runs every configured run and averages the per-iteration curves.
///
/// Diverged `(filter, run)` pairs are excluded from the averages and listed in
/// [`FilterCurves::diverged`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<LearningCurves> {
    cfg.validate()?;
    let n = cfg.run.samples;
    let nf = cfg.filters.len();
    let tail = ((n as f64 * cfg.run.tail_fraction).ceil() as usize).clamp(1, n);
    let mut curves: Vec<FilterCurves> = cfg
        .filters
        .iter()
        .enumerate()
        .map(|(i, f)| FilterCurves {
            label: f.display_label(),
            kind: f.kind,
            mu: f.mu,
            mse: vec![0.0; n],
            emse: vec![0.0; n],
            msd: cfg.tracks_plant(i).then(|| vec![0.0; n]),
            run_tail_mse: Vec::new(),
            diverged: Vec::new(),
            runs_used: 0,
        })
        .collect();
    let mut checksums = Vec::with_capacity(cfg.run.runs);
    let mut noise_sum = 0.0;
    let mut trained = Vec::new();
    let chunk = rayon::current_num_threads().max(1);
    for start in (0..cfg.run.runs).step_by(chunk) {
        let end = (start + chunk).min(cfg.run.runs);
        let traces: Vec<Result<RunTrace>> = (start..end)
            .into_par_iter()
            .map(|r| run_once(cfg, r, r == 0))
            .collect();
        for (offset, trace) in traces.into_iter().enumerate() {
            let run = start + offset;
            let trace = trace?;
            noise_sum += trace.noise_variance;
            if let Some(f) = trace.trained {
                trained = f;
            }
            checksums.push(trace.filters.iter().map(|t| t.checksum).collect());
            for (acc, t) in curves.iter_mut().zip(trace.filters) {
                if let Some(it) = t.diverged {
                    acc.diverged.push((run, it));
                    continue;
                }
                for (a, v) in acc.mse.iter_mut().zip(&t.mse) {
                    *a += v;
                }
                for (a, v) in acc.emse.iter_mut().zip(&t.emse) {
                    *a += v;
                }
                if let (Some(a), Some(v)) = (acc.msd.as_mut(), t.msd.as_ref()) {
                    for (a, v) in a.iter_mut().zip(v) {
                        *a += v;
                    }
                }
                acc.run_tail_mse
                    .push(t.mse[n - tail..].iter().sum::<f64>() / tail as f64);
                acc.runs_used += 1;
            }
        }
    }
    for acc in &mut curves {
        let k = acc.runs_used as f64;
        let scale = |v: &mut Vec<f64>| {
            for x in v.iter_mut() {
                *x = if k > 0.0 { *x / k } else { f64::NAN };
            }
        };
        scale(&mut acc.mse);
        scale(&mut acc.emse);
        if let Some(m) = acc.msd.as_mut() {
            scale(m);
        }
    }
    debug_assert_eq!(nf, curves.len());
    Ok(LearningCurves {
        config: cfg.clone(),
        filters: curves,
        run_seeds: (0..cfg.run.runs)
            .map(|r| run_seed(cfg.run.seed, r))
            .collect(),
        stream_checksums: checksums,
        noise_variance: noise_sum / cfg.run.runs as f64,
        trained,
    })
}
