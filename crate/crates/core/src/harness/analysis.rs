use nalgebra::DMatrix;
use num_complex::Complex64;

use super::config::{ExperimentConfig, InitSpec};
use super::{plant_map, run_seed, walk_initial_weights};
use crate::error::{Error, Result};
use crate::rng;
use crate::scenarios::{PlantSpec, RegressorMode, WalkInit};
use crate::theory::{self, Moments, TheoryPrediction, TransientParams};

fn analysable(cfg: &ExperimentConfig) -> Result<()> {
    let PlantSpec::RandomWalk { init, .. } = cfg.scenario.plant else {
        return Err(Error::Config("theory needs a random_walk plant".into()));
    };
    if !cfg.run.freeze_map {
        return Err(Error::Config("theory needs run.freeze_map = true".into()));
    }
    if init != WalkInit::Fixed {
        return Err(Error::Config("theory needs a fixed walk start".into()));
    }
    if cfg.scenario.regressor != RegressorMode::Independent {
        return Err(Error::Config(
            "theory assumes independent regressors".into(),
        ));
    }
    Ok(())
}

/// Feature moments of the plant's (frozen) map under the scenario source.
pub fn plant_moments(cfg: &ExperimentConfig) -> Result<Moments> {
    analysable(cfg)?;
    let PlantSpec::RandomWalk { augmented, .. } = cfg.scenario.plant else {
        unreachable!()
    };
    let spec = cfg.theory.clone().unwrap_or_default();
    let map = plant_map(cfg, run_seed(cfg.run.seed, 0))?.expect("random-walk plant has a map");
    theory::estimate_moments(
        &map,
        &cfg.scenario.source,
        augmented,
        spec.moment_samples,
        rng::derive_seed(cfg.run.seed, rng::tag::MOMENTS, 0),
        spec.max_dim,
    )
}

/// `(w_opt,0 − w_0)(w_opt,0 − w_0)^H` for filter `i`.
pub fn initial_covariance(cfg: &ExperimentConfig, i: usize) -> Result<DMatrix<Complex64>> {
    analysable(cfg)?;
    let w_opt = walk_initial_weights(cfg).expect("fixed walk start");
    let diff: Vec<Complex64> = match cfg.filters[i].init {
        InitSpec::Zero => w_opt,
        InitSpec::Ones => w_opt.iter().map(|w| w - 1.0).collect(),
        InitSpec::Optimal => vec![Complex64::new(0.0, 0.0); w_opt.len()],
    };
    Ok(theory::outer(&diff))
}

#[derive(Debug, Clone)]
pub struct FilterPrediction {
    pub index: usize,
    pub label: String,
    pub prediction: TheoryPrediction,
}

/// Transient predictions over `run.samples` steps for every filter that
/// estimates the plant weights.
pub fn predict_filters(cfg: &ExperimentConfig, mom: &Moments) -> Result<Vec<FilterPrediction>> {
    analysable(cfg)?;
    let PlantSpec::RandomWalk { sigma_q2, .. } = cfg.scenario.plant else {
        unreachable!()
    };
    let sigma_v2 = crate::scenarios::resolve_noise_variance(&cfg.scenario.noise, &[])?;
    let mut out = Vec::new();
    for (i, f) in cfg.filters.iter().enumerate() {
        if !cfg.tracks_plant(i) {
            continue;
        }
        let params = TransientParams {
            mu: f.mu,
            sigma_v2,
            sigma_q2,
            n_steps: cfg.run.samples,
        };
        out.push(FilterPrediction {
            index: i,
            label: f.display_label(),
            prediction: theory::transient_predict(mom, params, &initial_covariance(cfg, i)?)?,
        });
    }
    Ok(out)
}
