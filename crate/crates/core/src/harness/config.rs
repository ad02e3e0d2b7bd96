use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::FilterKind;
use crate::scenarios::{PlantSpec, ScenarioSpec};
use crate::theory::DEFAULT_MAX_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub d: usize,
    pub sigma2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    #[default]
    Zero,
    Ones,
    /// Start at the plant's `w_opt,0` (random-walk plants only).
    Optimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub kind: FilterKind,
    /// `0` keeps the filter frozen at its initial weights.
    pub mu: f64,
    /// Random feature parameters. Under a random-walk plant they default to
    /// the plant's own map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_dictionary: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default)]
    pub init: InitSpec,
}

impl FilterSpec {
    pub fn new(kind: FilterKind, mu: f64) -> Self {
        Self {
            kind,
            mu,
            features: None,
            kernel_sigma2: None,
            max_dictionary: None,
            label: None,
            init: InitSpec::Zero,
        }
    }

    pub fn with_features(mut self, d: usize, sigma2: f64) -> Self {
        self.features = Some(FeatureSpec { d, sigma2 });
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_init(mut self, init: InitSpec) -> Self {
        self.init = init;
        self
    }

    pub fn display_label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| self.kind.name().to_uppercase())
    }
}

fn default_tail() -> f64 {
    0.1
}

fn default_divergence() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub runs: usize,
    pub samples: usize,
    pub seed: u64,
    /// Draw the feature maps once from the master seed instead of per run.
    #[serde(default)]
    pub freeze_map: bool,
    /// Fraction of final samples treated as steady state.
    #[serde(default = "default_tail")]
    pub tail_fraction: f64,
    #[serde(default = "default_divergence")]
    pub max_divergence_fraction: f64,
}

fn default_moment_samples() -> usize {
    200_000
}

fn default_max_dim() -> usize {
    DEFAULT_MAX_DIM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheorySpec {
    #[serde(default = "default_moment_samples")]
    pub moment_samples: usize,
    #[serde(default = "default_max_dim")]
    pub max_dim: usize,
}

impl Default for TheorySpec {
    fn default() -> Self {
        Self {
            moment_samples: default_moment_samples(),
            max_dim: default_max_dim(),
        }
    }
}

/// Log-spaced step-size grid applied to one template filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub mu_min: f64,
    pub mu_max: f64,
    pub points: usize,
    #[serde(default)]
    pub template: usize,
}

impl SweepSpec {
    pub fn grid(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.mu_min];
        }
        let (lo, hi) = (self.mu_min.ln(), self.mu_max.ln());
        (0..self.points)
            .map(|k| (lo + (hi - lo) * k as f64 / (self.points - 1) as f64).exp())
            .collect()
    }
}

fn default_test_symbols() -> usize {
    300_000
}

fn default_eye_samples() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EqualizationSpec {
    #[serde(default = "default_test_symbols")]
    pub test_symbols: usize,
    #[serde(default = "default_eye_samples")]
    pub eye_samples: usize,
}

impl Default for EqualizationSpec {
    fn default() -> Self {
        Self {
            test_symbols: default_test_symbols(),
            eye_samples: default_eye_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSpec,
    pub filters: Vec<FilterSpec>,
    pub run: RunSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theory: Option<TheorySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equalization: Option<EqualizationSpec>,
}

impl ExperimentConfig {
    /// Parses a config, or the `config` member of a result sidecar.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let value = match value {
            serde_json::Value::Object(mut map)
                if !map.contains_key("scenario") && map.contains_key("config") =>
            {
                map.remove("config").unwrap_or_default()
            }
            other => other,
        };
        let cfg: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Features used by filter `i`, inheriting the random-walk map.
    pub fn filter_features(&self, i: usize) -> Option<FeatureSpec> {
        let spec = &self.filters[i];
        if !spec.kind.uses_feature_map() && spec.kind != FilterKind::Cklms {
            return None;
        }
        spec.features.or(match self.scenario.plant {
            PlantSpec::RandomWalk { d, sigma2, .. } if spec.kind.uses_feature_map() => {
                Some(FeatureSpec { d, sigma2 })
            }
            _ => None,
        })
    }

    /// Whether filter `i` estimates the random-walk weights directly, so that
    /// its MSD is defined.
    pub fn tracks_plant(&self, i: usize) -> bool {
        let PlantSpec::RandomWalk {
            d,
            sigma2,
            augmented,
            ..
        } = self.scenario.plant
        else {
            return false;
        };
        let kind = self.filters[i].kind;
        kind.uses_feature_map()
            && (kind == FilterKind::Wlrecf) == augmented
            && self.filter_features(i) == Some(FeatureSpec { d, sigma2 })
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        self.scenario
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.run.runs == 0 {
            return cfg("run.runs must be at least 1".into());
        }
        if self.run.samples == 0 {
            return cfg("run.samples must be at least 1".into());
        }
        if !(self.run.tail_fraction > 0.0 && self.run.tail_fraction <= 1.0) {
            return cfg("run.tail_fraction must lie in (0, 1]".into());
        }
        if !(0.0..=1.0).contains(&self.run.max_divergence_fraction) {
            return cfg("run.max_divergence_fraction must lie in [0, 1]".into());
        }
        if self.filters.is_empty() {
            return cfg("at least one filter is required".into());
        }
        let mut labels = std::collections::HashSet::new();
        for (i, f) in self.filters.iter().enumerate() {
            let label = f.display_label();
            if !labels.insert(label.clone()) {
                return cfg(format!("duplicate filter label {label:?}"));
            }
            if !(f.mu >= 0.0 && f.mu.is_finite()) {
                return cfg(format!(
                    "{label}: step-size must be finite and non-negative"
                ));
            }
            if label.contains(',') || label.contains('"') || label.contains('\n') {
                return cfg(format!(
                    "{label:?}: labels may not contain commas, quotes or newlines"
                ));
            }
            if let Some(fs) = self.filter_features(i) {
                if fs.d == 0 || !(fs.sigma2 > 0.0 && fs.sigma2.is_finite()) {
                    return cfg(format!("{label}: features need d ≥ 1 and σ² > 0"));
                }
            } else if f.kind.uses_feature_map() {
                return cfg(format!(
                    "{label}: {} needs a features section",
                    f.kind.name()
                ));
            }
            if f.kind == FilterKind::Cklms && f.kernel_sigma2.is_none() && f.features.is_none() {
                return cfg(format!("{label}: cklms needs kernel_sigma2"));
            }
            if let Some(s) = f.kernel_sigma2 {
                if !(s > 0.0 && s.is_finite()) {
                    return cfg(format!("{label}: kernel_sigma2 must be positive"));
                }
            }
            match f.init {
                InitSpec::Zero => {}
                InitSpec::Ones if f.kind == FilterKind::Cklms => {
                    return cfg(format!("{label}: cklms has no weight vector to initialize"));
                }
                InitSpec::Ones => {}
                InitSpec::Optimal if !self.tracks_plant(i) => {
                    return cfg(format!("{label}: init \"optimal\" needs a random-walk plant sharing the filter's map"));
                }
                InitSpec::Optimal => {}
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.template >= self.filters.len() {
                return cfg("sweep.template is out of range".into());
            }
            if sw.points == 0
                || !(sw.mu_min > 0.0)
                || !(sw.mu_max >= sw.mu_min)
                || !sw.mu_max.is_finite()
            {
                return cfg("sweep needs 0 < mu_min ≤ mu_max and points ≥ 1".into());
            }
        }
        if let Some(th) = &self.theory {
            if th.moment_samples == 0 {
                return cfg("theory.moment_samples must be positive".into());
            }
        }
        if let Some(eq) = &self.equalization {
            if !self.scenario.is_equalization() {
                return cfg("the equalization section needs the eq_channel plant".into());
            }
            if eq.test_symbols == 0 {
                return cfg("equalization.test_symbols must be positive".into());
            }
        }
        Ok(())
    }

    /// Replaces the filter list with the sweep grid applied to the template.
    pub fn expand_sweep(&self) -> Result<ExperimentConfig> {
        let sw = self
            .sweep
            .as_ref()
            .ok_or_else(|| Error::Config("no sweep section".into()))?;
        let template = &self.filters[sw.template];
        let base = template.display_label();
        let filters = sw
            .grid()
            .into_iter()
            .enumerate()
            .map(|(k, mu)| FilterSpec {
                mu,
                label: Some(format!("{base}#{k}")),
                ..template.clone()
            })
            .collect();
        let out = ExperimentConfig {
            filters,
            sweep: None,
            ..self.clone()
        };
        out.validate()?;
        Ok(out)
    }
}
