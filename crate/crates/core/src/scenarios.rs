//! Signal sources, nonlinear plants, measurement noise, and the random-walk
//! reference model used by the identification, equalization, and tracking
//! experiments.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_map::EulerFeatureMap;
use crate::filters::inner_h;
use crate::rng::{self, StreamRng};

const fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// QPSK alphabet in tie-break order `s1..s4`.
pub const QPSK: [Complex64; 4] = [c(1.0, 1.0), c(1.0, -1.0), c(-1.0, 1.0), c(-1.0, -1.0)];

/// System I quadratic coefficient.
pub const SYSTEM_I_QUADRATIC: Complex64 = c(0.15, -0.1);
pub const SYSTEM_II_TAPS: [Complex64; 2] = [c(-0.9, 0.8), c(0.6, -0.7)];
pub const SYSTEM_II_QUADRATIC: Complex64 = c(0.1, 0.15);
pub const SYSTEM_II_CUBIC: Complex64 = c(0.06, 0.05);
pub const CHANNEL_TAPS: [Complex64; 3] = [c(0.34, -0.27), c(0.87, 0.43), c(0.34, -0.21)];
pub const CHANNEL_QUADRATIC: f64 = 0.1;
pub const CHANNEL_CUBIC: f64 = 0.05;

/// `h_k = 0.432 (1 + cos(2π(k−3)/5) − i (1 + cos(2π(k−3)/10)))`, k = 1..5.
pub fn system_i_taps() -> [Complex64; 5] {
    std::array::from_fn(|i| {
        let k = (i + 1) as f64;
        let re = 1.0 + (2.0 * PI * (k - 3.0) / 5.0).cos();
        let im = 1.0 + (2.0 * PI * (k - 3.0) / 10.0).cos();
        c(0.432 * re, -0.432 * im)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    /// `x = sqrt(1−ρ²) s1 + iρ s2` with `s1, s2` standard real Gaussians.
    NoncircularGaussian { rho: f64 },
    /// Real and imaginary parts uniform on `[−1, 1]`.
    UniformComplex,
    /// Symbols from [`QPSK`] with the given probabilities.
    Qpsk { probabilities: [f64; 4] },
}

impl SourceSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SourceSpec::NoncircularGaussian { rho } => {
                if !(0.0..=1.0).contains(&rho) {
                    return Err(Error::invalid(format!("rho must lie in [0, 1], got {rho}")));
                }
            }
            SourceSpec::UniformComplex => {}
            SourceSpec::Qpsk { probabilities } => {
                let sum: f64 = probabilities.iter().sum();
                if probabilities.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidProbabilities(probabilities));
                }
            }
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut StreamRng) -> Complex64 {
        match *self {
            SourceSpec::NoncircularGaussian { rho } => {
                let s1 = rng::standard_normal(rng);
                let s2 = rng::standard_normal(rng);
                c((1.0 - rho * rho).sqrt() * s1, rho * s2)
            }
            SourceSpec::UniformComplex => {
                c(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0))
            }
            SourceSpec::Qpsk { probabilities } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (p, s) in probabilities.iter().zip(QPSK) {
                    acc += p;
                    if u < acc {
                        return s;
                    }
                }
                // u landed in the rounding gap above the cumulative sum
                let last = probabilities.iter().rposition(|p| *p > 0.0).unwrap_or(3);
                QPSK[last]
            }
        }
    }

    pub fn is_symbolic(&self) -> bool {
        matches!(self, SourceSpec::Qpsk { .. })
    }
}

/// Draws `n` i.i.d. samples from `spec` using the stream seeded by `seed`.
pub fn draw_input(spec: &SourceSpec, n: usize, seed: u64) -> Result<Vec<Complex64>> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    let mut rng = rng::stream(seed);
    Ok((0..n).map(|_| spec.sample(&mut rng)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkInit {
    /// One `w_opt,0` for the whole experiment.
    #[default]
    Fixed,
    /// A fresh `w_opt,0` per run.
    PerRun,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantSpec {
    SystemI,
    #[serde(rename = "system_ii")]
    SystemII,
    EqChannel,
    /// `y = w_opt^H z(x) + υ` with `w_opt` following a random walk of
    /// per-step covariance `σ_q² I`.
    RandomWalk {
        d: usize,
        sigma2: f64,
        #[serde(default = "default_true")]
        augmented: bool,
        sigma_q2: f64,
        #[serde(default)]
        init: WalkInit,
    },
}

fn default_true() -> bool {
    true
}

impl PlantSpec {
    /// Number of past inputs the plant reads, `None` for the random walk.
    pub fn memory_order(&self) -> Option<usize> {
        match self {
            PlantSpec::SystemI => Some(5),
            PlantSpec::SystemII => Some(2),
            PlantSpec::EqChannel => Some(3),
            PlantSpec::RandomWalk { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let PlantSpec::RandomWalk {
            d,
            sigma2,
            sigma_q2,
            ..
        } = *self
        {
            if d == 0 || !(sigma2 > 0.0) {
                return Err(Error::invalid("random-walk plant needs D ≥ 1 and σ² > 0"));
            }
            if !(sigma_q2 >= 0.0 && sigma_q2.is_finite()) {
                return Err(Error::invalid(format!(
                    "σ_q² must be non-negative, got {sigma_q2}"
                )));
            }
        }
        Ok(())
    }
}

/// Plant output from a most-recent-first history `[x_n, x_{n−1}, ...]`.
pub fn plant_output(spec: &PlantSpec, history: &[Complex64]) -> Result<Complex64> {
    let order = spec
        .memory_order()
        .ok_or(Error::UnsupportedKind("random-walk plant in plant_output"))?;
    if history.len() < order {
        return Err(Error::InsufficientHistory {
            needed: order,
            available: history.len(),
        });
    }
    Ok(match spec {
        PlantSpec::SystemI => {
            let t: Complex64 = system_i_taps()
                .iter()
                .zip(history)
                .map(|(h, x)| h * x)
                .sum();
            t + SYSTEM_I_QUADRATIC * t * t
        }
        PlantSpec::SystemII => {
            let t = SYSTEM_II_TAPS[0] * history[0] + SYSTEM_II_TAPS[1] * history[1];
            t + SYSTEM_II_QUADRATIC * t * t + SYSTEM_II_CUBIC * t * t * t
        }
        PlantSpec::EqChannel => {
            let t: Complex64 = CHANNEL_TAPS.iter().zip(history).map(|(h, s)| h * s).sum();
            t + CHANNEL_QUADRATIC * t * t + CHANNEL_CUBIC * t * t * t
        }
        PlantSpec::RandomWalk { .. } => unreachable!(),
    })
}

/// Time-varying plant `y_n = w_opt,n−1^H z(x_n)`, `w_opt,n = w_opt,n−1 + q_n`.
#[derive(Debug, Clone)]
pub struct RandomWalkPlant {
    map: Arc<EulerFeatureMap>,
    augmented: bool,
    sigma_q2: f64,
    w_opt: Vec<Complex64>,
    rng: StreamRng,
    scratch: Vec<Complex64>,
}

impl RandomWalkPlant {
    pub fn new(
        map: Arc<EulerFeatureMap>,
        augmented: bool,
        sigma_q2: f64,
        w_opt0: Vec<Complex64>,
        seed: u64,
    ) -> Result<Self> {
        let dim = map.output_dim(augmented);
        if w_opt0.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: w_opt0.len(),
            });
        }
        if !(sigma_q2 >= 0.0) {
            return Err(Error::invalid("σ_q² must be non-negative"));
        }
        Ok(Self {
            map,
            augmented,
            sigma_q2,
            w_opt: w_opt0,
            rng: rng::stream(seed),
            scratch: Vec::with_capacity(dim),
        })
    }

    /// Seeded `w_opt,0` with i.i.d. unit-variance circular Gaussian entries.
    pub fn random_initial(dim: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = rng::stream(seed);
        (0..dim)
            .map(|_| rng::circular_gaussian(&mut rng, 1.0))
            .collect()
    }

    pub fn w_opt(&self) -> &[Complex64] {
        &self.w_opt
    }

    pub fn feature_map(&self) -> &Arc<EulerFeatureMap> {
        &self.map
    }

    /// Noise-free output for `x` under the current `w_opt`, then one
    /// random-walk step. Returns the output and the advanced `w_opt`.
    pub fn step(&mut self, x: &[Complex64]) -> Result<(Complex64, &[Complex64])> {
        self.map.map_into(x, self.augmented, &mut self.scratch)?;
        let y = inner_h(&self.w_opt, &self.scratch);
        if self.sigma_q2 > 0.0 {
            for w in &mut self.w_opt {
                *w += rng::circular_gaussian(&mut self.rng, self.sigma_q2);
            }
        }
        Ok((y, &self.w_opt))
    }
}

/// Functional form of [`RandomWalkPlant::step`].
pub fn random_walk_step<'a>(
    plant: &'a mut RandomWalkPlant,
    x: &[Complex64],
) -> Result<(Complex64, &'a [Complex64])> {
    plant.step(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    /// Noise power relative to the empirical clean-signal power.
    SnrDb(f64),
    /// Absolute noise variance `σ_υ²`.
    Variance(f64),
}

#[derive(Debug, Clone)]
pub struct CalibratedNoise {
    pub variance: f64,
    pub noise: Vec<Complex64>,
    pub noisy: Vec<Complex64>,
}

/// Resolves the noise variance and adds circular complex Gaussian noise.
pub fn calibrate_noise(
    spec: &NoiseSpec,
    clean: &[Complex64],
    seed: u64,
) -> Result<CalibratedNoise> {
    if clean.is_empty() {
        return Err(Error::EmptyStream);
    }
    let variance = resolve_noise_variance(spec, clean)?;
    let mut rng = rng::stream(seed);
    let noise: Vec<Complex64> = (0..clean.len())
        .map(|_| rng::circular_gaussian(&mut rng, variance))
        .collect();
    let noisy = clean.iter().zip(&noise).map(|(a, b)| a + b).collect();
    Ok(CalibratedNoise {
        variance,
        noise,
        noisy,
    })
}

pub fn resolve_noise_variance(spec: &NoiseSpec, clean: &[Complex64]) -> Result<f64> {
    match *spec {
        NoiseSpec::Variance(v) => {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "noise variance must be non-negative, got {v}"
                )));
            }
            Ok(v)
        }
        NoiseSpec::SnrDb(snr) => {
            if !snr.is_finite() {
                return Err(Error::invalid("SNR must be finite"));
            }
            let power = clean.iter().map(|z| z.norm_sqr()).sum::<f64>() / clean.len() as f64;
            if !(power > 0.0) {
                return Err(Error::ZeroPower);
            }
            Ok(power * 10f64.powf(-snr / 10.0))
        }
    }
}

/// `[x_n, x_{n−1}, ..., x_{n−m+1}]`.
pub fn build_regressor(stream: &[Complex64], n: usize, m: usize) -> Result<Vec<Complex64>> {
    if m == 0 {
        return Err(Error::invalid("regressor length must be positive"));
    }
    if n + 1 < m {
        return Err(Error::IndexUnderflow { index: n, m });
    }
    if n >= stream.len() {
        return Err(Error::InsufficientHistory {
            needed: n + 1,
            available: stream.len(),
        });
    }
    Ok((0..m).map(|k| stream[n - k]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorMode {
    /// Sliding window over a single input stream.
    #[default]
    TappedDelay,
    /// A fresh vector of `m` i.i.d. source samples every step.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub source: SourceSpec,
    pub plant: PlantSpec,
    pub noise: NoiseSpec,
    /// Regressor length.
    pub m: usize,
    /// Equalization delay `d` (target `s_{n−d}`).
    #[serde(default)]
    pub delay: usize,
    #[serde(default)]
    pub regressor: RegressorMode,
}

/// Seeds for the independent random streams of one realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScenarioSeeds {
    pub source: u64,
    pub noise: u64,
    pub walk: u64,
    pub walk_init: u64,
}

impl ScenarioSeeds {
    pub fn derive(run_seed: u64, walk_init_parent: u64) -> Self {
        Self {
            source: rng::derive_seed(run_seed, rng::tag::SOURCE, 0),
            noise: rng::derive_seed(run_seed, rng::tag::NOISE, 0),
            walk: rng::derive_seed(run_seed, rng::tag::WALK, 0),
            walk_init: rng::derive_seed(walk_init_parent, rng::tag::WALK_INIT, 0),
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.plant.validate()?;
        if self.m == 0 {
            return Err(Error::invalid("regressor length m must be positive"));
        }
        match (&self.plant, &self.noise) {
            (PlantSpec::RandomWalk { .. }, NoiseSpec::SnrDb(_)) => {
                return Err(Error::invalid(
                    "random-walk plants take an absolute noise variance",
                ));
            }
            (_, NoiseSpec::SnrDb(snr)) if !snr.is_finite() => {
                return Err(Error::invalid("SNR must be finite"));
            }
            (_, NoiseSpec::Variance(v)) if !(*v >= 0.0 && v.is_finite()) => {
                return Err(Error::invalid("noise variance must be non-negative"));
            }
            _ => {}
        }
        if self.plant == PlantSpec::EqChannel && !self.source.is_symbolic() {
            return Err(Error::invalid(
                "the equalization channel is driven by QPSK symbols",
            ));
        }
        if self.regressor == RegressorMode::Independent {
            if let Some(order) = self.plant.memory_order() {
                if self.m < order {
                    return Err(Error::invalid(format!(
                        "independent regressors of length {} cannot feed a plant of order {order}",
                        self.m
                    )));
                }
            }
            if self.plant == PlantSpec::EqChannel {
                return Err(Error::invalid("equalization requires a tapped delay line"));
            }
        }
        Ok(())
    }

    pub fn is_equalization(&self) -> bool {
        self.plant == PlantSpec::EqChannel
    }

    /// Builds the data of one run: `n` regressors with targets and noise.
    ///
    /// `walk_map` must be supplied for random-walk plants.
    pub fn realize(
        &self,
        n: usize,
        seeds: ScenarioSeeds,
        walk_map: Option<Arc<EulerFeatureMap>>,
    ) -> Result<Realization> {
        self.validate()?;
        if n == 0 {
            return Err(Error::EmptyStream);
        }
        let m = self.m;
        let mut src = rng::stream(seeds.source);
        match self.plant {
            PlantSpec::RandomWalk {
                augmented,
                sigma_q2,
                ..
            } => {
                let map = walk_map.ok_or(Error::MissingFeatureMap("random-walk plant"))?;
                let regressors = self.source_regressors(n, &mut src);
                let variance = resolve_noise_variance(&self.noise, &[])?;
                let mut nrng = rng::stream(seeds.noise);
                let noise = (0..n)
                    .map(|_| rng::circular_gaussian(&mut nrng, variance))
                    .collect();
                let w0 =
                    RandomWalkPlant::random_initial(map.output_dim(augmented), seeds.walk_init);
                let walk = RandomWalkPlant::new(map, augmented, sigma_q2, w0, seeds.walk)?;
                Ok(Realization {
                    m,
                    regressors,
                    clean: Vec::new(),
                    noise,
                    noise_variance: variance,
                    walk: Some(walk),
                })
            }
            PlantSpec::EqChannel => {
                let order = 3;
                let burn = (m - 1).max(order - 1).max(self.delay);
                let total = n + burn;
                let symbols: Vec<Complex64> =
                    (0..total).map(|_| self.source.sample(&mut src)).collect();
                let mut channel = Vec::with_capacity(total);
                for t in 0..total {
                    let hist: Vec<Complex64> = (0..order)
                        .map(|k| if t >= k { symbols[t - k] } else { c(0.0, 0.0) })
                        .collect();
                    channel.push(plant_output(&self.plant, &hist)?);
                }
                let cal = calibrate_noise(&self.noise, &channel, seeds.noise)?;
                let received = cal.noisy;
                let mut regressors = Vec::with_capacity(n * m);
                let mut clean = Vec::with_capacity(n);
                for i in 0..n {
                    let t = burn + i;
                    regressors.extend((0..m).map(|k| received[t - k]));
                    clean.push(symbols[t - self.delay]);
                }
                Ok(Realization {
                    m,
                    regressors,
                    clean,
                    noise: vec![c(0.0, 0.0); n],
                    noise_variance: cal.variance,
                    walk: None,
                })
            }
            PlantSpec::SystemI | PlantSpec::SystemII => {
                let order = self.plant.memory_order().unwrap_or(1);
                let mut regressors = Vec::with_capacity(n * m);
                let mut clean = Vec::with_capacity(n);
                match self.regressor {
                    RegressorMode::TappedDelay => {
                        let burn = (m.max(order)) - 1;
                        let xs: Vec<Complex64> = (0..n + burn)
                            .map(|_| self.source.sample(&mut src))
                            .collect();
                        let mut hist = Vec::with_capacity(order.max(m));
                        for i in 0..n {
                            let t = burn + i;
                            hist.clear();
                            hist.extend((0..m.max(order)).map(|k| xs[t - k]));
                            regressors.extend_from_slice(&hist[..m]);
                            clean.push(plant_output(&self.plant, &hist)?);
                        }
                    }
                    RegressorMode::Independent => {
                        regressors = self.source_regressors(n, &mut src);
                        for x in regressors.chunks_exact(m) {
                            clean.push(plant_output(&self.plant, x)?);
                        }
                    }
                }
                let cal = calibrate_noise(&self.noise, &clean, seeds.noise)?;
                Ok(Realization {
                    m,
                    regressors,
                    clean,
                    noise: cal.noise,
                    noise_variance: cal.variance,
                    walk: None,
                })
            }
        }
    }

    fn source_regressors(&self, n: usize, rng: &mut StreamRng) -> Vec<Complex64> {
        match self.regressor {
            RegressorMode::Independent => {
                (0..n * self.m).map(|_| self.source.sample(rng)).collect()
            }
            RegressorMode::TappedDelay => {
                let burn = self.m - 1;
                let xs: Vec<Complex64> = (0..n + burn).map(|_| self.source.sample(rng)).collect();
                let mut out = Vec::with_capacity(n * self.m);
                for i in 0..n {
                    out.extend((0..self.m).map(|k| xs[burn + i - k]));
                }
                out
            }
        }
    }
}

/// One run's worth of data.
#[derive(Debug, Clone)]
pub struct Realization {
    m: usize,
    regressors: Vec<Complex64>,
    clean: Vec<Complex64>,
    noise: Vec<Complex64>,
    noise_variance: f64,
    walk: Option<RandomWalkPlant>,
}

/// One time step as seen by the filters.
#[derive(Debug)]
pub struct Step<'a> {
    pub regressor: &'a [Complex64],
    /// Noise-free target.
    pub clean: Complex64,
    /// Noise added to the target (zero for equalization).
    pub noise: Complex64,
    /// True weights after this step, when the plant has them.
    pub w_opt: Option<&'a [Complex64]>,
}

impl Step<'_> {
    pub fn desired(&self) -> Complex64 {
        self.clean + self.noise
    }
}

impl Realization {
    pub fn len(&self) -> usize {
        self.noise.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noise.is_empty()
    }

    pub fn regressor_len(&self) -> usize {
        self.m
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn regressor(&self, n: usize) -> &[Complex64] {
        &self.regressors[n * self.m..(n + 1) * self.m]
    }

    pub fn walk(&self) -> Option<&RandomWalkPlant> {
        self.walk.as_ref()
    }

    /// Steps must be taken in order `0, 1, ...` for random-walk plants.
    pub fn step(&mut self, n: usize) -> Result<Step<'_>> {
        let regressor = &self.regressors[n * self.m..(n + 1) * self.m];
        let noise = self.noise[n];
        match self.walk.as_mut() {
            Some(walk) => {
                let (clean, w_opt) = walk.step(regressor)?;
                Ok(Step {
                    regressor,
                    clean,
                    noise,
                    w_opt: Some(w_opt),
                })
            }
            None => Ok(Step {
                regressor,
                clean: self.clean[n],
                noise,
                w_opt: None,
            }),
        }
    }
}
