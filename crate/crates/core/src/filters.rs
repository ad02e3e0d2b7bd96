//! Online complex-valued adaptive filters with a shared predict/update cycle.
//!
//! | kind     | output                          | update                        |
//! |----------|---------------------------------|-------------------------------|
//! | `Clms`   | `w^H x`                         | `w += μ e* x`                 |
//! | `Lrecf`  | `u^H z(x)`                      | `u += μ e* z(x)`              |
//! | `Wlrecf` | `u^H z(x) + v^H z*(x)`          | `[u; v] += μ e* [z(x); z*(x)]`|
//! | `Cklms`  | `2 Σ_i α_i κ(x, x_i)`           | append `(x, μ e)`             |

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_map::{gaussian_kernel, EulerFeatureMap};

/// Default hard cap on the CKLMS dictionary.
pub const DEFAULT_DICTIONARY_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Clms,
    Lrecf,
    Wlrecf,
    Cklms,
}

impl FilterKind {
    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Clms => "CLMS",
            FilterKind::Lrecf => "LRECF",
            FilterKind::Wlrecf => "WLRECF",
            FilterKind::Cklms => "CKLMS",
        }
    }

    pub fn uses_feature_map(self) -> bool {
        matches!(self, FilterKind::Lrecf | FilterKind::Wlrecf)
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `Σ_k conj(w_k) z_k`
#[inline]
pub fn inner_h(w: &[Complex64], z: &[Complex64]) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (a, b) in w.iter().zip(z) {
        acc += a.conj() * b;
    }
    acc
}

fn is_finite(z: Complex64) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

#[derive(Debug, Clone)]
pub struct FilterState {
    kind: FilterKind,
    mu: f64,
    m: usize,
    weights: Vec<Complex64>,
    map: Option<Arc<EulerFeatureMap>>,
    kernel_sigma2: f64,
    // CKLMS dictionary: inputs stored flat, one row of length m per entry
    dict_inputs: Vec<Complex64>,
    dict_coeffs: Vec<Complex64>,
    dictionary_cap: usize,
    update_count: usize,
    scratch: Vec<Complex64>,
}

impl FilterState {
    /// Zero-initialized filter.
    ///
    /// `map` is required for LRECF/WLRECF. For CKLMS the kernel bandwidth is
    /// `kernel_sigma2`, falling back to the map's spectral variance.
    pub fn new(
        kind: FilterKind,
        mu: f64,
        m: usize,
        map: Option<Arc<EulerFeatureMap>>,
        kernel_sigma2: Option<f64>,
    ) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::invalid(format!(
                "step-size must be positive, got {mu}"
            )));
        }
        if m == 0 {
            return Err(Error::invalid("input dimension must be positive"));
        }
        let len = match kind {
            FilterKind::Clms | FilterKind::Cklms => m,
            FilterKind::Lrecf | FilterKind::Wlrecf => {
                let fm = map.as_ref().ok_or(Error::MissingFeatureMap(kind.name()))?;
                if fm.input_dim() != m {
                    return Err(Error::DimensionMismatch {
                        expected: m,
                        found: fm.input_dim(),
                    });
                }
                fm.output_dim(kind == FilterKind::Wlrecf)
            }
        };
        let kernel_sigma2 = match kind {
            FilterKind::Cklms => {
                let s = kernel_sigma2
                    .or_else(|| map.as_ref().map(|fm| fm.sigma2()))
                    .ok_or_else(|| Error::invalid("CKLMS needs a kernel bandwidth"))?;
                if !(s > 0.0 && s.is_finite()) {
                    return Err(Error::invalid(format!(
                        "kernel bandwidth must be positive, got {s}"
                    )));
                }
                s
            }
            _ => 0.0,
        };
        let weights = match kind {
            FilterKind::Cklms => Vec::new(),
            _ => vec![Complex64::new(0.0, 0.0); len],
        };
        Ok(Self {
            kind,
            mu,
            m,
            weights,
            map: if kind.uses_feature_map() { map } else { None },
            kernel_sigma2,
            dict_inputs: Vec::new(),
            dict_coeffs: Vec::new(),
            dictionary_cap: DEFAULT_DICTIONARY_CAP,
            update_count: 0,
            scratch: Vec::with_capacity(len),
        })
    }

    pub fn clms(mu: f64, m: usize) -> Result<Self> {
        Self::new(FilterKind::Clms, mu, m, None, None)
    }

    pub fn lrecf(mu: f64, map: Arc<EulerFeatureMap>) -> Result<Self> {
        let m = map.input_dim();
        Self::new(FilterKind::Lrecf, mu, m, Some(map), None)
    }

    pub fn wlrecf(mu: f64, map: Arc<EulerFeatureMap>) -> Result<Self> {
        let m = map.input_dim();
        Self::new(FilterKind::Wlrecf, mu, m, Some(map), None)
    }

    pub fn cklms(mu: f64, m: usize, kernel_sigma2: f64) -> Result<Self> {
        Self::new(FilterKind::Cklms, mu, m, None, Some(kernel_sigma2))
    }

    /// Replaces the initial weights. Not available for CKLMS.
    pub fn with_initial_weights(mut self, init: &[Complex64]) -> Result<Self> {
        if self.kind == FilterKind::Cklms {
            return Err(Error::UnsupportedKind("CKLMS initial weights"));
        }
        if init.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                found: init.len(),
            });
        }
        self.weights.copy_from_slice(init);
        Ok(self)
    }

    pub fn with_dictionary_cap(mut self, cap: usize) -> Self {
        self.dictionary_cap = cap;
        self
    }

    /// Overrides the step-size without validation. Allows `μ = 0` for
    /// frozen-filter diagnostics.
    #[doc(hidden)]
    pub fn set_step_size_unchecked(&mut self, mu: f64) {
        self.mu = mu;
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn step_size(&self) -> f64 {
        self.mu
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn feature_map(&self) -> Option<&Arc<EulerFeatureMap>> {
        self.map.as_ref()
    }

    pub fn kernel_sigma2(&self) -> Option<f64> {
        (self.kind == FilterKind::Cklms).then_some(self.kernel_sigma2)
    }

    pub fn update_count(&self) -> usize {
        self.update_count
    }

    pub fn dictionary_len(&self) -> usize {
        self.dict_coeffs.len()
    }

    /// Stored `(input, α_i)` pairs of a CKLMS filter.
    pub fn dictionary(&self) -> impl Iterator<Item = (&[Complex64], Complex64)> {
        self.dict_inputs
            .chunks_exact(self.m)
            .zip(self.dict_coeffs.iter().copied())
    }

    fn check_input(&self, x: &[Complex64]) -> Result<()> {
        if x.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                found: x.len(),
            });
        }
        Ok(())
    }

    fn kernel_sum(&self, x: &[Complex64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (xi, alpha) in self.dictionary() {
            acc += alpha * gaussian_kernel(x, xi, self.kernel_sigma2);
        }
        acc * 2.0
    }

    fn features_into(&self, x: &[Complex64], out: &mut Vec<Complex64>) -> Result<()> {
        let fm = self
            .map
            .as_ref()
            .ok_or(Error::MissingFeatureMap(self.kind.name()))?;
        fm.map_into(x, self.kind == FilterKind::Wlrecf, out)
    }

    pub fn predict(&self, x: &[Complex64]) -> Result<Complex64> {
        self.check_input(x)?;
        match self.kind {
            FilterKind::Clms => Ok(inner_h(&self.weights, x)),
            FilterKind::Lrecf | FilterKind::Wlrecf => {
                let mut z = Vec::new();
                self.features_into(x, &mut z)?;
                Ok(inner_h(&self.weights, &z))
            }
            FilterKind::Cklms => Ok(self.kernel_sum(x)),
        }
    }

    /// One adaptation step. Returns `(e, ŷ)` with `e = y − ŷ` computed from the
    /// pre-update state.
    pub fn update(&mut self, x: &[Complex64], y: Complex64) -> Result<(Complex64, Complex64)> {
        self.check_input(x)?;
        let iteration = self.update_count + 1;
        if !is_finite(y) || !x.iter().all(|&v| is_finite(v)) {
            return Err(Error::NonFiniteInput { iteration });
        }
        let (e, y_hat) = match self.kind {
            FilterKind::Clms => {
                let y_hat = inner_h(&self.weights, x);
                let e = y - y_hat;
                let g = e.conj() * self.mu;
                for (w, xi) in self.weights.iter_mut().zip(x) {
                    *w += g * xi;
                }
                (e, y_hat)
            }
            FilterKind::Lrecf | FilterKind::Wlrecf => {
                let mut z = std::mem::take(&mut self.scratch);
                self.features_into(x, &mut z)?;
                let y_hat = inner_h(&self.weights, &z);
                let e = y - y_hat;
                let g = e.conj() * self.mu;
                for (w, zk) in self.weights.iter_mut().zip(&z) {
                    *w += g * zk;
                }
                self.scratch = z;
                (e, y_hat)
            }
            FilterKind::Cklms => {
                if self.dict_coeffs.len() >= self.dictionary_cap {
                    return Err(Error::DictionaryFull {
                        cap: self.dictionary_cap,
                    });
                }
                let y_hat = self.kernel_sum(x);
                let e = y - y_hat;
                let alpha = e * self.mu;
                if !is_finite(alpha) {
                    return Err(Error::Divergence { iteration });
                }
                self.dict_inputs.extend_from_slice(x);
                self.dict_coeffs.push(alpha);
                (e, y_hat)
            }
        };
        self.update_count = iteration;
        if !is_finite(e) || !self.weights.iter().all(|&w| is_finite(w)) {
            return Err(Error::Divergence { iteration });
        }
        Ok((e, y_hat))
    }

    /// `‖w_opt − w‖²`.
    pub fn weight_error(&self, w_opt: &[Complex64]) -> Result<f64> {
        if self.kind == FilterKind::Cklms {
            return Err(Error::UnsupportedKind("CKLMS weight error"));
        }
        if w_opt.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                found: w_opt.len(),
            });
        }
        Ok(w_opt
            .iter()
            .zip(&self.weights)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum())
    }
}
