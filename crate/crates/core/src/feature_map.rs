//! Random Euler feature map.
//!
//! A map holds `D` spectral vectors `c_k ∈ R^{2m}` drawn i.i.d. from
//! `N(0, σ² I)`. A complex input `x ∈ C^m` is stacked as `v = [Re x; Im x]`
//! and mapped to
//!
//! ```text
//! z(x)_k = sqrt(2/D) · exp(j c_k^T v),   k = 1..D
//! ```
//!
//! The augmented form appends the conjugates, `[z(x); z*(x)]`. Inner products
//! of mapped vectors are sample averages of `2 exp(-σ² ‖v_a - v_b‖² / 2)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Serializable description of a map; rebuilding from it is bit-exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureMapRecord {
    pub m: usize,
    pub d: usize,
    pub sigma2: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct EulerFeatureMap {
    m: usize,
    d: usize,
    sigma2: f64,
    seed: u64,
    scale: f64,
    // row-major, D rows of length 2m
    spectral: Vec<f64>,
}

impl EulerFeatureMap {
    pub fn new(m: usize, d: usize, sigma2: f64, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("input dimension m must be positive"));
        }
        if d == 0 {
            return Err(Error::invalid("feature count D must be positive"));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::invalid(format!(
                "spectral variance must be positive, got {sigma2}"
            )));
        }
        let mut rng = rng::stream(seed);
        let std = sigma2.sqrt();
        let spectral = (0..d * 2 * m)
            .map(|_| std * rng::standard_normal(&mut rng))
            .collect();
        Ok(Self {
            m,
            d,
            sigma2,
            seed,
            scale: (2.0 / d as f64).sqrt(),
            spectral,
        })
    }

    /// Builds a map from explicit spectral vectors (one per feature).
    pub fn from_spectral_vectors(m: usize, sigma2: f64, vectors: &[Vec<f64>]) -> Result<Self> {
        if m == 0 || vectors.is_empty() {
            return Err(Error::invalid(
                "need m ≥ 1 and at least one spectral vector",
            ));
        }
        let mut spectral = Vec::with_capacity(vectors.len() * 2 * m);
        for c in vectors {
            if c.len() != 2 * m {
                return Err(Error::DimensionMismatch {
                    expected: 2 * m,
                    found: c.len(),
                });
            }
            spectral.extend_from_slice(c);
        }
        Ok(Self {
            m,
            d: vectors.len(),
            sigma2,
            seed: 0,
            scale: (2.0 / vectors.len() as f64).sqrt(),
            spectral,
        })
    }

    pub fn from_record(record: &FeatureMapRecord) -> Result<Self> {
        Self::new(record.m, record.d, record.sigma2, record.seed)
    }

    pub fn record(&self) -> FeatureMapRecord {
        FeatureMapRecord {
            m: self.m,
            d: self.d,
            sigma2: self.sigma2,
            seed: self.seed,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn feature_count(&self) -> usize {
        self.d
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Length of the mapped vector.
    pub fn output_dim(&self, augmented: bool) -> usize {
        if augmented {
            2 * self.d
        } else {
            self.d
        }
    }

    pub fn spectral_vector(&self, k: usize) -> &[f64] {
        let w = 2 * self.m;
        &self.spectral[k * w..(k + 1) * w]
    }

    pub fn spectral_vectors(&self) -> impl Iterator<Item = &[f64]> {
        self.spectral.chunks_exact(2 * self.m)
    }

    fn check(&self, x: &[Complex64]) -> Result<()> {
        if x.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                found: x.len(),
            });
        }
        Ok(())
    }

    fn phase(&self, k: usize, x: &[Complex64]) -> f64 {
        let c = self.spectral_vector(k);
        let (re, im) = c.split_at(self.m);
        let mut theta = 0.0;
        for i in 0..self.m {
            theta += re[i] * x[i].re + im[i] * x[i].im;
        }
        theta
    }

    /// Writes `z(x)` (or its augmented form) into `out`, resizing it.
    pub fn map_into(
        &self,
        x: &[Complex64],
        augmented: bool,
        out: &mut Vec<Complex64>,
    ) -> Result<()> {
        self.check(x)?;
        out.clear();
        out.reserve(self.output_dim(augmented));
        for k in 0..self.d {
            let (s, c) = self.phase(k, x).sin_cos();
            out.push(Complex64::new(self.scale * c, self.scale * s));
        }
        if augmented {
            for k in 0..self.d {
                let z = out[k].conj();
                out.push(z);
            }
        }
        Ok(())
    }

    pub fn map(&self, x: &[Complex64], augmented: bool) -> Result<Vec<Complex64>> {
        let mut out = Vec::new();
        self.map_into(x, augmented, &mut out)?;
        Ok(out)
    }

    /// `⟨z(a), z(b)⟩ = (2/D) Σ_k exp(j c_k^T (v_a − v_b))`.
    ///
    /// Evaluated on the difference `v_a − v_b`, so the result depends on the
    /// inputs only through that difference.
    pub fn kernel_estimate(&self, a: &[Complex64], b: &[Complex64]) -> Result<Complex64> {
        self.check(a)?;
        self.check(b)?;
        let diff: Vec<Complex64> = a.iter().zip(b).map(|(p, q)| p - q).collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..self.d {
            let (s, c) = self.phase(k, &diff).sin_cos();
            acc += Complex64::new(c, s);
        }
        Ok(acc * (2.0 / self.d as f64))
    }
}

/// The exact Gaussian kernel `exp(-σ² ‖v_a − v_b‖² / 2)` on stacked coordinates.
pub fn gaussian_kernel(a: &[Complex64], b: &[Complex64], sigma2: f64) -> f64 {
    let dist2: f64 = a.iter().zip(b).map(|(p, q)| (p - q).norm_sqr()).sum();
    (-0.5 * sigma2 * dist2).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(EulerFeatureMap::new(0, 5, 1.0, 0).is_err());
        assert!(EulerFeatureMap::new(2, 0, 1.0, 0).is_err());
        assert!(EulerFeatureMap::new(2, 5, 0.0, 0).is_err());
        assert!(EulerFeatureMap::new(2, 5, -1.0, 0).is_err());
    }

    #[test]
    fn shape_and_determinism() {
        let a = EulerFeatureMap::new(5, 500, 0.2, 11).unwrap();
        assert_eq!(a.spectral_vectors().count(), 500);
        assert!(a.spectral_vectors().all(|v| v.len() == 10));
        let b = EulerFeatureMap::new(5, 500, 0.2, 11).unwrap();
        assert_eq!(a.spectral, b.spectral);
        let c = EulerFeatureMap::from_record(&a.record()).unwrap();
        assert_eq!(a.spectral, c.spectral);
    }

    #[test]
    fn spectral_coordinates_are_centered() {
        let sigma2 = 0.2;
        let d = 100_000;
        let fm = EulerFeatureMap::new(1, d, sigma2, 5).unwrap();
        let tol = 4.0 * (sigma2 / d as f64).sqrt();
        for coord in 0..2 {
            let mean: f64 = fm.spectral_vectors().map(|v| v[coord]).sum::<f64>() / d as f64;
            assert!(mean.abs() < tol, "coordinate {coord} mean {mean}");
            let var: f64 = fm
                .spectral_vectors()
                .map(|v| (v[coord] - mean).powi(2))
                .sum::<f64>()
                / d as f64;
            assert!((var - sigma2).abs() < 0.01);
        }
    }

    #[test]
    fn zero_input_maps_to_constant() {
        let fm = EulerFeatureMap::new(3, 16, 1.0, 1).unwrap();
        let z = fm.map(&[c(0.0, 0.0); 3], false).unwrap();
        let s = (2.0f64 / 16.0).sqrt();
        assert!(z.iter().all(|e| *e == c(s, 0.0)));
    }

    #[test]
    fn single_feature_hand_value() {
        let fm = EulerFeatureMap::from_spectral_vectors(1, 1.0, &[vec![FRAC_PI_2, 0.0]]).unwrap();
        let z = fm.map(&[c(1.0, 0.0)], false).unwrap();
        let expected = c(0.0, 2f64.sqrt());
        assert!((z[0] - expected).norm() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let fm = EulerFeatureMap::new(2, 4, 1.0, 0).unwrap();
        assert!(matches!(
            fm.map(&[c(1.0, 0.0)], false),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
        assert!(fm
            .kernel_estimate(&[c(1.0, 0.0); 2], &[c(0.0, 0.0)])
            .is_err());
    }

    #[test]
    fn kernel_of_identical_inputs_is_two() {
        let fm = EulerFeatureMap::new(2, 37, 0.7, 9).unwrap();
        let a = [c(0.3, -1.2), c(2.0, 0.5)];
        assert_eq!(fm.kernel_estimate(&a, &a).unwrap(), c(2.0, 0.0));
    }

    #[test]
    fn kernel_estimate_converges_to_closed_form() {
        // E{exp(j c^T u)} = exp(-σ²‖u‖²/2) for c ~ N(0, σ² I)
        let fm = EulerFeatureMap::new(1, 400_000, 0.2, 21).unwrap();
        let k = fm.kernel_estimate(&[c(1.0, 0.0)], &[c(0.0, 0.0)]).unwrap();
        let expected = 2.0 * (-0.1f64).exp();
        assert!((k.re - expected).abs() < 0.01, "{k}");
        assert!(k.im.abs() < 0.01);
    }

    #[test]
    fn kernel_estimate_matches_feature_inner_product() {
        let fm = EulerFeatureMap::new(2, 64, 0.5, 4).unwrap();
        let a = [c(0.1, 0.2), c(-0.4, 0.9)];
        let b = [c(1.1, -0.2), c(0.3, 0.0)];
        let za = fm.map(&a, false).unwrap();
        let zb = fm.map(&b, false).unwrap();
        let ip: Complex64 = za.iter().zip(&zb).map(|(p, q)| p * q.conj()).sum();
        assert!((ip - fm.kernel_estimate(&a, &b).unwrap()).norm() < 1e-12);
    }

    #[test]
    fn kernel_estimate_is_shift_invariant() {
        let fm = EulerFeatureMap::new(2, 50, 0.3, 8).unwrap();
        // dyadic values keep the shifted differences exact
        let a = [c(0.5, -0.25), c(1.0, 0.125)];
        let b = [c(-0.75, 0.5), c(0.0, 1.5)];
        let s = [c(2.0, -4.0), c(0.25, 8.0)];
        let a2: Vec<_> = a.iter().zip(&s).map(|(p, q)| p + q).collect();
        let b2: Vec<_> = b.iter().zip(&s).map(|(p, q)| p + q).collect();
        assert_eq!(
            fm.kernel_estimate(&a, &b).unwrap(),
            fm.kernel_estimate(&a2, &b2).unwrap()
        );
    }

    proptest! {
        #[test]
        fn modulus_norm_and_conjugate_symmetry(
            seed in any::<u64>(),
            d in 1usize..64,
            xs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3),
        ) {
            let fm = EulerFeatureMap::new(3, d, 0.8, seed).unwrap();
            let x: Vec<_> = xs.iter().map(|&(r, i)| c(r, i)).collect();
            let z = fm.map(&x, false).unwrap();
            let target = (2.0 / d as f64).sqrt();
            for e in &z {
                prop_assert!((e.norm() - target).abs() < 1e-12);
            }
            let n2: f64 = z.iter().map(|e| e.norm_sqr()).sum();
            prop_assert!((n2 - 2.0).abs() < 1e-10);
            let za = fm.map(&x, true).unwrap();
            prop_assert_eq!(za.len(), 2 * d);
            for k in 0..d {
                prop_assert_eq!(za[d + k], za[k].conj());
            }
            let n4: f64 = za.iter().map(|e| e.norm_sqr()).sum();
            prop_assert!((n4 - 4.0).abs() < 1e-10);
        }
    }
}
