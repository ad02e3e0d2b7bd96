//! Mean and mean-square behaviour of the random Euler filters.
//!
//! With `z` the (augmented) feature vector of dimension `L` and
//! `C_n = E{w̃_n w̃_n^H}` the weight-error covariance,
//!
//! ```text
//! Rz = E{z z^H}
//! A  = I ⊗ Rz + Rz* ⊗ I
//! B  = E{(z* z^T) ⊗ (z z^H)}
//! vec(C_n) = (I − μA + μ²B) vec(C_{n−1}) + μ² σ_υ² vec(Rz) + σ_q² vec(I)
//! MSE_n    = tr(Rz C_{n−1}) + σ_υ²
//! MSD_n    = tr(C_n)
//! ```
//!
//! `vec` stacks columns. The moments are Monte Carlo averages over the input
//! distribution; the plain (non-augmented) map gives the LRECF analysis.
//!
//! Every scalar of the form `vec(Rz)^T (·) vec(X)` is evaluated as the trace
//! `tr(Rz X) = vec(Rz)^H vec(X)`, which is what the MSE definition expands to
//! for a complex Hermitian `Rz`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::feature_map::EulerFeatureMap;
use crate::rng;
use crate::scenarios::SourceSpec;

/// Default cap on the analysed feature dimension `L`.
pub const DEFAULT_MAX_DIM: usize = 32;

const BLOCK: usize = 2048;
const BLOCKS_PER_ROUND: usize = 8;

type CMatrix = DMatrix<Complex64>;

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// Bytes held by `Rz`, `A`, `B` and one accumulator for dimension `dim`.
pub fn moment_memory_bytes(dim: usize) -> usize {
    let sq = dim * dim;
    (2 * sq * sq + 2 * sq) * std::mem::size_of::<Complex64>()
}

pub fn check_dimension(dim: usize, cap: usize) -> Result<()> {
    if dim > cap {
        return Err(Error::ResourceCap {
            dim,
            cap,
            bytes: moment_memory_bytes(dim),
        });
    }
    Ok(())
}

/// Running sums of `z z^H` and `g g^H` with `g = z* ⊗ z = vec(z z^H)`.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    dim: usize,
    count: usize,
    rz: Vec<Complex64>,
    // upper triangle (row ≤ col) of the L²×L² sum, column-major
    b: Vec<Complex64>,
    g: Vec<Complex64>,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        let sq = dim * dim;
        Self {
            dim,
            count: 0,
            rz: vec![zero(); sq],
            b: vec![zero(); sq * sq],
            g: vec![zero(); sq],
        }
    }

    pub fn add(&mut self, z: &[Complex64]) -> Result<()> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: z.len(),
            });
        }
        let l = self.dim;
        for (col, zj) in self.g.chunks_exact_mut(l).zip(z) {
            let zj = zj.conj();
            for (g, zi) in col.iter_mut().zip(z) {
                *g = zi * zj;
            }
        }
        for (acc, g) in self.rz.iter_mut().zip(&self.g) {
            *acc += g;
        }
        let sq = l * l;
        for q in 0..sq {
            let gq = self.g[q].conj();
            let col = &mut self.b[q * sq..q * sq + q + 1];
            for (p, acc) in col.iter_mut().enumerate() {
                *acc += self.g[p] * gq;
            }
        }
        self.count += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.rz.iter_mut().zip(&other.rz) {
            *a += b;
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            *a += b;
        }
        self.count += other.count;
    }

    pub fn finish(self, augmented: bool) -> Result<Moments> {
        if self.count == 0 {
            return Err(Error::EmptyStream);
        }
        let l = self.dim;
        let sq = l * l;
        let inv = 1.0 / self.count as f64;
        let rz = CMatrix::from_column_slice(l, l, &self.rz) * Complex64::new(inv, 0.0);
        let mut b = CMatrix::from_element(sq, sq, zero());
        for q in 0..sq {
            for p in 0..=q {
                let v = self.b[q * sq + p] * inv;
                b[(p, q)] = v;
                b[(q, p)] = v.conj();
            }
        }
        Ok(Moments::from_parts(rz, b, self.count, augmented))
    }
}

/// Second- and fourth-order feature moments.
#[derive(Debug, Clone)]
pub struct Moments {
    dim: usize,
    augmented: bool,
    rz: CMatrix,
    a: CMatrix,
    b: CMatrix,
    n_samples: usize,
}

/// `I ⊗ Rz + Rz* ⊗ I`
pub fn assemble_a(rz: &CMatrix) -> CMatrix {
    let l = rz.nrows();
    let eye = CMatrix::identity(l, l);
    eye.kronecker(rz) + rz.map(|v| v.conj()).kronecker(&eye)
}

impl Moments {
    /// Builds moments from `Rz` and `B`; `A` is assembled from `Rz`.
    pub fn from_parts(rz: CMatrix, b: CMatrix, n_samples: usize, augmented: bool) -> Self {
        let a = assemble_a(&rz);
        Self {
            dim: rz.nrows(),
            augmented,
            rz,
            a,
            b,
            n_samples,
        }
    }

    pub fn from_feature_samples<'a>(
        samples: impl IntoIterator<Item = &'a [Complex64]>,
        augmented: bool,
    ) -> Result<Self> {
        let mut it = samples.into_iter().peekable();
        let dim = it.peek().map(|z| z.len()).ok_or(Error::EmptyStream)?;
        let mut acc = MomentAccumulator::new(dim);
        for z in it {
            acc.add(z)?;
        }
        acc.finish(augmented)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_augmented(&self) -> bool {
        self.augmented
    }

    pub fn rz(&self) -> &CMatrix {
        &self.rz
    }

    pub fn a(&self) -> &CMatrix {
        &self.a
    }

    pub fn b(&self) -> &CMatrix {
        &self.b
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Copy with `B` replaced by zero, i.e. the `I − μA` small-step model.
    pub fn without_fourth_order(&self) -> Self {
        let sq = self.dim * self.dim;
        Self {
            b: CMatrix::from_element(sq, sq, zero()),
            ..self.clone()
        }
    }

    fn vec_rz(&self) -> DVector<Complex64> {
        DVector::from_column_slice(self.rz.as_slice())
    }

    fn vec_identity(&self) -> DVector<Complex64> {
        let l = self.dim;
        DVector::from_column_slice(CMatrix::identity(l, l).as_slice())
    }

    /// `tr(Rz X)` for `x = vec(X)`.
    fn trace_rz(&self, x: &DVector<Complex64>) -> f64 {
        self.rz
            .as_slice()
            .iter()
            .zip(x.iter())
            .map(|(r, v)| r.conj() * v)
            .sum::<Complex64>()
            .re
    }

    fn trace_vec(&self, x: &DVector<Complex64>) -> f64 {
        (0..self.dim).map(|i| x[i + i * self.dim].re).sum()
    }
}

/// Monte Carlo estimate of [`Moments`] over i.i.d. regressors of `fm.m`
/// samples drawn from `source`.
///
/// Samples are drawn in fixed blocks with per-block seeds and summed in block
/// order, so the result does not depend on the worker count.
pub fn estimate_moments(
    fm: &EulerFeatureMap,
    source: &SourceSpec,
    augmented: bool,
    n_samples: usize,
    seed: u64,
    max_dim: usize,
) -> Result<Moments> {
    source.validate()?;
    let dim = fm.output_dim(augmented);
    check_dimension(dim, max_dim)?;
    if n_samples == 0 {
        return Err(Error::EmptyStream);
    }
    let m = fm.input_dim();
    let n_blocks = n_samples.div_ceil(BLOCK);
    let block = |b: usize| -> Result<MomentAccumulator> {
        let mut rng = rng::stream(rng::derive_seed(seed, rng::tag::MOMENTS, b as u64));
        let mut acc = MomentAccumulator::new(dim);
        let mut x = vec![zero(); m];
        let mut z = Vec::with_capacity(dim);
        let len = BLOCK.min(n_samples - b * BLOCK);
        for _ in 0..len {
            for v in &mut x {
                *v = source.sample(&mut rng);
            }
            fm.map_into(&x, augmented, &mut z)?;
            acc.add(&z)?;
        }
        Ok(acc)
    };
    let mut total = MomentAccumulator::new(dim);
    for round in (0..n_blocks).step_by(BLOCKS_PER_ROUND) {
        let end = (round + BLOCKS_PER_ROUND).min(n_blocks);
        let parts: Vec<Result<MomentAccumulator>> =
            (round..end).into_par_iter().map(block).collect();
        for part in parts {
            total.merge(&part?);
        }
    }
    total.finish(augmented)
}

fn hermitian_eigenvalues(m: &CMatrix) -> DVector<f64> {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    h.symmetric_eigenvalues()
}

/// `2 / λ_max(Rz)`: mean stability holds for `0 < μ` below this value.
pub fn mean_step_bound(mom: &Moments) -> Result<f64> {
    let eig = hermitian_eigenvalues(&mom.rz);
    let max = eig.max();
    let min = eig.min();
    if !(max > 0.0) || min < -1e-10 * max.abs().max(1.0) {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: min,
        });
    }
    Ok(2.0 / max)
}

/// `I − μA + μ²B`
pub fn update_matrix(mom: &Moments, mu: f64) -> CMatrix {
    let sq = mom.dim * mom.dim;
    CMatrix::identity(sq, sq) - &mom.a * Complex64::new(mu, 0.0)
        + &mom.b * Complex64::new(mu * mu, 0.0)
}

/// Largest eigenvalue modulus of `I − μA + μ²B` (Hermitian by construction).
pub fn spectral_radius(mom: &Moments, mu: f64) -> f64 {
    hermitian_eigenvalues(&update_matrix(mom, mu)).amax()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransientParams {
    pub mu: f64,
    pub sigma_v2: f64,
    pub sigma_q2: f64,
    pub n_steps: usize,
}

impl TransientParams {
    fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0) || !(self.sigma_v2 >= 0.0) || !(self.sigma_q2 >= 0.0) {
            return Err(Error::invalid("μ, σ_υ², σ_q² must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    pub mse: f64,
    pub msd: f64,
    /// 1-norm condition number of `A − μB`.
    pub condition: f64,
}

/// How the covariance recursion is advanced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Propagation {
    /// Dense `L²×L²` matrix-vector product every step.
    Dense,
    /// Same recursion in the eigenbasis of the Hermitian update matrix,
    /// `O(L²)` per step.
    Modal,
}

#[derive(Debug, Clone)]
pub struct TheoryPrediction {
    pub params: TransientParams,
    pub initial_covariance: CMatrix,
    /// `mse[n−1]` is the predicted `E|e_n|²`, n = 1..n_steps.
    pub mse: Vec<f64>,
    /// `msd[n−1]` is the predicted `tr(C_n)`.
    pub msd: Vec<f64>,
    pub steady: Option<SteadyState>,
    pub spectral_radius: f64,
    pub propagation: Propagation,
}

impl TheoryPrediction {
    pub fn is_stable(&self) -> bool {
        self.spectral_radius < 1.0
    }

    pub fn mse_db(&self) -> Vec<f64> {
        self.mse.iter().map(|v| 10.0 * v.log10()).collect()
    }

    pub fn msd_db(&self) -> Vec<f64> {
        self.msd.iter().map(|v| 10.0 * v.log10()).collect()
    }
}

fn check_initial(mom: &Moments, c0: &CMatrix) -> Result<()> {
    if c0.nrows() != mom.dim || c0.ncols() != mom.dim {
        return Err(Error::DimensionMismatch {
            expected: mom.dim,
            found: c0.nrows(),
        });
    }
    let asym = (c0 - c0.adjoint()).camax();
    if asym > 1e-9 * c0.camax().max(1.0) {
        return Err(Error::invalid("initial covariance must be Hermitian"));
    }
    Ok(())
}

/// Transient MSE/MSD from the vectorized covariance recursion, advanced in
/// the eigenbasis of the update matrix.
pub fn transient_predict(
    mom: &Moments,
    params: TransientParams,
    c0: &CMatrix,
) -> Result<TheoryPrediction> {
    transient_predict_with(mom, params, c0, Propagation::Modal)
}

pub fn transient_predict_with(
    mom: &Moments,
    params: TransientParams,
    c0: &CMatrix,
    propagation: Propagation,
) -> Result<TheoryPrediction> {
    params.validate()?;
    check_initial(mom, c0)?;
    let m = update_matrix(mom, params.mu);
    let forcing = mom.vec_rz() * Complex64::new(params.mu * params.mu * params.sigma_v2, 0.0)
        + mom.vec_identity() * Complex64::new(params.sigma_q2, 0.0);
    let c = DVector::from_column_slice(c0.as_slice());
    let (mse, msd, radius) = match propagation {
        Propagation::Dense => {
            let radius = hermitian_eigenvalues(&m).amax();
            let (mse, msd) = propagate_dense(mom, &m, &forcing, c, params);
            (mse, msd, radius)
        }
        Propagation::Modal => {
            let h = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
            let eig = h.symmetric_eigen();
            let radius = eig.eigenvalues.amax();
            let (mse, msd) = propagate_modal(
                mom,
                &eig.eigenvectors,
                &eig.eigenvalues,
                &forcing,
                &c,
                params,
            );
            (mse, msd, radius)
        }
    };
    let steady = if params.mu > 0.0 && radius < 1.0 {
        steady_state(mom, params.mu, params.sigma_v2, params.sigma_q2).ok()
    } else {
        None
    };
    Ok(TheoryPrediction {
        params,
        initial_covariance: c0.clone(),
        mse,
        msd,
        steady,
        spectral_radius: radius,
        propagation,
    })
}

fn propagate_dense(
    mom: &Moments,
    m: &CMatrix,
    forcing: &DVector<Complex64>,
    mut c: DVector<Complex64>,
    params: TransientParams,
) -> (Vec<f64>, Vec<f64>) {
    let sq = c.len();
    let mut next = DVector::from_element(sq, zero());
    let data = m.as_slice();
    let mut mse = Vec::with_capacity(params.n_steps);
    let mut msd = Vec::with_capacity(params.n_steps);
    for _ in 0..params.n_steps {
        mse.push(mom.trace_rz(&c) + params.sigma_v2);
        next.copy_from(forcing);
        for j in 0..sq {
            let cj = c[j];
            let col = &data[j * sq..(j + 1) * sq];
            for (out, mij) in next.iter_mut().zip(col) {
                *out += mij * cj;
            }
        }
        std::mem::swap(&mut c, &mut next);
        msd.push(mom.trace_vec(&c));
    }
    (mse, msd)
}

fn propagate_modal(
    mom: &Moments,
    vectors: &CMatrix,
    values: &DVector<f64>,
    forcing: &DVector<Complex64>,
    c: &DVector<Complex64>,
    params: TransientParams,
) -> (Vec<f64>, Vec<f64>) {
    let uh = vectors.adjoint();
    let mut y = &uh * c;
    let f = &uh * forcing;
    // tr(Rz C) = vec(Rz)^H U y,  tr(C) = vec(I)^H U y
    let r = &uh * mom.vec_rz();
    let i = &uh * mom.vec_identity();
    let dot = |w: &DVector<Complex64>, y: &DVector<Complex64>| -> f64 {
        w.iter()
            .zip(y.iter())
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            .re
    };
    let mut mse = Vec::with_capacity(params.n_steps);
    let mut msd = Vec::with_capacity(params.n_steps);
    for _ in 0..params.n_steps {
        mse.push(dot(&r, &y) + params.sigma_v2);
        for ((yk, lk), fk) in y.iter_mut().zip(values.iter()).zip(f.iter()) {
            *yk = *yk * *lk + fk;
        }
        msd.push(dot(&i, &y));
    }
    (mse, msd)
}

/// Fixed point of the covariance recursion:
///
/// ```text
/// MSE = σ_υ² + μσ_υ² tr(Rz X₁) + (σ_q²/μ) tr(Rz X₂)
/// MSD = tr(μσ_υ² X₁ + (σ_q²/μ) X₂)
/// (A − μB) vec(X₁) = vec(Rz),  (A − μB) vec(X₂) = vec(I)
/// ```
pub fn steady_state(mom: &Moments, mu: f64, sigma_v2: f64, sigma_q2: f64) -> Result<SteadyState> {
    if !(mu > 0.0) {
        return Err(Error::invalid("steady state needs μ > 0"));
    }
    if !(sigma_v2 >= 0.0) || !(sigma_q2 >= 0.0) {
        return Err(Error::invalid("noise variances must be non-negative"));
    }
    let k = &mom.a - &mom.b * Complex64::new(mu, 0.0);
    let norm1 = one_norm(&k);
    let lu = k.lu();
    let inv = lu.try_inverse().ok_or(Error::Singular("A − μB"))?;
    let condition = norm1 * one_norm(&inv);
    if !condition.is_finite() || condition > 1e14 {
        return Err(Error::Singular("A − μB"));
    }
    let x1 = &inv * mom.vec_rz();
    let x2 = &inv * mom.vec_identity();
    let mse = sigma_v2 + mu * sigma_v2 * mom.trace_rz(&x1) + sigma_q2 / mu * mom.trace_rz(&x2);
    let msd = mu * sigma_v2 * mom.trace_vec(&x1) + sigma_q2 / mu * mom.trace_vec(&x2);
    let tol = 1e-9 * sigma_v2.max(f64::MIN_POSITIVE);
    if mse - sigma_v2 < -tol {
        return Err(Error::NegativeEstimate {
            what: "steady-state excess MSE",
            value: mse - sigma_v2,
        });
    }
    if msd < -tol {
        return Err(Error::NegativeEstimate {
            what: "steady-state MSD",
            value: msd,
        });
    }
    Ok(SteadyState {
        mse,
        msd,
        condition,
    })
}

fn one_norm(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|col| col.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalStep {
    pub mu_opt: f64,
    pub mse_min: f64,
    /// `tr(Rz X)` with `A vec(X) = vec(I)`.
    pub phi: f64,
    /// `tr(Rz Y)` with `A vec(Y) = vec(Rz)`.
    pub varphi: f64,
}

/// Tracking-optimal step-size under the random-walk model, from the
/// small-step form of the steady-state MSE.
pub fn optimal_step_size(mom: &Moments, sigma_v2: f64, sigma_q2: f64) -> Result<OptimalStep> {
    if !(sigma_q2 > 0.0) {
        return Err(Error::invalid("the optimal step-size needs σ_q² > 0"));
    }
    if !(sigma_v2 > 0.0) {
        return Err(Error::invalid("the optimal step-size needs σ_υ² > 0"));
    }
    let lu = mom.a.clone().lu();
    let x = lu.solve(&mom.vec_identity()).ok_or(Error::Singular("A"))?;
    let y = lu.solve(&mom.vec_rz()).ok_or(Error::Singular("A"))?;
    let phi = mom.trace_rz(&x);
    let varphi = mom.trace_rz(&y);
    if !(phi > 0.0) {
        return Err(Error::NegativeEstimate {
            what: "φ",
            value: phi,
        });
    }
    if !(varphi > 0.0) {
        return Err(Error::NegativeEstimate {
            what: "ϕ",
            value: varphi,
        });
    }
    let (sv, sq) = (sigma_v2.sqrt(), sigma_q2.sqrt());
    Ok(OptimalStep {
        mu_opt: sq / sv * (phi / varphi).sqrt(),
        mse_min: sigma_v2 + 2.0 * sv * sq * (varphi * phi).sqrt(),
        phi,
        varphi,
    })
}

/// `w w^H`
pub fn outer(w: &[Complex64]) -> CMatrix {
    let v = DVector::from_column_slice(w);
    &v * v.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn toy_moments(d: usize, augmented: bool, n: usize) -> Moments {
        let fm = EulerFeatureMap::new(2, d, 1.0, 17).unwrap();
        estimate_moments(&fm, &SourceSpec::UniformComplex, augmented, n, 5, 32).unwrap()
    }

    #[test]
    fn degenerate_source_gives_exact_outer_products() {
        let fm = EulerFeatureMap::new(2, 3, 0.5, 1).unwrap();
        let z = fm.map(&[c(0.3, -0.2), c(1.0, 0.5)], true).unwrap();
        let samples = vec![z.clone(); 7];
        let mom =
            Moments::from_feature_samples(samples.iter().map(|v| v.as_slice()), true).unwrap();
        let zz = outer(&z);
        assert!((mom.rz() - &zz).camax() < 1e-15);
        let expected_b = zz.map(|v| v.conj()).kronecker(&zz);
        assert!((mom.b() - expected_b).camax() < 1e-14);
        // rank one with trace 4
        assert!((mean_step_bound(&mom).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_feature_power_is_two() {
        let fm = EulerFeatureMap::new(2, 1, 0.5, 3).unwrap();
        let mom = estimate_moments(&fm, &SourceSpec::UniformComplex, false, 100, 1, 32).unwrap();
        assert_eq!(mom.dim(), 1);
        assert!((mom.rz()[(0, 0)] - c(2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn a_assembly_is_exact() {
        let mom = toy_moments(3, true, 3000);
        let l = mom.dim();
        for i in 0..l {
            for j in 0..l {
                for k in 0..l {
                    for q in 0..l {
                        // block (k, q), entry (i, j)
                        let expected = if k == q {
                            mom.rz()[(i, j)]
                        } else {
                            c(0.0, 0.0)
                        } + if i == j {
                            mom.rz()[(k, q)].conj()
                        } else {
                            c(0.0, 0.0)
                        };
                        assert_eq!(mom.a()[(i + k * l, j + q * l)], expected);
                    }
                }
            }
        }
        assert!((mom.a() - mom.a().adjoint()).camax() < 1e-15);
    }

    #[test]
    fn trace_and_hermitian_structure() {
        let mom = toy_moments(4, true, 20_000);
        assert!((mom.rz().trace() - c(4.0, 0.0)).norm() < 1e-10);
        assert!((mom.rz() - mom.rz().adjoint()).camax() < 1e-14);
        let plain = toy_moments(4, false, 20_000);
        assert!((plain.rz().trace() - c(2.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn b_applied_to_identity_matches_direct_estimate() {
        let fm = EulerFeatureMap::new(2, 2, 1.0, 3).unwrap();
        let mut rng = rng::stream(8);
        let zs: Vec<Vec<Complex64>> = (0..500)
            .map(|_| {
                let x = [
                    SourceSpec::UniformComplex.sample(&mut rng),
                    SourceSpec::UniformComplex.sample(&mut rng),
                ];
                fm.map(&x, true).unwrap()
            })
            .collect();
        let mom = Moments::from_feature_samples(zs.iter().map(|z| z.as_slice()), true).unwrap();
        let l = 4;
        let eye = DVector::from_column_slice(CMatrix::identity(l, l).as_slice());
        let lhs = mom.b() * eye;
        let mut direct = CMatrix::from_element(l, l, c(0.0, 0.0));
        for z in &zs {
            let n2: f64 = z.iter().map(|v| v.norm_sqr()).sum();
            direct += outer(z) * c(n2, 0.0);
        }
        direct /= c(zs.len() as f64, 0.0);
        let rhs = DVector::from_column_slice(direct.as_slice());
        assert!((lhs - rhs).camax() < 1e-12);
    }

    #[test]
    fn estimation_is_deterministic() {
        let a = toy_moments(2, true, 5000);
        let b = toy_moments(2, true, 5000);
        assert_eq!(a.rz(), b.rz());
        assert_eq!(a.b(), b.b());
    }

    #[test]
    fn dimension_cap() {
        let fm = EulerFeatureMap::new(2, 20, 1.0, 3).unwrap();
        let err = estimate_moments(&fm, &SourceSpec::UniformComplex, true, 10, 1, 32).unwrap_err();
        assert!(matches!(
            err,
            Error::ResourceCap {
                dim: 40,
                cap: 32,
                ..
            }
        ));
    }

    #[test]
    fn step_bound_of_scaled_identity() {
        let l = 3;
        let rz = CMatrix::identity(l, l) * c(2.0, 0.0);
        let b = CMatrix::from_element(l * l, l * l, c(0.0, 0.0));
        let mom = Moments::from_parts(rz, b, 1, false);
        assert!((mean_step_bound(&mom).unwrap() - 1.0).abs() < 1e-14);
        let mut bad = CMatrix::identity(2, 2);
        bad[(1, 1)] = c(-1.0, 0.0);
        let mom = Moments::from_parts(bad, CMatrix::from_element(4, 4, c(0.0, 0.0)), 1, false);
        assert!(matches!(
            mean_step_bound(&mom),
            Err(Error::NotPositiveSemidefinite { .. })
        ));
    }

    #[test]
    fn frozen_recursion_keeps_initial_covariance() {
        let mom = toy_moments(2, true, 4000);
        let w = [c(1.0, 0.5), c(-0.2, 0.1), c(0.3, 0.3), c(0.0, -1.0)];
        let c0 = outer(&w);
        let p = TransientParams {
            mu: 0.0,
            sigma_v2: 0.1,
            sigma_q2: 0.0,
            n_steps: 20,
        };
        let pred = transient_predict(&mom, p, &c0).unwrap();
        let expected = (mom.rz() * &c0).trace().re + 0.1;
        for v in &pred.mse {
            assert!((v - expected).abs() < 1e-12);
        }
        let first = transient_predict(
            &mom,
            TransientParams { mu: 0.05, ..p },
            &CMatrix::from_element(4, 4, c(0.0, 0.0)),
        )
        .unwrap();
        assert_eq!(first.mse[0], 0.1);
    }

    #[test]
    fn dense_and_modal_routes_agree() {
        let mom = toy_moments(2, true, 8000);
        let w = [c(1.0, 0.5), c(-0.2, 0.1), c(0.3, 0.3), c(0.0, -1.0)];
        let c0 = outer(&w);
        let p = TransientParams {
            mu: 0.05,
            sigma_v2: 0.01,
            sigma_q2: 1e-6,
            n_steps: 3000,
        };
        let dense = transient_predict_with(&mom, p, &c0, Propagation::Dense).unwrap();
        let modal = transient_predict_with(&mom, p, &c0, Propagation::Modal).unwrap();
        for (a, b) in dense.mse.iter().zip(&modal.mse) {
            assert!((a - b).abs() < 1e-10 * a.abs().max(1e-3));
        }
        for (a, b) in dense.msd.iter().zip(&modal.msd) {
            assert!((a - b).abs() < 1e-10 * a.abs().max(1e-3));
        }
        assert!((dense.spectral_radius - modal.spectral_radius).abs() < 1e-12);
    }

    #[test]
    fn prediction_respects_noise_floor() {
        let mom = toy_moments(3, true, 5000);
        let c0 = outer(&[c(1.0, 0.0); 6]);
        let p = TransientParams {
            mu: 0.02,
            sigma_v2: 0.05,
            sigma_q2: 1e-7,
            n_steps: 2000,
        };
        let pred = transient_predict(&mom, p, &c0).unwrap();
        assert!(pred.mse.iter().all(|v| *v >= 0.05));
        assert!(pred.is_stable());
    }

    #[test]
    fn stationary_steady_state_matches_direct_formula() {
        let mom = toy_moments(2, true, 8000);
        let (mu, sv2) = (0.01, 0.02);
        let ss = steady_state(&mom, mu, sv2, 0.0).unwrap();
        // independent evaluation: solve with a fresh LU and contract by hand
        let k = mom.a() - mom.b() * c(mu, 0.0);
        let vr = DVector::from_column_slice(mom.rz().as_slice());
        let x = k.lu().solve(&vr).unwrap();
        let xm = CMatrix::from_column_slice(4, 4, x.as_slice());
        let expected = sv2 + mu * sv2 * (mom.rz() * xm).trace().re;
        assert!((ss.mse - expected).abs() < 1e-14);
    }

    #[test]
    fn stationary_mse_decreases_to_noise_floor() {
        let mom = toy_moments(2, true, 8000);
        let sv2 = 0.01;
        let mut last = f64::INFINITY;
        for mu in [0.2, 0.1, 0.05, 0.01, 0.001, 1e-5] {
            let ss = steady_state(&mom, mu, sv2, 0.0).unwrap();
            assert!(ss.mse > sv2 && ss.mse < last);
            last = ss.mse;
        }
        assert!((last - sv2) / sv2 < 1e-4);
    }

    #[test]
    fn recursion_tail_matches_closed_form() {
        let mom = toy_moments(2, true, 8000);
        let (mu, sv2, sq2) = (0.005, 0.01, 1e-8);
        let c0 = CMatrix::from_element(4, 4, c(0.0, 0.0));
        let radius = spectral_radius(&mom, mu);
        let n = (40.0 / (1.0 - radius)).ceil() as usize;
        let pred = transient_predict(
            &mom,
            TransientParams {
                mu,
                sigma_v2: sv2,
                sigma_q2: sq2,
                n_steps: n,
            },
            &c0,
        )
        .unwrap();
        let ss = pred.steady.unwrap();
        let tail = &pred.mse[n * 4 / 5..];
        let tail_mean = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!((tail_mean - ss.mse).abs() / ss.mse < 1e-6);
        let msd_tail = pred.msd[n - 1];
        assert!((msd_tail - ss.msd).abs() / ss.msd < 1e-6);
    }

    #[test]
    fn small_step_drops_fourth_order_term() {
        let mom = toy_moments(3, true, 8000);
        let bound = mean_step_bound(&mom).unwrap();
        let mu = 0.01 * bound;
        let full = steady_state(&mom, mu, 0.01, 1e-7).unwrap();
        let lin = steady_state(&mom.without_fourth_order(), mu, 0.01, 1e-7).unwrap();
        assert!((full.mse - lin.mse).abs() / full.mse < 0.01);
    }

    #[test]
    fn optimal_step_homogeneity() {
        let mom = toy_moments(2, true, 8000);
        let base = optimal_step_size(&mom, 0.01, 1e-6).unwrap();
        let lambda: f64 = 3.0;
        let scaled =
            optimal_step_size(&mom, 0.01 * lambda * lambda, 1e-6 * lambda * lambda).unwrap();
        assert!((base.mu_opt - scaled.mu_opt).abs() / base.mu_opt < 1e-12);
        let ratio = (scaled.mse_min - 0.01 * lambda * lambda) / (base.mse_min - 0.01);
        assert!((ratio - lambda * lambda).abs() < 1e-9);
        assert!(optimal_step_size(&mom, 0.01, 0.0).is_err());
    }

    #[test]
    fn optimal_step_minimizes_steady_state_grid() {
        let mom = toy_moments(2, true, 20_000);
        let (sv2, sq2) = (0.01, 1e-6);
        let opt = optimal_step_size(&mom, sv2, sq2).unwrap();
        let grid: Vec<f64> = (0..50)
            .map(|k| opt.mu_opt * 10f64.powf(-1.0 + 2.0 * k as f64 / 49.0))
            .collect();
        let step = 10f64.powf(2.0 / 49.0).ln();
        let best = grid
            .iter()
            .map(|&mu| (mu, steady_state(&mom, mu, sv2, sq2).unwrap().mse))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!(
            (best.0.ln() - opt.mu_opt.ln()).abs() <= step * 1.0001,
            "{best:?} vs {opt:?}"
        );
    }

    #[test]
    fn lrecf_special_case_has_trace_two() {
        let fm = Arc::new(EulerFeatureMap::new(3, 5, 0.4, 2).unwrap());
        let mom = estimate_moments(
            &fm,
            &SourceSpec::NoncircularGaussian { rho: 0.3 },
            false,
            4000,
            9,
            32,
        )
        .unwrap();
        assert_eq!(mom.dim(), 5);
        assert!((mom.rz().trace().re - 2.0).abs() < 1e-10);
        assert!(mean_step_bound(&mom).unwrap() > 1.0);
    }
}
