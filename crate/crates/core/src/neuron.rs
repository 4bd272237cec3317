//! The DCT neuron: a scalar input expanded into `Q` cosine features and
//! combined by a linear weight vector trained with LMS.
//!
//! Weights are stored as plain FIR coefficients (`ŷ = fᵀ c(x)`), without the
//! `β_k` normalization of the transform. [`DctModel::from_spectrum`] and
//! [`DctModel::to_spectrum`] convert between the two conventions.
//!
//! Under a uniform input law the feature correlation matrix is diagonal:
//! `E[c_k²] = ½` for every `k > 0` and `1` for the DC feature. With `α` the
//! design parameter, the step size is `μ = 4α` and the predicted convergence
//! time to a residual fraction `κ` is `T_κ = -ln κ / (2α)`.

use serde::{Deserialize, Serialize};

use crate::dct::{beta, kernel, DctSpectrum};
use crate::error::{contract, Error, Result};
use crate::numerics::{spd_solve, Mat};

/// Which cosine frequencies the features use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indexing {
    /// `k = 0, 1, …, Q-1`, including DC.
    Standard,
    /// `k = 1, 3, …, 2Q-1`, odd harmonics only.
    Odd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureBasis {
    pub n: usize,
    pub q: usize,
    pub indexing: Indexing,
}

impl FeatureBasis {
    pub fn new(n: usize, q: usize, indexing: Indexing) -> Result<Self> {
        if n < 2 {
            return Err(contract(format!("domain size must be >= 2, got {n}")));
        }
        if q == 0 || q > n {
            return Err(contract(format!("feature count {q} outside 1..={n}")));
        }
        Ok(FeatureBasis { n, q, indexing })
    }

    pub fn standard(n: usize, q: usize) -> Result<Self> {
        FeatureBasis::new(n, q, Indexing::Standard)
    }

    /// Cosine frequency index of feature `j`.
    pub fn frequency(&self, j: usize) -> usize {
        match self.indexing {
            Indexing::Standard => j,
            Indexing::Odd => 2 * j + 1,
        }
    }

    /// `E[c_j(x)²]` for `x` uniform on the domain.
    pub fn feature_power(&self, j: usize) -> f64 {
        if self.frequency(j) == 0 {
            1.0
        } else {
            0.5
        }
    }

    pub fn top(&self) -> f64 {
        (self.n - 1) as f64
    }

    pub fn check_domain(&self, x: f64) -> Result<()> {
        if (0.0..=self.top()).contains(&x) {
            Ok(())
        } else {
            Err(Error::Domain { value: x, lo: 0.0, hi: self.top() })
        }
    }

    pub fn features(&self, x: f64) -> Result<Vec<f64>> {
        self.check_domain(x)?;
        let mut out = vec![0.0; self.q];
        self.features_into(x, &mut out);
        Ok(out)
    }

    /// Writes the features of `x` into `out` without a domain check.
    pub fn features_into(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.q);
        for (j, o) in out.iter_mut().enumerate() {
            *o = kernel(self.frequency(j) as f64, x, self.n);
        }
    }
}

/// Weights of a DCT neuron over a [`FeatureBasis`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DctModel {
    basis: FeatureBasis,
    coeffs: Vec<f64>,
}

impl DctModel {
    pub fn zeros(basis: FeatureBasis) -> Self {
        DctModel { basis, coeffs: vec![0.0; basis.q] }
    }

    pub fn from_coeffs(basis: FeatureBasis, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.q {
            return Err(contract(format!("expected {} coefficients, got {}", basis.q, coeffs.len())));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Numeric("non-finite model coefficient".into()));
        }
        Ok(DctModel { basis, coeffs })
    }

    /// Standard-basis model reproducing the `q`-term inverse transform of
    /// `spec`: weight `k` is `β_k F_k`.
    pub fn from_spectrum(spec: &DctSpectrum, q: usize) -> Result<Self> {
        let n = spec.n();
        let basis = FeatureBasis::standard(n, q)?;
        let coeffs = spec.coeffs()[..q].iter().enumerate().map(|(k, c)| beta(k, n) * c).collect();
        Ok(DctModel { basis, coeffs })
    }

    /// Spectrum of a standard-basis model, zero beyond its order.
    pub fn to_spectrum(&self) -> Result<DctSpectrum> {
        if self.basis.indexing != Indexing::Standard {
            return Err(contract("only standard-basis models map onto a DCT spectrum"));
        }
        let n = self.basis.n;
        let mut coeffs = vec![0.0; n];
        for (k, w) in self.coeffs.iter().enumerate() {
            coeffs[k] = w / beta(k, n);
        }
        DctSpectrum::new(coeffs)
    }

    pub fn basis(&self) -> &FeatureBasis {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn predict(&self, x: f64) -> Result<f64> {
        self.basis.check_domain(x)?;
        Ok(self.predict_unchecked(x))
    }

    pub fn predict_unchecked(&self, x: f64) -> f64 {
        self.coeffs.iter().enumerate().map(|(j, w)| w * kernel(self.basis.frequency(j) as f64, x, self.basis.n)).sum()
    }

    /// Model output on the integer grid `0..N`.
    pub fn tabulate(&self) -> Vec<f64> {
        (0..self.basis.n).map(|x| self.predict_unchecked(x as f64)).collect()
    }

    /// One LMS update on the pair `(x, y)`; returns the a-priori error.
    pub fn lms_step(&mut self, x: f64, y: f64, mu: f64) -> Result<f64> {
        if !x.is_finite() || !y.is_finite() || !mu.is_finite() {
            return Err(Error::Numeric(format!("non-finite LMS input (x={x}, y={y}, mu={mu})")));
        }
        if mu <= 0.0 {
            return Err(contract(format!("step size must be positive, got {mu}")));
        }
        let c = self.basis.features(x)?;
        let err = y - crate::numerics::dot(&self.coeffs, &c);
        for (w, ci) in self.coeffs.iter_mut().zip(&c) {
            *w += mu * err * ci;
        }
        if !err.is_finite() || self.coeffs.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numeric("LMS diverged".into()));
        }
        Ok(err)
    }
}

/// How `closed_form` treats the input distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputLaw {
    /// Inputs are uniform on the domain, so the feature correlation is the
    /// known diagonal and only the cross-correlation is estimated.
    Uniform,
    /// Arbitrary inputs: solve the sample normal equations.
    General,
}

/// Wiener solution `R_c⁻¹ r_yc` from samples.
pub fn closed_form(basis: FeatureBasis, xs: &[f64], ys: &[f64], law: InputLaw) -> Result<DctModel> {
    if xs.len() != ys.len() {
        return Err(contract("inputs and targets differ in length"));
    }
    if xs.is_empty() || xs.len() < basis.q {
        return Err(contract(format!("closed form needs at least Q = {} samples, got {}", basis.q, xs.len())));
    }
    let q = basis.q;
    let count = xs.len() as f64;
    let mut c = vec![0.0; q];
    let mut cross = vec![0.0; q];
    let mut gram = Mat::zeros(q, q);
    for (&x, &y) in xs.iter().zip(ys) {
        basis.check_domain(x)?;
        basis.features_into(x, &mut c);
        for i in 0..q {
            cross[i] += y * c[i] / count;
            if law == InputLaw::General {
                for j in 0..q {
                    gram[(i, j)] += c[i] * c[j] / count;
                }
            }
        }
    }
    let coeffs = match law {
        InputLaw::Uniform => cross.iter().enumerate().map(|(j, r)| r / basis.feature_power(j)).collect(),
        InputLaw::General => spd_solve(&gram.symmetrized(), &cross)
            .map_err(|e| Error::Numeric(format!("feature Gram matrix is singular: {e}")))?,
    };
    DctModel::from_coeffs(basis, coeffs)
}

/// Sample mean of `c(x) c(x)ᵀ`.
pub fn empirical_rc(basis: FeatureBasis, xs: &[f64]) -> Result<Mat> {
    if xs.len() < 10 * basis.q {
        return Err(contract(format!("empirical_rc needs at least 10·Q = {} samples, got {}", 10 * basis.q, xs.len())));
    }
    let q = basis.q;
    let mut c = vec![0.0; q];
    let mut rc = Mat::zeros(q, q);
    for &x in xs {
        basis.check_domain(x)?;
        basis.features_into(x, &mut c);
        for i in 0..q {
            for j in 0..q {
                rc[(i, j)] += c[i] * c[j];
            }
        }
    }
    Ok(rc.scale(1.0 / xs.len() as f64))
}

/// Step size and predicted convergence time for a design parameter `α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmsSchedule {
    pub alpha: f64,
    pub mu: f64,
    pub kappa: f64,
    pub t_kappa: f64,
}

impl LmsSchedule {
    pub fn new(alpha: f64, kappa: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(contract(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(contract(format!("kappa must lie in (0, 1), got {kappa}")));
        }
        Ok(LmsSchedule { alpha, mu: 4.0 * alpha, kappa, t_kappa: -kappa.ln() / (2.0 * alpha) })
    }

    /// First sample index included in the iterate average.
    pub fn averaging_start(&self) -> usize {
        self.t_kappa.ceil() as usize
    }
}

/// Result of running LMS over a sample stream.
#[derive(Debug, Clone)]
pub struct LmsTrace {
    /// Squared a-priori error per sample.
    pub sq_errors: Vec<f64>,
    /// Mean of the weight iterates from `average_from` to the end, or the
    /// final weights if the stream is shorter than that.
    pub averaged: DctModel,
}

/// Runs LMS over `(xs, ys)` starting from `model`, updating it in place.
pub fn run_lms(model: &mut DctModel, xs: &[f64], ys: &[f64], mu: f64, average_from: usize) -> Result<LmsTrace> {
    if xs.len() != ys.len() {
        return Err(contract("inputs and targets differ in length"));
    }
    let mut sq_errors = Vec::with_capacity(xs.len());
    let mut acc = vec![0.0; model.coeffs.len()];
    let mut count = 0usize;
    for (n, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        let e = model.lms_step(x, y, mu)?;
        sq_errors.push(e * e);
        if n >= average_from {
            for (a, w) in acc.iter_mut().zip(&model.coeffs) {
                *a += w;
            }
            count += 1;
        }
    }
    let averaged = if count == 0 {
        model.clone()
    } else {
        DctModel { basis: model.basis, coeffs: acc.into_iter().map(|a| a / count as f64).collect() }
    };
    Ok(LmsTrace { sq_errors, averaged })
}

/// Samples in the closing window used for final error figures.
pub const TAIL_WINDOW: usize = 500;
/// Moving-average length used to detect convergence.
pub const SMOOTH_WINDOW: usize = 100;

/// Mean of the last `TAIL_WINDOW` entries (or of all of them if shorter).
pub fn tail_mean(trace: &[f64]) -> f64 {
    let w = TAIL_WINDOW.min(trace.len()).max(1);
    trace[trace.len().saturating_sub(w)..].iter().sum::<f64>() / w as f64
}

/// Number of samples until the `SMOOTH_WINDOW`-sample moving average of the
/// squared error first drops below twice its final level.
pub fn samples_to_converge(trace: &[f64]) -> usize {
    if trace.is_empty() {
        return 0;
    }
    let target = 2.0 * tail_mean(trace);
    let w = SMOOTH_WINDOW.min(trace.len());
    let mut sum: f64 = trace[..w].iter().sum();
    if sum / (w as f64) < target {
        return w;
    }
    for end in w..trace.len() {
        sum += trace[end] - trace[end - w];
        if sum / (w as f64) < target {
            return end + 1;
        }
    }
    trace.len()
}
