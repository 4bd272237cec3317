//! Orthonormal DCT-II and its inverse, the DFT, and the even extension that
//! links them, for functions sampled on `{0, …, N-1}`.
//!
//! All transforms are direct `O(N²)` summations.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// A function tabulated on the integer grid `0..N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledFn {
    values: Vec<f64>,
}

impl SampledFn {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(contract(format!("sampled function needs N >= 2 points, got {}", values.len())));
        }
        Ok(SampledFn { values })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize) -> f64) -> Result<Self> {
        SampledFn::new((0..n).map(f).collect())
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.n() as f64
    }
}

/// DCT-II coefficients `F_0 … F_{N-1}` of a [`SampledFn`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DctSpectrum {
    coeffs: Vec<f64>,
}

impl DctSpectrum {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(contract("spectrum needs N >= 2 coefficients"));
        }
        Ok(DctSpectrum { coeffs })
    }

    pub fn n(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|v| v * v).sum()
    }
}

/// Normalization `β_k`: `1/√N` for the DC term, `√(2/N)` otherwise.
pub fn beta(k: usize, n: usize) -> f64 {
    if k == 0 {
        (1.0 / n as f64).sqrt()
    } else {
        (2.0 / n as f64).sqrt()
    }
}

/// `cos(π k (2x + 1) / (2N))`, the DCT-II kernel. `x` may be fractional.
#[inline]
pub fn kernel(k: f64, x: f64, n: usize) -> f64 {
    (PI * k * (2.0 * x + 1.0) / (2.0 * n as f64)).cos()
}

pub fn dct(f: &SampledFn) -> DctSpectrum {
    let n = f.n();
    let coeffs = (0..n)
        .map(|k| {
            let s: f64 = f.values.iter().enumerate().map(|(x, &v)| v * kernel(k as f64, x as f64, n)).sum();
            beta(k, n) * s
        })
        .collect();
    DctSpectrum { coeffs }
}

/// Reconstruction from the first `q` coefficients.
pub fn idct(spec: &DctSpectrum, q: usize) -> Result<SampledFn> {
    let n = spec.n();
    check_order(q, n)?;
    let values = (0..n)
        .map(|x| {
            spec.coeffs[..q].iter().enumerate().map(|(k, &c)| beta(k, n) * c * kernel(k as f64, x as f64, n)).sum()
        })
        .collect();
    Ok(SampledFn { values })
}

/// Mean over the grid of the squared error left by keeping `q` coefficients.
///
/// Equals `(1/N) Σ_{k>=q} F_k²`; the `1/N` makes it the expectation of
/// `(f - f̂)²` under a uniform draw of `x` from the grid.
pub fn truncation_mse(spec: &DctSpectrum, q: usize) -> Result<f64> {
    let n = spec.n();
    check_order(q, n)?;
    Ok(spec.coeffs[q..].iter().map(|c| c * c).sum::<f64>() / n as f64)
}

/// `F_k = (1/N) Σ f(x) e^{-j 2π k x / N}`.
pub fn dft(f: &SampledFn) -> Vec<Complex64> {
    let n = f.n();
    (0..n)
        .map(|k| {
            let s: Complex64 = f
                .values
                .iter()
                .enumerate()
                .map(|(x, &v)| {
                    let phase = -2.0 * PI * (k * x % n) as f64 / n as f64;
                    Complex64::from_polar(v, phase)
                })
                .sum();
            s / n as f64
        })
        .collect()
}

/// Mirror extension to length `2N`: `f(x)` then `f(2N-1-x)`.
pub fn even_extend(f: &SampledFn) -> SampledFn {
    let n = f.n();
    let mut values = Vec::with_capacity(2 * n);
    values.extend_from_slice(&f.values);
    values.extend(f.values.iter().rev());
    SampledFn { values }
}

fn check_order(q: usize, n: usize) -> Result<()> {
    if q == 0 || q > n {
        return Err(contract(format!("truncation order {q} outside 1..={n}")));
    }
    Ok(())
}
