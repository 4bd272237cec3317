//! Seeded channel simulators: a memoryless nonlinearity with AWGN, and the
//! Hammerstein cascade of a nonlinearity followed by an IIR/FIR filter.
//!
//! Noise levels are given as a pre-detection SNR. The noise standard
//! deviation is derived once, at construction, from a Monte-Carlo estimate of
//! the received signal power under uniform inputs on `[0, N-1]`, using a fixed
//! calibration stream so that `σ` depends on the channel parameters only.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{contract, Error, Result};
use crate::nonlinearity::NonlinearFn;
use crate::numerics::{companion_spectral_radius, gauss, Rng};

/// Monte-Carlo length for signal-power estimates.
pub const CALIBRATION_SAMPLES: usize = 1_000_000;
const CALIBRATION_SEED: u64 = 0x5EED_CA11;
/// Poles must satisfy `|p| < 1 - STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-6;

/// Pre-detection signal-to-noise ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snr {
    Db(f64),
    /// Noise-free operation.
    Infinite,
}

impl Snr {
    pub fn db(&self) -> f64 {
        match *self {
            Snr::Db(v) => v,
            Snr::Infinite => f64::INFINITY,
        }
    }

    /// Noise variance giving this SNR for a signal of the given power.
    pub fn noise_variance(&self, power: f64) -> f64 {
        match *self {
            Snr::Db(v) => power / 10f64.powf(v / 10.0),
            Snr::Infinite => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Snr::Db(v) if !v.is_finite() => Err(contract(format!("SNR must be finite or \"inf\", got {v}"))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Snr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Snr::Db(v) => write!(f, "{v}"),
            Snr::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Snr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
            return Ok(Snr::Infinite);
        }
        let v: f64 = t.parse().map_err(|_| contract(format!("invalid SNR '{s}' (expected dB value or \"inf\")")))?;
        if v == f64::INFINITY {
            return Ok(Snr::Infinite);
        }
        let snr = Snr::Db(v);
        snr.validate()?;
        Ok(snr)
    }
}

impl Serialize for Snr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Snr::Db(v) => s.serialize_f64(v),
            Snr::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Snr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Num(v) if v == f64::INFINITY => Ok(Snr::Infinite),
            Raw::Num(v) => {
                let snr = Snr::Db(v);
                snr.validate().map(|_| snr)
            }
            Raw::Text(t) => t.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// `count` pilots drawn uniformly from the continuous domain `[0, N-1]`.
pub fn uniform_pilots(rng: &mut Rng, n: usize, count: usize) -> Vec<f64> {
    let top = (n - 1) as f64;
    (0..count).map(|_| rng.uniform(0.0, top)).collect()
}

/// `count` pilots drawn uniformly from the integer grid `{0, …, N-1}`.
pub fn grid_pilots(rng: &mut Rng, n: usize, count: usize) -> Vec<f64> {
    (0..count).map(|_| rng.below(n) as f64).collect()
}

fn check_inputs(f: &NonlinearFn, xs: &[f64]) -> Result<Vec<f64>> {
    xs.iter().map(|&x| f.eval(x)).collect()
}

/// `r_n = f(x_n) + w_n` with `w_n ~ N(0, σ²)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlatChannel {
    pub f: NonlinearFn,
    pub snr: Snr,
    /// `E[f(x)²]` under uniform inputs.
    pub signal_power: f64,
    pub sigma: f64,
}

impl FlatChannel {
    pub fn new(f: NonlinearFn, snr: Snr) -> Result<Self> {
        snr.validate()?;
        let mut rng = Rng::new(CALIBRATION_SEED);
        let top = f.top();
        let signal_power =
            (0..CALIBRATION_SAMPLES).map(|_| f.eval_unchecked(rng.uniform(0.0, top)).powi(2)).sum::<f64>()
                / CALIBRATION_SAMPLES as f64;
        let sigma = snr.noise_variance(signal_power).sqrt();
        Ok(FlatChannel { f, snr, signal_power, sigma })
    }

    pub fn transmit(&self, xs: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let clean = check_inputs(&self.f, xs)?;
        let noise = gauss(rng, self.sigma, xs.len());
        Ok(clean.iter().zip(noise).map(|(s, w)| s + w).collect())
    }
}

/// `H(z) = A(z) / B(z)` with `A(z) = Σ a_m z^{-m}`, `B(z) = 1 + Σ_{ℓ≥1} b_ℓ z^{-ℓ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFilter {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl LinearFilter {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(contract(format!("filter needs equal, non-zero lengths (a: {}, b: {})", a.len(), b.len())));
        }
        if b[0] != 1.0 {
            return Err(contract(format!("b[0] must be 1, got {}", b[0])));
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite filter coefficient".into()));
        }
        let radius = companion_spectral_radius(&b[1..]);
        if radius >= 1.0 - STABILITY_MARGIN {
            return Err(Error::Unstable { radius });
        }
        Ok(LinearFilter { a, b })
    }

    /// `a = (1, 0.5, 0.2)`, `b = (1, -0.4, 0.1)`.
    pub fn default_iir() -> Self {
        LinearFilter::new(vec![1.0, 0.5, 0.2], vec![1.0, -0.4, 0.1]).expect("stable by construction")
    }

    /// The default feedforward part with no feedback.
    pub fn default_fir() -> Self {
        LinearFilter::new(vec![1.0, 0.5, 0.2], vec![1.0, 0.0, 0.0]).expect("FIR is stable")
    }

    pub fn identity(m: usize) -> Self {
        let mut a = vec![0.0; m.max(1)];
        a[0] = 1.0;
        LinearFilter::new(a.clone(), a).expect("identity is stable")
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Number of taps `M`.
    pub fn order(&self) -> usize {
        self.a.len()
    }

    /// Difference equation with zero initial conditions.
    pub fn apply(&self, ys: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; ys.len()];
        for n in 0..ys.len() {
            out[n] = self.step(ys, &out, n);
        }
        out
    }

    fn step(&self, ys: &[f64], out: &[f64], n: usize) -> f64 {
        let mut acc = 0.0;
        for (m, a) in self.a.iter().enumerate().take(n + 1) {
            acc += a * ys[n - m];
        }
        for (l, b) in self.b.iter().enumerate().skip(1).take(n) {
            acc -= b * out[n - l];
        }
        acc
    }

    pub fn response_at(&self, omega: f64) -> Complex64 {
        poly_response(&self.a, omega) / poly_response(&self.b, omega)
    }

    /// `H(e^{jω})` on `n_points` equally spaced frequencies over `[0, π]`.
    pub fn freq_response(&self, n_points: usize) -> Result<FreqResponse> {
        FreqResponse::of(&self.a, &self.b, n_points)
    }

    /// Energy of the impulse response of `1/B(z)`, truncated once its tail is
    /// negligible.
    pub fn feedback_noise_gain(&self) -> f64 {
        let mut hist = vec![0.0; self.b.len()];
        let mut gain = 0.0;
        for n in 0..200_000 {
            let mut h = if n == 0 { 1.0 } else { 0.0 };
            for (l, b) in self.b.iter().enumerate().skip(1) {
                h -= b * hist[l - 1];
            }
            hist.rotate_right(1);
            hist[0] = h;
            gain += h * h;
            if n >= self.b.len() && hist.iter().all(|v| v.abs() <= 1e-18 * gain.sqrt()) {
                break;
            }
        }
        gain
    }
}

/// `Σ c_m e^{-jωm}`.
pub fn poly_response(c: &[f64], omega: f64) -> Complex64 {
    c.iter().enumerate().map(|(m, &v)| Complex64::from_polar(v, -omega * m as f64)).sum()
}

/// `ω_i = π i / (n_points - 1)`, `i = 0..n_points`.
pub fn omega_grid(n_points: usize) -> Vec<f64> {
    (0..n_points).map(|i| PI * i as f64 / (n_points - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreqResponse {
    pub omega: Vec<f64>,
    pub magnitude_db: Vec<f64>,
    /// Unwrapped phase in radians.
    pub phase: Vec<f64>,
}

impl FreqResponse {
    /// Response of `num(z) / den(z)` where both are coefficient vectors in
    /// powers of `z^{-1}`.
    pub fn of(num: &[f64], den: &[f64], n_points: usize) -> Result<Self> {
        if n_points < 2 {
            return Err(contract(format!("need at least 2 frequency points, got {n_points}")));
        }
        let omega = omega_grid(n_points);
        let h: Vec<Complex64> = omega.iter().map(|&w| poly_response(num, w) / poly_response(den, w)).collect();
        let magnitude_db = h.iter().map(|z| 20.0 * z.norm().log10()).collect();
        let phase = unwrap_phase(&h.iter().map(|z| z.arg()).collect::<Vec<_>>());
        Ok(FreqResponse { omega, magnitude_db, phase })
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.magnitude_db.iter().map(|d| 10f64.powf(d / 20.0)).collect()
    }
}

/// Removes `2π` jumps between consecutive phase samples.
pub fn unwrap_phase(wrapped: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(wrapped.len());
    let mut offset = 0.0;
    for (i, &p) in wrapped.iter().enumerate() {
        if i > 0 {
            let d = p - wrapped[i - 1];
            if d > PI {
                offset -= 2.0 * PI;
            } else if d < -PI {
                offset += 2.0 * PI;
            }
        }
        out.push(p + offset);
    }
    out
}

/// Where receiver noise enters the Hammerstein recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// `r = H f(x) + w`.
    #[default]
    PostFilter,
    /// `r_n = Σ a_m f(x_{n-m}) - Σ b_ℓ r_{n-ℓ} + w_n`: noisy outputs feed back.
    InLoop,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HammersteinChannel {
    pub f: NonlinearFn,
    pub filt: LinearFilter,
    pub snr: Snr,
    pub noise_mode: NoiseMode,
    /// Power of the noise-free filter output under uniform inputs.
    pub signal_power: f64,
    pub sigma: f64,
}

impl HammersteinChannel {
    /// Calibrates `σ` so the noise component at the receiver has power
    /// `signal_power / SNR` in either noise mode.
    pub fn new(f: NonlinearFn, filt: LinearFilter, snr: Snr, noise_mode: NoiseMode) -> Result<Self> {
        snr.validate()?;
        let mut rng = Rng::new(CALIBRATION_SEED);
        let top = f.top();
        let s: Vec<f64> = (0..CALIBRATION_SAMPLES).map(|_| f.eval_unchecked(rng.uniform(0.0, top))).collect();
        let y = filt.apply(&s);
        let signal_power = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
        let gain = match noise_mode {
            NoiseMode::PostFilter => 1.0,
            NoiseMode::InLoop => filt.feedback_noise_gain(),
        };
        let sigma = (snr.noise_variance(signal_power) / gain).sqrt();
        Ok(HammersteinChannel { f, filt, snr, noise_mode, signal_power, sigma })
    }

    pub fn transmit(&self, xs: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let s = check_inputs(&self.f, xs)?;
        let w = gauss(rng, self.sigma, xs.len());
        Ok(match self.noise_mode {
            NoiseMode::PostFilter => self.filt.apply(&s).into_iter().zip(w).map(|(y, w)| y + w).collect(),
            NoiseMode::InLoop => {
                let mut r = vec![0.0; s.len()];
                for n in 0..s.len() {
                    r[n] = self.filt.step(&s, &r, n) + w[n];
                }
                r
            }
        })
    }
}
