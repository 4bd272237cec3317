//! Joint estimation for Hammerstein channels: an MDIR equalizer pair coupled
//! to a DCT model of the nonlinearity, optimized alternately.
//!
//! With `r_n = (r_n, …, r_{n-M+1})` and `g_n` the same window of the model
//! output `g(x) = fᵀc(x)`, the error is `ε_n = b̂ᵀr_n - âᵀg_n`. For fixed
//! `f`, minimizing `E[ε²]` subject to `b̂ᵀBb̂ = 1` with
//! `B = R_rg R_g⁻¹ R_rgᵀ` gives the generalized eigenproblem
//! `R_r b̂ = μ B b̂` at its smallest `μ`, the backward filter
//! `â = R_g⁻¹ R_rgᵀ b̂`, and a minimum error power `λ_min = μ - 1`.
//! [`Mode::Whitened`] assumes `R_g = I`, which drops the `R_g⁻¹` factors.
//!
//! For fixed equalizers the error is linear in `f`, so one LMS pass over the
//! stream updates the DCT coefficients.

use serde::{Deserialize, Serialize};

use crate::channel::{omega_grid, poly_response, LinearFilter};
use crate::error::{contract, Error, Result};
use crate::neuron::{DctModel, FeatureBasis};
use crate::nonlinearity::NonlinearFn;
use crate::numerics::{
    canonical_sign, cholesky, dot, gen_eig_smallest, norm, solve_lower, spd_solve, spd_solve_mat, Mat, Rng,
};

/// Minimum stream length per equalizer tap for correlation estimates.
pub const SAMPLES_PER_TAP: usize = 50;

/// Features of the last `M` pilots: `Q × M`, column `m` is `c(x_{n-m})`.
#[derive(Debug, Clone, PartialEq)]
pub struct CosMatrix {
    entries: Mat,
}

impl CosMatrix {
    pub fn m(&self) -> usize {
        self.entries.cols()
    }

    pub fn q(&self) -> usize {
        self.entries.rows()
    }

    pub fn entries(&self) -> &Mat {
        &self.entries
    }

    /// `C â`, the direction in which the coupled error moves `f`.
    pub fn combine(&self, a_hat: &[f64]) -> Vec<f64> {
        self.entries.mat_vec(a_hat)
    }
}

/// `window[m]` is `x_{n-m}`.
pub fn build_cos_matrix(basis: &FeatureBasis, window: &[f64]) -> Result<CosMatrix> {
    if window.is_empty() {
        return Err(contract("cosine matrix needs a non-empty window"));
    }
    let mut entries = Mat::zeros(basis.q, window.len());
    for (m, &x) in window.iter().enumerate() {
        for (q, v) in basis.features(x)?.into_iter().enumerate() {
            entries[(q, m)] = v;
        }
    }
    Ok(CosMatrix { entries })
}

fn from_feature_rows(rows: &[Vec<f64>], n: usize, m: usize) -> CosMatrix {
    let q = rows[0].len();
    CosMatrix { entries: Mat::from_fn(q, m, |i, j| rows[n - j][i]) }
}

/// Sample correlations of `M`-sample windows of the received and reference
/// streams.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrEstimates {
    pub r_r: Mat,
    /// `E[r_n g_nᵀ]`.
    pub r_rg: Mat,
    pub r_g: Mat,
}

impl CorrEstimates {
    pub fn m(&self) -> usize {
        self.r_r.rows()
    }

    /// Correlations of the whitened reference `L⁻¹ g` with `R_g = L Lᵀ`, so
    /// that `R_g` becomes the identity.
    pub fn whitened(&self) -> Result<CorrEstimates> {
        let l = cholesky(&self.r_g).map_err(|e| Error::SingularPencil(format!("reference correlation: {e}")))?;
        let m = self.m();
        // R_rg L⁻ᵀ, row by row: (L⁻¹ row_i)ᵀ.
        let mut r_rg = Mat::zeros(m, m);
        for i in 0..m {
            let w = solve_lower(&l, self.r_rg.row(i));
            for j in 0..m {
                r_rg[(i, j)] = w[j];
            }
        }
        Ok(CorrEstimates { r_r: self.r_r.clone(), r_rg, r_g: Mat::identity(m) })
    }
}

/// Windowed sample averages over `n = M-1 … L-1`.
pub fn estimate_correlations(rs: &[f64], gs: &[f64], m: usize) -> Result<CorrEstimates> {
    if m == 0 {
        return Err(contract("equalizer order must be at least 1"));
    }
    if rs.len() != gs.len() {
        return Err(contract("received and reference streams differ in length"));
    }
    if rs.len() < SAMPLES_PER_TAP * m {
        return Err(contract(format!("need at least {} samples for M = {m}, got {}", SAMPLES_PER_TAP * m, rs.len())));
    }
    let mut r_r = Mat::zeros(m, m);
    let mut r_rg = Mat::zeros(m, m);
    let mut r_g = Mat::zeros(m, m);
    for n in (m - 1)..rs.len() {
        for i in 0..m {
            let (ri, gi) = (rs[n - i], gs[n - i]);
            for j in 0..m {
                r_r[(i, j)] += ri * rs[n - j];
                r_rg[(i, j)] += ri * gs[n - j];
                r_g[(i, j)] += gi * gs[n - j];
            }
        }
    }
    let count = (rs.len() - m + 1) as f64;
    Ok(CorrEstimates { r_r: r_r.scale(1.0 / count), r_rg: r_rg.scale(1.0 / count), r_g: r_g.scale(1.0 / count) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Assumes a white, unit-power reference: `B = R_rg R_rgᵀ`, `â = R_rgᵀ b̂`.
    Whitened,
    #[default]
    General,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdirSolution {
    pub a_hat: Vec<f64>,
    /// Scaled so that `b̂ᵀBb̂ = 1`.
    pub b_hat: Vec<f64>,
    /// Smallest generalized eigenvalue.
    pub mu: f64,
    pub lambda_min: f64,
}

/// `â` as a function of `b̂`.
type EqualizerMap<'a> = Box<dyn Fn(&[f64]) -> Result<Vec<f64>> + 'a>;

pub fn mdir_solve(corr: &CorrEstimates, mode: Mode) -> Result<MdirSolution> {
    let pencil = |e: Error| match e {
        Error::SingularPencil(msg) => {
            Error::SingularPencil(format!("reference branch is rank-deficient (increase Q or pilot excitation): {msg}"))
        }
        other => other,
    };
    let (b_mat, a_of): (Mat, EqualizerMap) = match mode {
        Mode::Whitened => {
            ((&corr.r_rg * &corr.r_rg.transpose()).symmetrized(), Box::new(|b: &[f64]| Ok(corr.r_rg.tr_mat_vec(b))))
        }
        Mode::General => {
            let x = spd_solve_mat(&corr.r_g.symmetrized(), &corr.r_rg.transpose())
                .map_err(|e| Error::SingularPencil(format!("reference correlation: {e}")))?;
            (
                (&corr.r_rg * &x).symmetrized(),
                Box::new(|b: &[f64]| {
                    spd_solve(&corr.r_g.symmetrized(), &corr.r_rg.tr_mat_vec(b))
                        .map_err(|e| Error::SingularPencil(format!("reference correlation: {e}")))
                }),
            )
        }
    };
    let (mu, b_hat) = gen_eig_smallest(&corr.r_r.symmetrized(), &b_mat).map_err(pencil)?;
    let a_hat = a_of(&b_hat)?;
    Ok(MdirSolution { a_hat, b_hat, mu, lambda_min: mu - 1.0 })
}

/// `E[(b̂ᵀr - âᵀg)²] = b̂ᵀR_r b̂ - 2 b̂ᵀR_rg â + âᵀR_g â`.
pub fn residual_power(corr: &CorrEstimates, a_hat: &[f64], b_hat: &[f64]) -> f64 {
    corr.r_r.quad_form(b_hat) - 2.0 * corr.r_rg.bilinear(b_hat, a_hat) + corr.r_g.quad_form(a_hat)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdirState {
    pub a_hat: Vec<f64>,
    pub b_hat: Vec<f64>,
    pub model: DctModel,
    /// Outer iteration that produced the equalizers.
    pub iteration: usize,
    /// Error power of the equalizers on the correlations they were solved
    /// from.
    pub mse: f64,
}

/// Scales `f` to unit norm with its largest-magnitude entry positive and
/// moves the scale into `â`, leaving the product `â fᵀ` unchanged.
pub fn normalize(state: &mut MdirState) {
    let f = state.model.coeffs_mut();
    let nrm = norm(f);
    if nrm == 0.0 {
        return;
    }
    let sign = leading_sign(f);
    for v in f.iter_mut() {
        *v *= sign / nrm;
    }
    for a in state.a_hat.iter_mut() {
        *a *= nrm * sign;
    }
}

fn leading_sign(v: &[f64]) -> f64 {
    let lead = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    if lead < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// One LMS step on the DCT coefficients for fixed equalizers:
/// `ε = b̂ᵀr - fᵀ(C â)`, `f ← f + 4α ε C â`. Returns `ε`.
///
/// The step leaves `f` unnormalized; [`alternate`] calls [`normalize`] once
/// per pass. Folding the norm into `â` after every step would scale the
/// effective step size by `‖f‖²` and can make the pass diverge.
pub fn dct_update(state: &mut MdirState, window: &CosMatrix, r_vec: &[f64], alpha: f64) -> Result<f64> {
    if window.q() != state.model.coeffs().len() || window.m() != state.a_hat.len() || r_vec.len() != state.b_hat.len() {
        return Err(contract("cosine window, equalizers and received vector disagree in size"));
    }
    let u = window.combine(&state.a_hat);
    let err = dot(&state.b_hat, r_vec) - dot(state.model.coeffs(), &u);
    for (f, ui) in state.model.coeffs_mut().iter_mut().zip(&u) {
        *f += 4.0 * alpha * err * ui;
    }
    if !err.is_finite() || state.model.coeffs().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("DCT coefficient update diverged".into()));
    }
    Ok(err)
}

/// When the alternation stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    /// Stop as soon as the error power falls to this level; `0` disables it.
    pub mse_threshold: f64,
    pub max_outer_iters: usize,
    /// Relative improvement of the best error power regarded as stagnation.
    pub rel_tol: f64,
    /// Consecutive stagnating iterations before stopping.
    pub patience: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule { mse_threshold: 0.0, max_outer_iters: 50, rel_tol: 1e-6, patience: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlternateConfig {
    /// Equalizer length `M`.
    pub m: usize,
    pub alpha: f64,
    pub mode: Mode,
    pub stop: StopRule,
    /// Seed of the random unit-norm initial `f`.
    pub init_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Error power after the equalizer solve.
    pub mse: f64,
    pub lambda_min: f64,
    /// Norm of the change in `f` over the following LMS pass.
    pub delta_f: f64,
}

#[derive(Debug, Clone)]
pub struct AlternateResult {
    /// Lowest-error state seen.
    pub best: MdirState,
    pub history: Vec<IterationRecord>,
    /// `false` when the iteration cap was hit before the stop rule fired.
    pub converged: bool,
}

/// Random unit-norm `f` with its largest-magnitude entry positive.
pub fn random_unit(q: usize, seed: u64) -> Vec<f64> {
    let mut rng = Rng::new(seed);
    let mut f: Vec<f64> = (0..q).map(|_| rng.standard_normal()).collect();
    let nrm = norm(&f);
    f.iter_mut().for_each(|v| *v /= nrm);
    canonical_sign(&mut f);
    f
}

/// Alternates equalizer solves and LMS passes over the DCT coefficients.
///
/// Each outer iteration (i) evaluates `g = fᵀc(x)` over the pilots, (ii)
/// re-estimates the correlations on the full stream and solves for the
/// equalizers, and (iii) runs one LMS pass of [`dct_update`] over the stream.
pub fn alternate(
    pilots: &[f64],
    received: &[f64],
    basis: FeatureBasis,
    cfg: &AlternateConfig,
) -> Result<AlternateResult> {
    let m = cfg.m;
    if pilots.len() != received.len() {
        return Err(contract("pilot and received streams differ in length"));
    }
    if m == 0 || pilots.len() < SAMPLES_PER_TAP * m * basis.q {
        return Err(contract(format!(
            "need at least {} samples for M = {m}, Q = {}, got {}",
            SAMPLES_PER_TAP * m * basis.q,
            basis.q,
            pilots.len()
        )));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(contract(format!("alpha must lie in (0, 1), got {}", cfg.alpha)));
    }
    if cfg.stop.max_outer_iters == 0 {
        return Err(contract("max_outer_iters must be at least 1"));
    }
    let features: Vec<Vec<f64>> = pilots.iter().map(|&x| basis.features(x)).collect::<Result<_>>()?;

    let mut state = MdirState {
        a_hat: vec![0.0; m],
        b_hat: vec![0.0; m],
        model: DctModel::from_coeffs(basis, random_unit(basis.q, cfg.init_seed))?,
        iteration: 0,
        mse: f64::INFINITY,
    };
    let mut best: Option<MdirState> = None;
    let mut history = Vec::new();
    let mut stagnant = 0;
    let mut converged = false;

    for it in 0..cfg.stop.max_outer_iters {
        let g: Vec<f64> = features.iter().map(|c| dot(state.model.coeffs(), c)).collect();
        let corr = estimate_correlations(received, &g, m)?;
        let sol = mdir_solve(&corr, cfg.mode)?;
        state.a_hat = sol.a_hat;
        state.b_hat = sol.b_hat;
        state.iteration = it;
        state.mse = residual_power(&corr, &state.a_hat, &state.b_hat);

        let previous = best.as_ref().map_or(f64::INFINITY, |b| b.mse);
        if state.mse < previous {
            let improvement = (previous - state.mse) / state.mse.abs().max(f64::MIN_POSITIVE);
            if improvement < cfg.stop.rel_tol {
                stagnant += 1;
            } else {
                stagnant = 0;
            }
            best = Some(state.clone());
        } else {
            stagnant += 1;
        }
        if state.mse <= cfg.stop.mse_threshold || stagnant >= cfg.stop.patience {
            history.push(IterationRecord { iteration: it, mse: state.mse, lambda_min: sol.lambda_min, delta_f: 0.0 });
            converged = true;
            break;
        }

        let before = state.model.coeffs().to_vec();
        for n in (m - 1)..pilots.len() {
            let window = from_feature_rows(&features, n, m);
            let r_vec: Vec<f64> = (0..m).map(|j| received[n - j]).collect();
            dct_update(&mut state, &window, &r_vec, cfg.alpha)?;
        }
        normalize(&mut state);
        let delta_f = norm(&state.model.coeffs().iter().zip(&before).map(|(a, b)| a - b).collect::<Vec<_>>());
        history.push(IterationRecord { iteration: it, mse: state.mse, lambda_min: sol.lambda_min, delta_f });
    }
    Ok(AlternateResult { best: best.expect("at least one outer iteration ran"), history, converged })
}

/// Runs [`alternate`] from `restarts` random starts seeded `init_seed`,
/// `init_seed + 1`, … and keeps the run with the lowest error power (ties go
/// to the earlier start). Returns the run and its start index.
///
/// The alternation has a stationary set where `f` has no DC part and both
/// equalizers have zero DC gain: the DC gradient `E[ε]·Â(1)` vanishes there,
/// so a start that falls into it stays, at an error power far above the
/// other basin.
pub fn alternate_restarts(
    pilots: &[f64],
    received: &[f64],
    basis: FeatureBasis,
    cfg: &AlternateConfig,
    restarts: usize,
) -> Result<(AlternateResult, usize)> {
    if restarts == 0 {
        return Err(contract("restarts must be at least 1"));
    }
    let mut chosen: Option<(AlternateResult, usize)> = None;
    for i in 0..restarts {
        let run_cfg = AlternateConfig { init_seed: cfg.init_seed.wrapping_add(i as u64), ..*cfg };
        let res = alternate(pilots, received, basis, &run_cfg)?;
        if chosen.as_ref().is_none_or(|(c, _)| res.best.mse < c.best.mse) {
            chosen = Some((res, i));
        }
    }
    Ok(chosen.expect("restarts >= 1"))
}

/// Least-squares gain `c` minimizing `‖c·est - truth‖²`.
pub fn align_gain(est: &[f64], truth: &[f64]) -> f64 {
    let den = dot(est, est);
    if den == 0.0 {
        0.0
    } else {
        dot(est, truth) / den
    }
}

/// `‖c·est - truth‖² / ‖truth‖²` after gain alignment.
pub fn aligned_nmse(est: &[f64], truth: &[f64]) -> f64 {
    let c = align_gain(est, truth);
    let err: f64 = est.iter().zip(truth).map(|(e, t)| (c * e - t).powi(2)).sum();
    err / dot(truth, truth)
}

/// Gain-aligned error of the estimated nonlinearity on the integer grid.
pub fn nonlinearity_nmse(model: &DctModel, f: &NonlinearFn) -> f64 {
    let est = model.tabulate();
    let truth: Vec<f64> = (0..f.n).map(|x| f.eval_unchecked(x as f64)).collect();
    aligned_nmse(&est, &truth)
}

/// `|Â(e^{jω}) / B̂(e^{jω})|` on `n_points` frequencies over `[0, π]`.
pub fn equalizer_magnitude(a_hat: &[f64], b_hat: &[f64], n_points: usize) -> Vec<f64> {
    omega_grid(n_points).iter().map(|&w| (poly_response(a_hat, w) / poly_response(b_hat, w)).norm()).collect()
}

/// Gain-aligned error of the estimated magnitude response against `filt`.
pub fn response_nmse(a_hat: &[f64], b_hat: &[f64], filt: &LinearFilter, n_points: usize) -> f64 {
    let est = equalizer_magnitude(a_hat, b_hat, n_points);
    let truth: Vec<f64> = omega_grid(n_points).iter().map(|&w| filt.response_at(w).norm()).collect();
    aligned_nmse(&est, &truth)
}
