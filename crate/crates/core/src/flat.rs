//! Flat-fading estimation: learning the channel nonlinearity (direct) or its
//! inverse from pilots, inverting a direct estimate, and grid ML detection.
//!
//! Received values on the inverse path can leave `[0, N-1]`; they are clamped
//! into the domain before feature evaluation and the number of clamped
//! samples is reported.

use serde::{Deserialize, Serialize};

use crate::channel::FlatChannel;
use crate::error::{contract, Error, Result};
use crate::neuron::{
    closed_form, run_lms, samples_to_converge, tail_mean, DctModel, FeatureBasis, InputLaw, LmsSchedule,
};
use crate::nonlinearity::NonlinearFn;
use crate::numerics::Rng;

/// Which side of the channel the model learns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `g ≈ f` from pairs `(x, r)`.
    Direct,
    /// `g ≈ f⁻¹` from pairs `(r, x)`.
    Inverse,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Direct => "direct",
            Scheme::Inverse => "inverse",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    /// Weights after the last sample.
    pub model: DctModel,
    /// Mean of the weight iterates from `ceil(T_κ)` on.
    pub averaged: DctModel,
    /// Squared a-priori error per training sample.
    pub mse_trace: Vec<f64>,
    /// Final 500-sample mean of the squared error over the reference power.
    pub nmse: f64,
    /// Error of the averaged estimate against the noise-free truth on the
    /// integer grid.
    pub estimate_nmse: f64,
    pub samples_to_converge: usize,
    /// Received samples clamped into the domain (inverse path only).
    pub clipped: usize,
}

fn mean_square(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64
}

fn check_pilots(basis: &FeatureBasis, f: &NonlinearFn, xs: &[f64]) -> Result<()> {
    if basis.n != f.n {
        return Err(contract(format!("basis domain {} differs from channel domain {}", basis.n, f.n)));
    }
    if xs.is_empty() {
        return Err(contract("no pilots"));
    }
    Ok(())
}

fn finish(
    model: DctModel,
    trace: crate::neuron::LmsTrace,
    reference_power: f64,
    estimate_nmse: f64,
    clipped: usize,
) -> TrainRun {
    let nmse = tail_mean(&trace.sq_errors) / reference_power;
    let samples_to_converge = samples_to_converge(&trace.sq_errors);
    TrainRun {
        model,
        averaged: trace.averaged,
        mse_trace: trace.sq_errors,
        nmse,
        estimate_nmse,
        samples_to_converge,
        clipped,
    }
}

/// Trains `x̂ = g(r)` with LMS on `(clamp(r_n), x_n)`.
pub fn train_inverse(
    ch: &FlatChannel,
    xs: &[f64],
    rng: &mut Rng,
    basis: FeatureBasis,
    schedule: &LmsSchedule,
) -> Result<TrainRun> {
    check_pilots(&basis, &ch.f, xs)?;
    let received = ch.transmit(xs, rng)?;
    let top = basis.top();
    let mut clipped = 0;
    let inputs: Vec<f64> = received
        .iter()
        .map(|&r| {
            let c = r.clamp(0.0, top);
            if c != r {
                clipped += 1;
            }
            c
        })
        .collect();
    let mut model = DctModel::zeros(basis);
    let trace = run_lms(&mut model, &inputs, xs, schedule.mu, schedule.averaging_start())?;
    let est = inverse_nmse(&trace.averaged, &ch.f);
    Ok(finish(model, trace, mean_square(xs), est, clipped))
}

/// Trains `g ≈ f` with LMS on `(x_n, r_n)`; noise enters the target only.
pub fn train_direct(
    ch: &FlatChannel,
    xs: &[f64],
    rng: &mut Rng,
    basis: FeatureBasis,
    schedule: &LmsSchedule,
) -> Result<TrainRun> {
    check_pilots(&basis, &ch.f, xs)?;
    let received = ch.transmit(xs, rng)?;
    let mut model = DctModel::zeros(basis);
    let trace = run_lms(&mut model, xs, &received, schedule.mu, schedule.averaging_start())?;
    let clean: Vec<f64> = xs.iter().map(|&x| ch.f.eval_unchecked(x)).collect();
    let est = direct_nmse(&trace.averaged, &ch.f);
    Ok(finish(model, trace, mean_square(&clean), est, 0))
}

pub fn train(
    scheme: Scheme,
    ch: &FlatChannel,
    xs: &[f64],
    rng: &mut Rng,
    basis: FeatureBasis,
    schedule: &LmsSchedule,
) -> Result<TrainRun> {
    match scheme {
        Scheme::Direct => train_direct(ch, xs, rng, basis, schedule),
        Scheme::Inverse => train_inverse(ch, xs, rng, basis, schedule),
    }
}

/// `Σ (g(x) - f(x))² / Σ f(x)²` over the integer grid.
pub fn direct_nmse(g: &DctModel, f: &NonlinearFn) -> f64 {
    let (mut err, mut pow) = (0.0, 0.0);
    for x in 0..f.n {
        let t = f.eval_unchecked(x as f64);
        err += (g.predict_unchecked(x as f64) - t).powi(2);
        pow += t * t;
    }
    err / pow
}

/// `Σ (g(f(x)) - x)² / Σ x²` over the integer grid.
pub fn inverse_nmse(g: &DctModel, f: &NonlinearFn) -> f64 {
    let (mut err, mut pow) = (0.0, 0.0);
    for x in 0..f.n {
        let x = x as f64;
        err += (g.predict_unchecked(f.eval_unchecked(x)) - x).powi(2);
        pow += x * x;
    }
    err / pow
}

/// Relative size of a decrease in a tabulated estimate that is still treated
/// as approximation ripple rather than a genuine fold.
pub const MONOTONE_TOLERANCE: f64 = 1e-3;

/// Builds an inverse model from a direct estimate `f̂`.
///
/// `f̂` is tabulated on the integer grid, the pairs `(x, f̂(x))` are reflected
/// into `(f̂(x), x)`, `x = f̂⁻¹(y)` is resampled at integer `y` by
/// piecewise-linear interpolation (clamped to the end points outside the
/// estimated range) and a `q_inverse`-term standard model is fitted to it.
pub fn invert_direct(model: &DctModel, q_inverse: usize) -> Result<DctModel> {
    let n = model.basis().n;
    let basis = FeatureBasis::standard(n, q_inverse)?;
    let mut table = model.tabulate();
    let (lo, hi) = table.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let range = hi - lo;
    if !(range > 0.0) || table[n - 1] <= table[0] {
        return Err(Error::NotInvertible("estimate is not increasing".into()));
    }
    let worst = table.windows(2).map(|w| w[0] - w[1]).fold(0.0f64, f64::max);
    if worst > MONOTONE_TOLERANCE * range {
        return Err(Error::NotInvertible(format!("estimate decreases by {worst:.3e} (range {range:.3e})")));
    }
    // Monotone rearrangement removes the tolerated ripple.
    table.sort_by(|a, b| a.total_cmp(b));
    let xs: Vec<f64> = (0..n).map(|y| interp_inverse(&table, y as f64)).collect();
    let ys: Vec<f64> = (0..n).map(|y| y as f64).collect();
    closed_form(basis, &ys, &xs, InputLaw::Uniform)
}

/// Position `x` with `table(x) = y` for an ascending table on `0..len`.
fn interp_inverse(table: &[f64], y: f64) -> f64 {
    let last = table.len() - 1;
    if y <= table[0] {
        return 0.0;
    }
    if y >= table[last] {
        return last as f64;
    }
    let i = table.partition_point(|&v| v <= y).clamp(1, last);
    let (y0, y1) = (table[i - 1], table[i]);
    let t = if y1 > y0 { (y - y0) / (y1 - y0) } else { 0.0 };
    (i - 1) as f64 + t
}

/// Candidate minimizing `(r - f̂(x))²`; ties go to the smaller candidate.
pub fn ml_detect(model: &DctModel, r: f64, grid: &[f64]) -> Result<f64> {
    if grid.is_empty() {
        return Err(contract("ML detection needs a non-empty grid"));
    }
    let mut best = (f64::INFINITY, f64::INFINITY);
    for &x in grid {
        let d = (r - model.predict(x)?).powi(2);
        if d < best.0 || (d == best.0 && x < best.1) {
            best = (d, x);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{uniform_pilots, Snr};
    use crate::dct::dct;
    use crate::nonlinearity::Shape;

    const N: usize = 128;

    fn setup(name: &str, snr: Snr) -> (FlatChannel, FeatureBasis, LmsSchedule) {
        let f = NonlinearFn::new(name.parse().unwrap(), N).unwrap();
        (
            FlatChannel::new(f, snr).unwrap(),
            FeatureBasis::standard(N, 6).unwrap(),
            LmsSchedule::new(0.01, 0.01).unwrap(),
        )
    }

    /// Exact model of `f` on the integer grid.
    fn grid_model(f: &NonlinearFn, q: usize) -> DctModel {
        DctModel::from_spectrum(&dct(&f.tabulate()), q).unwrap()
    }

    #[test]
    fn inverse_of_identity_noise_free() {
        // With N = 16 and Q = N the identity is exactly representable.
        let f = NonlinearFn::new(Shape::Identity, 16).unwrap();
        let ch = FlatChannel::new(f, Snr::Infinite).unwrap();
        let basis = FeatureBasis::standard(16, 16).unwrap();
        let schedule = LmsSchedule::new(0.01, 0.01).unwrap();
        let mut rng = Rng::new(1);
        let xs = crate::channel::grid_pilots(&mut rng, 16, 5000);
        let run = train_inverse(&ch, &xs, &mut rng, basis, &schedule).unwrap();
        assert!(run.nmse <= 1e-3, "nmse {}", run.nmse);
        assert_eq!(run.clipped, 0);
        assert_eq!(run.mse_trace.len(), 5000);
    }

    #[test]
    fn direct_of_identity_noise_free() {
        let f = NonlinearFn::new(Shape::Identity, 16).unwrap();
        let ch = FlatChannel::new(f, Snr::Infinite).unwrap();
        let basis = FeatureBasis::standard(16, 16).unwrap();
        let schedule = LmsSchedule::new(0.01, 0.01).unwrap();
        let mut rng = Rng::new(2);
        let xs = crate::channel::grid_pilots(&mut rng, 16, 5000);
        let run = train_direct(&ch, &xs, &mut rng, basis, &schedule).unwrap();
        assert!(run.nmse <= 1e-6, "nmse {}", run.nmse);
        assert!(run.estimate_nmse <= 1e-6);
    }

    #[test]
    fn inverse_clamps_received_values() {
        let (ch, basis, schedule) = setup("sqrt", Snr::Db(0.0));
        let mut rng = Rng::new(3);
        let xs = uniform_pilots(&mut rng, N, 1000);
        let run = train_inverse(&ch, &xs, &mut rng, basis, &schedule).unwrap();
        assert!(run.clipped > 0);
        assert!(run.model.coeffs().iter().all(|w| w.is_finite()));
    }

    #[test]
    fn direct_degrades_gracefully_at_zero_db() {
        for name in ["sine", "square"] {
            let (ch, basis, schedule) = setup(name, Snr::Db(0.0));
            let mut rng = Rng::new(4);
            let xs = uniform_pilots(&mut rng, N, 5000);
            let run = train_direct(&ch, &xs, &mut rng, basis, &schedule).unwrap();
            assert!(run.estimate_nmse <= 1e-1, "{name}: {}", run.estimate_nmse);
        }
    }

    #[test]
    fn direct_residual_keeps_noise_statistics() {
        let (ch, basis, schedule) = setup("sine", Snr::Db(10.0));
        let mut rng = Rng::new(5);
        let xs = uniform_pilots(&mut rng, N, 5000);
        let mut replay = rng.clone();
        let run = train_direct(&ch, &xs, &mut rng, basis, &schedule).unwrap();
        let received = ch.transmit(&xs, &mut replay).unwrap();
        let tail = run.samples_to_converge..xs.len();
        let count = tail.len() as f64;
        let resid: Vec<f64> = tail.map(|n| received[n] - run.averaged.predict(xs[n]).unwrap()).collect();
        let mean = resid.iter().sum::<f64>() / count;
        let var = resid.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / count;
        assert!(mean.abs() <= 4.0 * ch.sigma / count.sqrt(), "mean {mean}");
        let s2 = ch.sigma * ch.sigma;
        assert!((var - s2).abs() <= 0.1 * s2, "var {var} vs {s2}");
    }

    #[test]
    fn invert_identity_model() {
        let f = NonlinearFn::new(Shape::Identity, N).unwrap();
        let model = grid_model(&f, N);
        let inv = invert_direct(&model, N).unwrap();
        for (a, b) in inv.coeffs().iter().zip(model.coeffs()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn invert_square_matches_analytic_root() {
        let f = NonlinearFn::new(Shape::Square, N).unwrap();
        let inv = invert_direct(&grid_model(&f, 6), 32).unwrap();
        let (mut err, mut pow) = (0.0, 0.0);
        for y in 0..N {
            let want = 127.0 * (y as f64 / 127.0).sqrt();
            err += (inv.predict(y as f64).unwrap() - want).powi(2);
            pow += want * want;
        }
        assert!(err / pow <= 1e-3, "nmse {}", err / pow);
    }

    #[test]
    fn invert_round_trips() {
        for name in ["sigmoid", "sine", "sqrt", "square"] {
            let f = NonlinearFn::new(name.parse().unwrap(), N).unwrap();
            let fhat = grid_model(&f, 6);
            let g = invert_direct(&fhat, 32).unwrap();
            let power = (0..N).map(|y| (y * y) as f64).sum::<f64>();
            let (mut gf, mut fg) = (0.0, 0.0);
            for v in 0..N {
                let v = v as f64;
                gf += (g.predict_unchecked(fhat.predict_unchecked(v).clamp(0.0, 127.0)) - v).powi(2);
                fg += (fhat.predict_unchecked(g.predict_unchecked(v).clamp(0.0, 127.0)) - v).powi(2);
            }
            assert!(gf <= 0.02 * power, "{name}: g∘f̂ {}", gf / power);
            assert!(fg <= 0.02 * power, "{name}: f̂∘g {}", fg / power);
        }
    }

    #[test]
    fn invert_rejects_folded_estimate() {
        let f = NonlinearFn::new(Shape::Sine { fraction: 2.0 }, N).unwrap();
        assert!(matches!(invert_direct(&grid_model(&f, 6), 32), Err(Error::NotInvertible(_))));
    }

    #[test]
    fn ml_detect_exact_and_ties() {
        let f = NonlinearFn::new("sigmoid".parse().unwrap(), N).unwrap();
        let exact = grid_model(&f, N);
        let grid: Vec<f64> = (0..N).step_by(9).map(|x| x as f64).collect();
        for &x0 in &grid {
            let r = exact.predict(x0).unwrap();
            assert_eq!(ml_detect(&exact, r, &grid).unwrap(), x0);
        }
        let id = grid_model(&NonlinearFn::new(Shape::Identity, N).unwrap(), N);
        // r = 15 is (numerically) equidistant from 10 and 20.
        let r = 0.5 * (id.predict(10.0).unwrap() + id.predict(20.0).unwrap());
        assert_eq!(ml_detect(&id, r, &[20.0, 10.0]).unwrap(), 10.0);
        assert!(ml_detect(&id, 1.0, &[]).is_err());
    }

    #[test]
    fn ml_detect_brute_force() {
        let f = NonlinearFn::new("compander".parse().unwrap(), N).unwrap();
        let m = grid_model(&f, 6);
        let grid: Vec<f64> = (0..N).map(|x| x as f64).collect();
        let mut rng = Rng::new(6);
        for _ in 0..200 {
            let r = rng.uniform(-5.0, 130.0);
            let got = ml_detect(&m, r, &grid).unwrap();
            let mut best = (f64::INFINITY, 0.0);
            for &x in &grid {
                let d = (r - m.predict(x).unwrap()).powi(2);
                if d < best.0 {
                    best = (d, x);
                }
            }
            assert_eq!(got, best.1);
        }
    }

    fn four_levels() -> Vec<f64> {
        (0..4).map(|i| 127.0 * i as f64 / 3.0).collect()
    }

    #[test]
    fn ml_detect_symbol_error_rate() {
        let (ch, basis, schedule) = setup("sigmoid", Snr::Db(30.0));
        let mut rng = Rng::new(7);
        let xs = uniform_pilots(&mut rng, N, 5000);
        let fhat = train_direct(&ch, &xs, &mut rng, basis, &schedule).unwrap().averaged;
        let levels = four_levels();
        let trials = 10_000;
        let symbols: Vec<f64> = (0..trials).map(|_| levels[rng.below(4)]).collect();
        let received = ch.transmit(&symbols, &mut rng).unwrap();
        let errors =
            symbols.iter().zip(&received).filter(|(s, r)| ml_detect(&fhat, **r, &levels).unwrap() != **s).count();
        assert!(errors as f64 / trials as f64 <= 1e-3, "{errors} errors");
    }

    #[test]
    fn trained_detector_agrees_with_truth_at_high_snr() {
        let (ch, basis, schedule) = setup("compander", Snr::Db(80.0));
        let mut rng = Rng::new(8);
        let xs = uniform_pilots(&mut rng, N, 5000);
        let fhat = train_direct(&ch, &xs, &mut rng, basis, &schedule).unwrap().averaged;
        let levels = four_levels();
        let trials = 10_000;
        let symbols: Vec<f64> = (0..trials).map(|_| levels[rng.below(4)]).collect();
        let received = ch.transmit(&symbols, &mut rng).unwrap();
        let agree = received
            .iter()
            .filter(|&&r| {
                let exact = levels
                    .iter()
                    .copied()
                    .min_by(|a, b| {
                        let da = (r - ch.f.eval(*a).unwrap()).powi(2);
                        let db = (r - ch.f.eval(*b).unwrap()).powi(2);
                        da.total_cmp(&db)
                    })
                    .unwrap();
                ml_detect(&fhat, r, &levels).unwrap() == exact
            })
            .count();
        assert!(agree as f64 >= 0.999 * trials as f64, "{agree} agreements");
    }
}
