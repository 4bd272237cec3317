//! The experiment drivers. Each returns a [`RunOutput`]; nothing here
//! touches the filesystem.

use dctchan::channel::{grid_pilots, omega_grid, uniform_pilots};
use dctchan::dct::{dct, dft, idct, truncation_mse};
use dctchan::flat::{self, direct_nmse, invert_direct, train};
use dctchan::mdir::{self, alternate_restarts, nonlinearity_nmse, response_nmse, AlternateConfig};
use dctchan::neuron::{closed_form, run_lms, samples_to_converge, tail_mean};
use dctchan::numerics::norm;
use dctchan::{DctModel, FlatChannel, FreqResponse, HammersteinChannel, InputLaw, NonlinearFn, Rng, Scheme, Snr};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Config, Experiment, PilotLaw};
use crate::error::{CliError, InModule};
use crate::output::{CurvePoint, Record, RunOutput, SweepRow};

fn pilots(cfg: &Config, rng: &mut Rng) -> Vec<f64> {
    let (n, count) = (cfg.domain.n, cfg.training.samples);
    match cfg.training.pilots {
        PilotLaw::Uniform => uniform_pilots(rng, n, count),
        PilotLaw::Grid => grid_pilots(rng, n, count),
    }
}

fn config_echo(cfg: &Config) -> Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn grid(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(|x| x as f64)
}

fn rel_distance(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b)
}

struct Sink {
    run: String,
    trace: Vec<Record>,
    curves: Vec<CurvePoint>,
}

impl Sink {
    fn new(run: &str) -> Self {
        Sink { run: run.to_string(), trace: Vec::new(), curves: Vec::new() }
    }

    fn trace(&mut self, metric: &'static str, values: impl IntoIterator<Item = (usize, f64)>) {
        for (index, value) in values {
            self.trace.push(Record { run: self.run.clone(), index, metric, value });
        }
    }

    fn curve(&mut self, curve: &'static str, points: impl IntoIterator<Item = (f64, f64)>) {
        for (x, value) in points {
            self.curves.push(CurvePoint { run: self.run.clone(), curve, x, value });
        }
    }

    fn model_curve(&mut self, curve: &'static str, model: &DctModel) {
        self.curve(curve, model.tabulate().into_iter().enumerate().map(|(x, v)| (x as f64, v)));
    }

    fn truth_curve(&mut self, curve: &'static str, f: &NonlinearFn) {
        self.curve(curve, grid(f.n).map(|x| (x, f.eval_unchecked(x))));
    }

    fn finish(self, summary: Value) -> RunOutput {
        RunOutput { summary, trace: self.trace, curves: self.curves, sweep: None }
    }
}

/// Runs the experiment named in `cfg`.
pub fn run(cfg: &Config) -> Result<RunOutput, CliError> {
    match cfg.experiment {
        Experiment::TransformDemo => transform_demo(cfg),
        Experiment::FitNeuron => fit_neuron(cfg),
        Experiment::FlatDirect => flat_run(cfg, Scheme::Direct),
        Experiment::FlatInverse => flat_run(cfg, Scheme::Inverse),
        Experiment::InvertDirect => invert_direct_run(cfg),
        Experiment::Mdir => mdir_run(cfg),
        Experiment::SnrSweep => sweep(cfg),
    }
}

fn transform_demo(cfg: &Config) -> Result<RunOutput, CliError> {
    let f = cfg.nonlinearity(&cfg.nonlinearity.kind);
    let sampled = f.tabulate();
    let spec = dct(&sampled);
    let d = dft(&sampled);
    let q = cfg.model.q;
    let rec = idct(&spec, q).in_module("dct_core")?;
    let n = sampled.n();

    let mut sink = Sink::new("transform_demo");
    sink.curve("f", sampled.values().iter().enumerate().map(|(x, &v)| (x as f64, v)));
    sink.curve("dct", spec.coeffs().iter().enumerate().map(|(k, &v)| (k as f64, v)));
    sink.curve("dft_re", d.iter().enumerate().map(|(k, z)| (k as f64, z.re)));
    sink.curve("dft_im", d.iter().enumerate().map(|(k, z)| (k as f64, z.im)));
    sink.curve("dft_magnitude", d.iter().enumerate().map(|(k, z)| (k as f64, z.norm())));
    sink.curve("reconstruction", rec.values().iter().enumerate().map(|(x, &v)| (x as f64, v)));
    let mses: Vec<(usize, f64)> = (1..=n)
        .map(|k| truncation_mse(&spec, k).map(|m| (k, m)))
        .collect::<dctchan::Result<_>>()
        .in_module("dct_core")?;
    sink.trace("truncation_mse", mses.iter().copied());

    let energy = sampled.energy();
    let direct_mse = sampled.values().iter().zip(rec.values()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64;
    let dft_energy = n as f64 * d.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let summary = json!({
        "experiment": cfg.experiment.name(),
        "config": config_echo(cfg),
        "derived": { "n": n, "q": q },
        "metrics": {
            "energy": energy,
            "dct_energy": spec.energy(),
            "dft_energy": dft_energy,
            "parseval_rel_error": (spec.energy() - energy).abs() / energy,
            "truncation_mse": mses[q - 1].1,
            "reconstruction_mse": direct_mse,
            "dc": spec.coeffs()[0],
        },
    });
    Ok(sink.finish(summary))
}

fn fit_neuron(cfg: &Config) -> Result<RunOutput, CliError> {
    let f = cfg.nonlinearity(&cfg.nonlinearity.kind);
    let basis = cfg.basis();
    let schedule = cfg.schedule();
    let mut rng = Rng::new(cfg.seed);
    let xs = pilots(cfg, &mut rng);
    let ys: Vec<f64> = xs.iter().map(|&x| f.eval_unchecked(x)).collect();

    let mut model = DctModel::zeros(basis);
    let trace = run_lms(&mut model, &xs, &ys, schedule.mu, schedule.averaging_start()).in_module("dct_neuron")?;
    // Exact normal equations: the fixed point LMS is drawn to.
    let law = InputLaw::General;
    let star = closed_form(basis, &xs, &ys, law).in_module("dct_neuron")?;
    let power = ys.iter().map(|y| y * y).sum::<f64>() / ys.len() as f64;

    let mut sink = Sink::new("fit_neuron");
    sink.trace("sq_error", trace.sq_errors.iter().copied().enumerate());
    sink.truth_curve("truth", &f);
    sink.model_curve("lms", &model);
    sink.model_curve("averaged", &trace.averaged);
    sink.model_curve("closed_form", &star);
    sink.curve("coeff_lms", model.coeffs().iter().enumerate().map(|(j, &v)| (j as f64, v)));
    sink.curve("coeff_closed_form", star.coeffs().iter().enumerate().map(|(j, &v)| (j as f64, v)));

    let summary = json!({
        "experiment": cfg.experiment.name(),
        "config": config_echo(cfg),
        "derived": {
            "mu": schedule.mu,
            "t_kappa": schedule.t_kappa,
            "averaging_start": schedule.averaging_start(),
            "closed_form_law": law,
            "target_power": power,
        },
        "metrics": {
            "nmse": tail_mean(&trace.sq_errors) / power,
            "samples_to_converge": samples_to_converge(&trace.sq_errors),
            "estimate_nmse": direct_nmse(&model, &f),
            "averaged_estimate_nmse": direct_nmse(&trace.averaged, &f),
            "closed_form_estimate_nmse": direct_nmse(&star, &f),
            "coeff_rel_distance": rel_distance(model.coeffs(), star.coeffs()),
            "averaged_coeff_rel_distance": rel_distance(trace.averaged.coeffs(), star.coeffs()),
        },
        "estimates": {
            "lms": model.coeffs(),
            "averaged": trace.averaged.coeffs(),
            "closed_form": star.coeffs(),
        },
    });
    Ok(sink.finish(summary))
}

fn flat_run(cfg: &Config, scheme: Scheme) -> Result<RunOutput, CliError> {
    let f = cfg.nonlinearity(&cfg.nonlinearity.kind);
    let schedule = cfg.schedule();
    let ch = FlatChannel::new(f, cfg.channel.snr_db).in_module("channels")?;
    let mut rng = Rng::new(cfg.seed);
    let xs = pilots(cfg, &mut rng);
    let tr = train(scheme, &ch, &xs, &mut rng, cfg.basis(), &schedule).in_module("estimators_flat")?;

    let mut sink = Sink::new(scheme.name());
    sink.trace("sq_error", tr.mse_trace.iter().copied().enumerate());
    match scheme {
        Scheme::Direct => {
            sink.truth_curve("truth", &f);
            sink.model_curve("estimate", &tr.averaged);
            sink.model_curve("estimate_final", &tr.model);
        }
        Scheme::Inverse => {
            sink.curve("identity", grid(f.n).map(|x| (x, x)));
            sink.curve("composition", grid(f.n).map(|x| (x, tr.averaged.predict_unchecked(f.eval_unchecked(x)))));
            sink.model_curve("estimate", &tr.averaged);
            if f.shape.is_monotone() {
                let inv: Vec<(f64, f64)> = grid(f.n)
                    .map(|y| f.invert(y).map(|x| (y, x)))
                    .collect::<dctchan::Result<_>>()
                    .in_module("nonlinearities")?;
                sink.curve("true_inverse", inv);
            }
        }
    }
    let summary = json!({
        "experiment": cfg.experiment.name(),
        "config": config_echo(cfg),
        "derived": {
            "scheme": scheme,
            "sigma": ch.sigma,
            "signal_power": ch.signal_power,
            "mu": schedule.mu,
            "t_kappa": schedule.t_kappa,
            "averaging_start": schedule.averaging_start(),
        },
        "metrics": {
            "nmse": tr.nmse,
            "estimate_nmse": tr.estimate_nmse,
            "samples_to_converge": tr.samples_to_converge,
            "clipped": tr.clipped,
        },
        "estimates": {
            "final": tr.model.coeffs(),
            "averaged": tr.averaged.coeffs(),
        },
    });
    Ok(sink.finish(summary))
}

/// `Σ(g(y) - f⁻¹(y))² / Σ f⁻¹(y)²` on the integer grid.
pub fn inverse_vs_truth(g: &DctModel, f: &NonlinearFn) -> dctchan::Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for y in grid(f.n) {
        let t = f.invert(y)?;
        num += (g.predict_unchecked(y) - t).powi(2);
        den += t * t;
    }
    Ok(num / den)
}

fn invert_direct_run(cfg: &Config) -> Result<RunOutput, CliError> {
    let f = cfg.nonlinearity(&cfg.nonlinearity.kind);
    let schedule = cfg.schedule();
    let ch = FlatChannel::new(f, cfg.channel.snr_db).in_module("channels")?;
    let mut rng = Rng::new(cfg.seed);
    let xs = pilots(cfg, &mut rng);
    let tr = train(Scheme::Direct, &ch, &xs, &mut rng, cfg.basis(), &schedule).in_module("estimators_flat")?;
    let g = invert_direct(&tr.averaged, cfg.model.q_inverse).in_module("estimators_flat")?;
    let vs_truth = inverse_vs_truth(&g, &f).in_module("nonlinearities")?;

    let mut sink = Sink::new("invert_direct");
    sink.trace("sq_error", tr.mse_trace.iter().copied().enumerate());
    sink.truth_curve("truth", &f);
    sink.model_curve("direct_estimate", &tr.averaged);
    sink.model_curve("inverse_estimate", &g);
    let inv: Vec<(f64, f64)> =
        grid(f.n).map(|y| f.invert(y).map(|x| (y, x))).collect::<dctchan::Result<_>>().in_module("nonlinearities")?;
    sink.curve("true_inverse", inv);
    sink.curve("composition", grid(f.n).map(|x| (x, g.predict_unchecked(f.eval_unchecked(x)))));

    let summary = json!({
        "experiment": cfg.experiment.name(),
        "config": config_echo(cfg),
        "derived": {
            "sigma": ch.sigma,
            "signal_power": ch.signal_power,
            "mu": schedule.mu,
            "t_kappa": schedule.t_kappa,
            "monotone_tolerance": flat::MONOTONE_TOLERANCE,
        },
        "metrics": {
            "direct_nmse": tr.nmse,
            "direct_estimate_nmse": tr.estimate_nmse,
            "inverse_nmse": vs_truth,
            "round_trip_nmse": flat::inverse_nmse(&g, &f),
        },
        "estimates": {
            "direct": tr.averaged.coeffs(),
            "inverse": g.coeffs(),
        },
    });
    Ok(sink.finish(summary))
}

fn mdir_run(cfg: &Config) -> Result<RunOutput, CliError> {
    let f = cfg.nonlinearity(&cfg.nonlinearity.kind);
    let filt = cfg.filter();
    let ch =
        HammersteinChannel::new(f, filt.clone(), cfg.channel.snr_db, cfg.channel.noise_mode).in_module("channels")?;
    let mut rng = Rng::new(cfg.seed);
    let xs = pilots(cfg, &mut rng);
    let received = ch.transmit(&xs, &mut rng).in_module("channels")?;
    let acfg = AlternateConfig {
        m: filt.order(),
        alpha: cfg.model.alpha,
        mode: cfg.mdir.mode,
        stop: cfg.mdir.stop_rule(),
        init_seed: cfg.mdir.init_seed.unwrap_or(cfg.seed),
    };
    let (res, start) = alternate_restarts(&xs, &received, cfg.basis(), &acfg, cfg.mdir.restarts).in_module("mdir")?;
    let best = &res.best;
    let points = cfg.mdir.freq_points;

    let mut sink = Sink::new("mdir");
    for rec in &res.history {
        sink.trace("mse", [(rec.iteration, rec.mse)]);
        sink.trace("lambda_min", [(rec.iteration, rec.lambda_min)]);
        sink.trace("delta_f", [(rec.iteration, rec.delta_f)]);
    }
    let truth: Vec<f64> = grid(f.n).map(|x| f.eval_unchecked(x)).collect();
    let est = best.model.tabulate();
    let gain = mdir::align_gain(&est, &truth);
    sink.curve("nonlinearity_truth", truth.iter().enumerate().map(|(x, &v)| (x as f64, v)));
    sink.curve("nonlinearity_estimate", est.iter().enumerate().map(|(x, &v)| (x as f64, gain * v)));

    let omega = omega_grid(points);
    let true_mag: Vec<f64> = omega.iter().map(|&w| filt.response_at(w).norm()).collect();
    let est_mag = mdir::equalizer_magnitude(&best.a_hat, &best.b_hat, points);
    let mag_gain = mdir::align_gain(&est_mag, &true_mag);
    sink.curve("magnitude_truth", omega.iter().copied().zip(true_mag.iter().copied()));
    sink.curve("magnitude_estimate", omega.iter().copied().zip(est_mag.iter().map(|m| mag_gain * m)));
    let true_resp = filt.freq_response(points).in_module("channels")?;
    let est_resp = FreqResponse::of(&best.a_hat, &best.b_hat, points).in_module("channels")?;
    let shift = 20.0 * mag_gain.abs().log10();
    sink.curve("magnitude_db_truth", omega.iter().copied().zip(true_resp.magnitude_db.iter().copied()));
    sink.curve("magnitude_db_estimate", omega.iter().copied().zip(est_resp.magnitude_db.iter().map(|d| d + shift)));
    sink.curve("phase_truth", omega.iter().copied().zip(true_resp.phase.iter().copied()));
    sink.curve("phase_estimate", omega.iter().copied().zip(est_resp.phase.iter().copied()));

    let max_rise =
        res.history.windows(2).filter(|w| w[0].mse > 0.0).map(|w| w[1].mse / w[0].mse - 1.0).fold(0.0f64, f64::max);
    let lambda_min = res.history.iter().find(|r| r.iteration == best.iteration).map_or(f64::NAN, |r| r.lambda_min);

    let summary = json!({
        "experiment": cfg.experiment.name(),
        "config": config_echo(cfg),
        "derived": {
            "m": filt.order(),
            "sigma": ch.sigma,
            "signal_power": ch.signal_power,
            "init_seed": acfg.init_seed,
            "chosen_start": start,
            "chosen_init_seed": acfg.init_seed.wrapping_add(start as u64),
        },
        "metrics": {
            "nonlinearity_nmse": nonlinearity_nmse(&best.model, &f),
            "response_nmse": response_nmse(&best.a_hat, &best.b_hat, &filt, points),
            "mse": best.mse,
            "lambda_min": lambda_min,
            "best_iteration": best.iteration,
            "outer_iterations": res.history.len(),
            "converged": res.converged,
            "max_mse_step_rise": max_rise,
            "nonlinearity_gain": gain,
        },
        "estimates": {
            "a_hat": best.a_hat,
            "b_hat": best.b_hat,
            "f": best.model.coeffs(),
        },
    });
    Ok(sink.finish(summary))
}

struct CellOutput {
    summary: Value,
    rows: Vec<SweepRow>,
    trace: Vec<Record>,
}

/// Seed of realization `rep` of a cell: the cell seed itself for `rep = 0`,
/// otherwise the `rep`-th output of a generator seeded with it. Seeds spaced
/// by the generator's increment would replay each other's streams.
pub fn realization_seed(cell_seed: u64, rep: usize) -> u64 {
    let mut g = Rng::new(cell_seed);
    (0..rep).fold(cell_seed, |_, _| g.next_u64())
}

fn sweep_cell(cfg: &Config, index: usize, kind: &str, snr: Snr) -> Result<CellOutput, CliError> {
    let f = cfg.nonlinearity(kind);
    let schedule = cfg.schedule();
    let seed = cfg.seed.wrapping_add(index as u64);
    let ch = FlatChannel::new(f, snr).in_module("channels")?;
    let mut rows = Vec::new();
    let mut trace = Vec::new();
    let mut results = serde_json::Map::new();
    let repeats = cfg.sweep.repeats;
    for &scheme in &cfg.sweep.schemes {
        let (mut nmse, mut est, mut conv, mut clipped) = (0.0, 0.0, 0.0, 0.0);
        for rep in 0..repeats {
            // Every scheme sees the same pilots and noise.
            let mut rng = Rng::new(realization_seed(seed, rep));
            let xs = pilots(cfg, &mut rng);
            let tr = train(scheme, &ch, &xs, &mut rng, cfg.basis(), &schedule).in_module("estimators_flat")?;
            if rep == 0 {
                let run = format!("cell{index}_{}", scheme.name());
                trace.extend(tr.mse_trace.iter().enumerate().map(|(i, &v)| Record {
                    run: run.clone(),
                    index: i,
                    metric: "sq_error",
                    value: v,
                }));
            }
            nmse += tr.nmse;
            est += tr.estimate_nmse;
            conv += tr.samples_to_converge as f64;
            clipped += tr.clipped as f64;
        }
        let r = repeats as f64;
        let (nmse, est, conv, clipped) = (nmse / r, est / r, conv / r, clipped / r);
        results.insert(
            scheme.name().to_string(),
            json!({
                "nmse": nmse,
                "estimate_nmse": est,
                "samples_to_converge": conv,
                "clipped": clipped,
            }),
        );
        rows.push(SweepRow {
            cell: index,
            nonlinearity: kind.to_string(),
            snr_db: snr.to_string(),
            seed,
            scheme: scheme.name(),
            sigma: ch.sigma,
            nmse,
            estimate_nmse: est,
            samples_to_converge: conv,
            clipped,
            t_kappa: schedule.t_kappa,
        });
    }
    let summary = json!({
        "cell": index,
        "nonlinearity": f.shape,
        "snr_db": snr,
        "seed": seed,
        "sigma": ch.sigma,
        "signal_power": ch.signal_power,
        "results": results,
    });
    Ok(CellOutput { summary, rows, trace })
}

/// One flat-channel cell per (nonlinearity, SNR) pair, seeded `seed + index`
/// and run in parallel; results are gathered in cell order. With
/// `repeats > 1` each cell reports means over independent realizations and
/// traces the first one.
pub fn sweep(cfg: &Config) -> Result<RunOutput, CliError> {
    let cells: Vec<(String, Snr)> =
        cfg.sweep.nonlinearities.iter().flat_map(|k| cfg.sweep.snr_list.iter().map(move |&s| (k.clone(), s))).collect();
    let outs: Vec<CellOutput> = cells
        .par_iter()
        .enumerate()
        .map(|(i, (kind, snr))| sweep_cell(cfg, i, kind, *snr))
        .collect::<Result<_, _>>()?;

    let schedule = cfg.schedule();
    let mut rows = Vec::new();
    let mut trace = Vec::new();
    let mut summaries = Vec::new();
    for o in outs {
        rows.extend(o.rows);
        trace.extend(o.trace);
        summaries.push(o.summary);
    }
    let summary = json!({
        "experiment": Experiment::SnrSweep.name(),
        "config": config_echo(cfg),
        "derived": {
            "mu": schedule.mu,
            "t_kappa": schedule.t_kappa,
            "averaging_start": schedule.averaging_start(),
            "cells": summaries.len(),
        },
        "cells": summaries,
    });
    Ok(RunOutput { summary, trace, curves: Vec::new(), sweep: Some(rows) })
}
