//! Result files. All CSV output is tidy (one value per row) with fixed
//! headers; numbers are written with a locale-free shortest round-trip form.

use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::error::CliError;

pub const TRACE_HEADER: [&str; 4] = ["run", "index", "metric", "value"];
pub const CURVES_HEADER: [&str; 4] = ["run", "curve", "x", "value"];
pub const SWEEP_HEADER: [&str; 11] = [
    "cell",
    "nonlinearity",
    "snr_db",
    "seed",
    "scheme",
    "sigma",
    "nmse",
    "estimate_nmse",
    "samples_to_converge",
    "clipped",
    "t_kappa",
];

/// One row of `trace.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub run: String,
    pub index: usize,
    pub metric: &'static str,
    pub value: f64,
}

/// One row of `curves.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub run: String,
    pub curve: &'static str,
    pub x: f64,
    pub value: f64,
}

/// One row of `sweep.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: usize,
    pub nonlinearity: String,
    pub snr_db: String,
    pub seed: u64,
    pub scheme: &'static str,
    pub sigma: f64,
    pub nmse: f64,
    pub estimate_nmse: f64,
    pub samples_to_converge: f64,
    pub clipped: f64,
    pub t_kappa: f64,
}

/// Everything one invocation writes.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: Value,
    pub trace: Vec<Record>,
    pub curves: Vec<CurvePoint>,
    pub sweep: Option<Vec<SweepRow>>,
}

/// Plain decimal in the common range, exponent form outside it.
pub fn fmt_num(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Io { path: path.display().to_string(), source: e.into() }
}

fn write_csv<R>(path: &Path, header: &[&str], rows: &[R], fields: impl Fn(&R) -> Vec<String>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(fields(r)).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes `summary.json`, `trace.csv`, `curves.csv`, `sweep.csv` (sweeps
/// only) and, when asked, `plot.gp` into `dir`.
pub fn write_all(dir: &Path, out: &RunOutput, gnuplot: bool) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let path = dir.join("summary.json");
    let mut json = serde_json::to_string_pretty(&out.summary).expect("summary is plain JSON");
    json.push('\n');
    fs::write(&path, json).map_err(io_err(&path))?;

    let path = dir.join("trace.csv");
    write_csv(&path, &TRACE_HEADER, &out.trace, |r| {
        vec![r.run.clone(), r.index.to_string(), r.metric.to_string(), fmt_num(r.value)]
    })?;

    let path = dir.join("curves.csv");
    write_csv(&path, &CURVES_HEADER, &out.curves, |c| {
        vec![c.run.clone(), c.curve.to_string(), fmt_num(c.x), fmt_num(c.value)]
    })?;

    if let Some(rows) = &out.sweep {
        let path = dir.join("sweep.csv");
        write_csv(&path, &SWEEP_HEADER, rows, |s| {
            vec![
                s.cell.to_string(),
                s.nonlinearity.clone(),
                s.snr_db.clone(),
                s.seed.to_string(),
                s.scheme.to_string(),
                fmt_num(s.sigma),
                fmt_num(s.nmse),
                fmt_num(s.estimate_nmse),
                fmt_num(s.samples_to_converge),
                fmt_num(s.clipped),
                fmt_num(s.t_kappa),
            ]
        })?;
    }

    if gnuplot {
        let path = dir.join("plot.gp");
        fs::write(&path, gnuplot_script(out)).map_err(io_err(&path))?;
    }
    Ok(())
}

/// Curve names in first-appearance order.
fn curve_names(out: &RunOutput) -> Vec<(String, &'static str)> {
    let mut names: Vec<(String, &'static str)> = Vec::new();
    for c in &out.curves {
        if !names.iter().any(|(r, n)| *r == c.run && *n == c.curve) {
            names.push((c.run.clone(), c.curve));
        }
    }
    names
}

/// One panel per curve, filtered out of the tidy file with awk.
pub fn gnuplot_script(out: &RunOutput) -> String {
    let mut s = String::from("set datafile separator ','\nset key left top\nset grid\n");
    for (run, curve) in curve_names(out) {
        s.push_str(&format!(
            "set title '{run}: {curve}'\nplot \"< awk -F, '$1==\\\"{run}\\\" && $2==\\\"{curve}\\\"' curves.csv\" using 3:4 with lines title '{curve}'\npause -1\n"
        ));
    }
    if out.sweep.is_some() {
        s.push_str(
            "set title 'sweep'\nset logscale y\nplot 'sweep.csv' every ::1 using 3:7 with points title 'nmse'\npause -1\n",
        );
    }
    s
}
