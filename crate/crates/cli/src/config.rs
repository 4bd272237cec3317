//! Experiment configuration: a TOML file with a handful of sections, every
//! field defaulted. The resolved configuration is echoed into
//! `summary.json`, so a run's inputs are always explicit in its outputs.

use std::path::PathBuf;

use dctchan::channel::LinearFilter;
use dctchan::mdir::{Mode, StopRule};
use dctchan::nonlinearity::{DEFAULT_COMPANDER_MU, DEFAULT_SIGMOID_SLOPE, DEFAULT_SINE_FRACTION};
use dctchan::{Error as CoreError, FeatureBasis, Indexing, LmsSchedule, NoiseMode, NonlinearFn, Scheme, Shape, Snr};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    TransformDemo,
    FitNeuron,
    FlatDirect,
    FlatInverse,
    InvertDirect,
    Mdir,
    SnrSweep,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::TransformDemo => "transform_demo",
            Experiment::FitNeuron => "fit_neuron",
            Experiment::FlatDirect => "flat_direct",
            Experiment::FlatInverse => "flat_inverse",
            Experiment::InvertDirect => "invert_direct",
            Experiment::Mdir => "mdir",
            Experiment::SnrSweep => "snr_sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotLaw {
    /// Continuous uniform on `[0, N-1]`.
    Uniform,
    /// Uniform over the integer grid.
    Grid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub experiment: Experiment,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub domain: DomainConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub nonlinearity: NonlinearityConfig,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub mdir: MdirConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_seed() -> u64 {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainConfig {
    pub n: usize,
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig { n: 128 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub q: usize,
    pub q_inverse: usize,
    pub indexing: Indexing,
    pub alpha: f64,
    pub kappa: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { q: 6, q_inverse: 32, indexing: Indexing::Standard, alpha: 1e-2, kappa: 1e-2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NonlinearityConfig {
    pub kind: String,
    pub slope: f64,
    pub mu: f64,
    pub fraction: f64,
}

impl Default for NonlinearityConfig {
    fn default() -> Self {
        NonlinearityConfig {
            kind: "compander".into(),
            slope: DEFAULT_SIGMOID_SLOPE,
            mu: DEFAULT_COMPANDER_MU,
            fraction: DEFAULT_SINE_FRACTION,
        }
    }
}

impl NonlinearityConfig {
    /// Shape named `kind` with this section's parameters.
    pub fn shape(&self, kind: &str) -> Result<Shape, CoreError> {
        Ok(match kind.parse::<Shape>()? {
            Shape::Sigmoid { .. } => Shape::Sigmoid { slope: self.slope },
            Shape::Compander { .. } => Shape::Compander { mu: self.mu },
            Shape::Sine { .. } => Shape::Sine { fraction: self.fraction },
            other => other,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub snr_db: Snr,
    /// Feedforward taps of the Hammerstein filter.
    pub a: Vec<f64>,
    /// Feedback taps, `b[0] = 1`.
    pub b: Vec<f64>,
    pub noise_mode: NoiseMode,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        let filt = LinearFilter::default_iir();
        ChannelConfig {
            snr_db: Snr::Db(80.0),
            a: filt.a().to_vec(),
            b: filt.b().to_vec(),
            noise_mode: NoiseMode::PostFilter,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub samples: usize,
    pub pilots: PilotLaw,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig { samples: 5000, pilots: PilotLaw::Uniform }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MdirConfig {
    pub mode: Mode,
    pub max_outer_iters: usize,
    pub mse_threshold: f64,
    pub rel_tol: f64,
    pub patience: usize,
    /// Seed of the random initial DCT coefficients; defaults to `seed`.
    pub init_seed: Option<u64>,
    /// Random starts tried; the one with the lowest error power is kept.
    pub restarts: usize,
    pub freq_points: usize,
}

impl Default for MdirConfig {
    fn default() -> Self {
        let stop = StopRule::default();
        MdirConfig {
            mode: Mode::General,
            max_outer_iters: stop.max_outer_iters,
            mse_threshold: stop.mse_threshold,
            rel_tol: stop.rel_tol,
            patience: stop.patience,
            init_seed: None,
            restarts: 4,
            freq_points: 256,
        }
    }
}

impl MdirConfig {
    pub fn stop_rule(&self) -> StopRule {
        StopRule {
            mse_threshold: self.mse_threshold,
            max_outer_iters: self.max_outer_iters,
            rel_tol: self.rel_tol,
            patience: self.patience,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub nonlinearities: Vec<String>,
    pub snr_list: Vec<Snr>,
    pub schemes: Vec<Scheme>,
    /// Independent realizations averaged per cell.
    pub repeats: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            nonlinearities: vec!["compander".into(), "sine".into(), "square".into()],
            snr_list: [-10.0, 0.0, 10.0, 30.0].into_iter().map(Snr::Db).collect(),
            schemes: vec![Scheme::Direct, Scheme::Inverse],
            repeats: 1,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Also write a gnuplot script next to the CSV files.
    pub gnuplot: bool,
}

/// A validation failure tied to a config key.
struct Invalid {
    section: Option<&'static str>,
    key: &'static str,
    msg: String,
}

fn invalid(section: Option<&'static str>, key: &'static str, msg: impl Into<String>) -> Invalid {
    Invalid { section, key, msg: msg.into() }
}

/// Line (1-based) of `key = …` inside `[section]`, if the key is present.
fn locate(src: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, line) in src.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            current = Some(t.trim_matches(|c| c == '[' || c == ']').trim().to_string());
            continue;
        }
        let in_section = match (section, &current) {
            (None, None) => true,
            (Some(s), Some(c)) => s == c,
            _ => false,
        };
        if in_section {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

impl Config {
    /// Parses and validates a config; `path` only labels error messages.
    pub fn parse(src: &str, path: &str) -> Result<Config, CliError> {
        Self::parse_with(src, path, false)
    }

    /// As [`Config::parse`], but treats the file as an `snr_sweep`.
    pub fn parse_sweep(src: &str, path: &str) -> Result<Config, CliError> {
        Self::parse_with(src, path, true)
    }

    fn parse_with(src: &str, path: &str, sweep: bool) -> Result<Config, CliError> {
        let mut cfg: Config = toml::from_str(src).map_err(|e| CliError::Config(format!("{path}: {e}")))?;
        if sweep {
            cfg.experiment = Experiment::SnrSweep;
        }
        if cfg.mdir.init_seed.is_none() {
            cfg.mdir.init_seed = Some(cfg.seed);
        }
        cfg.validate().map_err(|v| {
            let key = match v.section {
                Some(s) => format!("{s}.{}", v.key),
                None => v.key.to_string(),
            };
            let loc = match locate(src, v.section, v.key) {
                Some(line) => format!("{path}:{line}"),
                None => format!("{path} (default value)"),
            };
            CliError::Config(format!("{loc}: {key}: {}", v.msg))
        })?;
        Ok(cfg)
    }

    /// Replaces the seed, keeping a derived MDIR init seed in step.
    pub fn override_seed(&mut self, seed: u64) {
        if self.mdir.init_seed == Some(self.seed) {
            self.mdir.init_seed = Some(seed);
        }
        self.seed = seed;
    }

    pub fn basis(&self) -> FeatureBasis {
        FeatureBasis::new(self.domain.n, self.model.q, self.model.indexing).expect("validated")
    }

    pub fn schedule(&self) -> LmsSchedule {
        LmsSchedule::new(self.model.alpha, self.model.kappa).expect("validated")
    }

    pub fn nonlinearity(&self, kind: &str) -> NonlinearFn {
        NonlinearFn::new(self.nonlinearity.shape(kind).expect("validated"), self.domain.n).expect("validated")
    }

    pub fn filter(&self) -> LinearFilter {
        LinearFilter::new(self.channel.a.clone(), self.channel.b.clone()).expect("validated")
    }

    fn validate(&self) -> Result<(), Invalid> {
        let n = self.domain.n;
        if n < 2 {
            return Err(invalid(Some("domain"), "n", format!("must be >= 2, got {n}")));
        }
        let m = &self.model;
        if m.q == 0 || m.q > n {
            return Err(invalid(Some("model"), "q", format!("must lie in 1..={n}, got {}", m.q)));
        }
        if m.q_inverse == 0 || m.q_inverse > n {
            return Err(invalid(Some("model"), "q_inverse", format!("must lie in 1..={n}, got {}", m.q_inverse)));
        }
        if !(m.alpha > 0.0 && m.alpha < 1.0) {
            return Err(invalid(Some("model"), "alpha", format!("must lie in (0, 1), got {}", m.alpha)));
        }
        if !(m.kappa > 0.0 && m.kappa < 1.0) {
            return Err(invalid(Some("model"), "kappa", format!("must lie in (0, 1), got {}", m.kappa)));
        }
        if self.training.samples < 10 * m.q {
            return Err(invalid(
                Some("training"),
                "samples",
                format!("must be at least 10·q = {}, got {}", 10 * m.q, self.training.samples),
            ));
        }
        let kinds: Vec<&str> = if self.experiment == Experiment::SnrSweep {
            self.sweep.nonlinearities.iter().map(String::as_str).collect()
        } else {
            vec![self.nonlinearity.kind.as_str()]
        };
        for kind in kinds {
            let (section, key) = if self.experiment == Experiment::SnrSweep {
                (Some("sweep"), "nonlinearities")
            } else {
                (Some("nonlinearity"), "kind")
            };
            let shape = self.nonlinearity.shape(kind).map_err(|e| invalid(section, key, e.to_string()))?;
            NonlinearFn::new(shape, n).map_err(|e| invalid(Some("nonlinearity"), "kind", e.to_string()))?;
        }
        if self.experiment == Experiment::InvertDirect {
            let shape = self.nonlinearity.shape(&self.nonlinearity.kind).expect("checked above");
            if !shape.is_monotone() {
                return Err(invalid(
                    Some("nonlinearity"),
                    "fraction",
                    "invert_direct needs a monotone nonlinearity (sine fraction <= 1)",
                ));
            }
        }
        if self.experiment == Experiment::Mdir {
            LinearFilter::new(self.channel.a.clone(), self.channel.b.clone())
                .map_err(|e| invalid(Some("channel"), "b", e.to_string()))?;
            let order = self.channel.a.len();
            if self.training.samples < dctchan::mdir::SAMPLES_PER_TAP * order * m.q {
                return Err(invalid(
                    Some("training"),
                    "samples",
                    format!(
                        "mdir needs at least 50·M·q = {} samples, got {}",
                        dctchan::mdir::SAMPLES_PER_TAP * order * m.q,
                        self.training.samples
                    ),
                ));
            }
            let md = &self.mdir;
            if md.max_outer_iters == 0 {
                return Err(invalid(Some("mdir"), "max_outer_iters", "must be at least 1"));
            }
            if md.restarts == 0 {
                return Err(invalid(Some("mdir"), "restarts", "must be at least 1"));
            }
            if md.patience == 0 {
                return Err(invalid(Some("mdir"), "patience", "must be at least 1"));
            }
            if !(md.rel_tol >= 0.0) {
                return Err(invalid(Some("mdir"), "rel_tol", "must be non-negative"));
            }
            if !(md.mse_threshold >= 0.0) {
                return Err(invalid(Some("mdir"), "mse_threshold", "must be non-negative"));
            }
            if md.freq_points < 2 {
                return Err(invalid(Some("mdir"), "freq_points", "must be at least 2"));
            }
        }
        if self.experiment == Experiment::SnrSweep {
            if self.sweep.nonlinearities.is_empty() {
                return Err(invalid(Some("sweep"), "nonlinearities", "must not be empty"));
            }
            if self.sweep.snr_list.is_empty() {
                return Err(invalid(Some("sweep"), "snr_list", "must not be empty"));
            }
            if self.sweep.schemes.is_empty() {
                return Err(invalid(Some("sweep"), "schemes", "must not be empty"));
            }
            if self.sweep.repeats == 0 {
                return Err(invalid(Some("sweep"), "repeats", "must be at least 1"));
            }
        }
        Ok(())
    }
}
