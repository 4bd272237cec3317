//! DCT-basis adaptive modeling of nonlinear communication channels.
//!
//! A scalar nonlinearity on the domain `[0, N-1]` is modeled by a truncated
//! cosine expansion whose weights are trained with LMS (the "DCT neuron").
//! The crate provides the transform machinery, the neuron, seeded channel
//! simulators, flat-fading direct/inverse estimators and the joint MDIR
//! equalizer plus nonlinearity estimator for Hammerstein channels.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod dct;
pub mod error;
pub mod flat;
pub mod mdir;
pub mod neuron;
pub mod nonlinearity;
pub mod numerics;

pub use channel::{FlatChannel, FreqResponse, HammersteinChannel, LinearFilter, NoiseMode, Snr};
pub use dct::{DctSpectrum, SampledFn};
pub use error::{Error, Result};
pub use flat::{Scheme, TrainRun};
pub use mdir::{AlternateConfig, AlternateResult, MdirState, Mode, StopRule};
pub use neuron::{DctModel, FeatureBasis, Indexing, InputLaw, LmsSchedule};
pub use nonlinearity::{NonlinearFn, Shape};
pub use numerics::{Mat, Rng};
