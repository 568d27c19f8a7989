//! Multi-fidelity Gaussian process calibration and decision analysis.
//!
//! This crate fits a cheap low-fidelity simulator and an expensive
//! high-fidelity one into a single joint Gaussian process model,
//!
//! ```text
//!     y_H(x) = u * y_L(x) + b(x),      Y_H = y_H(x) + eps,
//! ```
//!
//! where `y_L` is a GP emulator of the low-fidelity code, `b` is an
//! independent GP discrepancy, `u` is a scalar scaling parameter and
//! `eps` is iid Gaussian observation noise on the high-fidelity data.
//! Estimation is modular: the emulator is fit to low-fidelity data
//! alone, then `u` and the discrepancy are estimated from the
//! high-fidelity data with the emulator held fixed. Uncertainty in `u`
//! comes from leave-one-out re-estimation rather than a full Bayes
//! treatment, which keeps the pipeline cheap enough to rerun inside
//! simulation studies.
//!
//! On top of the fitted model, [`decision`] characterises the
//! distribution of the optimal operating point: sample `u`, sample
//! response surfaces from the joint posterior, minimise a scalar
//! objective over fresh candidate designs, and summarise where the
//! minimisers land.
//!
//! Modules build bottom-up:
//!
//! * [`seed`], [`design`]: reproducible RNG streams, Latin hypercube
//!   designs and multivariate normal draws.
//! * [`kernel`], [`gp`]: separable squared-exponential kernels and
//!   maximum-likelihood GP fitting.
//! * [`calibrate`]: the scaling estimate, its leave-one-out spread and
//!   a smoothed resampler for downstream simulation.
//! * [`predict`]: the joint two-fidelity model and closed-form
//!   posterior prediction of the high-fidelity response.
//! * [`decision`]: optimal-input simulation and comparison studies.
//! * [`bench`]: synthetic scenarios with known ground truth.

pub mod bench;
pub mod calibrate;
pub mod decision;
pub mod design;
mod error;
pub mod gp;
pub mod kernel;
mod linalg;
mod optim;
pub mod predict;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};
