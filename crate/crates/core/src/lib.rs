//! Gaussian-process regression with physically-informed change-point kernels.
//!
//! The crate is organised around a covariance expression tree
//! ([`kernels::KernelExpr`]) whose leaves include physics-derived kernels
//! (polynomial lift, SDOF oscillator) and sigmoid switches that phase them in
//! and out as a function of an input or an external variable. On top of that
//! sit exact GP training ([`gp`]), a variational heteroscedastic GP ([`vhgp`]),
//! a bounded multi-start quasi-Newton optimizer ([`optim`]), scoring
//! ([`metrics`]), synthetic regime-switching generators ([`synth`]) and the
//! `cpgp` command-line front end ([`cli`]).

pub mod cli;
pub mod data;
pub mod error;
pub mod gp;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod synth;
pub mod vhgp;

pub use data::{Dataset, Inputs};
pub use error::{Error, Result};

/// Library version recorded in model containers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
