//! Covariance functions: the expression tree, its parameters, and evaluation.
//!
//! Leaves are the squared exponential (ARD), the second-order polynomial
//! lift kernel, the SDOF oscillator kernel, and sigmoid switches
//! σ(z)σ(z′) on any (optionally transformed) column. Change-point kernels
//! are ordinary sums of products of these leaves, e.g.
//! `sw(z)·K₁ + swneg(z)·K₂`.

mod eval;
mod expr;
mod params;
mod sigmoid;

pub use eval::{
    eval_diag, eval_gram, eval_kernel, gram_with_grad, kernel_grad, sdof_covariance, switch_value, KernelMatrix,
};
pub use expr::{defaults, ColumnBinding, FeatureTransform, KernelBuilder, KernelExpr, KernelExprKind, Scaling};
pub use params::{ParamEntry, ParamVector, Transform};
pub use sigmoid::sigmoid;
