//! Exact Gaussian-process regression with a zero prior mean.
//!
//! The observation noise σ_n² is held outside the kernel tree and added to
//! the training covariance here, together with the shared jitter policy
//! from [`crate::linalg::Cholesky::with_jitter`].

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Inputs};
use crate::error::{Error, Result};
use crate::kernels::{eval_diag, eval_gram, eval_kernel, gram_with_grad, KernelExpr, ParamEntry, ParamVector, Transform};
use crate::linalg::{dot, frobenius_inner, mat_t_vec, Cholesky};
use crate::optim::{minimize, FitReport, Objective, OptConfig};

/// Name of the noise entry when it is appended to a kernel parameter vector.
pub const NOISE_NAME: &str = "noise.variance";

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_7;

/// Default noise entry: log-transformed, bounded to `[1e-6, 10]`.
pub fn default_noise(value: f64) -> Result<ParamEntry> {
    ParamEntry::positive(NOISE_NAME, value, 1e-6_f64.min(value), 10f64.max(value))
}

/// Noise-free entry (σ_n² fixed at zero; only jitter regularizes).
pub fn no_noise() -> ParamEntry {
    ParamEntry { name: NOISE_NAME.into(), value: 0.0, lower: 0.0, upper: 0.0, transform: Transform::Identity }
}

fn noisy_gram(expr: &KernelExpr, params: &ParamVector, noise_var: f64, x: &Inputs) -> Result<Mat<f64>> {
    let mut k = eval_gram(expr, params, x)?.matrix;
    for i in 0..k.nrows() {
        k[(i, i)] += noise_var;
    }
    Ok(k)
}

fn check_data(x: &Inputs, y: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(Error::data("no training targets"));
    }
    if x.nrows() != y.len() {
        return Err(Error::data(format!("{} input rows but {} targets", x.nrows(), y.len())));
    }
    Ok(())
}

fn nlml_from(chol: &Cholesky, y: &[f64], alpha: &[f64]) -> f64 {
    0.5 * dot(y, alpha) + chol.half_log_det() + y.len() as f64 * HALF_LOG_2PI
}

/// Negative log marginal likelihood ½yᵀα + Σ log L_ii + (N/2) log 2π.
pub fn nlml(expr: &KernelExpr, params: &ParamVector, noise_var: f64, x: &Inputs, y: &[f64]) -> Result<f64> {
    check_data(x, y)?;
    let chol = Cholesky::with_jitter(&noisy_gram(expr, params, noise_var, x)?)?;
    let alpha = chol.solve_vec(y);
    Ok(nlml_from(&chol, y, &alpha))
}

/// NLML and its gradient over the free kernel parameters followed by the
/// noise entry (when free), all in transformed coordinates.
pub fn nlml_grad(expr: &KernelExpr, params: &ParamVector, noise: &ParamEntry, x: &Inputs, y: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_data(x, y)?;
    let (mut k, dks) = gram_with_grad(expr, params, x)?;
    for i in 0..k.nrows() {
        k[(i, i)] += noise.value;
    }
    let chol = Cholesky::with_jitter(&k)?;
    let alpha = chol.solve_vec(y);
    let value = nlml_from(&chol, y, &alpha);
    // W = K_y⁻¹ − ααᵀ; ∂NLML/∂θ = ½ tr(W ∂K_y/∂θ)
    let mut w = chol.inverse();
    let n = y.len();
    for j in 0..n {
        for i in 0..n {
            w[(i, j)] -= alpha[i] * alpha[j];
        }
    }
    let mut grad: Vec<f64> = dks.iter().map(|dk| 0.5 * frobenius_inner(&w, dk)).collect();
    if noise.is_free() {
        let trace: f64 = (0..n).map(|i| w[(i, i)]).sum();
        grad.push(0.5 * trace * noise.transform.jacobian(noise.value));
    }
    Ok((value, grad))
}

/// Kernel parameters with the noise entry appended, as optimized jointly.
pub fn joint_params(params: &ParamVector, noise: &ParamEntry) -> Result<ParamVector> {
    let mut joint = params.clone();
    joint.push(noise.clone())?;
    Ok(joint)
}

/// Split a joint vector produced by [`joint_params`].
pub fn split_joint(joint: &ParamVector) -> (ParamVector, ParamEntry) {
    let n = joint.len() - 1;
    let kernel = ParamVector::from_entries(joint.entries()[..n].to_vec()).expect("entries were valid in the joint vector");
    (kernel, joint.entry(n).clone())
}

/// NLML as an [`Objective`] over the joint free coordinates.
pub struct NlmlObjective<'a> {
    pub expr: &'a KernelExpr,
    pub joint: ParamVector,
    pub inputs: &'a Inputs,
    pub targets: &'a [f64],
}

impl<'a> NlmlObjective<'a> {
    pub fn new(expr: &'a KernelExpr, params: &ParamVector, noise: &ParamEntry, data: &'a Dataset) -> Result<Self> {
        expr.validate(params, Some(&data.inputs))?;
        Ok(Self { expr, joint: joint_params(params, noise)?, inputs: &data.inputs, targets: &data.targets })
    }

    fn unpack(&self, x: &[f64]) -> Result<(ParamVector, ParamEntry)> {
        Ok(split_joint(&self.joint.with_free_values(x)?))
    }
}

impl Objective for NlmlObjective<'_> {
    fn value(&self, x: &[f64]) -> Result<f64> {
        let (p, noise) = self.unpack(x)?;
        nlml(self.expr, &p, noise.value, self.inputs, self.targets)
    }

    fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (p, noise) = self.unpack(x)?;
        nlml_grad(self.expr, &p, &noise, self.inputs, self.targets)
    }
}

/// Per-point predictive moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub mean: Vec<f64>,
    pub var_latent: Vec<f64>,
    pub var_noisy: Vec<f64>,
}

impl Posterior {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// A conditioned GP: immutable after construction.
#[derive(Debug, Clone)]
pub struct GpState {
    pub expr: KernelExpr,
    pub params: ParamVector,
    pub noise: ParamEntry,
    pub train: Dataset,
    chol: Cholesky,
    alpha: Vec<f64>,
}

impl GpState {
    /// Condition on `train` at fixed hyperparameters.
    pub fn new(expr: KernelExpr, params: ParamVector, noise: ParamEntry, train: Dataset) -> Result<Self> {
        expr.validate(&params, Some(&train.inputs))?;
        let k = noisy_gram(&expr, &params, noise.value, &train.inputs)?;
        let chol = Cholesky::with_jitter(&k)?;
        let alpha = chol.solve_vec(&train.targets);
        Ok(Self { expr, params, noise, train, chol, alpha })
    }

    pub fn cholesky(&self) -> &Cholesky {
        &self.chol
    }

    /// α = (K + σ_n²I)⁻¹ y.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn nlml(&self) -> f64 {
        nlml_from(&self.chol, &self.train.targets, &self.alpha)
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise.value
    }

    pub fn predict(&self, xstar: &Inputs) -> Result<Posterior> {
        predict(self, xstar)
    }
}

/// Posterior mean K_*ᵀα and variance K_** − vᵀv with v = L⁻¹K_*.
pub fn predict(state: &GpState, xstar: &Inputs) -> Result<Posterior> {
    let ks = eval_kernel(&state.expr, &state.params, &state.train.inputs, xstar)?.matrix;
    let mean = mat_t_vec(&ks, &state.alpha);
    let kss = eval_diag(&state.expr, &state.params, xstar)?;
    let v = state.chol.solve_lower(&ks);
    let var_latent: Vec<f64> = (0..xstar.nrows())
        .map(|j| {
            let col = v.col(j);
            let vv: f64 = (0..col.nrows()).map(|i| col[i] * col[i]).sum();
            (kss[j] - vv).max(0.0)
        })
        .collect();
    let var_noisy = var_latent.iter().map(|v| v + state.noise.value).collect();
    Ok(Posterior { mean, var_latent, var_noisy })
}

/// `n_draws` prior samples at `xstar`, one vector per draw.
pub fn sample_prior(expr: &KernelExpr, params: &ParamVector, xstar: &Inputs, n_draws: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let k = eval_gram(expr, params, xstar)?.matrix;
    let chol = Cholesky::with_jitter(&k)?;
    let n = xstar.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = Mat::<f64>::zeros(n, n_draws);
    for d in 0..n_draws {
        for i in 0..n {
            z[(i, d)] = StandardNormal.sample(&mut rng);
        }
    }
    let l = chol.l();
    let draws = l * &z;
    Ok((0..n_draws).map(|d| (0..n).map(|i| draws[(i, d)]).collect()).collect())
}

/// Optimize hyperparameters on `fit_data`, then condition on `train`.
///
/// The two datasets are usually the same; passing a subset as `fit_data`
/// keeps the optimizer's O(N³) iterations cheap on long series.
pub fn fit_gp(
    expr: &KernelExpr,
    params: &ParamVector,
    noise: &ParamEntry,
    fit_data: &Dataset,
    train: &Dataset,
    config: &OptConfig,
) -> Result<(GpState, FitReport)> {
    let objective = NlmlObjective::new(expr, params, noise, fit_data)?;
    let report = minimize(&objective, &objective.joint, config)?;
    let (p, n) = split_joint(&report.params);
    let state = GpState::new(expr.clone(), p, n, train.clone())?;
    Ok((state, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{ColumnBinding, KernelBuilder};

    fn se_model(var: f64, ls: f64) -> (KernelExpr, ParamVector) {
        let mut b = KernelBuilder::new();
        let k = b.se(vec![ColumnBinding::new("x")], var, &[ls]).unwrap();
        (k, b.finish())
    }

    fn data(xs: &[f64], ys: &[f64]) -> Dataset {
        Dataset::new(Inputs::from_column("x", xs.to_vec()).unwrap(), ys.to_vec()).unwrap()
    }

    #[test]
    fn single_point_nlml_values() {
        let (k, p) = se_model(1.0, 1.0);
        let d0 = data(&[0.0], &[0.0]);
        let v0 = nlml(&k, &p, 0.0, &d0.inputs, &d0.targets).unwrap();
        assert!((v0 - 0.918_938_53).abs() < 1e-7);
        let d1 = data(&[0.0], &[1.0]);
        let v1 = nlml(&k, &p, 0.0, &d1.inputs, &d1.targets).unwrap();
        assert!((v1 - 1.418_938_53).abs() < 1e-7);
    }

    #[test]
    fn zero_targets_leave_only_complexity() {
        let (k, p) = se_model(1.3, 0.8);
        let d = data(&[0.0, 0.5], &[0.0, 0.0]);
        let v = nlml(&k, &p, 0.1, &d.inputs, &d.targets).unwrap();
        let chol = Cholesky::with_jitter(&noisy_gram(&k, &p, 0.1, &d.inputs).unwrap()).unwrap();
        let expected = chol.half_log_det() + (2.0 * std::f64::consts::PI).ln();
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn noise_gradient_for_zero_targets_is_complexity_term() {
        let (k, p) = se_model(1.0, 0.7);
        let d = data(&[0.0, 0.4, 1.0], &[0.0, 0.0, 0.0]);
        let noise = default_noise(0.2).unwrap();
        let (_, g) = nlml_grad(&k, &p, &noise, &d.inputs, &d.targets).unwrap();
        let chol = Cholesky::with_jitter(&noisy_gram(&k, &p, 0.2, &d.inputs).unwrap()).unwrap();
        let inv = chol.inverse();
        let tr: f64 = (0..3).map(|i| inv[(i, i)]).sum();
        let expected = 0.5 * tr * 0.2;
        assert!((g.last().unwrap() - expected).abs() < 1e-12);
        assert!(*g.last().unwrap() > 0.0);
    }

    #[test]
    fn one_point_posterior_closed_form() {
        let (k, p) = se_model(1.5, 0.9);
        let d = data(&[0.2], &[0.7]);
        let noise = default_noise(0.3).unwrap();
        let st = GpState::new(k, p, noise, d).unwrap();
        let xs = Inputs::from_column("x", vec![-0.4, 0.2, 1.3]).unwrap();
        let post = st.predict(&xs).unwrap();
        let kk = 1.5;
        let jit = st.cholesky().jitter();
        for (j, &x) in [-0.4, 0.2, 1.3].iter().enumerate() {
            let kstar = 1.5 * (-0.5 * (x - 0.2_f64).powi(2) / 0.81).exp();
            let denom = kk + 0.3 + jit;
            assert!((post.mean[j] - kstar * 0.7 / denom).abs() < 1e-12);
            assert!((post.var_latent[j] - (1.5 - kstar * kstar / denom)).abs() < 1e-12);
            assert!((post.var_noisy[j] - post.var_latent[j] - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let (k, p) = se_model(2.0, 0.5);
        let d = data(&[0.0, 0.3, 0.9], &[1.0, -0.5, 0.4]);
        let st = GpState::new(k, p, default_noise(0.01).unwrap(), d).unwrap();
        let post = st.predict(&Inputs::from_column("x", vec![100.0]).unwrap()).unwrap();
        assert!(post.mean[0].abs() < 1e-12);
        assert!((post.var_latent[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn column_mismatch_in_predict() {
        let (k, p) = se_model(1.0, 1.0);
        let st = GpState::new(k, p, default_noise(0.1).unwrap(), data(&[0.0], &[1.0])).unwrap();
        let bad = Inputs::from_column("z", vec![0.0]).unwrap();
        assert!(matches!(st.predict(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn prior_draws_are_seeded() {
        let (k, p) = se_model(1.0, 0.5);
        let xs = Inputs::from_column("x", (0..10).map(|i| i as f64 * 0.1).collect()).unwrap();
        let a = sample_prior(&k, &p, &xs, 3, 9).unwrap();
        let b = sample_prior(&k, &p, &xs, 3, 9).unwrap();
        let c = sample_prior(&k, &p, &xs, 3, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
