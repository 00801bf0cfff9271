//! Variational heteroscedastic GP.
//!
//! The observation noise variance is e^{g(x)} with g a second GP that has a
//! linear mean and an SE covariance K_g. A Gaussian posterior
//! q(g) = N(μ, Σ) over the training values is fitted by maximizing the
//! marginalized variational bound
//!
//! F = log N(y | 0, K_f + R) − ¼ tr Σ − KL(q ‖ N(m, K_g)),  R = diag(e^{μ − diag(Σ)/2}).
//!
//! Σ is parameterized as (K_g⁻¹ + 2Λ)⁻¹ with positive Λ and the mean as
//! μ = m + K_g ν, so that neither form requires K_g⁻¹:
//! with S = (2Λ)^{½} and B = I + S K_g S,
//! Σ = K_g − K_g S B⁻¹ S K_g and KL = ½(tr B⁻¹ + νᵀK_gν − N + log|B|).

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Inputs};
use crate::error::{Error, Result};
use crate::gp::{GpState, Posterior};
use crate::kernels::{eval_diag, eval_gram, eval_kernel, gram_with_grad, ColumnBinding, KernelBuilder, KernelExpr, ParamEntry, ParamVector};
use crate::linalg::{dot, frobenius_inner, mat_t_vec, mat_vec, Cholesky};
use crate::optim::{minimize, FitReport, Objective, OptConfig};

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_7;
/// E[log χ²₁]: squared Gaussian residuals underestimate log σ² by this much.
const LOG_CHI2_BIAS: f64 = -1.270_362_845_461_478;
/// Var[log χ²₁] = π²/2.
const LOG_CHI2_VAR: f64 = 4.934_802_200_544_679;

pub const INTERCEPT: &str = "mean.intercept";

/// The log-noise process: SE covariance plus a linear mean over the same inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub expr: KernelExpr,
    pub inputs: Vec<ColumnBinding>,
    /// SE entries followed by the intercept and one slope per input.
    pub params: ParamVector,
}

impl NoiseModel {
    /// SE noise GP with variance in `[1e-3, 1e2]`, lengthscales in
    /// `[0.1, 10]` and a zero linear mean.
    pub fn se(inputs: Vec<ColumnBinding>, variance: f64, lengthscale: f64) -> Result<Self> {
        let mut b = KernelBuilder::new();
        let expr = b.se(inputs.clone(), variance, &vec![lengthscale; inputs.len()])?;
        let mut params = b.finish();
        let names: Vec<String> = params.entries().iter().map(|e| e.name.clone()).collect();
        for name in names {
            if name.contains(".lengthscale.") {
                params.update(&name, None, Some(0.1f64.min(lengthscale)), Some(10f64.max(lengthscale)))?;
            } else {
                params.update(&name, None, Some(1e-3f64.min(variance)), Some(1e2f64.max(variance)))?;
            }
        }
        params.push(ParamEntry::real(INTERCEPT, 0.0, -50.0, 50.0)?)?;
        for b in &inputs {
            params.push(ParamEntry::real(slope_name(b), 0.0, -20.0, 20.0)?)?;
        }
        Ok(Self { expr, inputs, params })
    }

    /// Index of the intercept; slopes follow it.
    fn mean_start(&self) -> Result<usize> {
        self.params.index_of(INTERCEPT).ok_or_else(|| Error::config("noise model has no mean intercept"))
    }

    /// Rows of the linear-mean design matrix: (1, x₁, …, x_D).
    fn design(&self, x: &Inputs) -> Result<Vec<Vec<f64>>> {
        let mut cols = vec![vec![1.0; x.nrows()]];
        for b in &self.inputs {
            cols.push(b.resolve(x)?);
        }
        Ok(cols)
    }

    pub fn mean(&self, params: &ParamVector, x: &Inputs) -> Result<Vec<f64>> {
        let start = self.mean_start()?;
        let cols = self.design(x)?;
        let mut m = vec![0.0; x.nrows()];
        for (k, col) in cols.iter().enumerate() {
            let c = params.value(start + k);
            for (mi, v) in m.iter_mut().zip(col) {
                *mi += c * v;
            }
        }
        Ok(m)
    }
}

fn slope_name(b: &ColumnBinding) -> String {
    format!("mean.slope.{b}")
}

/// Variational parameters of q(g) at the training inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationalState {
    /// μ = m + K_g ν.
    pub nu: Vec<f64>,
    /// Σ = (K_g⁻¹ + 2·diag(Λ))⁻¹; every entry positive.
    pub lambda: Vec<f64>,
}

impl VariationalState {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.nu.len() != n || self.lambda.len() != n {
            return Err(Error::invalid(format!("variational state sized for {} points, data has {n}", self.nu.len())));
        }
        if self.lambda.iter().any(|l| !(*l > 0.0 && l.is_finite())) || self.nu.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("variational Λ must be positive and ν finite"));
        }
        Ok(())
    }
}

/// Everything the bound and its gradient need.
struct Parts {
    f: f64,
    kg: Mat<f64>,
    mean: Vec<f64>,
    s: Vec<f64>,
    lb: Cholesky,
    v: Mat<f64>,
    sigma_diag: Vec<f64>,
    r: Vec<f64>,
    la: Cholesky,
    beta: Vec<f64>,
}

fn compute_parts(
    kf: Mat<f64>,
    noise: &NoiseModel,
    noise_params: &ParamVector,
    var: &VariationalState,
    data: &Dataset,
) -> Result<Parts> {
    let n = data.len();
    var.validate(n)?;
    let x = &data.inputs;
    let kg = eval_gram(&noise.expr, noise_params, x)?.matrix;
    let mean = noise.mean(noise_params, x)?;
    let kg_nu = mat_vec(&kg, &var.nu);
    let s: Vec<f64> = var.lambda.iter().map(|l| (2.0 * l).sqrt()).collect();
    let mut b = Mat::<f64>::zeros(n, n);
    let mut skg = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            b[(i, j)] = s[i] * kg[(i, j)] * s[j];
            skg[(i, j)] = s[i] * kg[(i, j)];
        }
        b[(j, j)] += 1.0;
    }
    let lb = Cholesky::with_jitter(&b)?;
    let v = lb.solve_lower(&skg);
    let sigma_diag: Vec<f64> = (0..n)
        .map(|i| {
            let col = v.col(i);
            let vv: f64 = (0..n).map(|k| col[k] * col[k]).sum();
            (kg[(i, i)] - vv).max(0.0)
        })
        .collect();
    let mu: Vec<f64> = mean.iter().zip(&kg_nu).map(|(m, k)| m + k).collect();
    let r: Vec<f64> = mu.iter().zip(&sigma_diag).map(|(m, sd)| (m - 0.5 * sd).exp()).collect();
    if r.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::Numerical { message: "noise variance overflowed".into(), jitter: 0.0 });
    }
    let mut a = kf;
    for i in 0..n {
        a[(i, i)] += r[i];
    }
    let la = Cholesky::with_jitter(&a)?;
    let beta = la.solve_vec(&data.targets);
    let log_lik = -0.5 * dot(&data.targets, &beta) - la.half_log_det() - n as f64 * HALF_LOG_2PI;
    let binv = lb.inverse();
    let tr_binv: f64 = (0..n).map(|i| binv[(i, i)]).sum();
    let kl = 0.5 * (tr_binv + dot(&var.nu, &kg_nu) - n as f64 + 2.0 * lb.half_log_det());
    let f = log_lik - 0.25 * sigma_diag.iter().sum::<f64>() - kl;
    Ok(Parts { f, kg, mean, s, lb, v, sigma_diag, r, la, beta })
}

/// Marginalized variational bound F at the given state.
pub fn mv_bound(
    expr: &KernelExpr,
    params: &ParamVector,
    noise: &NoiseModel,
    var: &VariationalState,
    data: &Dataset,
) -> Result<f64> {
    let kf = eval_gram(expr, params, &data.inputs)?.matrix;
    Ok(compute_parts(kf, noise, &noise.params, var, data)?.f)
}

/// A fitted heteroscedastic model with cached factorizations.
#[derive(Debug, Clone)]
pub struct HGPState {
    pub expr: KernelExpr,
    pub params: ParamVector,
    pub noise: NoiseModel,
    pub variational: VariationalState,
    pub train: Dataset,
    bound: f64,
    la: Cholesky,
    beta: Vec<f64>,
    lb: Cholesky,
    s: Vec<f64>,
    mu: Vec<f64>,
    sigma_diag: Vec<f64>,
}

impl HGPState {
    pub fn new(expr: KernelExpr, params: ParamVector, noise: NoiseModel, variational: VariationalState, train: Dataset) -> Result<Self> {
        expr.validate(&params, Some(&train.inputs))?;
        noise.expr.validate(&noise.params, Some(&train.inputs))?;
        let kf = eval_gram(&expr, &params, &train.inputs)?.matrix;
        let p = compute_parts(kf, &noise, &noise.params, &variational, &train)?;
        if !p.f.is_finite() {
            return Err(Error::Numerical { message: "variational bound is not finite".into(), jitter: 0.0 });
        }
        let kg_nu = mat_vec(&p.kg, &variational.nu);
        let mu = p.mean.iter().zip(&kg_nu).map(|(m, k)| m + k).collect();
        Ok(Self {
            expr,
            params,
            noise,
            variational,
            train,
            bound: p.f,
            la: p.la,
            beta: p.beta,
            lb: p.lb,
            s: p.s,
            mu,
            sigma_diag: p.sigma_diag,
        })
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// Posterior mean μ of the log-noise at the training inputs.
    pub fn log_noise_mean(&self) -> &[f64] {
        &self.mu
    }

    /// diag(Σ) at the training inputs.
    pub fn log_noise_var(&self) -> &[f64] {
        &self.sigma_diag
    }

    /// Pointwise noise variance e^{μ_i − Σ_ii/2} used in the bound.
    pub fn fitted_noise(&self) -> Vec<f64> {
        self.mu.iter().zip(&self.sigma_diag).map(|(m, s)| (m - 0.5 * s).exp()).collect()
    }

    /// Posterior mean and variance of g at new inputs.
    pub fn predict_log_noise(&self, xstar: &Inputs) -> Result<(Vec<f64>, Vec<f64>)> {
        let kgs = eval_kernel(&self.noise.expr, &self.noise.params, &self.train.inputs, xstar)?.matrix;
        let kgss = eval_diag(&self.noise.expr, &self.noise.params, xstar)?;
        let prior_mean = self.noise.mean(&self.noise.params, xstar)?;
        let shift = mat_t_vec(&kgs, &self.variational.nu);
        let mut skgs = kgs;
        for j in 0..skgs.ncols() {
            for i in 0..skgs.nrows() {
                skgs[(i, j)] *= self.s[i];
            }
        }
        let w = self.lb.solve_lower(&skgs);
        let mean = prior_mean.iter().zip(&shift).map(|(m, s)| m + s).collect();
        let var = (0..xstar.nrows())
            .map(|j| {
                let col = w.col(j);
                let ww: f64 = (0..col.nrows()).map(|i| col[i] * col[i]).sum();
                (kgss[j] - ww).max(0.0)
            })
            .collect();
        Ok((mean, var))
    }

    pub fn predict(&self, xstar: &Inputs) -> Result<Posterior> {
        predict_vhgp(self, xstar)
    }
}

/// Mean K_*ᵀ(K_f + R)⁻¹y; `var_noisy` adds E[e^{g_*}] = e^{μ_* + σ_*²/2} to
/// the latent variance.
pub fn predict_vhgp(state: &HGPState, xstar: &Inputs) -> Result<Posterior> {
    let ks = eval_kernel(&state.expr, &state.params, &state.train.inputs, xstar)?.matrix;
    let kss = eval_diag(&state.expr, &state.params, xstar)?;
    let mean = mat_t_vec(&ks, &state.beta);
    let v = state.la.solve_lower(&ks);
    let var_latent: Vec<f64> = (0..xstar.nrows())
        .map(|j| {
            let col = v.col(j);
            let vv: f64 = (0..col.nrows()).map(|i| col[i] * col[i]).sum();
            (kss[j] - vv).max(0.0)
        })
        .collect();
    let (gm, gv) = state.predict_log_noise(xstar)?;
    let var_noisy = var_latent.iter().zip(gm.iter().zip(&gv)).map(|(f, (m, s))| f + (m + 0.5 * s).exp()).collect();
    Ok(Posterior { mean, var_latent, var_noisy })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VhgpConfig {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Also adjust the signal kernel hyperparameters.
    pub learn_signal: bool,
    /// Also adjust the noise-GP SE hyperparameters (finite-difference gradient).
    pub learn_noise_kernel: bool,
    pub init_lambda: f64,
    /// Squared residuals are floored here before taking logs.
    pub residual_floor: f64,
    /// Relative central-difference step for the noise-GP SE hyperparameters.
    pub fd_step: f64,
}

impl Default for VhgpConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-4,
            learn_signal: true,
            learn_noise_kernel: true,
            init_lambda: 0.5,
            residual_floor: 1e-6,
            fd_step: 1e-5,
        }
    }
}

/// The bound over one flat vector: signal entries, noise-model entries,
/// ν, then Λ (log-transformed).
pub struct BoundObjective<'a> {
    pub expr: &'a KernelExpr,
    pub noise: &'a NoiseModel,
    pub data: &'a Dataset,
    pub joint: ParamVector,
    n_signal: usize,
    n_noise: usize,
    fd_step: f64,
}

impl<'a> BoundObjective<'a> {
    pub fn new(
        expr: &'a KernelExpr,
        params: &ParamVector,
        noise: &'a NoiseModel,
        var: &VariationalState,
        data: &'a Dataset,
        fd_step: f64,
    ) -> Result<Self> {
        let n = data.len();
        var.validate(n)?;
        let mut joint = params.clone();
        for e in noise.params.entries() {
            joint.push(ParamEntry { name: format!("noise.{}", e.name), ..e.clone() })?;
        }
        for (i, v) in var.nu.iter().enumerate() {
            joint.push(ParamEntry::real(format!("nu.{i}"), *v, -1e8, 1e8)?)?;
        }
        for (i, l) in var.lambda.iter().enumerate() {
            joint.push(ParamEntry::positive(format!("lambda.{i}"), *l, 1e-10f64.min(*l), 1e10f64.max(*l))?)?;
        }
        Ok(Self { expr, noise, data, joint, n_signal: params.len(), n_noise: noise.params.len(), fd_step })
    }

    pub fn unpack(&self, x: &[f64]) -> Result<(ParamVector, ParamVector, VariationalState)> {
        let full = self.joint.with_free_values(x)?;
        Ok(self.split(&full))
    }

    fn split(&self, full: &ParamVector) -> (ParamVector, ParamVector, VariationalState) {
        let e = full.entries();
        let (ns, ng) = (self.n_signal, self.n_noise);
        let n = self.data.len();
        let signal = ParamVector::from_entries(e[..ns].to_vec()).expect("valid signal entries");
        let noise = ParamVector::from_entries(
            e[ns..ns + ng]
                .iter()
                .map(|p| ParamEntry { name: p.name.trim_start_matches("noise.").to_string(), ..p.clone() })
                .collect(),
        )
        .expect("valid noise entries");
        let nu = e[ns + ng..ns + ng + n].iter().map(|p| p.value).collect();
        let lambda = e[ns + ng + n..].iter().map(|p| p.value).collect();
        (signal, noise, VariationalState { nu, lambda })
    }

    fn bound_at(&self, signal: &ParamVector, noise: &ParamVector, var: &VariationalState) -> Result<f64> {
        let kf = eval_gram(self.expr, signal, &self.data.inputs)?.matrix;
        Ok(compute_parts(kf, self.noise, noise, var, self.data)?.f)
    }

    /// F and its gradient over every joint entry (zero for fixed ones).
    fn bound_grad(&self, signal: &ParamVector, noise: &ParamVector, var: &VariationalState) -> Result<(f64, Vec<f64>)> {
        let n = self.data.len();
        let (kf, dks) = gram_with_grad(self.expr, signal, &self.data.inputs)?;
        let p = compute_parts(kf.clone(), self.noise, noise, var, self.data)?;
        let mut grad = vec![0.0; self.joint.len()];

        let ainv = p.la.inverse();
        let d: Vec<f64> = (0..n).map(|i| 0.5 * (p.beta[i] * p.beta[i] - ainv[(i, i)])).collect();
        let dr: Vec<f64> = d.iter().zip(&p.r).map(|(a, b)| a * b).collect();

        // signal: ½ tr((ββᵀ − A⁻¹) ∂K_f)
        let mut w = ainv;
        for j in 0..n {
            for i in 0..n {
                w[(i, j)] = p.beta[i] * p.beta[j] - w[(i, j)];
            }
        }
        for (slot, dk) in signal.free_indices().into_iter().zip(&dks) {
            grad[slot] = 0.5 * frobenius_inner(&w, dk);
        }

        // noise mean coefficients enter through μ only
        let ns = self.n_signal;
        let start = self.noise.mean_start()?;
        let design = self.noise.design(&self.data.inputs)?;
        for (k, col) in design.iter().enumerate() {
            let e = noise.entry(start + k);
            if e.is_free() {
                grad[ns + start + k] = dot(&dr, col) * e.transform.jacobian(e.value);
            }
        }
        // noise SE hyperparameters by central differences
        for idx in 0..start {
            let e = noise.entry(idx);
            if !e.is_free() {
                continue;
            }
            let t = e.transformed();
            let h = self.fd_step * t.abs().max(1.0);
            let (lo, hi) = e.transformed_bounds();
            let (tp, tm) = ((t + h).min(hi), (t - h).max(lo));
            let mut plus = noise.clone();
            plus.entry_mut(&e.name)?.set_transformed(tp);
            let mut minus = noise.clone();
            minus.entry_mut(&e.name)?.set_transformed(tm);
            let fp = compute_parts(kf.clone(), self.noise, &plus, var, self.data)?.f;
            let fm = compute_parts(kf.clone(), self.noise, &minus, var, self.data)?.f;
            grad[ns + idx] = (fp - fm) / (tp - tm);
        }

        // ν: K_g(d∘R − ν)
        let u: Vec<f64> = dr.iter().zip(&var.nu).map(|(a, b)| a - b).collect();
        let dnu = mat_vec(&p.kg, &u);
        let off = ns + self.n_noise;
        grad[off..off + n].copy_from_slice(&dnu);

        // log Λ: −2Λ_j Σ_i g_i Σ_ij² with g = Λ − ½d∘R − ¼
        let sigma = {
            let vtv = p.v.transpose() * &p.v;
            let mut s = p.kg.clone();
            for j in 0..n {
                for i in 0..n {
                    s[(i, j)] -= vtv[(i, j)];
                }
            }
            s
        };
        let g: Vec<f64> = (0..n).map(|i| var.lambda[i] - 0.5 * dr[i] - 0.25).collect();
        for j in 0..n {
            let col = sigma.col(j);
            let acc: f64 = (0..n).map(|i| g[i] * col[i] * col[i]).sum();
            grad[off + n + j] = -2.0 * var.lambda[j] * acc;
        }
        Ok((p.f, grad))
    }
}

impl Objective for BoundObjective<'_> {
    fn value(&self, x: &[f64]) -> Result<f64> {
        let (s, g, v) = self.unpack(x)?;
        Ok(-self.bound_at(&s, &g, &v)?)
    }

    fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (s, g, v) = self.unpack(x)?;
        let (f, grad) = self.bound_grad(&s, &g, &v)?;
        let free = self.joint.free_indices();
        Ok((-f, free.into_iter().map(|i| -grad[i]).collect()))
    }
}

/// Least squares for a handful of columns via the normal equations.
fn least_squares(cols: &[Vec<f64>], z: &[f64]) -> Result<Vec<f64>> {
    let p = cols.len();
    let mut g = Mat::<f64>::zeros(p, p);
    let mut rhs = vec![0.0; p];
    for a in 0..p {
        for b in 0..p {
            g[(a, b)] = dot(&cols[a], &cols[b]);
        }
        rhs[a] = dot(&cols[a], z);
    }
    Ok(Cholesky::with_jitter(&g)?.solve_vec(&rhs))
}

/// Initial state from a homoscedastic fit: log squared residuals, corrected
/// for the log-χ² bias, give a linear mean and a GP-smoothed ν.
pub fn initialize(pre: &GpState, mut noise: NoiseModel, config: &VhgpConfig) -> Result<(NoiseModel, VariationalState)> {
    let data = &pre.train;
    let post = pre.predict(&data.inputs)?;
    let z: Vec<f64> = data
        .targets
        .iter()
        .zip(&post.mean)
        .map(|(y, m)| ((y - m).powi(2)).max(config.residual_floor).ln() - LOG_CHI2_BIAS)
        .collect();
    let design = noise.design(&data.inputs)?;
    let coef = least_squares(&design, &z)?;
    let start = noise.mean_start()?;
    for (k, c) in coef.iter().enumerate() {
        let e = noise.params.entry(start + k);
        let name = e.name.clone();
        let v = c.clamp(e.lower, e.upper);
        noise.params.update(&name, Some(v), None, None)?;
    }
    let m = noise.mean(&noise.params, &data.inputs)?;
    let mut kg = eval_gram(&noise.expr, &noise.params, &data.inputs)?.matrix;
    for i in 0..data.len() {
        kg[(i, i)] += LOG_CHI2_VAR;
    }
    let resid: Vec<f64> = z.iter().zip(&m).map(|(a, b)| a - b).collect();
    let nu = Cholesky::with_jitter(&kg)?.solve_vec(&resid);
    Ok((noise, VariationalState { nu, lambda: vec![config.init_lambda; data.len()] }))
}

/// Fit the heteroscedastic model starting from a homoscedastic fit on the
/// same data. The returned report's objective traces are −F.
pub fn fit_vhgp(pre: &GpState, noise: NoiseModel, config: &VhgpConfig) -> Result<(HGPState, FitReport)> {
    if !(config.init_lambda > 0.0 && config.fd_step > 0.0 && config.grad_tol > 0.0) {
        return Err(Error::config("vhgp init_lambda, fd_step and grad_tol must be positive"));
    }
    let data = &pre.train;
    noise.expr.validate(&noise.params, Some(&data.inputs))?;
    let (noise, var) = initialize(pre, noise, config)?;
    let mut signal = pre.params.clone();
    if !config.learn_signal {
        freeze(&mut signal)?;
    }
    let mut noise_fit = noise.clone();
    if !config.learn_noise_kernel {
        let start = noise_fit.mean_start()?;
        for i in 0..start {
            let name = noise_fit.params.entry(i).name.clone();
            let v = noise_fit.params.value(i);
            noise_fit.params.update(&name, None, Some(v), Some(v))?;
        }
    }
    let objective = BoundObjective::new(&pre.expr, &signal, &noise_fit, &var, data, config.fd_step)?;
    let opt = OptConfig { restarts: 1, max_iter: config.max_iter, grad_tol: config.grad_tol, ..OptConfig::default() };
    let report = minimize(&objective, &objective.joint, &opt).map_err(|e| Error::Fit {
        iteration: 0,
        message: e.to_string(),
        trace: Vec::new(),
    })?;
    let trace: Vec<f64> = report.restarts[0].objective.iter().map(|v| -v).collect();
    if !report.best_value.is_finite() {
        return Err(Error::Fit { iteration: trace.len(), message: "bound became non-finite".into(), trace });
    }
    let (mut sig, noise_params, var) = objective.split(&report.params);
    restore_bounds(&mut sig, &pre.params)?;
    let mut fitted_noise = noise;
    for (i, e) in noise_params.entries().iter().enumerate() {
        let name = fitted_noise.params.entry(i).name.clone();
        fitted_noise.params.update(&name, Some(e.value), None, None)?;
    }
    let state = HGPState::new(pre.expr.clone(), sig, fitted_noise, var, data.clone())?;
    Ok((state, report))
}

fn freeze(p: &mut ParamVector) -> Result<()> {
    for i in 0..p.len() {
        let (name, v) = (p.entry(i).name.clone(), p.value(i));
        p.update(&name, None, Some(v), Some(v))?;
    }
    Ok(())
}

fn restore_bounds(p: &mut ParamVector, original: &ParamVector) -> Result<()> {
    for e in original.entries() {
        let v = p.get(&e.name).unwrap_or(e.value);
        *p.entry_mut(&e.name)? = ParamEntry { value: v, ..e.clone() };
    }
    Ok(())
}

/// Fitted bound sequence over accepted steps (F, not −F).
pub fn bound_trace(report: &FitReport) -> Vec<f64> {
    report.restarts[report.best_restart].objective.iter().map(|v| -v).collect()
}
