//! From a kernel spec and training data to a fitted, serializable model.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{FitConfig, Likelihood, ModelConfig, ParamOverride, SubsetStrategy};
use super::dsl::{parse_kernel_spec, ColRef, KernelSpec, LeafSpec};
use crate::data::{mean, variance, Dataset, Inputs};
use crate::error::{Error, Result};
use crate::gp::{default_noise, fit_gp, GpState, Posterior, NOISE_NAME};
use crate::kernels::{defaults, ColumnBinding, KernelBuilder, KernelExpr, ParamEntry, ParamVector, Scaling};
use crate::optim::{FitReport, OptConfig};
use crate::vhgp::{fit_vhgp, HGPState, NoiseModel, VariationalState, VhgpConfig};

pub const FORMAT: &str = "cpgp-model";

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn range(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Expand a column reference into one or more input columns. A name with
/// no exact match selects every `name_*` column, in file order.
fn expand(c: &ColRef, x: &Inputs) -> Result<Vec<ColumnBinding>> {
    if x.column_index(&c.column).is_some() {
        return Ok(vec![ColumnBinding::with_transform(c.column.clone(), c.transform)]);
    }
    let prefix = format!("{}_", c.column);
    let group: Vec<ColumnBinding> = x
        .names()
        .iter()
        .filter(|n| n.starts_with(&prefix))
        .map(|n| ColumnBinding::with_transform(n.clone(), c.transform))
        .collect();
    if group.is_empty() {
        return Err(Error::config(format!("kernel input column '{}' not found", c.column)));
    }
    Ok(group)
}

fn single(c: &ColRef, x: &Inputs, kind: &str) -> Result<ColumnBinding> {
    let mut b = expand(c, x)?;
    if b.len() != 1 {
        return Err(Error::config(format!("{kind} needs a single column, '{}' names a group", c.column)));
    }
    Ok(b.remove(0))
}

fn standardized(b: ColumnBinding, x: &Inputs) -> Result<ColumnBinding> {
    let v = b.resolve(x)?;
    let sd = variance(&v).sqrt();
    Ok(ColumnBinding { scaling: Some(Scaling { shift: mean(&v), scale: if sd > 0.0 { sd } else { 1.0 } }), ..b })
}

struct Ctx<'a> {
    b: KernelBuilder,
    x: &'a Inputs,
    cfg: &'a ModelConfig,
    n_sdof: usize,
    sdof_seen: usize,
}

impl Ctx<'_> {
    fn node(&mut self, s: &KernelSpec) -> Result<KernelExpr> {
        match s {
            KernelSpec::Sum(c) => KernelExpr::sum(c.iter().map(|k| self.node(k)).collect::<Result<_>>()?),
            KernelSpec::Product(c) => KernelExpr::product(c.iter().map(|k| self.node(k)).collect::<Result<_>>()?),
            KernelSpec::Leaf(l) => self.leaf(l),
        }
    }

    fn leaf(&mut self, l: &LeafSpec) -> Result<KernelExpr> {
        let x = self.x;
        match l {
            LeafSpec::Se(cols) => {
                let mut inputs = Vec::new();
                for c in cols {
                    inputs.extend(expand(c, x)?);
                }
                let mut ls = Vec::with_capacity(inputs.len());
                if self.cfg.standardize_inputs {
                    inputs = inputs.into_iter().map(|b| standardized(b, x)).collect::<Result<_>>()?;
                    ls.resize(inputs.len(), 1.0);
                } else {
                    for b in &inputs {
                        let sd = variance(&b.resolve(x)?).sqrt();
                        ls.push(if sd > 0.0 { sd } else { 1.0 });
                    }
                }
                self.b.se(inputs, 1.0, &ls)
            }
            LeafSpec::Poly2(cols) => {
                let mut inputs = Vec::new();
                for c in cols {
                    inputs.extend(expand(c, x)?);
                }
                let mut sq = vec![0.0; x.nrows()];
                for b in &inputs {
                    for (s, v) in sq.iter_mut().zip(b.resolve(x)?) {
                        *s += v * v;
                    }
                }
                let scale = mean(&sq) + 1.0;
                self.b.poly2(inputs, 1.0 / (scale * scale), 1.0)
            }
            LeafSpec::Sdof(c) => {
                let input = single(c, x, "sdof")?;
                let t = input.resolve(x)?;
                let mut sorted = t.clone();
                sorted.sort_by(f64::total_cmp);
                let steps: Vec<f64> = sorted.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).collect();
                if steps.is_empty() {
                    return Err(Error::data(format!("sdof input '{}' has no distinct values", input.column)));
                }
                let nyquist = 0.5 / median(&steps);
                self.sdof_seen += 1;
                let wn = std::f64::consts::TAU * nyquist * self.sdof_seen as f64 / (self.n_sdof + 1) as f64;
                let zeta = 0.05;
                let k0 = 1.0 / self.n_sdof as f64;
                let expr = self.b.sdof(input, k0 * 4.0 * zeta * wn.powi(3), 1.0, zeta, wn)?;
                if let KernelExpr::Sdof { natural_freq, .. } = &expr {
                    let name = self.b.params().entry(*natural_freq).name.clone();
                    let span = sorted[sorted.len() - 1] - sorted[0];
                    let lo = (std::f64::consts::TAU / span.max(1e-12)).min(wn);
                    self.b.params_mut().update(&name, None, Some(lo), Some((std::f64::consts::TAU * 2.0 * nyquist).max(wn)))?;
                }
                Ok(expr)
            }
            LeafSpec::Switch { input, tag, negated } => {
                let binding = single(input, x, "sw")?;
                let z = binding.resolve(x)?;
                let (lo, hi) = range(&z);
                let width = if hi > lo { hi - lo } else { 1.0 };
                let a = (10.0 / width).clamp(defaults::SWITCH_GRADIENT.0, defaults::SWITCH_GRADIENT.1);
                let fresh = self.b.params().index_of(&format!("switch.{tag}.location")).is_none();
                let expr = self.b.switch(binding, tag, a, median(&z), *negated)?;
                if fresh && hi > lo {
                    self.b.params_mut().update(&format!("switch.{tag}.location"), None, Some(lo), Some(hi))?;
                }
                Ok(expr)
            }
        }
    }
}

/// Apply one override to an entry, clamping the old value into new bounds.
pub fn apply_override(entry: &mut ParamEntry, o: &ParamOverride) -> Result<()> {
    let lower = o.lower.unwrap_or(entry.lower);
    let upper = o.upper.unwrap_or(entry.upper);
    let value = o.value.unwrap_or(entry.value.clamp(lower.min(upper), upper.max(lower)));
    let (lower, upper) = if o.fixed { (value, value) } else { (lower, upper) };
    let updated = ParamEntry { value, lower, upper, ..entry.clone() };
    updated.validate()?;
    *entry = updated;
    Ok(())
}

/// Kernel tree and parameters with data-aware defaults, then config overrides.
/// Also returns the noise entry (`noise.variance` may be overridden too).
pub fn build_kernel(spec: &KernelSpec, x: &Inputs, cfg: &ModelConfig) -> Result<(KernelExpr, ParamVector, ParamEntry)> {
    let n_sdof = spec.leaves().iter().filter(|l| matches!(l, LeafSpec::Sdof(_))).count();
    let mut ctx = Ctx { b: KernelBuilder::new(), x, cfg, n_sdof, sdof_seen: 0 };
    let expr = ctx.node(spec)?;
    let mut params = ctx.b.finish();
    let mut noise = default_noise(cfg.noise_variance)?;
    for (name, o) in &cfg.params {
        if name == NOISE_NAME {
            apply_override(&mut noise, o)?;
            continue;
        }
        if params.index_of(name).is_none() {
            let known: Vec<&str> = params.entries().iter().map(|e| e.name.as_str()).collect();
            return Err(Error::config(format!("unknown parameter '{name}' (known: {})", known.join(", "))));
        }
        apply_override(params.entry_mut(name)?, o)?;
    }
    expr.validate(&params, Some(x))?;
    Ok((expr, params, noise))
}

/// Rows used to optimize hyperparameters.
pub fn fit_subset(train: &Dataset, expr: &KernelExpr, fit: &FitConfig, seed: u64) -> Result<Vec<usize>> {
    let n = train.len();
    if n <= fit.max_points || fit.subset == SubsetStrategy::None {
        return Ok((0..n).collect());
    }
    let has_sdof = {
        let mut found = false;
        expr.for_each_leaf(&mut |l| found |= matches!(l, KernelExpr::Sdof { .. }));
        found
    };
    let switch_input = expr.switches().into_values().next().map(|(_, _, b)| b);
    let strategy = match fit.subset {
        SubsetStrategy::Auto if has_sdof && switch_input.is_some() => SubsetStrategy::Edges,
        SubsetStrategy::Auto => SubsetStrategy::Random,
        s => s,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f17);
    if strategy == SubsetStrategy::Random {
        let mut idx = sample(&mut rng, n, fit.max_points).into_vec();
        idx.sort_unstable();
        return Ok(idx);
    }
    let z = switch_input
        .ok_or_else(|| Error::config("edge subset needs a switch in the kernel"))?
        .resolve(&train.inputs)?;
    let blocks = fit.blocks.max(1);
    let len = (fit.max_points / blocks).max(1);
    let mut blocked = vec![false; n];
    let mut chosen = BTreeSet::new();
    let slope: Vec<f64> = (0..n).map(|i| (z[(i + 1).min(n - 1)] - z[i.saturating_sub(1)]).abs()).collect();
    for _ in 0..blocks {
        let Some(c) = (0..n).filter(|&i| !blocked[i]).max_by(|&a, &b| slope[a].total_cmp(&slope[b]).then(b.cmp(&a))) else {
            break;
        };
        let start = c.saturating_sub(len / 2).min(n - len.min(n));
        chosen.extend(start..(start + len).min(n));
        for flag in blocked.iter_mut().take((c + len).min(n)).skip(c.saturating_sub(len)) {
            *flag = true;
        }
    }
    Ok(chosen.into_iter().collect())
}

/// Standardization of the target column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaling {
    pub mean: f64,
    pub std: f64,
}

impl TargetScaling {
    pub fn fit(y: &[f64], enabled: bool) -> Result<Self> {
        if !enabled {
            return Ok(Self { mean: 0.0, std: 1.0 });
        }
        let sd = variance(y).sqrt();
        if !(sd > 0.0) {
            return Err(Error::data("training targets are constant"));
        }
        Ok(Self { mean: mean(y), std: sd })
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v - self.mean) / self.std).collect()
    }

    pub fn invert(&self, p: Posterior) -> Posterior {
        let s2 = self.std * self.std;
        Posterior {
            mean: p.mean.iter().map(|m| m * self.std + self.mean).collect(),
            var_latent: p.var_latent.iter().map(|v| v * s2).collect(),
            var_noisy: p.var_noisy.iter().map(|v| v * s2).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Fitted {
    Gp(GpState),
    Vhgp(HGPState),
}

/// A fitted model in original target units.
#[derive(Debug, Clone)]
pub struct Model {
    pub kernel: String,
    pub target: String,
    pub scaling: TargetScaling,
    /// Mean and population variance of the raw training targets.
    pub train_moments: (f64, f64),
    pub fitted: Fitted,
}

/// Everything a fit produced besides the model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOutcome {
    pub kernel: String,
    pub likelihood: Likelihood,
    pub n_train: usize,
    pub n_fit: usize,
    pub gp: FitReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vhgp: Option<FitReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_trace: Option<Vec<f64>>,
}

impl FitOutcome {
    /// Wall-clock time across optimizers; zeroed in the deterministic report.
    pub fn take_duration(&mut self) -> f64 {
        let mut total = std::mem::take(&mut self.gp.duration_secs);
        if let Some(v) = &mut self.vhgp {
            total += std::mem::take(&mut v.duration_secs);
        }
        total
    }
}

/// Noise-GP inputs: configured columns, or the features of the signal's SE
/// and switch leaves. Always z-scored.
pub fn noise_inputs(expr: &KernelExpr, cfg: &ModelConfig, x: &Inputs) -> Result<Vec<ColumnBinding>> {
    let raw: Vec<ColumnBinding> = match &cfg.noise_gp.inputs {
        Some(cols) => cols.iter().map(|c| ColumnBinding::new(c.clone())).collect(),
        None => {
            let mut seen: Vec<ColumnBinding> = Vec::new();
            expr.for_each_leaf(&mut |l| {
                let bs: Vec<&ColumnBinding> = match l {
                    KernelExpr::Se { inputs, .. } => inputs.iter().collect(),
                    KernelExpr::Sigmoid { input, .. } => vec![input],
                    _ => Vec::new(),
                };
                for b in bs {
                    let plain = ColumnBinding::with_transform(b.column.clone(), b.transform);
                    if !seen.iter().any(|s| s.same_feature(&plain)) {
                        seen.push(plain);
                    }
                }
            });
            seen
        }
    };
    if raw.is_empty() {
        return Err(Error::config("heteroscedastic model needs noise-GP inputs (no SE or switch columns found)"));
    }
    raw.into_iter().map(|b| standardized(b, x)).collect()
}

/// Fit settings that do not live in the model section.
pub struct FitSettings<'a> {
    pub optimizer: &'a OptConfig,
    pub fit: &'a FitConfig,
    pub vhgp: &'a VhgpConfig,
    pub seed: u64,
}

/// Parse, build, optimize on a subset, then condition on all of `train`.
pub fn fit_model(cfg: &ModelConfig, train: &Dataset, settings: &FitSettings<'_>) -> Result<(Model, FitOutcome)> {
    if cfg.kernel.trim().is_empty() {
        return Err(Error::config("model.kernel is empty"));
    }
    let spec = parse_kernel_spec(&cfg.kernel, Some(train.inputs.names()))?;
    let (expr, params, noise) = build_kernel(&spec, &train.inputs, cfg)?;
    let scaling = TargetScaling::fit(&train.targets, cfg.standardize_targets)?;
    let data = Dataset::new(train.inputs.clone(), scaling.apply(&train.targets))?;
    let rows = fit_subset(&data, &expr, settings.fit, settings.seed)?;
    let fit_data = if rows.len() == data.len() { data.clone() } else { data.select_rows(&rows) };
    let opt = OptConfig { seed: settings.seed, ..settings.optimizer.clone() };
    let (gp, gp_report) = fit_gp(&expr, &params, &noise, &fit_data, &data, &opt)?;
    let mut outcome = FitOutcome {
        kernel: spec.to_string(),
        likelihood: cfg.likelihood,
        n_train: data.len(),
        n_fit: fit_data.len(),
        gp: gp_report,
        vhgp: None,
        bound_trace: None,
    };
    let fitted = match cfg.likelihood {
        Likelihood::Homoscedastic => Fitted::Gp(gp),
        Likelihood::Heteroscedastic => {
            let inputs = noise_inputs(&expr, cfg, &data.inputs)?;
            let nm = NoiseModel::se(inputs, cfg.noise_gp.variance, cfg.noise_gp.lengthscale)?;
            let (h, report) = fit_vhgp(&gp, nm, settings.vhgp)?;
            outcome.bound_trace = Some(crate::vhgp::bound_trace(&report));
            outcome.vhgp = Some(report);
            Fitted::Vhgp(h)
        }
    };
    let model = Model {
        kernel: spec.to_string(),
        target: String::new(),
        scaling,
        train_moments: (mean(&train.targets), variance(&train.targets)),
        fitted,
    };
    Ok((model, outcome))
}

impl Model {
    pub fn expr(&self) -> &KernelExpr {
        match &self.fitted {
            Fitted::Gp(g) => &g.expr,
            Fitted::Vhgp(h) => &h.expr,
        }
    }

    pub fn params(&self) -> &ParamVector {
        match &self.fitted {
            Fitted::Gp(g) => &g.params,
            Fitted::Vhgp(h) => &h.params,
        }
    }

    pub fn train(&self) -> &Dataset {
        match &self.fitted {
            Fitted::Gp(g) => &g.train,
            Fitted::Vhgp(h) => &h.train,
        }
    }

    /// Predictive moments in original target units.
    pub fn predict(&self, x: &Inputs) -> Result<Posterior> {
        let p = match &self.fitted {
            Fitted::Gp(g) => g.predict(x)?,
            Fitted::Vhgp(h) => h.predict(x)?,
        };
        Ok(self.scaling.invert(p))
    }

    /// Predict in row blocks to bound the size of the cross-covariance.
    pub fn predict_blocked(&self, x: &Inputs, block: usize) -> Result<Posterior> {
        let n = x.nrows();
        if n <= block {
            return self.predict(x);
        }
        let mut out = Posterior { mean: Vec::with_capacity(n), var_latent: Vec::with_capacity(n), var_noisy: Vec::with_capacity(n) };
        let mut start = 0;
        while start < n {
            let rows: Vec<usize> = (start..(start + block).min(n)).collect();
            let p = self.predict(&x.select_rows(&rows))?;
            out.mean.extend(p.mean);
            out.var_latent.extend(p.var_latent);
            out.var_noisy.extend(p.var_noisy);
            start += block;
        }
        Ok(out)
    }

    pub fn to_file(&self) -> ModelFile {
        let train = self.train();
        let (noise, het) = match &self.fitted {
            Fitted::Gp(g) => (Some(g.noise.clone()), None),
            Fitted::Vhgp(h) => (None, Some(HetBlock { noise_model: h.noise.clone(), variational: h.variational.clone() })),
        };
        ModelFile {
            format: FORMAT.into(),
            version: crate::VERSION.into(),
            kernel: self.kernel.clone(),
            target: self.target.clone(),
            scaling: self.scaling,
            train_moments: self.train_moments,
            expr: self.expr().clone(),
            params: self.params().clone(),
            noise,
            heteroscedastic: het,
            train: TrainBlock {
                columns: train.inputs.names().to_vec(),
                inputs: (0..train.inputs.ncols()).map(|j| train.inputs.column_at(j).to_vec()).collect(),
                targets: train.targets.clone(),
            },
        }
    }

    pub fn from_file(f: ModelFile) -> Result<Self> {
        if f.format != FORMAT {
            return Err(Error::config(format!("not a model file (format '{}')", f.format)));
        }
        let major = |v: &str| v.split('.').take(2).collect::<Vec<_>>().join(".");
        if major(&f.version) != major(crate::VERSION) {
            return Err(Error::config(format!("model written by version {}, this is {}", f.version, crate::VERSION)));
        }
        let train = Dataset::new(Inputs::new(f.train.columns, f.train.inputs)?, f.train.targets)?;
        let fitted = match (f.noise, f.heteroscedastic) {
            (Some(noise), None) => Fitted::Gp(GpState::new(f.expr, f.params, noise, train)?),
            (None, Some(h)) => Fitted::Vhgp(HGPState::new(f.expr, f.params, h.noise_model, h.variational, train)?),
            _ => return Err(Error::config("model file must hold exactly one of 'noise' and 'heteroscedastic'")),
        };
        Ok(Self { kernel: f.kernel, target: f.target, scaling: f.scaling, train_moments: f.train_moments, fitted })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file()).map_err(|e| Error::invalid(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let f: ModelFile = serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_file(f)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainBlock {
    pub columns: Vec<String>,
    /// Column-major raw inputs.
    pub inputs: Vec<Vec<f64>>,
    /// Standardized targets.
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HetBlock {
    pub noise_model: NoiseModel,
    pub variational: VariationalState,
}

/// On-disk model container.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: String,
    pub kernel: String,
    pub target: String,
    pub scaling: TargetScaling,
    pub train_moments: (f64, f64),
    pub expr: KernelExpr,
    pub params: ParamVector,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<ParamEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heteroscedastic: Option<HetBlock>,
    pub train: TrainBlock,
}
