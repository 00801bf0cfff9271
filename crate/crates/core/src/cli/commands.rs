//! Subcommand bodies. Each returns the process exit code on success.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use super::config::{Likelihood, RunConfig, SynthKind};
use super::csvio::{read_table, write_table, Table};
use super::dsl::parse_kernel_spec;
use super::model::{build_kernel, fit_model, fit_subset, noise_inputs, FitSettings, Model, TargetScaling};
use crate::data::{Dataset, Inputs};
use crate::error::{Error, Result};
use crate::gp::{GpState, NlmlObjective};
use crate::kernels::{switch_value, KernelExpr};
use crate::metrics::{score, trivial_moments};
use crate::optim::{fd_check, Objective};
use crate::synth::{flight_column, gen_changepoint, gen_oscillator, gen_regime};
use crate::vhgp::{initialize, BoundObjective, NoiseModel};

pub const TRAIN_COLUMN_DEFAULT: &str = "train";
const REGION_PREFIX: &str = "region_";
const GRADCHECK_TOL: f64 = 1e-3;
const PREDICT_BLOCK: usize = 2048;

/// Settings resolved from the config file and command-line flags.
pub struct Invocation {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub seed_overridden: bool,
    pub model: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub curves: bool,
    pub kind: Option<SynthKind>,
}

impl Invocation {
    fn data_path(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .or(self.cfg.data.path.as_deref())
            .ok_or_else(|| Error::config("no data file: set data.path or pass --data"))
    }

    fn model_path(&self) -> PathBuf {
        self.model.clone().or_else(|| self.cfg.predict.model.clone()).unwrap_or_else(|| self.out.join("model.json"))
    }

    fn output(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out)?;
        Ok(self.out.join(name))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn is_meta_column(name: &str, cfg: &RunConfig) -> bool {
    name == cfg.data.train_column || name.starts_with(REGION_PREFIX) || cfg.data.exclude.iter().any(|e| e == name)
}

/// Training and held-out row indices of a table.
fn split_rows(table: &Table, cfg: &RunConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = table.nrows();
    if let Ok(flag) = table.column(&cfg.data.train_column) {
        let (train, test): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| flag[i] != 0.0);
        return Ok((train, test));
    }
    if let Some(frac) = cfg.data.train_frac {
        if !(frac > 0.0 && frac <= 1.0) {
            return Err(Error::config(format!("train_frac must lie in (0, 1], got {frac}")));
        }
        let k = ((frac * n as f64).round() as usize).clamp(1, n);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut train = index::sample(&mut rng, n, k).into_vec();
        train.sort_unstable();
        let mut keep = vec![false; n];
        train.iter().for_each(|&i| keep[i] = true);
        return Ok((train, (0..n).filter(|&i| !keep[i]).collect()));
    }
    if let Some(k) = cfg.data.decimate {
        if k == 0 {
            return Err(Error::config("decimate must be at least 1"));
        }
        return Ok((0..n).partition(|&i| i % k == 0));
    }
    Ok(((0..n).collect(), Vec::new()))
}

fn input_dataset(table: &Table, cfg: &RunConfig) -> Result<Dataset> {
    let exclude: Vec<&str> = table.headers.iter().map(String::as_str).filter(|h| is_meta_column(h, cfg)).collect();
    table.dataset(&cfg.data.target, &exclude)
}

fn model_inputs(table: &Table, model: &Model) -> Result<Inputs> {
    let names = model.train().inputs.names();
    let cols = names.iter().map(|n| table.column(n).map(<[f64]>::to_vec)).collect::<Result<Vec<_>>>()?;
    Inputs::new(names.to_vec(), cols)
}

pub fn fit(inv: &Invocation) -> Result<i32> {
    let cfg = &inv.cfg;
    let start = Instant::now();
    let table = read_table(inv.data_path()?)?;
    let (train_rows, _) = split_rows(&table, cfg)?;
    if train_rows.len() < 2 {
        return Err(Error::data("fewer than two training rows"));
    }
    let train = input_dataset(&table.select_rows(&train_rows), cfg)?;
    let settings = FitSettings { optimizer: &cfg.optimizer, fit: &cfg.fit, vhgp: &cfg.vhgp, seed: cfg.seed };
    let (mut model, mut outcome) = fit_model(&cfg.model, &train, &settings)?;
    model.target = cfg.data.target.clone();
    let duration = outcome.take_duration();
    model.save(&inv.output("model.json")?)?;
    write_json(&inv.output("fit_report.json")?, &outcome)?;
    let meta = json!({
        "command": "fit",
        "version": crate::VERSION,
        "seed": cfg.seed,
        "fit_seconds": duration,
        "total_seconds": start.elapsed().as_secs_f64(),
    });
    write_json(&inv.output("run_meta.json")?, &meta)?;
    let objective = outcome.vhgp.as_ref().map_or(outcome.gp.best_value, |v| v.best_value);
    println!(
        "fit: {} on {} rows ({} used for hyperparameters), objective {objective:.6}",
        outcome.kernel, outcome.n_train, outcome.n_fit
    );
    Ok(0)
}

pub fn predict(inv: &Invocation) -> Result<i32> {
    let model = Model::load(&inv.model_path())?;
    let path = inv.data.as_deref().or(inv.cfg.predict.data.as_deref()).map_or_else(|| inv.data_path().map(Path::to_path_buf), |p| Ok(p.to_path_buf()))?;
    let mut table = read_table(&path)?;
    let post = model.predict_blocked(&model_inputs(&table, &model)?, PREDICT_BLOCK)?;
    table.push("mean", post.mean)?;
    table.push("std_latent", post.var_latent.iter().map(|v| v.max(0.0).sqrt()).collect())?;
    table.push("std_total", post.var_noisy.iter().map(|v| v.max(0.0).sqrt()).collect())?;
    let out = inv.output("predictions.csv")?;
    write_table(&out, &table)?;
    println!("predict: {} rows -> {}", table.nrows(), out.display());
    Ok(0)
}

/// Row indices (within `rows`) where each `region_*` column is non-zero.
fn regions(table: &Table, rows: &[usize]) -> BTreeMap<String, Vec<usize>> {
    let mut out = BTreeMap::new();
    for (h, col) in table.headers.iter().zip(&table.columns) {
        if let Some(name) = h.strip_prefix(REGION_PREFIX) {
            out.insert(name.to_string(), rows.iter().enumerate().filter(|(_, &r)| col[r] != 0.0).map(|(k, _)| k).collect());
        }
    }
    out
}

fn write_curves(inv: &Invocation, model: &Model) -> Result<()> {
    let params = model.params();
    let x = &model.train().inputs;
    let mut negated_tags = BTreeMap::new();
    model.expr().for_each_leaf(&mut |l| {
        if let KernelExpr::Sigmoid { tag, negated: true, .. } = l {
            negated_tags.insert(tag.clone(), ());
        }
    });
    for (tag, (g, l, binding)) in model.expr().switches() {
        let raw = x.column(&binding.column)?;
        let (lo, hi) = raw.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let n = 200;
        let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let (a, x0) = (params.value(g), params.value(l));
        let mut t = Table::new(vec![binding.column.clone()], vec![grid.clone()])?;
        t.push("feature", grid.iter().map(|&v| binding.apply(v)).collect())?;
        t.push("sigma", grid.iter().map(|&v| switch_value(&binding, a, x0, false, v)).collect())?;
        if negated_tags.contains_key(&tag) {
            t.push("sigma_neg", grid.iter().map(|&v| switch_value(&binding, a, x0, true, v)).collect())?;
        }
        write_table(&inv.output(&format!("switch_{tag}.csv"))?, &t)?;
    }
    Ok(())
}

pub fn evaluate(inv: &Invocation) -> Result<i32> {
    let cfg = &inv.cfg;
    let model = match (&inv.predictions, inv.model_path()) {
        (Some(_), p) if !p.exists() => None,
        (_, p) => Some(Model::load(&p)?),
    };
    let (y, mean, var, source, rows) = match &inv.predictions {
        Some(p) => {
            let t = read_table(p)?;
            let (_, mut test) = split_rows(&t, cfg)?;
            if t.index(&cfg.data.train_column).is_none() {
                test = (0..t.nrows()).collect();
            }
            let pick = |name: &str| -> Result<Vec<f64>> {
                let c = t.column(name)?;
                Ok(test.iter().map(|&i| c[i]).collect())
            };
            let var = pick("std_total")?.iter().map(|s| s * s).collect();
            (pick(&cfg.data.target)?, pick("mean")?, var, t, test)
        }
        None => {
            let model = model.as_ref().expect("loaded above");
            let t = read_table(inv.data_path()?)?;
            let (_, mut test) = split_rows(&t, cfg)?;
            if test.is_empty() {
                test = (0..t.nrows()).collect();
            }
            let sub = t.select_rows(&test);
            let post = model.predict_blocked(&model_inputs(&sub, model)?, PREDICT_BLOCK)?;
            (sub.column(&cfg.data.target)?.to_vec(), post.mean, post.var_noisy, t, test)
        }
    };
    let (m0, v0) = match &model {
        Some(m) => m.train_moments,
        None => {
            let t = read_table(inv.data_path()?)?;
            let (train, _) = split_rows(&t, cfg)?;
            let y = t.column(&cfg.data.target)?;
            trivial_moments(&train.iter().map(|&i| y[i]).collect::<Vec<_>>())
        }
    };
    let report = score(&y, &mean, &var, m0, v0, &regions(&source, &rows))?;
    write_json(&inv.output("score.json")?, &report)?;
    if inv.curves {
        let m = model.as_ref().ok_or_else(|| Error::config("--curves needs a model"))?;
        write_curves(inv, m)?;
    }
    println!("evaluate: n={} NMSE={:.4}% MSLL={:.6}", report.n, report.nmse, report.msll);
    for (name, r) in &report.regions {
        println!("  region {name}: n={} NMSE={:.4}% MSLL={:.6}", r.n, r.nmse, r.msll);
    }
    Ok(0)
}

fn train_flags(n: usize, cfg: &RunConfig) -> Result<Option<Vec<f64>>> {
    if cfg.data.train_frac.is_none() && cfg.data.decimate.is_none() {
        return Ok(None);
    }
    let dummy = Table::new(vec!["_".into()], vec![vec![0.0; n]])?;
    let (train, _) = split_rows(&dummy, cfg)?;
    let mut flags = vec![0.0; n];
    train.iter().for_each(|&i| flags[i] = 1.0);
    Ok(Some(flags))
}

fn dataset_table(d: &Dataset, target: &str) -> Result<Table> {
    let names = d.inputs.names().to_vec();
    let cols = (0..d.inputs.ncols()).map(|j| d.inputs.column_at(j).to_vec()).collect();
    let mut t = Table::new(names, cols)?;
    t.push(target, d.targets.clone())?;
    Ok(t)
}

pub fn synth(inv: &Invocation) -> Result<i32> {
    let mut s = inv.cfg.synth.clone();
    let kind = inv.kind.unwrap_or(s.kind);
    if inv.seed_overridden {
        s.regime.seed = inv.cfg.seed;
        s.oscillator.seed = inv.cfg.seed;
        s.changepoint.seed = inv.cfg.seed;
    }
    let target = inv.cfg.data.target.as_str();
    let train_col = inv.cfg.data.train_column.as_str();
    let (data, truth) = match kind {
        SynthKind::Regime => {
            let (d, tr) = gen_regime(&s.regime)?;
            let mut data = dataset_table(&d, target)?;
            if let Some(f) = train_flags(d.len(), &inv.cfg)? {
                data.push(train_col, f)?;
            }
            let truth = Table::new(
                vec!["lift".into(), "smooth".into(), "noiseless".into(), "noise_std".into()],
                vec![tr.lift, tr.smooth, tr.noiseless, tr.noise_std],
            )?;
            (data, truth)
        }
        SynthKind::Changepoint => {
            let (d, tr) = gen_changepoint(&s.changepoint)?;
            let mut data = dataset_table(&d, target)?;
            if let Some(f) = train_flags(d.len(), &inv.cfg)? {
                data.push(train_col, f)?;
            }
            let truth = Table::new(vec!["left".into(), "right".into(), "noiseless".into()], vec![tr.left, tr.right, tr.noiseless])?;
            (data, truth)
        }
        SynthKind::Oscillator => {
            let (d, tr) = gen_oscillator(&s.oscillator)?;
            let n = d.len();
            let mut data = dataset_table(&d, target)?;
            data.push(train_col, tr.train_mask.iter().map(|&b| f64::from(u8::from(b))).collect())?;
            for (k, &(a, b)) in tr.windows.iter().enumerate() {
                data.push(format!("{REGION_PREFIX}{}", k + 1), (0..n).map(|i| f64::from(u8::from(i >= a && i < b))).collect())?;
            }
            let mut truth = Table::new(vec!["quasi_static".into()], vec![tr.quasi_static])?;
            for (k, m) in tr.modes.into_iter().enumerate() {
                truth.push(format!("mode_{}", k + 1), m)?;
            }
            truth.push("dynamic", tr.dynamic)?;
            truth.push("gate", tr.gate)?;
            truth.push("noiseless", tr.noiseless)?;
            debug_assert!(data.index(&flight_column(0)).is_some());
            (data, truth)
        }
    };
    write_table(&inv.output("data.csv")?, &data)?;
    write_table(&inv.output("truth.csv")?, &truth)?;
    println!("synth: {} rows, columns {}", data.nrows(), data.headers.join(","));
    Ok(0)
}

pub fn sample(inv: &Invocation) -> Result<i32> {
    let cfg = &inv.cfg;
    let sc = &cfg.sample;
    if sc.points < 2 || sc.draws == 0 || !(sc.to > sc.from) {
        return Err(Error::config("sample needs points >= 2, draws >= 1 and to > from"));
    }
    let grid: Vec<f64> = (0..sc.points).map(|i| sc.from + (sc.to - sc.from) * i as f64 / (sc.points - 1) as f64).collect();
    let x = Inputs::from_column(&sc.column, grid.clone())?;
    let spec = parse_kernel_spec(&cfg.model.kernel, Some(x.names()))?;
    let (expr, params, _) = build_kernel(&spec, &x, &cfg.model)?;
    let draws = crate::gp::sample_prior(&expr, &params, &x, sc.draws, cfg.seed)?;
    let mut t = Table::new(vec![sc.column.clone()], vec![grid])?;
    for (k, d) in draws.into_iter().enumerate() {
        t.push(format!("draw_{}", k + 1), d)?;
    }
    let out = inv.output("draws.csv")?;
    write_table(&out, &t)?;
    println!("sample: {} draws of {} points -> {}", sc.draws, sc.points, out.display());
    Ok(0)
}

#[derive(Serialize)]
struct GradRow {
    name: String,
    analytic: f64,
    numeric: f64,
    rel_error: f64,
}

pub fn gradcheck(inv: &Invocation) -> Result<i32> {
    let cfg = &inv.cfg;
    let table = read_table(inv.data_path()?)?;
    let (train_rows, _) = split_rows(&table, cfg)?;
    let train = input_dataset(&table.select_rows(&train_rows), cfg)?;
    let spec = parse_kernel_spec(&cfg.model.kernel, Some(train.inputs.names()))?;
    let (expr, params, noise) = build_kernel(&spec, &train.inputs, &cfg.model)?;
    let scaling = TargetScaling::fit(&train.targets, cfg.model.standardize_targets)?;
    let data = Dataset::new(train.inputs.clone(), scaling.apply(&train.targets))?;
    let rows = fit_subset(&data, &expr, &cfg.fit, cfg.seed)?;
    let data = data.select_rows(&rows);
    let h = 1e-5;
    let (names, report) = match cfg.model.likelihood {
        Likelihood::Homoscedastic => {
            let obj = NlmlObjective::new(&expr, &params, &noise, &data)?;
            let x = obj.joint.free_values();
            (obj.joint.free_names(), fd_check(&obj as &dyn Objective, &x, h)?)
        }
        Likelihood::Heteroscedastic => {
            let pre = GpState::new(expr.clone(), params.clone(), noise.clone(), data.clone())?;
            let bindings = noise_inputs(&expr, &cfg.model, &data.inputs)?;
            let nm = NoiseModel::se(bindings, cfg.model.noise_gp.variance, cfg.model.noise_gp.lengthscale)?;
            let (nm, var) = initialize(&pre, nm, &cfg.vhgp)?;
            let obj = BoundObjective::new(&expr, &params, &nm, &var, &data, cfg.vhgp.fd_step)?;
            let x = obj.joint.free_values();
            (obj.joint.free_names(), fd_check(&obj as &dyn Objective, &x, h)?)
        }
    };
    println!("{:<40} {:>16} {:>16} {:>12}", "parameter", "analytic", "numeric", "rel_error");
    let mut rows = Vec::with_capacity(names.len());
    for (name, c) in names.iter().zip(&report.components) {
        println!("{name:<40} {:>16.8e} {:>16.8e} {:>12.3e}", c.analytic, c.numeric, c.rel_error);
        rows.push(GradRow { name: name.clone(), analytic: c.analytic, numeric: c.numeric, rel_error: c.rel_error });
    }
    let worst = names.get(report.worst).cloned().unwrap_or_default();
    write_json(
        &inv.output("gradcheck.json")?,
        &json!({ "n": data.len(), "step": h, "max_rel_error": report.max_rel_error, "worst": worst, "components": rows }),
    )?;
    if report.max_rel_error > GRADCHECK_TOL {
        eprintln!("error: gradient check failed: worst relative error {:.3e} at '{worst}' exceeds {GRADCHECK_TOL:e}", report.max_rel_error);
        return Ok(4);
    }
    println!("gradcheck: max relative error {:.3e} ({worst})", report.max_rel_error);
    Ok(0)
}
