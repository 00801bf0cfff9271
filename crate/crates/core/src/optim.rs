//! Bounded multi-start quasi-Newton minimization.
//!
//! Each restart runs a projected L-BFGS iteration in the transformed
//! parameter space: variables pinned at a bound with the gradient pushing
//! outward are frozen for the step, the two-loop direction is computed on
//! the remaining coordinates, and trial points are projected back into the
//! box. Steps are accepted only under an Armijo decrease, so every restart
//! trajectory is monotone non-increasing.

use std::collections::VecDeque;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::ParamVector;

/// A smooth objective over a flat coordinate vector.
pub trait Objective {
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Adapts a pair of closures into an [`Objective`].
pub struct FnObjective<F, G> {
    pub f: F,
    pub g: G,
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&[f64]) -> Result<f64>,
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    fn value(&self, x: &[f64]) -> Result<f64> {
        (self.f)(x)
    }

    fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok(((self.f)(x)?, (self.g)(x)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptConfig {
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop when the projected gradient ∞-norm falls below this.
    pub grad_tol: f64,
    /// Stop after `stall_iters` consecutive steps with relative decrease below this.
    pub f_tol: f64,
    pub stall_iters: usize,
    pub memory: usize,
    pub max_line_search: usize,
    pub armijo: f64,
    pub seed: u64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iter: 200,
            grad_tol: 1e-5,
            f_tol: 1e-10,
            stall_iters: 3,
            memory: 10,
            max_line_search: 40,
            armijo: 1e-4,
            seed: 0,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::config("optimizer needs at least one restart"));
        }
        if !(self.grad_tol > 0.0 && self.f_tol > 0.0 && self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::config("optimizer tolerances must be positive"));
        }
        if self.memory == 0 || self.max_line_search == 0 {
            return Err(Error::config("optimizer memory and line-search budget must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub start: Vec<f64>,
    /// Objective at the start and after every accepted step.
    pub objective: Vec<f64>,
    pub final_x: Vec<f64>,
    pub converged: bool,
    pub evaluations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RestartTrace {
    pub fn best(&self) -> f64 {
        self.objective.last().copied().unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub best_value: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartTrace>,
    pub params: ParamVector,
    pub converged: bool,
    /// Free parameters that finished on a bound.
    pub active_bounds: Vec<String>,
    /// Wall-clock seconds; the only non-deterministic field.
    pub duration_secs: f64,
}

/// Minimize over the free entries of `params` in transformed space.
pub fn minimize(objective: &dyn Objective, params: &ParamVector, config: &OptConfig) -> Result<FitReport> {
    config.validate()?;
    let started = Instant::now();
    let x0 = params.free_values();
    let bounds = params.free_bounds();
    let starts = restart_points(&x0, &bounds, config);
    let mut restarts = Vec::with_capacity(starts.len());
    for start in starts {
        restarts.push(run_restart(objective, &start, &bounds, config));
    }
    let best_restart = restarts
        .iter()
        .enumerate()
        .filter(|(_, r)| r.error.is_none() && r.best().is_finite())
        .min_by(|a, b| a.1.best().total_cmp(&b.1.best()))
        .map(|(i, _)| i)
        .ok_or_else(|| {
            let msgs: Vec<String> = restarts.iter().filter_map(|r| r.error.clone()).collect();
            Error::Optimization(format!("no restart produced a finite objective: {}", msgs.join("; ")))
        })?;
    let best = &restarts[best_restart];
    let fitted = params.with_free_values(&best.final_x)?;
    let active_bounds = params
        .free_indices()
        .into_iter()
        .zip(&best.final_x)
        .filter(|(i, x)| {
            let (lo, hi) = params.entry(*i).transformed_bounds();
            at_bound(**x, lo, hi)
        })
        .map(|(i, _)| params.entry(i).name.clone())
        .collect();
    Ok(FitReport {
        best_value: best.best(),
        best_restart,
        converged: best.converged,
        params: fitted,
        active_bounds,
        restarts,
        duration_secs: started.elapsed().as_secs_f64(),
    })
}

fn at_bound(x: f64, lo: f64, hi: f64) -> bool {
    let tol = 1e-9 * (1.0 + x.abs());
    x <= lo + tol || x >= hi - tol
}

/// Restart 0 is the supplied point; the rest are uniform in the transformed box.
fn restart_points(x0: &[f64], bounds: &[(f64, f64)], config: &OptConfig) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = vec![x0.to_vec()];
    for _ in 1..config.restarts {
        let p = x0
            .iter()
            .zip(bounds)
            .map(|(&x, &(lo, hi))| {
                let span = 10.0 * x.abs().max(1.0);
                let lo = if lo.is_finite() { lo } else { x - span };
                let hi = if hi.is_finite() { hi } else { x + span };
                let u: f64 = rng.random();
                lo + u * (hi - lo)
            })
            .collect();
        out.push(p);
    }
    out
}

fn project(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

fn pinned(x: f64, g: f64, (lo, hi): (f64, f64)) -> bool {
    (x <= lo && g > 0.0) || (x >= hi && g < 0.0)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct History {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    cap: usize,
}

impl History {
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        let scale = dot(&s, &s).sqrt() * dot(&y, &y).sqrt();
        if !(sy > 1e-12 * scale) {
            return;
        }
        if self.pairs.len() == self.cap {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// Two-loop recursion: returns H·q with frozen coordinates masked out.
    fn apply(&self, q: &[f64], mask: &[bool]) -> Vec<f64> {
        let m = |v: &[f64]| -> Vec<f64> { v.iter().zip(mask).map(|(x, &f)| if f { 0.0 } else { *x }).collect() };
        let mut q = m(q);
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let s = m(s);
            let y = m(y);
            let a = rho * dot(&s, &q);
            for (qi, yi) in q.iter_mut().zip(&y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let (s, y) = (m(s), m(y));
            let yy = dot(&y, &y);
            if yy > 0.0 {
                let gamma = dot(&s, &y) / yy;
                if gamma > 0.0 {
                    q.iter_mut().for_each(|v| *v *= gamma);
                }
            }
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let s = m(s);
            let y = m(y);
            let b = rho * dot(&y, &q);
            for (qi, si) in q.iter_mut().zip(&s) {
                *qi += (a - b) * si;
            }
        }
        q
    }
}

fn run_restart(objective: &dyn Objective, start: &[f64], bounds: &[(f64, f64)], config: &OptConfig) -> RestartTrace {
    let mut trace = RestartTrace {
        start: start.to_vec(),
        objective: Vec::new(),
        final_x: start.to_vec(),
        converged: false,
        evaluations: 0,
        error: None,
    };
    let mut x = start.to_vec();
    project(&mut x, bounds);
    trace.evaluations += 1;
    let (mut f, mut g) = match objective.value_grad(&x) {
        Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => (f, g),
        Ok(_) => {
            trace.error = Some("non-finite objective at start".into());
            return trace;
        }
        Err(e) => {
            trace.error = Some(e.to_string());
            return trace;
        }
    };
    trace.objective.push(f);
    trace.final_x = x.clone();
    if x.is_empty() {
        trace.converged = true;
        return trace;
    }
    let mut hist = History { pairs: VecDeque::new(), cap: config.memory };
    let mut stall = 0;
    for _ in 0..config.max_iter {
        let mask: Vec<bool> = (0..x.len()).map(|i| pinned(x[i], g[i], bounds[i])).collect();
        let pg: Vec<f64> = g.iter().zip(&mask).map(|(gi, &p)| if p { 0.0 } else { *gi }).collect();
        if inf_norm(&pg) <= config.grad_tol {
            trace.converged = true;
            break;
        }
        let mut d: Vec<f64> = hist.apply(&pg, &mask).into_iter().map(|v| -v).collect();
        if !(dot(&d, &pg) < 0.0) {
            hist.pairs.clear();
            d = pg.iter().map(|v| -v).collect();
        }
        let mut t = if hist.pairs.is_empty() { (1.0 / inf_norm(&d)).min(1.0) } else { 1.0 };
        let mut accepted: Option<(Vec<f64>, f64, Option<Vec<f64>>)> = None;
        for k in 0..config.max_line_search {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            project(&mut xn, bounds);
            let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            if inf_norm(&step) == 0.0 {
                break;
            }
            let decrease = config.armijo * dot(&g, &step);
            trace.evaluations += 1;
            let trial = if k == 0 {
                objective.value_grad(&xn).map(|(v, gr)| (v, Some(gr)))
            } else {
                objective.value(&xn).map(|v| (v, None))
            };
            if let Ok((fv, gr)) = trial {
                if fv.is_finite() && fv <= f + decrease && gr.as_ref().is_none_or(|gr| gr.iter().all(|v| v.is_finite())) {
                    accepted = Some((xn, fv, gr));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            if !hist.pairs.is_empty() {
                hist.pairs.clear();
                continue;
            }
            // no descent possible along the projected gradient
            trace.converged = inf_norm(&pg) <= config.grad_tol.sqrt();
            break;
        };
        let gn = match gn {
            Some(gr) => gr,
            None => {
                trace.evaluations += 1;
                match objective.value_grad(&xn) {
                    Ok((_, gr)) if gr.iter().all(|v| v.is_finite()) => gr,
                    _ => {
                        trace.error = Some("gradient evaluation failed at accepted point".into());
                        break;
                    }
                }
            }
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        hist.push(s, y);
        let rel = (f - fn_) / f.abs().max(fn_.abs()).max(1.0);
        x = xn;
        f = fn_;
        g = gn;
        trace.objective.push(f);
        trace.final_x = x.clone();
        if rel < config.f_tol {
            stall += 1;
            if stall >= config.stall_iters {
                trace.converged = true;
                break;
            }
        } else {
            stall = 0;
        }
    }
    // an error after the start is informational; the trajectory is still usable
    if trace.error.is_some() && trace.objective.len() > 1 {
        trace.error = None;
    }
    trace
}

/// Per-coordinate comparison of an analytic gradient against central differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdComponent {
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub worst: usize,
    pub components: Vec<FdComponent>,
}

/// Central-difference check of `objective.value_grad` at `x`.
///
/// The relative error of each component is
/// `|a − n| / max(|n|, 1e-8·(1 + |f|))`, measured against the numeric
/// derivative; the floor keeps near-zero components from blowing up.
pub fn fd_check(objective: &dyn Objective, x: &[f64], h: f64) -> Result<FdReport> {
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let (f, g) = objective.value_grad(x)?;
    let floor = 1e-8 * (1.0 + f.abs());
    let mut components = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let step = h * x[i].abs().max(1.0);
        xp[i] = x[i] + step;
        let fp = objective.value(&xp)?;
        xp[i] = x[i] - step;
        let fm = objective.value(&xp)?;
        xp[i] = x[i];
        let numeric = (fp - fm) / (2.0 * step);
        let denom = numeric.abs().max(floor);
        components.push(FdComponent { analytic: g[i], numeric, rel_error: (g[i] - numeric).abs() / denom });
    }
    let (worst, max_rel_error) = components
        .iter()
        .enumerate()
        .map(|(i, c)| (i, c.rel_error))
        .fold((0, 0.0), |acc, (i, e)| if e > acc.1 { (i, e) } else { acc });
    Ok(FdReport { max_rel_error, worst, components })
}
