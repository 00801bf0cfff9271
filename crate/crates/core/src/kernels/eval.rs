//! Kernel matrix evaluation and hyperparameter gradients.

use std::collections::BTreeMap;

use faer::Mat;

use super::expr::{ColumnBinding, KernelExpr};
use super::params::ParamVector;
use super::sigmoid::{logistic, sigmoid_with_partials};
use crate::data::Inputs;
use crate::error::{Error, Result};

/// Dense kernel matrix. `symmetric` is set when both arguments were the same inputs.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub matrix: Mat<f64>,
    pub symmetric: bool,
}

impl KernelMatrix {
    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }
}

/// SDOF covariance at lag `tau`.
pub fn sdof_covariance(tau: f64, variance: f64, mass: f64, damping: f64, natural_freq: f64) -> f64 {
    let zw = damping * natural_freq;
    let wd = natural_freq * (1.0 - damping * damping).sqrt();
    let at = tau.abs();
    let amp = variance / (4.0 * mass * mass * damping * natural_freq.powi(3));
    amp * (-zw * at).exp() * ((wd * at).cos() + (zw / wd) * (wd * at).sin())
}

/// A leaf with its columns resolved and parameters read out.
enum Leaf {
    Se { a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, variance: f64, inv_ls2: Vec<f64>, slots: Vec<usize> },
    Poly2 { a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, variance: f64, offset: f64, slots: [usize; 2] },
    Sdof { a: Vec<f64>, b: Vec<f64>, log_params: [f64; 4], raw: [f64; 4], slots: [usize; 4] },
    Sigmoid { sa: Vec<(f64, f64, f64)>, sb: Vec<(f64, f64, f64)>, sign: f64, gradient: f64, slots: [usize; 2] },
}

fn resolve_all(bindings: &[ColumnBinding], x: &Inputs) -> Result<Vec<Vec<f64>>> {
    bindings.iter().map(|b| b.resolve(x)).collect()
}

impl Leaf {
    fn prepare(expr: &KernelExpr, params: &ParamVector, x1: &Inputs, x2: &Inputs) -> Result<Self> {
        Ok(match expr {
            KernelExpr::Se { inputs, variance, lengthscales } => {
                let inv_ls2 = lengthscales
                    .iter()
                    .map(|&i| {
                        let l = params.value(i);
                        1.0 / (l * l)
                    })
                    .collect();
                let mut slots = vec![*variance];
                slots.extend_from_slice(lengthscales);
                Leaf::Se {
                    a: resolve_all(inputs, x1)?,
                    b: resolve_all(inputs, x2)?,
                    variance: params.value(*variance),
                    inv_ls2,
                    slots,
                }
            }
            KernelExpr::Poly2 { inputs, variance, offset } => Leaf::Poly2 {
                a: resolve_all(inputs, x1)?,
                b: resolve_all(inputs, x2)?,
                variance: params.value(*variance),
                offset: params.value(*offset),
                slots: [*variance, *offset],
            },
            KernelExpr::Sdof { input, variance, mass, damping, natural_freq } => {
                let slots = [*variance, *mass, *damping, *natural_freq];
                let raw = slots.map(|s| params.value(s));
                if raw[2] >= 1.0 || raw[2] <= 0.0 {
                    return Err(Error::Domain(format!(
                        "SDOF damping ratio {} must lie in (0, 1) for a real damped frequency",
                        raw[2]
                    )));
                }
                Leaf::Sdof {
                    a: input.resolve(x1)?,
                    b: input.resolve(x2)?,
                    log_params: raw.map(f64::ln),
                    raw,
                    slots,
                }
            }
            KernelExpr::Sigmoid { input, gradient, location, negated, .. } => {
                let a = params.value(*gradient);
                let x0 = params.value(*location);
                let sign = if *negated { -1.0 } else { 1.0 };
                let eval = |z: f64| sigmoid_with_partials(z, sign * a, x0);
                Leaf::Sigmoid {
                    sa: input.resolve(x1)?.into_iter().map(eval).collect(),
                    sb: input.resolve(x2)?.into_iter().map(eval).collect(),
                    sign,
                    gradient: a,
                    slots: [*gradient, *location],
                }
            }
            KernelExpr::Sum { .. } | KernelExpr::Product { .. } => unreachable!("not a leaf"),
        })
    }

    fn slots(&self) -> &[usize] {
        match self {
            Leaf::Se { slots, .. } => slots,
            Leaf::Poly2 { slots, .. } | Leaf::Sigmoid { slots, .. } => slots,
            Leaf::Sdof { slots, .. } => slots,
        }
    }

    #[inline]
    fn value(&self, i: usize, j: usize) -> f64 {
        match self {
            Leaf::Se { a, b, variance, inv_ls2, .. } => {
                let mut r2 = 0.0;
                for d in 0..a.len() {
                    let diff = a[d][i] - b[d][j];
                    r2 += diff * diff * inv_ls2[d];
                }
                variance * (-0.5 * r2).exp()
            }
            Leaf::Poly2 { a, b, variance, offset, .. } => {
                let s: f64 = (0..a.len()).map(|d| a[d][i] * b[d][j]).sum::<f64>() + offset;
                variance * s * s
            }
            Leaf::Sdof { a, b, raw, .. } => sdof_covariance(a[i] - b[j], raw[0], raw[1], raw[2], raw[3]),
            Leaf::Sigmoid { sa, sb, .. } => sa[i].0 * sb[j].0,
        }
    }

    /// Partials w.r.t. the transformed parameters, aligned with `slots()`.
    #[inline]
    fn partials(&self, i: usize, j: usize, out: &mut [f64]) {
        match self {
            Leaf::Se { a, b, variance, inv_ls2, .. } => {
                let mut r2 = 0.0;
                for d in 0..a.len() {
                    let diff = a[d][i] - b[d][j];
                    let rd = diff * diff * inv_ls2[d];
                    out[d + 1] = rd;
                    r2 += rd;
                }
                let k = variance * (-0.5 * r2).exp();
                out[0] = k;
                for o in &mut out[1..] {
                    *o *= k;
                }
            }
            Leaf::Poly2 { a, b, variance, offset, .. } => {
                let s: f64 = (0..a.len()).map(|d| a[d][i] * b[d][j]).sum::<f64>() + offset;
                out[0] = variance * s * s;
                out[1] = 2.0 * variance * s * offset;
            }
            Leaf::Sdof { a, b, log_params, raw, .. } => {
                let tau = a[i] - b[j];
                let k = sdof_covariance(tau, raw[0], raw[1], raw[2], raw[3]);
                out[0] = k;
                out[1] = -2.0 * k;
                for p in 2..4 {
                    let theta = log_params[p];
                    let h = 1e-6 * theta.abs().max(1.0);
                    let mut hi = *raw;
                    let mut lo = *raw;
                    hi[p] = (theta + h).exp();
                    lo[p] = (theta - h).exp();
                    let fp = sdof_covariance(tau, hi[0], hi[1], hi[2], hi[3]);
                    let fm = sdof_covariance(tau, lo[0], lo[1], lo[2], lo[3]);
                    out[p] = (fp - fm) / (2.0 * h);
                }
            }
            Leaf::Sigmoid { sa, sb, sign, gradient, .. } => {
                let (s1, da1, dx1) = sa[i];
                let (s2, da2, dx2) = sb[j];
                // d/d log a = a · d/da, and a_eff = sign · a
                out[0] = sign * gradient * (da1 * s2 + s1 * da2);
                out[1] = dx1 * s2 + s1 * dx2;
            }
        }
    }
}

fn fill(n1: usize, n2: usize, symmetric: bool, mut f: impl FnMut(usize, usize) -> f64) -> Mat<f64> {
    let mut m = Mat::<f64>::zeros(n1, n2);
    if symmetric {
        for j in 0..n2 {
            for i in j..n1 {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
    } else {
        for j in 0..n2 {
            for i in 0..n1 {
                m[(i, j)] = f(i, j);
            }
        }
    }
    m
}

fn hadamard_in_place(acc: &mut Mat<f64>, other: &Mat<f64>) {
    for j in 0..acc.ncols() {
        for i in 0..acc.nrows() {
            acc[(i, j)] *= other[(i, j)];
        }
    }
}

fn add_in_place(acc: &mut Mat<f64>, other: &Mat<f64>) {
    for j in 0..acc.ncols() {
        for i in 0..acc.nrows() {
            acc[(i, j)] += other[(i, j)];
        }
    }
}

fn eval_node(expr: &KernelExpr, params: &ParamVector, x1: &Inputs, x2: &Inputs, sym: bool) -> Result<Mat<f64>> {
    match expr {
        KernelExpr::Sum { children } | KernelExpr::Product { children } => {
            let is_sum = matches!(expr, KernelExpr::Sum { .. });
            let mut iter = children.iter();
            let first = iter.next().ok_or_else(|| Error::config("empty combinator"))?;
            let mut acc = eval_node(first, params, x1, x2, sym)?;
            for c in iter {
                let m = eval_node(c, params, x1, x2, sym)?;
                if is_sum {
                    add_in_place(&mut acc, &m);
                } else {
                    hadamard_in_place(&mut acc, &m);
                }
            }
            Ok(acc)
        }
        leaf => {
            let l = Leaf::prepare(leaf, params, x1, x2)?;
            Ok(fill(x1.nrows(), x2.nrows(), sym, |i, j| l.value(i, j)))
        }
    }
}

fn check_rows(x: &Inputs, expr: &KernelExpr) -> Result<()> {
    for b in expr.bindings() {
        if x.column_index(&b.column).is_none() {
            return Err(Error::config(format!("kernel input column '{}' not found", b.column)));
        }
    }
    Ok(())
}

/// K(X, X2). Symmetric evaluation is used when both arguments are the same object.
pub fn eval_kernel(expr: &KernelExpr, params: &ParamVector, x1: &Inputs, x2: &Inputs) -> Result<KernelMatrix> {
    check_rows(x1, expr)?;
    check_rows(x2, expr)?;
    let sym = std::ptr::eq(x1, x2);
    Ok(KernelMatrix { matrix: eval_node(expr, params, x1, x2, sym)?, symmetric: sym })
}

/// Training covariance K(X, X), evaluated on one triangle and mirrored.
pub fn eval_gram(expr: &KernelExpr, params: &ParamVector, x: &Inputs) -> Result<KernelMatrix> {
    eval_kernel(expr, params, x, x)
}

/// k(x_i, x_i) for every row.
pub fn eval_diag(expr: &KernelExpr, params: &ParamVector, x: &Inputs) -> Result<Vec<f64>> {
    check_rows(x, expr)?;
    diag_node(expr, params, x)
}

fn diag_node(expr: &KernelExpr, params: &ParamVector, x: &Inputs) -> Result<Vec<f64>> {
    match expr {
        KernelExpr::Sum { children } | KernelExpr::Product { children } => {
            let is_sum = matches!(expr, KernelExpr::Sum { .. });
            let mut acc = diag_node(&children[0], params, x)?;
            for c in &children[1..] {
                let d = diag_node(c, params, x)?;
                for (a, b) in acc.iter_mut().zip(d) {
                    if is_sum {
                        *a += b;
                    } else {
                        *a *= b;
                    }
                }
            }
            Ok(acc)
        }
        leaf => {
            let l = Leaf::prepare(leaf, params, x, x)?;
            Ok((0..x.nrows()).map(|i| l.value(i, i)).collect())
        }
    }
}

type SlotGrads = Vec<(usize, Mat<f64>)>;

fn grad_node(expr: &KernelExpr, params: &ParamVector, x: &Inputs, free: &[bool]) -> Result<(Mat<f64>, SlotGrads)> {
    match expr {
        KernelExpr::Sum { children } => {
            let mut acc: Option<Mat<f64>> = None;
            let mut grads = Vec::new();
            for c in children {
                let (k, g) = grad_node(c, params, x, free)?;
                match acc.as_mut() {
                    Some(a) => add_in_place(a, &k),
                    None => acc = Some(k),
                }
                grads.extend(g);
            }
            Ok((acc.expect("non-empty sum"), merge(grads)))
        }
        KernelExpr::Product { children } => {
            let parts = children
                .iter()
                .map(|c| grad_node(c, params, x, free))
                .collect::<Result<Vec<_>>>()?;
            let mut grads = Vec::new();
            for (j, (_, gj)) in parts.iter().enumerate() {
                if gj.is_empty() {
                    continue;
                }
                let mut others: Option<Mat<f64>> = None;
                for (l, (kl, _)) in parts.iter().enumerate() {
                    if l == j {
                        continue;
                    }
                    match others.as_mut() {
                        Some(o) => hadamard_in_place(o, kl),
                        None => others = Some(kl.clone()),
                    }
                }
                let others = others.expect("product has at least two factors");
                for (slot, dk) in gj {
                    let mut d = dk.clone();
                    hadamard_in_place(&mut d, &others);
                    grads.push((*slot, d));
                }
            }
            let mut iter = parts.into_iter();
            let (mut k, _) = iter.next().expect("non-empty product");
            for (kl, _) in iter {
                hadamard_in_place(&mut k, &kl);
            }
            Ok((k, merge(grads)))
        }
        leaf => {
            let l = Leaf::prepare(leaf, params, x, x)?;
            let n = x.nrows();
            let slots = l.slots().to_vec();
            let active: Vec<usize> = (0..slots.len()).filter(|&p| free[slots[p]]).collect();
            let mut k = Mat::<f64>::zeros(n, n);
            let mut dks: Vec<Mat<f64>> = active.iter().map(|_| Mat::zeros(n, n)).collect();
            let mut buf = vec![0.0; slots.len()];
            for j in 0..n {
                for i in j..n {
                    let v = l.value(i, j);
                    k[(i, j)] = v;
                    k[(j, i)] = v;
                    if !active.is_empty() {
                        l.partials(i, j, &mut buf);
                        for (dk, &p) in dks.iter_mut().zip(&active) {
                            dk[(i, j)] = buf[p];
                            dk[(j, i)] = buf[p];
                        }
                    }
                }
            }
            let grads = active.iter().map(|&p| slots[p]).zip(dks).collect();
            Ok((k, merge(grads)))
        }
    }
}

fn merge(grads: SlotGrads) -> SlotGrads {
    let mut map: BTreeMap<usize, Mat<f64>> = BTreeMap::new();
    for (slot, m) in grads {
        match map.get_mut(&slot) {
            Some(acc) => add_in_place(acc, &m),
            None => {
                map.insert(slot, m);
            }
        }
    }
    map.into_iter().collect()
}

/// Gram matrix and ∂K/∂θ for each free parameter (transformed space), in
/// [`ParamVector::free_indices`] order.
pub fn gram_with_grad(expr: &KernelExpr, params: &ParamVector, x: &Inputs) -> Result<(Mat<f64>, Vec<Mat<f64>>)> {
    check_rows(x, expr)?;
    let free: Vec<bool> = params.entries().iter().map(|e| e.is_free()).collect();
    let (k, grads) = grad_node(expr, params, x, &free)?;
    let mut by_slot: BTreeMap<usize, Mat<f64>> = grads.into_iter().collect();
    let n = x.nrows();
    let out = params
        .free_indices()
        .into_iter()
        .map(|i| by_slot.remove(&i).unwrap_or_else(|| Mat::zeros(n, n)))
        .collect();
    Ok((k, out))
}

/// ∂K/∂θ_i for every free parameter, in the transformed space.
pub fn kernel_grad(expr: &KernelExpr, params: &ParamVector, x: &Inputs) -> Result<Vec<KernelMatrix>> {
    let (_, grads) = gram_with_grad(expr, params, x)?;
    Ok(grads.into_iter().map(|matrix| KernelMatrix { matrix, symmetric: true }).collect())
}

/// Sigmoid value σ(z) for a switch leaf at raw column value `v`.
pub fn switch_value(binding: &ColumnBinding, gradient: f64, location: f64, negated: bool, v: f64) -> f64 {
    let a = if negated { -gradient } else { gradient };
    logistic(a * (binding.apply(v) - location))
}
