//! Covariance expression tree and a builder that allocates parameter slots.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::params::{ParamEntry, ParamVector, Transform};
use crate::data::Inputs;
use crate::error::{Error, Result};

/// Elementwise feature map applied to a bound column before the kernel sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureTransform {
    Identity,
    /// x ↦ cos 2x, x in radians.
    Cos2,
    Negate,
}

impl FeatureTransform {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            FeatureTransform::Identity => x,
            FeatureTransform::Cos2 => (2.0 * x).cos(),
            FeatureTransform::Negate => -x,
        }
    }

    pub fn name(self) -> Option<&'static str> {
        match self {
            FeatureTransform::Identity => None,
            FeatureTransform::Cos2 => Some("cos2"),
            FeatureTransform::Negate => Some("neg"),
        }
    }
}

/// Affine standardization `(x - shift) / scale` applied after the feature map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub shift: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnBinding {
    pub column: String,
    pub transform: FeatureTransform,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<Scaling>,
}

impl ColumnBinding {
    pub fn new(column: impl Into<String>) -> Self {
        Self { column: column.into(), transform: FeatureTransform::Identity, scaling: None }
    }

    pub fn with_transform(column: impl Into<String>, transform: FeatureTransform) -> Self {
        Self { column: column.into(), transform, scaling: None }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        let v = self.transform.apply(x);
        match self.scaling {
            Some(s) => (v - s.shift) / s.scale,
            None => v,
        }
    }

    /// The transformed column, or a configuration error if it is missing.
    pub fn resolve(&self, inputs: &Inputs) -> Result<Vec<f64>> {
        let col = inputs
            .column(&self.column)
            .map_err(|_| Error::config(format!("kernel input column '{}' not found", self.column)))?;
        Ok(col.iter().map(|&v| self.apply(v)).collect())
    }

    pub fn same_feature(&self, other: &ColumnBinding) -> bool {
        self.column == other.column && self.transform == other.transform
    }
}

impl fmt::Display for ColumnBinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.transform.name() {
            Some(t) => write!(f, "{t}({})", self.column),
            None => write!(f, "{}", self.column),
        }
    }
}

/// Covariance function as a tree of sums and products over leaf kernels.
/// Leaves hold indices into a [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelExpr {
    Sum { children: Vec<KernelExpr> },
    Product { children: Vec<KernelExpr> },
    /// σ_f² exp(−½ Σ_d (x_d − x'_d)² / l_d²)
    Se { inputs: Vec<ColumnBinding>, variance: usize, lengthscales: Vec<usize> },
    /// σ_L² (u·u' + c)²
    Poly2 { inputs: Vec<ColumnBinding>, variance: usize, offset: usize },
    /// Damped single-degree-of-freedom oscillator covariance over a time column.
    Sdof { input: ColumnBinding, variance: usize, mass: usize, damping: usize, natural_freq: usize },
    /// σ(z)σ(z'); the negated view uses gradient −a about the same location.
    Sigmoid { input: ColumnBinding, tag: String, gradient: usize, location: usize, negated: bool },
}

impl KernelExpr {
    pub fn sum(children: Vec<KernelExpr>) -> Result<Self> {
        if children.len() < 2 {
            return Err(Error::config("a sum needs at least two terms"));
        }
        Ok(KernelExpr::Sum { children })
    }

    pub fn product(children: Vec<KernelExpr>) -> Result<Self> {
        if children.len() < 2 {
            return Err(Error::config("a product needs at least two factors"));
        }
        Ok(KernelExpr::Product { children })
    }

    pub fn is_leaf(&self) -> bool {
        !matches!(self, KernelExpr::Sum { .. } | KernelExpr::Product { .. })
    }

    /// Visit every leaf, depth first, left to right.
    pub fn for_each_leaf<'a>(&'a self, f: &mut impl FnMut(&'a KernelExpr)) {
        match self {
            KernelExpr::Sum { children } | KernelExpr::Product { children } => {
                for c in children {
                    c.for_each_leaf(f);
                }
            }
            leaf => f(leaf),
        }
    }

    pub fn bindings(&self) -> Vec<&ColumnBinding> {
        let mut out = Vec::new();
        self.for_each_leaf(&mut |leaf| match leaf {
            KernelExpr::Se { inputs, .. } | KernelExpr::Poly2 { inputs, .. } => out.extend(inputs.iter()),
            KernelExpr::Sdof { input, .. } | KernelExpr::Sigmoid { input, .. } => out.push(input),
            _ => {}
        });
        out
    }

    /// Distinct column names consumed by the tree, in first-use order.
    pub fn columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = Vec::new();
        for b in self.bindings() {
            if !cols.contains(&b.column) {
                cols.push(b.column.clone());
            }
        }
        cols
    }

    /// Mutable access to every binding, for attaching standardizations.
    pub fn bindings_mut(&mut self, f: &mut impl FnMut(&KernelExprKind, &mut ColumnBinding)) {
        match self {
            KernelExpr::Sum { children } | KernelExpr::Product { children } => {
                for c in children {
                    c.bindings_mut(f);
                }
            }
            KernelExpr::Se { inputs, .. } => inputs.iter_mut().for_each(|b| f(&KernelExprKind::Se, b)),
            KernelExpr::Poly2 { inputs, .. } => inputs.iter_mut().for_each(|b| f(&KernelExprKind::Poly2, b)),
            KernelExpr::Sdof { input, .. } => f(&KernelExprKind::Sdof, input),
            KernelExpr::Sigmoid { input, .. } => f(&KernelExprKind::Sigmoid, input),
        }
    }

    /// Switch tags with their (gradient, location) slots.
    pub fn switches(&self) -> BTreeMap<String, (usize, usize, ColumnBinding)> {
        let mut out = BTreeMap::new();
        self.for_each_leaf(&mut |leaf| {
            if let KernelExpr::Sigmoid { input, tag, gradient, location, .. } = leaf {
                out.entry(tag.clone()).or_insert((*gradient, *location, input.clone()));
            }
        });
        out
    }

    /// Structural checks against a parameter vector and, optionally, a set of inputs.
    pub fn validate(&self, params: &ParamVector, inputs: Option<&Inputs>) -> Result<()> {
        let mut tags: BTreeMap<&str, (usize, usize, &ColumnBinding)> = BTreeMap::new();
        let slot_ok = |i: usize| i < params.len();
        let mut nodes: Vec<&KernelExpr> = Vec::new();
        self.walk(&mut |node| nodes.push(node));
        for node in nodes {
            if let KernelExpr::Sum { children } | KernelExpr::Product { children } = node {
                if children.len() < 2 {
                    return Err(Error::config("sums and products need at least two children"));
                }
            }
            let leaf = node;
            match leaf {
                KernelExpr::Se { inputs: b, variance, lengthscales } => {
                    if b.is_empty() || b.len() != lengthscales.len() {
                        return Err(Error::config("SE leaf needs one lengthscale per input"));
                    }
                    if !slot_ok(*variance) || !lengthscales.iter().all(|&i| slot_ok(i)) {
                        return Err(Error::config("SE leaf references a missing parameter slot"));
                    }
                }
                KernelExpr::Poly2 { inputs: b, variance, offset } => {
                    if b.is_empty() || !slot_ok(*variance) || !slot_ok(*offset) {
                        return Err(Error::config("malformed poly2 leaf"));
                    }
                }
                KernelExpr::Sdof { variance, mass, damping, natural_freq, .. } => {
                    if ![*variance, *mass, *damping, *natural_freq].iter().all(|&i| slot_ok(i)) {
                        return Err(Error::config("SDOF leaf references a missing parameter slot"));
                    }
                    let z = params.value(*damping);
                    if z >= 1.0 {
                        return Err(Error::Domain(format!(
                            "SDOF damping ratio {z} >= 1 gives an imaginary damped frequency"
                        )));
                    }
                }
                KernelExpr::Sigmoid { input, tag, gradient, location, .. } => {
                    if !slot_ok(*gradient) || !slot_ok(*location) {
                        return Err(Error::config("sigmoid leaf references a missing parameter slot"));
                    }
                    if let Some((g, l, b)) = tags.get(tag.as_str()) {
                        if *g != *gradient || *l != *location {
                            return Err(Error::config(format!("switch '{tag}' leaves do not share parameters")));
                        }
                        if !b.same_feature(input) {
                            return Err(Error::config(format!(
                                "switch '{tag}' is bound to both '{b}' and '{input}'"
                            )));
                        }
                    } else {
                        tags.insert(tag, (*gradient, *location, input));
                    }
                }
                KernelExpr::Sum { .. } | KernelExpr::Product { .. } => {}
            }
        }
        if let Some(x) = inputs {
            for b in self.bindings() {
                if x.column_index(&b.column).is_none() {
                    return Err(Error::config(format!("kernel input column '{}' not found", b.column)));
                }
            }
        }
        Ok(())
    }

    fn walk<'a>(&'a self, f: &mut impl FnMut(&'a KernelExpr)) {
        f(self);
        if let KernelExpr::Sum { children } | KernelExpr::Product { children } = self {
            for c in children {
                c.walk(f);
            }
        }
    }
}

/// Leaf kind tag passed to binding visitors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelExprKind {
    Se,
    Poly2,
    Sdof,
    Sigmoid,
}

/// Default bounds used by [`KernelBuilder`].
pub mod defaults {
    pub const SE_VARIANCE: (f64, f64) = (1e-6, 1e6);
    pub const LENGTHSCALE: (f64, f64) = (1e-3, 1e3);
    pub const POLY_VARIANCE: (f64, f64) = (1e-14, 1e6);
    pub const POLY_OFFSET: (f64, f64) = (1e-8, 1e8);
    pub const SDOF_VARIANCE: (f64, f64) = (1e-12, 1e16);
    pub const DAMPING: (f64, f64) = (1e-3, 0.99);
    pub const NATURAL_FREQ: (f64, f64) = (1e-3, 1e5);
    pub const SWITCH_GRADIENT: (f64, f64) = (0.01, 100.0);
}

/// Allocates parameter slots while assembling a [`KernelExpr`].
///
/// Parameter names follow `se0.variance`, `se0.lengthscale.U`, `poly0.offset`,
/// `sdof1.natural_freq`, `switch.W.location` and so on; leaves of each kind
/// are numbered in creation order.
#[derive(Debug, Default)]
pub struct KernelBuilder {
    params: ParamVector,
    counts: [usize; 3],
    switches: BTreeMap<String, (usize, usize, ColumnBinding)>,
}

impl KernelBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn finish(self) -> ParamVector {
        self.params
    }

    fn clamp_into(v: f64, (lo, hi): (f64, f64)) -> (f64, f64, f64) {
        let lo = lo.min(v);
        let hi = hi.max(v);
        (v, lo, hi)
    }

    fn positive(&mut self, name: String, value: f64, bounds: (f64, f64)) -> Result<usize> {
        let (v, lo, hi) = Self::clamp_into(value, bounds);
        self.params.push(ParamEntry::positive(name, v, lo, hi)?)
    }

    pub fn se(&mut self, inputs: Vec<ColumnBinding>, variance: f64, lengthscales: &[f64]) -> Result<KernelExpr> {
        if inputs.is_empty() || inputs.len() != lengthscales.len() {
            return Err(Error::config("se needs one lengthscale per input column"));
        }
        let k = self.counts[0];
        self.counts[0] += 1;
        let var = self.positive(format!("se{k}.variance"), variance, defaults::SE_VARIANCE)?;
        let mut ls = Vec::with_capacity(inputs.len());
        for (b, &l) in inputs.iter().zip(lengthscales) {
            let mut name = format!("se{k}.lengthscale.{b}");
            if self.params.index_of(&name).is_some() {
                name = format!("{name}#{}", ls.len());
            }
            ls.push(self.positive(name, l, defaults::LENGTHSCALE)?);
        }
        Ok(KernelExpr::Se { inputs, variance: var, lengthscales: ls })
    }

    pub fn poly2(&mut self, inputs: Vec<ColumnBinding>, variance: f64, offset: f64) -> Result<KernelExpr> {
        if inputs.is_empty() {
            return Err(Error::config("poly2 needs at least one input column"));
        }
        let k = self.counts[1];
        self.counts[1] += 1;
        let variance = self.positive(format!("poly{k}.variance"), variance, defaults::POLY_VARIANCE)?;
        let offset = self.positive(format!("poly{k}.offset"), offset, defaults::POLY_OFFSET)?;
        Ok(KernelExpr::Poly2 { inputs, variance, offset })
    }

    /// SDOF leaf; the mass is created fixed because only σ²/m² is identifiable.
    pub fn sdof(&mut self, input: ColumnBinding, variance: f64, mass: f64, damping: f64, natural_freq: f64) -> Result<KernelExpr> {
        if !(damping > 0.0 && damping < 1.0) {
            return Err(Error::Domain(format!("SDOF damping ratio must lie in (0, 1), got {damping}")));
        }
        let k = self.counts[2];
        self.counts[2] += 1;
        let variance = self.positive(format!("sdof{k}.variance"), variance, defaults::SDOF_VARIANCE)?;
        let mass = self.params.push(ParamEntry::fixed(format!("sdof{k}.mass"), mass, Transform::Log)?)?;
        let damping = self.positive(format!("sdof{k}.damping"), damping, defaults::DAMPING)?;
        let natural_freq = self.positive(format!("sdof{k}.natural_freq"), natural_freq, defaults::NATURAL_FREQ)?;
        Ok(KernelExpr::Sdof { input, variance, mass, damping, natural_freq })
    }

    /// Sigmoid switch leaf. Repeated tags reuse the first leaf's slots, so
    /// `gradient`/`location` only matter the first time a tag is seen.
    pub fn switch(&mut self, input: ColumnBinding, tag: &str, gradient: f64, location: f64, negated: bool) -> Result<KernelExpr> {
        if let Some((g, l, b)) = self.switches.get(tag) {
            if !b.same_feature(&input) {
                return Err(Error::config(format!("switch '{tag}' is bound to both '{b}' and '{input}'")));
            }
            return Ok(KernelExpr::Sigmoid { input, tag: tag.to_string(), gradient: *g, location: *l, negated });
        }
        let g = self.positive(format!("switch.{tag}.gradient"), gradient, defaults::SWITCH_GRADIENT)?;
        let span = 1e3 * location.abs().max(1.0);
        let l = self
            .params
            .push(ParamEntry::real(format!("switch.{tag}.location"), location, location - span, location + span)?)?;
        self.switches.insert(tag.to_string(), (g, l, input.clone()));
        Ok(KernelExpr::Sigmoid { input, tag: tag.to_string(), gradient: g, location: l, negated })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shared_switch_slots() {
        let mut b = KernelBuilder::new();
        let p = b.switch(ColumnBinding::new("z"), "S", 2.0, 4.0, false).unwrap();
        let n = b.switch(ColumnBinding::new("z"), "S", 9.0, 9.0, true).unwrap();
        match (&p, &n) {
            (
                KernelExpr::Sigmoid { gradient: g1, location: l1, .. },
                KernelExpr::Sigmoid { gradient: g2, location: l2, negated: true, .. },
            ) => {
                assert_eq!((g1, l1), (g2, l2));
            }
            _ => panic!("unexpected leaves"),
        }
        assert_eq!(b.params().len(), 2);
        assert!(b.switch(ColumnBinding::new("w"), "S", 1.0, 0.0, false).is_err());
    }

    #[test]
    fn sum_needs_two_children() {
        let mut b = KernelBuilder::new();
        let se = b.se(vec![ColumnBinding::new("x")], 1.0, &[1.0]).unwrap();
        assert!(KernelExpr::sum(vec![se.clone()]).is_err());
        assert!(KernelExpr::product(vec![se.clone(), se]).is_ok());
    }

    #[test]
    fn validate_flags_missing_column_and_bad_damping() {
        let mut b = KernelBuilder::new();
        let k = b.sdof(ColumnBinding::new("t"), 1.0, 1.0, 0.1, 10.0).unwrap();
        let mut params = b.finish();
        let x = Inputs::from_column("x", vec![0.0]).unwrap();
        assert!(matches!(k.validate(&params, Some(&x)), Err(Error::Config(_))));
        params.update("sdof0.damping", Some(1.5), None, Some(2.0)).unwrap();
        assert!(matches!(k.validate(&params, None), Err(Error::Domain(_))));
    }
}
