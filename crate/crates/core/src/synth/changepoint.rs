//! One-dimensional change point: a short-lengthscale function left of x₀
//! blended into a long-lengthscale function right of it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{RandomFeatures, SwitchSpec};
use crate::data::{Dataset, Inputs};
use crate::error::{Error, Result};
use crate::kernels::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChangepointSpec {
    pub n: usize,
    pub seed: u64,
    pub range: (f64, f64),
    pub switch: SwitchSpec,
    /// Lengthscale of the function active below x₀.
    pub left_lengthscale: f64,
    /// Lengthscale of the function active above x₀.
    pub right_lengthscale: f64,
    pub variance: f64,
    pub noise_std: f64,
    pub features: usize,
}

impl Default for ChangepointSpec {
    fn default() -> Self {
        Self {
            n: 300,
            seed: 0,
            range: (0.0, 8.0),
            switch: SwitchSpec { gradient: 2.0, location: 4.0 },
            left_lengthscale: 0.3,
            right_lengthscale: 2.5,
            variance: 1.0,
            noise_std: 0.05,
            features: 512,
        }
    }
}

impl ChangepointSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::config("change-point spec needs N >= 10"));
        }
        if !(self.range.0.is_finite() && self.range.1.is_finite() && self.range.0 < self.range.1) {
            return Err(Error::config("sampling range must be finite and non-empty"));
        }
        if !(self.left_lengthscale > 0.0 && self.right_lengthscale > 0.0 && self.variance > 0.0) {
            return Err(Error::config("lengthscales and variance must be positive"));
        }
        if !(self.noise_std > 0.0) || self.features == 0 {
            return Err(Error::config("noise std must be positive"));
        }
        self.switch.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangepointTruth {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub noiseless: Vec<f64>,
}

/// y = σ⁻(x)f_left(x) + σ⁺(x)f_right(x) + ε on a single column `x`.
pub fn gen_changepoint(spec: &ChangepointSpec) -> Result<(Dataset, ChangepointTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let left_fn = RandomFeatures::se(&mut rng, 1, spec.variance, spec.left_lengthscale, spec.features);
    let right_fn = RandomFeatures::se(&mut rng, 1, spec.variance, spec.right_lengthscale, spec.features);
    let (lo, hi) = spec.range;
    let mut x: Vec<f64> = (0..spec.n).map(|_| rng.random_range(lo..hi)).collect();
    x.sort_by(f64::total_cmp);
    let sw = spec.switch;
    let mut truth = ChangepointTruth { left: vec![], right: vec![], noiseless: vec![] };
    for &v in &x {
        let left = sigmoid(v, -sw.gradient, sw.location)? * left_fn.eval(&[v]);
        let right = sigmoid(v, sw.gradient, sw.location)? * right_fn.eval(&[v]);
        truth.left.push(left);
        truth.right.push(right);
        truth.noiseless.push(left + right);
    }
    let normal = Normal::new(0.0, spec.noise_std).expect("positive std");
    let y = truth.noiseless.iter().map(|f| f + normal.sample(&mut rng)).collect();
    Ok((Dataset::new(Inputs::from_column("x", x)?, y)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_with_exact_component_sum() {
        let spec = ChangepointSpec { n: 50, seed: 9, ..ChangepointSpec::default() };
        let (a, t) = gen_changepoint(&spec).unwrap();
        assert_eq!(a, gen_changepoint(&spec).unwrap().0);
        for i in 0..50 {
            assert_eq!(t.left[i] + t.right[i], t.noiseless[i]);
        }
    }
}
