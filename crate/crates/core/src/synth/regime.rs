//! Wind-driven regime switching: a quadratic lift response that is switched
//! on for near north/south winds at high speed, blended with a smooth
//! speed-dependent response elsewhere.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{RandomFeatures, SwitchSpec};
use crate::data::{Dataset, Inputs};
use crate::error::{Error, Result};
use crate::kernels::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    Constant { std: f64 },
    /// std = intercept + slope·U
    LinearInSpeed { intercept: f64, slope: f64 },
}

impl NoiseSpec {
    pub fn std_at(&self, speed: f64) -> f64 {
        match *self {
            NoiseSpec::Constant { std } => std,
            NoiseSpec::LinearInSpeed { intercept, slope } => intercept + slope * speed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegimeSpec {
    pub n: usize,
    pub seed: u64,
    /// Wind speed range (mph).
    pub speed_range: (f64, f64),
    /// Wind direction range (radians).
    pub angle_range: (f64, f64),
    /// Switch on cos 2θ: lift is active near θ = 0, π.
    pub direction_switch: SwitchSpec,
    /// Switch on wind speed.
    pub speed_switch: SwitchSpec,
    /// Coefficient α of the lift term αU².
    pub lift_coeff: f64,
    pub smooth_variance: f64,
    pub smooth_lengthscale: f64,
    pub smooth_features: usize,
    pub noise: NoiseSpec,
}

impl Default for RegimeSpec {
    fn default() -> Self {
        Self {
            n: 2500,
            seed: 0,
            speed_range: (0.0, 35.0),
            angle_range: (0.0, 2.0 * PI),
            direction_switch: SwitchSpec { gradient: 8.0, location: 0.5 },
            speed_switch: SwitchSpec { gradient: 0.4, location: 15.0 },
            lift_coeff: 0.004,
            smooth_variance: 1.0,
            smooth_lengthscale: 5.0,
            smooth_features: 256,
            noise: NoiseSpec::Constant { std: 0.3 },
        }
    }
}

impl RegimeSpec {
    /// Default layout with noise std growing linearly with wind speed.
    pub fn heteroscedastic() -> Self {
        Self { noise: NoiseSpec::LinearInSpeed { intercept: 0.05, slope: 0.03 }, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::config("regime spec needs N >= 10"));
        }
        let finite = |r: (f64, f64)| r.0.is_finite() && r.1.is_finite() && r.0 < r.1;
        if !finite(self.speed_range) || !finite(self.angle_range) {
            return Err(Error::config("sampling ranges must be finite and non-empty"));
        }
        if !(self.smooth_variance >= 0.0 && self.smooth_lengthscale > 0.0 && self.smooth_features > 0) {
            return Err(Error::config("smooth component needs variance >= 0, lengthscale > 0"));
        }
        if !self.lift_coeff.is_finite() {
            return Err(Error::config("lift coefficient must be finite"));
        }
        self.direction_switch.validate()?;
        self.speed_switch.validate()?;
        let (lo, hi) = self.speed_range;
        if !(self.noise.std_at(lo) > 0.0 && self.noise.std_at(hi) > 0.0) {
            return Err(Error::config("noise std must be positive over the speed range"));
        }
        Ok(())
    }
}

/// Noiseless components and pointwise noise level of a regime dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeTruth {
    pub lift: Vec<f64>,
    pub smooth: Vec<f64>,
    pub noiseless: Vec<f64>,
    pub noise_std: Vec<f64>,
}

pub const SPEED: &str = "U";
pub const ANGLE: &str = "theta";

/// y = σ⁺(cos2θ)σ⁺(U)·αU² + σ⁻(cos2θ)σ⁻(U)·f(U) + ε, with f a smooth
/// random draw and ε ~ N(0, s(U)²).
pub fn gen_regime(spec: &RegimeSpec) -> Result<(Dataset, RegimeTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let smooth_fn = RandomFeatures::se(&mut rng, 1, spec.smooth_variance, spec.smooth_lengthscale, spec.smooth_features);
    let n = spec.n;
    let (ulo, uhi) = spec.speed_range;
    let (alo, ahi) = spec.angle_range;
    let mut speed = Vec::with_capacity(n);
    let mut angle = Vec::with_capacity(n);
    for _ in 0..n {
        speed.push(rng.random_range(ulo..uhi));
        angle.push(rng.random_range(alo..ahi));
    }
    let ds = spec.direction_switch;
    let ss = spec.speed_switch;
    let mut truth = RegimeTruth {
        lift: Vec::with_capacity(n),
        smooth: Vec::with_capacity(n),
        noiseless: Vec::with_capacity(n),
        noise_std: Vec::with_capacity(n),
    };
    for i in 0..n {
        let (u, th) = (speed[i], angle[i]);
        let c2 = (2.0 * th).cos();
        let on_dir = sigmoid(c2, ds.gradient, ds.location)?;
        let off_dir = sigmoid(c2, -ds.gradient, ds.location)?;
        let on_speed = sigmoid(u, ss.gradient, ss.location)?;
        let off_speed = sigmoid(u, -ss.gradient, ss.location)?;
        let lift = on_dir * on_speed * spec.lift_coeff * u * u;
        let smooth = off_dir * off_speed * smooth_fn.eval(&[u]);
        truth.lift.push(lift);
        truth.smooth.push(smooth);
        truth.noiseless.push(lift + smooth);
        truth.noise_std.push(spec.noise.std_at(u));
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let y = (0..n).map(|i| truth.noiseless[i] + truth.noise_std[i] * normal.sample(&mut rng)).collect();
    let inputs = Inputs::new(vec![SPEED.into(), ANGLE.into()], vec![speed, angle])?;
    Ok((Dataset::new(inputs, y)?, truth))
}
