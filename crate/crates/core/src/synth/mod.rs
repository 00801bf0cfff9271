//! Synthetic datasets with known ground truth.
//!
//! [`gen_regime`] emulates a wind-driven regime switch on a bridge deck,
//! [`gen_oscillator`] a strain record with rudder-gated structural bursts and
//! [`gen_changepoint`] a 1-D transition between two smooth functions.

mod changepoint;
mod oscillator;
mod regime;

pub use changepoint::{gen_changepoint, ChangepointSpec, ChangepointTruth};
pub use oscillator::{flight_column, gen_oscillator, resonance_hz, ModeSpec, OscillatorSpec, OscillatorTruth, RUDDER, TIME};
pub use regime::{gen_regime, NoiseSpec, RegimeSpec, RegimeTruth, ANGLE, SPEED};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// True sigmoid gate parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchSpec {
    pub gradient: f64,
    pub location: f64,
}

impl SwitchSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gradient.is_finite() && self.location.is_finite()) {
            return Err(Error::config("switch gradient and location must be finite"));
        }
        Ok(())
    }
}

/// Random Fourier feature approximation of a draw from a zero-mean GP with
/// an isotropic SE kernel.
#[derive(Debug, Clone)]
pub(crate) struct RandomFeatures {
    freqs: Vec<Vec<f64>>,
    phases: Vec<f64>,
    weights: Vec<f64>,
    scale: f64,
}

impl RandomFeatures {
    pub(crate) fn se<R: Rng>(rng: &mut R, dim: usize, variance: f64, lengthscale: f64, features: usize) -> Self {
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut freqs = Vec::with_capacity(features);
        let mut phases = Vec::with_capacity(features);
        let mut weights = Vec::with_capacity(features);
        for _ in 0..features {
            freqs.push((0..dim).map(|_| normal.sample(rng) / lengthscale).collect());
            phases.push(rng.random_range(0.0..std::f64::consts::TAU));
            weights.push(normal.sample(rng));
        }
        Self { freqs, phases, weights, scale: (2.0 * variance / features as f64).sqrt() }
    }

    pub(crate) fn eval(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for ((w, b), om) in self.weights.iter().zip(&self.phases).zip(&self.freqs) {
            let arg: f64 = om.iter().zip(x).map(|(o, v)| o * v).sum();
            s += w * (arg + b).cos();
        }
        self.scale * s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_features_match_se_covariance() {
        // Average f(0)f(τ) over independent draws.
        let draws = 4000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let taus = [0.0, 1.0, 2.0];
        let mut acc = [0.0; 3];
        for _ in 0..draws {
            let f = RandomFeatures::se(&mut rng, 1, 1.5, 2.0, 64);
            let f0 = f.eval(&[0.0]);
            for (a, t) in acc.iter_mut().zip(taus) {
                *a += f0 * f.eval(&[t]);
            }
        }
        for (a, t) in acc.iter().zip(taus) {
            let want = 1.5 * (-0.5 * t * t / 4.0_f64).exp();
            assert!((a / draws as f64 - want).abs() < 0.1, "tau {t}: {} vs {want}", a / draws as f64);
        }
    }
}
