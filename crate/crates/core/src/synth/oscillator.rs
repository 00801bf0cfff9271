//! Strain-like time series: a quasi-static response to slow flight channels
//! plus structural modes excited only while the rudder exceeds a threshold.
//!
//! Each mode is integrated exactly under zero-order-hold white forcing, so
//! the generator never evaluates the SDOF covariance it is meant to test.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{RandomFeatures, SwitchSpec};
use crate::data::{mean, variance, Dataset, Inputs};
use crate::error::{Error, Result};
use crate::kernels::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub mass: f64,
    pub damping: f64,
    pub natural_freq_hz: f64,
    /// Stationary response std while the gate is fully open.
    pub response_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OscillatorSpec {
    pub seed: u64,
    pub sample_rate: f64,
    /// Seconds.
    pub duration: f64,
    pub flight_channels: usize,
    /// Highest frequency (Hz) in the flight channels.
    pub flight_bandwidth: f64,
    pub quasi_static_variance: f64,
    /// In units of flight-channel standard deviations.
    pub quasi_static_lengthscale: f64,
    pub modes: Vec<ModeSpec>,
    pub turns: usize,
    /// Turn widths are drawn uniformly from this range (seconds).
    pub turn_width: (f64, f64),
    /// Peak rudder deflection during a turn (degrees).
    pub turn_peak: f64,
    /// Amplitude of slow rudder wander outside turns (degrees).
    pub rudder_wander: f64,
    pub gate: SwitchSpec,
    pub noise_std: f64,
    /// Training rows are every `decimate`-th sample.
    pub decimate: usize,
}

impl Default for OscillatorSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            sample_rate: 128.0,
            duration: 96.0,
            flight_channels: 3,
            flight_bandwidth: 0.03,
            quasi_static_variance: 1.0,
            quasi_static_lengthscale: 1.0,
            modes: vec![
                ModeSpec { mass: 1.0, damping: 0.08, natural_freq_hz: 11.0, response_std: 1.0 },
                ModeSpec { mass: 1.0, damping: 0.05, natural_freq_hz: 32.5, response_std: 0.3 },
            ],
            turns: 3,
            turn_width: (8.0, 16.0),
            turn_peak: 32.0,
            rudder_wander: 2.0,
            gate: SwitchSpec { gradient: 3.099, location: 22.59 },
            noise_std: 0.05,
            decimate: 2,
        }
    }
}

impl OscillatorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.duration > 0.0) || !(self.sample_rate * self.duration >= 16.0) {
            return Err(Error::config("need sample_rate > 0 and at least 16 samples"));
        }
        if self.flight_channels == 0 || !(self.flight_bandwidth > 0.0) {
            return Err(Error::config("need at least one flight channel with positive bandwidth"));
        }
        if !(self.quasi_static_variance >= 0.0 && self.quasi_static_lengthscale > 0.0) {
            return Err(Error::config("quasi-static variance must be >= 0 and lengthscale > 0"));
        }
        for m in &self.modes {
            if !(m.damping > 0.0 && m.damping < 1.0) {
                return Err(Error::config(format!("mode damping {} outside (0, 1)", m.damping)));
            }
            if !(m.mass > 0.0 && m.natural_freq_hz > 0.0 && m.response_std >= 0.0) {
                return Err(Error::config("mode mass and frequency must be positive, response std >= 0"));
            }
            if self.sample_rate < 2.0 * m.natural_freq_hz {
                return Err(Error::config(format!(
                    "sample rate {} Hz is below twice the {} Hz mode",
                    self.sample_rate, m.natural_freq_hz
                )));
            }
        }
        let (wlo, whi) = self.turn_width;
        if !(wlo > 0.0 && wlo <= whi) || self.turns as f64 * whi > self.duration {
            return Err(Error::config("turn widths must be positive and the turns must fit in the record"));
        }
        if !(self.noise_std > 0.0) {
            return Err(Error::config("noise std must be positive"));
        }
        if self.decimate == 0 {
            return Err(Error::config("decimate must be >= 1"));
        }
        self.gate.validate()
    }

    pub fn len(&self) -> usize {
        (self.sample_rate * self.duration).round() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatorTruth {
    pub quasi_static: Vec<f64>,
    /// Per-mode responses; they sum to `dynamic`.
    pub modes: Vec<Vec<f64>>,
    pub dynamic: Vec<f64>,
    pub gate: Vec<f64>,
    pub noiseless: Vec<f64>,
    pub noise_std: f64,
    pub train_mask: Vec<bool>,
    /// Half-open sample ranges of each turn.
    pub windows: Vec<(usize, usize)>,
}

pub const TIME: &str = "t";
pub const RUDDER: &str = "rudd";

pub fn flight_column(i: usize) -> String {
    format!("flight_{}", i + 1)
}

/// Exact one-step transition of x'' + 2ζωx' + ω²x = u/m with u held
/// constant over the step.
fn discretize(mode: &ModeSpec, dt: f64) -> ([[f64; 2]; 2], [f64; 2]) {
    let wn = TAU * mode.natural_freq_hz;
    let z = mode.damping;
    let wd = wn * (1.0 - z * z).sqrt();
    let e = (-z * wn * dt).exp();
    let (s, c) = (wd * dt).sin_cos();
    let phi = [
        [e * (c + z * wn / wd * s), e * s / wd],
        [-e * wn * wn * s / wd, e * (c - z * wn / wd * s)],
    ];
    // Γ = A⁻¹(Φ − I)B with B = (0, 1/m)
    let r0 = phi[0][1] / mode.mass;
    let r1 = (phi[1][1] - 1.0) / mode.mass;
    let gamma = [(-2.0 * z * wn * r0 - r1) / (wn * wn), r0];
    (phi, gamma)
}

/// Stationary displacement variance for unit-variance forcing.
fn stationary_variance(phi: &[[f64; 2]; 2], gamma: &[f64; 2]) -> f64 {
    let mut p = [[0.0; 2]; 2];
    for _ in 0..200_000 {
        let mut next = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = gamma[i] * gamma[j];
                for k in 0..2 {
                    for l in 0..2 {
                        acc += phi[i][k] * p[k][l] * phi[j][l];
                    }
                }
                next[i][j] = acc;
            }
        }
        let done = (next[0][0] - p[0][0]).abs() <= 1e-14 * next[0][0];
        p = next;
        if done {
            break;
        }
    }
    p[0][0]
}

/// Three-turn flight record sampled at `sample_rate`.
pub fn gen_oscillator(spec: &OscillatorSpec) -> Result<(Dataset, OscillatorTruth)> {
    spec.validate()?;
    let n = spec.len();
    let dt = 1.0 / spec.sample_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let t: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();

    // Rudder: raised-cosine turns on evenly spaced centres plus slow wander.
    let mut turns = Vec::with_capacity(spec.turns);
    for i in 0..spec.turns {
        let centre = (i as f64 + 0.5) * spec.duration / spec.turns as f64;
        let (wlo, whi) = spec.turn_width;
        let width = if whi > wlo { rng.random_range(wlo..whi) } else { wlo };
        turns.push((centre, width));
    }
    let wander: Vec<(f64, f64)> = (0..3).map(|_| (rng.random_range(0.005..0.05), rng.random_range(0.0..TAU))).collect();
    let rudder: Vec<f64> = t
        .iter()
        .map(|&tk| {
            let mut r: f64 = wander.iter().map(|(f, p)| (TAU * f * tk + p).sin()).sum::<f64>() * spec.rudder_wander / 3.0;
            for &(c, w) in &turns {
                if (tk - c).abs() < 0.5 * w {
                    r += spec.turn_peak * 0.5 * (1.0 + (TAU * (tk - c) / w).cos());
                }
            }
            r
        })
        .collect();
    let windows: Vec<(usize, usize)> = turns
        .iter()
        .map(|&(c, w)| {
            let start = ((c - 0.5 * w) * spec.sample_rate).ceil().max(0.0) as usize;
            let end = (((c + 0.5 * w) * spec.sample_rate).floor() as usize + 1).min(n);
            (start, end)
        })
        .collect();

    // Flight channels: sums of slow sinusoids, the last one partly following the rudder.
    let mut flight = Vec::with_capacity(spec.flight_channels);
    for ch in 0..spec.flight_channels {
        let comps: Vec<(f64, f64, f64)> = (0..6)
            .map(|_| (rng.random_range(0.1 * spec.flight_bandwidth..spec.flight_bandwidth), rng.random_range(0.0..TAU), normal.sample(&mut rng)))
            .collect();
        let mut col: Vec<f64> = t.iter().map(|&tk| comps.iter().map(|(f, p, a)| a * (TAU * f * tk + p).sin()).sum()).collect();
        if ch + 1 == spec.flight_channels {
            let sd = variance(&col).sqrt().max(1e-12);
            for (v, r) in col.iter_mut().zip(&rudder) {
                *v += 0.5 * sd * r / spec.turn_peak.abs().max(1.0);
            }
        }
        flight.push(col);
    }
    let qs_fn = RandomFeatures::se(&mut rng, spec.flight_channels, spec.quasi_static_variance, spec.quasi_static_lengthscale, 256);
    let moments: Vec<(f64, f64)> = flight.iter().map(|c| (mean(c), variance(c).sqrt().max(1e-12))).collect();
    let quasi_static: Vec<f64> = (0..n)
        .map(|k| {
            let z: Vec<f64> = flight.iter().zip(&moments).map(|(c, (m, s))| (c[k] - m) / s).collect();
            qs_fn.eval(&z)
        })
        .collect();

    let gate = rudder.iter().map(|&r| sigmoid(r, spec.gate.gradient, spec.gate.location)).collect::<Result<Vec<_>>>()?;
    let mut modes = Vec::with_capacity(spec.modes.len());
    for mode in &spec.modes {
        let (phi, gamma) = discretize(mode, dt);
        let q = if mode.response_std > 0.0 { mode.response_std / stationary_variance(&phi, &gamma).sqrt() } else { 0.0 };
        let (mut x, mut v) = (0.0, 0.0);
        let mut out = Vec::with_capacity(n);
        for g in &gate {
            out.push(x);
            let u = q * g * normal.sample(&mut rng);
            let nx = phi[0][0] * x + phi[0][1] * v + gamma[0] * u;
            let nv = phi[1][0] * x + phi[1][1] * v + gamma[1] * u;
            x = nx;
            v = nv;
        }
        modes.push(out);
    }
    let dynamic: Vec<f64> = (0..n).map(|k| modes.iter().map(|m| m[k]).sum()).collect();
    let noiseless: Vec<f64> = quasi_static.iter().zip(&dynamic).map(|(a, b)| a + b).collect();
    let y: Vec<f64> = noiseless.iter().map(|f| f + spec.noise_std * normal.sample(&mut rng)).collect();

    let mut names = vec![TIME.to_string()];
    let mut columns = vec![t];
    for (i, col) in flight.into_iter().enumerate() {
        names.push(flight_column(i));
        columns.push(col);
    }
    names.push(RUDDER.into());
    columns.push(rudder);
    let truth = OscillatorTruth {
        quasi_static,
        modes,
        dynamic,
        gate,
        noiseless,
        noise_std: spec.noise_std,
        train_mask: (0..n).map(|k| k % spec.decimate == 0).collect(),
        windows,
    };
    Ok((Dataset::new(Inputs::new(names, columns)?, y)?, truth))
}

/// Peak of the displacement response spectrum, |H(ω)|² maximal at ωₙ√(1−2ζ²).
pub fn resonance_hz(mode: &ModeSpec) -> f64 {
    mode.natural_freq_hz * (1.0 - 2.0 * mode.damping * mode.damping).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short() -> OscillatorSpec {
        OscillatorSpec { duration: 30.0, turn_width: (6.0, 8.0), ..OscillatorSpec::default() }
    }

    #[test]
    fn discretization_matches_free_decay() {
        // Unforced response from x=1, v=0 follows the analytic damped cosine.
        let mode = ModeSpec { mass: 1.0, damping: 0.1, natural_freq_hz: 3.0, response_std: 1.0 };
        let (phi, _) = discretize(&mode, 0.01);
        let (wn, z) = (TAU * 3.0, 0.1);
        let wd = wn * (1.0f64 - z * z).sqrt();
        let (mut x, mut v) = (1.0, 0.0);
        for k in 1..200 {
            let nx = phi[0][0] * x + phi[0][1] * v;
            v = phi[1][0] * x + phi[1][1] * v;
            x = nx;
            let t = k as f64 * 0.01;
            let want = (-z * wn * t).exp() * ((wd * t).cos() + z * wn / wd * (wd * t).sin());
            assert!((x - want).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_and_components_sum() {
        let (a, ta) = gen_oscillator(&short()).unwrap();
        let (b, _) = gen_oscillator(&short()).unwrap();
        assert_eq!(a, b);
        for k in 0..a.len() {
            assert_eq!(ta.quasi_static[k] + ta.dynamic[k], ta.noiseless[k]);
        }
        assert_eq!(ta.windows.len(), 3);
        assert_eq!(ta.train_mask.iter().filter(|m| **m).count(), a.len() / 2);
    }

    #[test]
    fn zero_forcing_leaves_quasi_static_only() {
        let mut spec = short();
        for m in &mut spec.modes {
            m.response_std = 0.0;
        }
        let (_, t) = gen_oscillator(&spec).unwrap();
        assert!(t.dynamic.iter().all(|&v| v == 0.0));
        assert_eq!(t.noiseless, t.quasi_static);
    }

    #[test]
    fn bursts_only_inside_turns() {
        let (_, t) = gen_oscillator(&short()).unwrap();
        let inside: Vec<bool> = (0..t.gate.len()).map(|k| t.windows.iter().any(|&(s, e)| k >= s && k < e)).collect();
        let energy = |want: bool| {
            let v: Vec<f64> = (0..t.gate.len()).filter(|&k| inside[k] == want).map(|k| t.dynamic[k].powi(2)).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!(energy(true) > 100.0 * energy(false));
    }

    #[test]
    fn nyquist_and_damping_checks() {
        let fast = OscillatorSpec { sample_rate: 60.0, ..short() };
        assert!(matches!(gen_oscillator(&fast), Err(Error::Config(_))));
        let mut over = short();
        over.modes[0].damping = 1.0;
        assert!(gen_oscillator(&over).is_err());
    }
}
