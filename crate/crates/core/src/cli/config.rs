//! TOML run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::OptConfig;
use crate::synth::{ChangepointSpec, OscillatorSpec, RegimeSpec};
use crate::vhgp::VhgpConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory; `--out` overrides it.
    pub out: Option<PathBuf>,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub optimizer: OptConfig,
    pub fit: FitConfig,
    pub vhgp: VhgpConfig,
    pub predict: PredictConfig,
    pub sample: SampleConfig,
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    pub target: String,
    /// Columns that are never kernel inputs. `train` and `region_*` columns
    /// are always excluded.
    pub exclude: Vec<String>,
    /// Rows with a non-zero value here form the training set, if the column exists.
    pub train_column: String,
    /// Random training fraction, used when no train column is present.
    pub train_frac: Option<f64>,
    /// Keep every k-th row for training, used when no train column is present.
    pub decimate: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { path: None, target: "y".into(), exclude: Vec::new(), train_column: "train".into(), train_frac: None, decimate: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Likelihood {
    #[default]
    Homoscedastic,
    Heteroscedastic,
}

/// Overrides for one named parameter.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamOverride {
    pub value: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Pin the parameter at its (possibly overridden) value.
    pub fixed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseGpConfig {
    pub variance: f64,
    pub lengthscale: f64,
    /// Defaults to the columns feeding the signal's SE and switch leaves.
    pub inputs: Option<Vec<String>>,
}

impl Default for NoiseGpConfig {
    fn default() -> Self {
        Self { variance: 1.0, lengthscale: 1.0, inputs: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kernel: String,
    pub likelihood: Likelihood,
    /// z-score the inputs of SE leaves.
    pub standardize_inputs: bool,
    pub standardize_targets: bool,
    /// Initial σ_n² in standardized target units.
    pub noise_variance: f64,
    pub params: BTreeMap<String, ParamOverride>,
    pub noise_gp: NoiseGpConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kernel: String::new(),
            likelihood: Likelihood::Homoscedastic,
            standardize_inputs: true,
            standardize_targets: true,
            noise_variance: 0.1,
            params: BTreeMap::new(),
            noise_gp: NoiseGpConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetStrategy {
    /// `edges` for switched SDOF models, otherwise `random`.
    #[default]
    Auto,
    Random,
    /// Contiguous blocks centred where the first switch input changes fastest.
    Edges,
    None,
}

/// Hyperparameters are optimized on at most `max_points` training rows; the
/// final model always conditions on the full training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub max_points: usize,
    pub subset: SubsetStrategy,
    pub blocks: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { max_points: 1500, subset: SubsetStrategy::Auto, blocks: 3 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictConfig {
    pub model: Option<PathBuf>,
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub column: String,
    pub from: f64,
    pub to: f64,
    pub points: usize,
    pub draws: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { column: "x".into(), from: 0.0, to: 1.0, points: 200, draws: 5 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    #[default]
    Regime,
    Oscillator,
    Changepoint,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub kind: SynthKind,
    pub regime: RegimeSpec,
    pub oscillator: OscillatorSpec,
    pub changepoint: ChangepointSpec,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string().trim_end().replace('\n', " ")))
    }

    /// Load from a file; relative paths inside are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(q) = p {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        fix(&mut cfg.data.path);
        fix(&mut cfg.out);
        fix(&mut cfg.predict.model);
        fix(&mut cfg.predict.data);
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let cfg = RunConfig::from_toml(
            r#"
            seed = 3
            [data]
            path = "d.csv"
            train_frac = 0.2
            [model]
            kernel = "se(x)"
            likelihood = "heteroscedastic"
            [model.params."switch.W.location"]
            lower = 5.0
            upper = 30.0
            [optimizer]
            restarts = 2
            [synth]
            kind = "oscillator"
            [synth.oscillator]
            duration = 20.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.model.likelihood, Likelihood::Heteroscedastic);
        assert_eq!(cfg.model.params["switch.W.location"].upper, Some(30.0));
        assert_eq!(cfg.optimizer.restarts, 2);
        assert_eq!(cfg.optimizer.max_iter, OptConfig::default().max_iter);
        assert_eq!(cfg.synth.oscillator.duration, 20.0);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        assert!(matches!(RunConfig::from_toml("[model]\nkernal = 'se(x)'"), Err(Error::Config(_))));
    }
}
