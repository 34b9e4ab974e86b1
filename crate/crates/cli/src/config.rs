//! JSON configuration documents and their validation.

use std::path::{Path, PathBuf};

use cpca::dynamics::{ChainScheme, InitConfig, IntegratorConfig};
use cpca::linmodel::validate_spectrum;
use cpca::{RuleKind, SpectralModel};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// A configuration problem, located by the path of the offending field.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, message: impl ToString) -> Self {
        Self::Invalid {
            field: field.into(),
            message: message.to_string(),
        }
    }

    /// Field path of the failure, if the error concerns a field.
    pub fn field(&self) -> Option<&str> {
        match self {
            Self::Invalid { field, .. } => Some(field),
            Self::Read { .. } => None,
        }
    }
}

pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = match e.path().to_string() {
            p if p == "." => "<root>".to_string(),
            p => p,
        };
        ConfigError::invalid(field, e.inner())
    })
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_owned(),
        source,
    })?;
    parse(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelConfig {
    Loglinear {
        n: usize,
        seed: u64,
    },
    Explicit {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n: Option<usize>,
        values: Vec<f64>,
        seed: u64,
    },
    /// A model document previously exported as row-major JSON.
    File { path: PathBuf },
}

impl ModelConfig {
    pub fn build(&self) -> Result<SpectralModel, ConfigError> {
        match self {
            Self::Loglinear { n, seed } => SpectralModel::loglinear(*n, *seed).map_err(|e| ConfigError::invalid("model.n", e)),
            Self::Explicit { n, values, seed } => {
                if let Some(n) = n {
                    if *n != values.len() {
                        return Err(ConfigError::invalid(
                            "model.n",
                            format!("n = {n} but {} values given", values.len()),
                        ));
                    }
                }
                validate_spectrum(values).map_err(|e| ConfigError::invalid("model.values", e))?;
                SpectralModel::from_spectrum(values, *seed).map_err(|e| ConfigError::invalid("model.values", e))
            }
            Self::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                    path: path.clone(),
                    source,
                })?;
                SpectralModel::from_json(&text).map_err(|e| ConfigError::invalid("model.path", e))
            }
        }
    }

    /// Dimension implied by the configuration without building the model.
    fn declared_n(&self) -> Option<usize> {
        match self {
            Self::Loglinear { n, .. } => Some(*n),
            Self::Explicit { n, values, .. } => Some(n.unwrap_or(values.len())),
            Self::File { .. } => None,
        }
    }
}

/// One simulation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub rule: RuleKind,
    pub m: usize,
    /// Single-stage runs: the stage whose trajectory is of interest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    /// Pin stages `1..p-1` to the true eigenpairs and integrate stage `p` only.
    #[serde(default)]
    pub pin_previous: bool,
    pub scheme: ChainScheme,
    pub integrator: IntegratorConfig,
    pub init: InitConfig,
    pub trials: usize,
    pub base_seed: u64,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// Checks the cross-field invariants and builds the model.
    pub fn validate(&self) -> Result<SpectralModel, ConfigError> {
        if let Some(n) = self.model.declared_n() {
            check_m(self.m, n)?;
        }
        let model = self.model.build()?;
        check_m(self.m, model.n())?;
        if let Some(p) = self.p {
            if p == 0 || p > self.m {
                return Err(ConfigError::invalid("p", format!("p = {p} outside 1..={}", self.m)));
            }
        } else if self.pin_previous {
            return Err(ConfigError::invalid("pin_previous", "requires p"));
        }
        self.integrator.validate().map_err(|e| ConfigError::invalid("integrator", e))?;
        self.init.validate().map_err(|e| ConfigError::invalid("init.l", e))?;
        if self.trials == 0 {
            return Err(ConfigError::invalid("trials", "must be at least 1"));
        }
        Ok(model)
    }

    /// Number of chain stages actually built and the number of pinned ones.
    pub fn chain_shape(&self) -> (usize, usize) {
        match self.p {
            Some(p) if self.pin_previous => (p, p - 1),
            Some(p) => (p, 0),
            None => (self.m, 0),
        }
    }
}

fn check_m(m: usize, n: usize) -> Result<(), ConfigError> {
    if m == 0 || m > n {
        return Err(ConfigError::invalid("m", format!("m = {m} must lie in 1..=n (n = {n})")));
    }
    Ok(())
}

/// Which analytic spectrum to report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "selector", rename_all = "kebab-case")]
pub enum Selector {
    Principal { q: usize },
    Arbitrary { p: usize, q: usize },
    ExactCross { i: usize, j: usize },
    Bordered { p: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "StabilityDocument", into = "StabilityDocument")]
pub struct StabilityConfig {
    pub spectrum: Vec<f64>,
    pub selector: Selector,
    /// Seed of the random eigenvectors used for the numeric cross-check.
    pub seed: u64,
}

// On-disk form: the selector tag sits next to the spectrum, and every
// variant rejects fields that belong to the others.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "selector", rename_all = "kebab-case", deny_unknown_fields)]
enum StabilityDocument {
    Principal {
        spectrum: Vec<f64>,
        q: usize,
        #[serde(default)]
        seed: u64,
    },
    Arbitrary {
        spectrum: Vec<f64>,
        p: usize,
        q: usize,
        #[serde(default)]
        seed: u64,
    },
    ExactCross {
        spectrum: Vec<f64>,
        i: usize,
        j: usize,
        #[serde(default)]
        seed: u64,
    },
    Bordered {
        spectrum: Vec<f64>,
        p: usize,
        #[serde(default)]
        seed: u64,
    },
}

impl From<StabilityDocument> for StabilityConfig {
    fn from(doc: StabilityDocument) -> Self {
        let (spectrum, selector, seed) = match doc {
            StabilityDocument::Principal { spectrum, q, seed } => (spectrum, Selector::Principal { q }, seed),
            StabilityDocument::Arbitrary { spectrum, p, q, seed } => (spectrum, Selector::Arbitrary { p, q }, seed),
            StabilityDocument::ExactCross { spectrum, i, j, seed } => (spectrum, Selector::ExactCross { i, j }, seed),
            StabilityDocument::Bordered { spectrum, p, seed } => (spectrum, Selector::Bordered { p }, seed),
        };
        Self { spectrum, selector, seed }
    }
}

impl From<StabilityConfig> for StabilityDocument {
    fn from(cfg: StabilityConfig) -> Self {
        let StabilityConfig { spectrum, selector, seed } = cfg;
        match selector {
            Selector::Principal { q } => Self::Principal { spectrum, q, seed },
            Selector::Arbitrary { p, q } => Self::Arbitrary { spectrum, p, q, seed },
            Selector::ExactCross { i, j } => Self::ExactCross { spectrum, i, j, seed },
            Selector::Bordered { p } => Self::Bordered { spectrum, p, seed },
        }
    }
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        validate_spectrum(&self.spectrum).map_err(|e| ConfigError::invalid("spectrum", e))?;
        let n = self.spectrum.len();
        let check = |name: &str, k: usize| {
            if k == 0 || k > n {
                Err(ConfigError::invalid(name, format!("{name} = {k} outside 1..={n}")))
            } else {
                Ok(())
            }
        };
        match self.selector {
            Selector::Principal { q } => check("q", q),
            Selector::Arbitrary { p, q } => check("p", p).and(check("q", q)),
            Selector::ExactCross { i, j } => check("i", i).and(check("j", j)),
            Selector::Bordered { p } => check("p", p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbConfig {
    pub model: ModelConfig,
    #[serde(default = "default_rule")]
    pub rule: RuleKind,
    pub p: usize,
    pub q: usize,
    pub trials: usize,
    pub eps_scale: f64,
    pub seed: u64,
}

fn default_rule() -> RuleKind {
    RuleKind::Arbitrary
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<SpectralModel, ConfigError> {
        if self.trials == 0 {
            return Err(ConfigError::invalid("trials", "must be at least 1"));
        }
        if !(self.eps_scale > 0.0 && self.eps_scale.is_finite()) {
            return Err(ConfigError::invalid("eps_scale", format!("must be positive, got {}", self.eps_scale)));
        }
        let model = self.model.build()?;
        for (name, k) in [("p", self.p), ("q", self.q)] {
            if k == 0 || k > model.n() {
                return Err(ConfigError::invalid(name, format!("{name} = {k} outside 1..={}", model.n())));
            }
        }
        Ok(model)
    }
}
