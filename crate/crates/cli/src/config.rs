//! Experiment configuration files.

use std::path::{Path, PathBuf};

use levy_euler::harness::{FitOptions, Pairing, ReferencePolicy, RuleChoice, SchemeKind};
use levy_euler::models::Overrides;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// One experiment, read from a TOML file. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Name of the output subdirectory and the stream-derivation tag.
    pub tag: String,
    /// Catalog problem name.
    pub problem: String,
    #[serde(default = "default_scheme")]
    pub scheme: SchemeKind,
    #[serde(default)]
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub sigmas: Vec<f64>,
    #[serde(default)]
    pub rule: RuleChoice,
    /// Test function name; the problem's default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_function: Option<String>,
    pub n_paths: usize,
    #[serde(default)]
    pub pairing: Pairing,
    /// Root seed; below 2^63 so it fits a TOML integer.
    pub seed: u64,
    #[serde(default = "default_outdir")]
    pub outdir: PathBuf,
    /// `[lo, hi]` band the fitted order must fall in for `rate` to pass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_kappa: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub overrides: Overrides,
    #[serde(default)]
    pub reference: ReferencePolicy,
    #[serde(default)]
    pub fit: FitOptions,
}

fn default_scheme() -> SchemeKind {
    SchemeKind::Simple
}

fn default_outdir() -> PathBuf {
    PathBuf::from("results")
}

fn is_default<T: Default + PartialEq>(x: &T) -> bool {
    *x == T::default()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Checks that do not depend on the subcommand.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.tag.is_empty()
            || self.tag.contains(['/', '\\'])
            || self.tag == "."
            || self.tag == ".."
        {
            return Err(CliError::Config(format!(
                "tag '{}' is not a plain directory name",
                self.tag
            )));
        }
        if self.n_paths == 0 {
            return Err(CliError::Config("n_paths must be positive".into()));
        }
        if let Some(bad) = self.deltas.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(CliError::Config(format!(
                "deltas: {bad} is not a positive step"
            )));
        }
        if let Some(bad) = self.sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(CliError::Config(format!(
                "sigmas: {bad} is not a positive level"
            )));
        }
        if let Some([lo, hi]) = self.expect_kappa {
            if !(lo <= hi) {
                return Err(CliError::Config(format!(
                    "expect_kappa: [{lo}, {hi}] is empty"
                )));
            }
        }
        Ok(())
    }

    pub fn require_deltas(&self) -> Result<(), CliError> {
        if self.deltas.is_empty() {
            return Err(CliError::Config("deltas: the step list is empty".into()));
        }
        Ok(())
    }
}
