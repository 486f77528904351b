//! Experiment configuration files.
//!
//! ```toml
//! [system]
//! kind = "demo"          # or "linear"
//! name = "heat1d"
//!
//! [grid]
//! n = 256
//!
//! [solver]
//! flux = "spectral"
//! snapshot_interval = 0.01
//!
//! [experiment]
//! epsilon = 0.05
//! t_final = 0.1
//! ```

use std::fmt;

use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub system: SystemConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemKind {
    /// A built-in fixture selected by `name`.
    Demo,
    /// `W_t + sum_j A_j W_x_j = C W` with constant matrices, decoupled by `transform`.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub kind: SystemKind,
    pub name: Option<String>,
    /// Number of conserved components (`linear` only).
    pub conserved: Option<usize>,
    /// One `N x N` matrix per axis (`linear` only).
    pub a: Option<Vec<Vec<Vec<f64>>>>,
    /// `N x N` relaxation matrix (`linear` only).
    pub source: Option<Vec<Vec<f64>>>,
    /// Decoupling matrix `P`; identity when absent.
    pub transform: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_cells")]
    pub n: usize,
    /// Inferred from the system when absent.
    pub dim: Option<usize>,
    #[serde(default = "default_period")]
    pub period: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n: default_cells(),
            dim: None,
            period: default_period(),
        }
    }
}

fn default_cells() -> usize {
    128
}

fn default_period() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FluxName {
    Rusanov,
    Upwind,
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceSolveName {
    LinearExact,
    Newton,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub cfl: Option<f64>,
    pub flux: Option<FluxName>,
    /// Defaults to `linear-exact` for sources linear in the relaxing block, else `newton`.
    pub source_solve: Option<SourceSolveName>,
    pub newton_tol: Option<f64>,
    pub newton_max_iter: Option<usize>,
    pub snapshot_interval: Option<f64>,
    pub positivity_floor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub mean: Vec<f64>,
    pub amplitude: Vec<f64>,
    pub modes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    /// Strictly decreasing ladder for `converge`.
    pub epsilons: Option<Vec<f64>>,
    #[serde(default = "default_true")]
    pub well_prepared: bool,
    /// Also integrate the parabolic limit during `run`.
    #[serde(default)]
    pub reference: bool,
    pub reference_dt: Option<f64>,
    pub initial: Option<InitialConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            epsilon: default_epsilon(),
            t_final: default_t_final(),
            epsilons: None,
            well_prepared: true,
            reference: false,
            reference_dt: None,
            initial: None,
        }
    }
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_t_final() -> f64 {
    0.1
}

fn default_true() -> bool {
    true
}

/// Parse failure with a 1-based source line when one is known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Innermost `[section]` header at or before `offset`.
fn section_at(text: &str, offset: usize) -> Option<&str> {
    let mut current = None;
    let mut pos = 0;
    for line in text.split_inclusive('\n') {
        if pos > offset {
            break;
        }
        let trimmed = line.trim();
        if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.split(']').next()) {
            current = Some(name.trim_matches(|c| c == '[' || c == ' '));
        }
        pos += line.len();
    }
    current
}

pub fn parse(text: &str) -> Result<Config, ConfigError> {
    toml::from_str(text).map_err(|e: toml::de::Error| {
        let span = e.span();
        let line = span
            .as_ref()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        let mut message = e.message().to_string();
        if let Some(field) = message
            .strip_prefix("missing field `")
            .and_then(|rest| rest.strip_suffix('`'))
        {
            let section = span
                .as_ref()
                .and_then(|s| section_at(text, s.start))
                .filter(|s| !s.is_empty());
            let qualified = match section {
                Some(section) => format!("{section}.{field}"),
                None if field == "system" => "system".to_string(),
                None => field.to_string(),
            };
            message = format!("missing field `{qualified}`");
        }
        ConfigError { line, message }
    })
}
