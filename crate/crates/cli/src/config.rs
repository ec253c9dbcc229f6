//! Job configuration. Every table rejects unknown keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tlres::txline::{AttenuationModel, LineSpec, LoadKind, LoadModel, ReactiveElement};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub line: Option<LineConfig>,
    #[serde(default)]
    pub load: Option<LoadConfig>,
    #[serde(default)]
    pub solve: Option<SolveConfig>,
    #[serde(default)]
    pub calibrate: Option<CalibrateConfig>,
    #[serde(default)]
    pub extract: Option<ExtractConfig>,
    #[serde(default)]
    pub oracle: Option<OracleConfig>,
    #[serde(default)]
    pub stats: Option<StatsConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineConfig {
    pub z0: f64,
    pub f_open: f64,
    /// Omitted for a lossless line.
    #[serde(default)]
    pub q_open_ref: Option<f64>,
    #[serde(default = "default_s")]
    pub exponent_s: f64,
}

fn default_s() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Capacitor,
    Inductor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementConfig {
    pub kind: ElementKind,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    /// Single element; mutually exclusive with `elements`.
    #[serde(default)]
    pub kind: Option<ElementKind>,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub elements: Option<Vec<ElementConfig>>,
    #[serde(default)]
    pub tan_delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub modes: Vec<u32>,
    /// Points per standing-wave profile; 0 disables the profiles.
    #[serde(default)]
    pub profile_points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeRow {
    pub mode_n: u32,
    pub f_r_hz: f64,
    #[serde(default)]
    pub q_i: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    pub kind: ElementKind,
    #[serde(default = "default_z0")]
    pub z0: f64,
    #[serde(default = "default_s")]
    pub exponent_s: f64,
    /// Mode table CSV, relative to the config file.
    #[serde(default)]
    pub modes_csv: Option<PathBuf>,
    #[serde(default)]
    pub modes: Option<Vec<ModeRow>>,
    #[serde(default)]
    pub f_r_sigma_hz: Option<f64>,
    #[serde(default)]
    pub q_i_rel_sigma: Option<f64>,
    #[serde(default)]
    pub discriminate: bool,
}

fn default_z0() -> f64 {
    50.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub f_open: f64,
    pub q_open_ref: f64,
    #[serde(default = "default_s")]
    pub exponent_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractConfig {
    /// Trace CSV, relative to the config file.
    pub trace_csv: PathBuf,
    /// Converts the fitted `Q_i` into a single-mode loss tangent.
    #[serde(default)]
    pub reference: Option<ReferenceConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "default_mode")]
    pub mode_n: u32,
    /// Fixed coupling capacitance; otherwise chosen from `rel_pull`.
    #[serde(default)]
    pub coupling_c: Option<f64>,
    #[serde(default)]
    pub rel_pull: Option<f64>,
    #[serde(default = "default_z0")]
    pub feed_z0: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Half-span of the sweep in analytic linewidths `f_r / Q_i`.
    #[serde(default = "default_span")]
    pub span_linewidths: f64,
    /// Standard deviation of complex Gaussian noise per quadrature.
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub delay_tau: f64,
}

fn default_mode() -> u32 {
    1
}

fn default_points() -> usize {
    2001
}

fn default_span() -> f64 {
    10.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsConfig {
    #[serde(default)]
    pub monte_carlo: Option<MonteCarloConfig>,
    #[serde(default)]
    pub reference: Option<ReferenceEnsembleConfig>,
    #[serde(default)]
    pub kappa: Option<Vec<KappaRow>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "input", rename_all = "snake_case", deny_unknown_fields)]
pub enum MonteCarloInput {
    FOpen { kind: ElementKind, mode_n: u32, f_r: f64, f_open: f64, z0: f64 },
    QOpen { phi: f64, tan_delta: f64, q_open: f64, exponent_s: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub model: MonteCarloInput,
    pub rel_sigma: f64,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
}

fn default_samples() -> usize {
    100_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceEnsembleConfig {
    pub q_open_mean: f64,
    pub rel_sigma: f64,
    pub n: usize,
    /// Measured `Q_i` of the device mode.
    pub q_i: f64,
    pub f_r: f64,
    pub f_open: f64,
    #[serde(default = "default_s")]
    pub exponent_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KappaRow {
    pub area_um2: f64,
    pub thickness_nm: f64,
    pub capacitance_ff: f64,
    #[serde(default = "default_area_sigma")]
    pub area_sigma: f64,
}

fn default_area_sigma() -> f64 {
    0.1
}

impl JobConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: JobConfig = toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Validation(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn line_spec(&self) -> Result<LineSpec, CliError> {
        let l = self.line.as_ref().ok_or_else(|| missing("line"))?;
        let atten = match l.q_open_ref {
            Some(q) => AttenuationModel::new(q, l.exponent_s)?,
            None => AttenuationModel::lossless(),
        };
        Ok(LineSpec::new(l.z0, l.f_open, atten)?)
    }

    pub fn load_model(&self) -> Result<LoadModel, CliError> {
        let l = self.load.as_ref().ok_or_else(|| missing("load"))?;
        match (&l.kind, &l.value, &l.elements) {
            (Some(kind), Some(value), None) => Ok(LoadModel::of_kind(load_kind(*kind), *value, l.tan_delta)?),
            (None, None, Some(elements)) => {
                let elements = elements
                    .iter()
                    .map(|e| match e.kind {
                        ElementKind::Capacitor => ReactiveElement::Capacitor(e.value),
                        ElementKind::Inductor => ReactiveElement::Inductor(e.value),
                    })
                    .collect();
                Ok(LoadModel::series(elements, l.tan_delta)?)
            }
            _ => Err(CliError::Validation(
                "load needs either kind and value, or elements".into(),
            )),
        }
    }
}

pub fn load_kind(kind: ElementKind) -> LoadKind {
    match kind {
        ElementKind::Capacitor => LoadKind::Capacitor,
        ElementKind::Inductor => LoadKind::Inductor,
    }
}

pub fn missing(section: &str) -> CliError {
    CliError::Validation(format!("config has no [{section}] table"))
}
