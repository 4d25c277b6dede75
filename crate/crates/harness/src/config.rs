//! Experiment configuration: TOML with typed sections, layered over a
//! built-in preset.

use std::path::{Path, PathBuf};

use cvqkd_cs::channel::{Detection, NoiseMode, ProtocolParams};
use cvqkd_cs::estimator::{EstimatorConfig, Tolerance, VarianceMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

const DESK: &str = include_str!("../presets/desk.toml");
const PAPER: &str = include_str!("../presets/paper.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown config keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("`{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

/// Built-in starting points; a config file only lists what it changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 20 sub-channels of 2000 symbols.
    #[default]
    Desk,
    /// 100 sub-channels of 10^4 symbols.
    Paper,
}

impl Preset {
    fn text(self) -> &'static str {
        match self {
            Preset::Desk => DESK,
            Preset::Paper => PAPER,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorSelection {
    Variables,
    Statistics,
    Both,
}

/// One of the two reconstruction models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Variables,
    Statistics,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Variables => "variables",
            EstimatorKind::Statistics => "statistics",
        }
    }
}

impl EstimatorSelection {
    pub fn kinds(self) -> &'static [EstimatorKind] {
        match self {
            EstimatorSelection::Variables => &[EstimatorKind::Variables],
            EstimatorSelection::Statistics => &[EstimatorKind::Statistics],
            EstimatorSelection::Both => &[EstimatorKind::Variables, EstimatorKind::Statistics],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    /// Bounded log-normal sampler whose mean decays with distance.
    Lognormal,
    /// One `index,T,epsilon,p` file per distance label.
    Files,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceModeName {
    Replicated,
    Blockwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSection {
    pub seeds: Vec<u64>,
    pub fractions: Vec<f64>,
    pub estimators: EstimatorSelection,
    pub detections: Vec<Detection>,
    pub noise: NoiseMode,
    pub output: PathBuf,
    /// Fraction whose estimates feed the key rate; the largest configured
    /// fraction when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyrate_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSection {
    pub source: SourceKind,
    pub subchannels: usize,
    pub block_length: usize,
    pub excess_noise: f64,
    /// Distance labels in km, one ensemble each.
    pub distances: Vec<f64>,
    pub attenuation_db_per_km: f64,
    pub log_sigma: f64,
    pub seed: u64,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSection {
    pub modulation_variance: f64,
    pub detector_efficiency: f64,
    pub electronic_noise: f64,
    pub reconciliation_efficiency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSection {
    pub max_atoms: usize,
    /// `δ = factor · √m_s · σ̂`.
    pub tolerance_factor: f64,
    pub variance_mode: VarianceModeName,
    /// Samples per variance entry in blockwise mode.
    pub variance_block: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MipSection {
    pub enabled: bool,
    /// Column subset size when `full` is off.
    pub columns: usize,
    pub full: bool,
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub ensemble: EnsembleSection,
    pub protocol: ProtocolSection,
    pub estimator: EstimatorSection,
    pub mip: MipSection,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        parse_config("", preset, Path::new(".")).expect("built-in presets are valid")
    }

    /// Canonical TOML text; loading it back yields the same config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the canonical text, hex encoded. The output directory is
    /// left out since it does not affect any result.
    pub fn hash(&self) -> String {
        let mut identity = self.clone();
        identity.experiment.output = PathBuf::new();
        hex::encode(Sha256::digest(identity.to_toml().as_bytes()))
    }

    /// Protocol parameters with the first configured detection scheme.
    pub fn protocol_params(&self) -> ProtocolParams {
        let p = &self.protocol;
        ProtocolParams {
            modulation_variance: p.modulation_variance,
            detector_efficiency: p.detector_efficiency,
            electronic_noise: p.electronic_noise,
            reconciliation_efficiency: p.reconciliation_efficiency,
            detection: self.experiment.detections.first().copied().unwrap_or(Detection::Homodyne),
        }
    }

    pub fn estimator_config(&self) -> EstimatorConfig {
        EstimatorConfig {
            max_atoms: self.estimator.max_atoms,
            tolerance: Tolerance::NoiseScaled {
                factor: self.estimator.tolerance_factor,
            },
        }
    }

    pub fn variance_mode(&self) -> VarianceMode {
        match self.estimator.variance_mode {
            VarianceModeName::Replicated => VarianceMode::Replicated,
            VarianceModeName::Blockwise => VarianceMode::Blockwise {
                block_size: self.estimator.variance_block,
            },
        }
    }

    pub fn keyrate_fraction(&self) -> f64 {
        self.experiment
            .keyrate_fraction
            .unwrap_or_else(|| self.experiment.fractions.iter().copied().fold(f64::MIN, f64::max))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let e = &self.experiment;
        if e.seeds.is_empty() {
            return Err(invalid("experiment.seeds", "must list at least one seed"));
        }
        if e.fractions.is_empty() {
            return Err(invalid("experiment.fractions", "must list at least one fraction"));
        }
        if let Some(f) = e.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(invalid("experiment.fractions", format!("{f} is outside (0, 1]")));
        }
        if e.detections.is_empty() {
            return Err(invalid("experiment.detections", "must list at least one detection scheme"));
        }
        if let Some(f) = e.keyrate_fraction {
            if !e.fractions.contains(&f) {
                return Err(invalid("experiment.keyrate_fraction", format!("{f} is not one of the fractions")));
            }
        }

        let n = &self.ensemble;
        if n.subchannels == 0 {
            return Err(invalid("ensemble.subchannels", "must be at least 1"));
        }
        if n.block_length < 2 {
            return Err(invalid("ensemble.block_length", "must be at least 2"));
        }
        if !(n.excess_noise.is_finite() && n.excess_noise >= 0.0) {
            return Err(invalid("ensemble.excess_noise", "must be finite and non-negative"));
        }
        if n.distances.is_empty() || n.distances.iter().any(|d| !d.is_finite()) {
            return Err(invalid("ensemble.distances", "must list at least one finite distance"));
        }
        if !(n.attenuation_db_per_km.is_finite() && n.attenuation_db_per_km >= 0.0) {
            return Err(invalid("ensemble.attenuation_db_per_km", "must be finite and non-negative"));
        }
        if !(n.log_sigma.is_finite() && n.log_sigma >= 0.0) {
            return Err(invalid("ensemble.log_sigma", "must be finite and non-negative"));
        }
        if n.source == SourceKind::Files {
            if n.files.len() != n.distances.len() {
                return Err(invalid(
                    "ensemble.files",
                    format!("{} files for {} distances", n.files.len(), n.distances.len()),
                ));
            }
            if let Some(missing) = n.files.iter().find(|p| !p.is_file()) {
                return Err(invalid("ensemble.files", format!("{} does not exist", missing.display())));
            }
        }

        self.protocol_params().validate().map_err(|err| match err {
            cvqkd_cs::Error::InvalidParameter { name, value, reason } => {
                invalid(format!("protocol.{name}"), format!("{value} {reason}"))
            }
            other => invalid("protocol", other.to_string()),
        })?;

        let s = &self.estimator;
        if s.max_atoms == 0 {
            return Err(invalid("estimator.max_atoms", "must be at least 1"));
        }
        if !(s.tolerance_factor.is_finite() && s.tolerance_factor >= 0.0) {
            return Err(invalid("estimator.tolerance_factor", "must be finite and non-negative"));
        }
        if s.variance_mode == VarianceModeName::Blockwise && !(2..=n.block_length).contains(&s.variance_block) {
            return Err(invalid(
                "estimator.variance_block",
                format!("must lie in 2..={} for blockwise variances", n.block_length),
            ));
        }
        if self.mip.columns < 2 {
            return Err(invalid("mip.columns", "must be at least 2"));
        }
        Ok(())
    }
}

/// Overlays `top` onto `base`, merging nested tables key by key.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// Parses `text` over `preset`. Relative ensemble files resolve against
/// `base_dir`.
pub fn parse_config(text: &str, preset: Preset, base_dir: &Path) -> Result<ExperimentConfig, ConfigError> {
    let mut table: toml::Table = preset.text().parse()?;
    merge(&mut table, text.parse()?);
    let mut unknown = Vec::new();
    let mut cfg: ExperimentConfig = serde_ignored::deserialize(toml::Value::Table(table), |path| {
        unknown.push(path.to_string());
    })?;
    if !unknown.is_empty() {
        return Err(ConfigError::UnknownKeys(unknown));
    }
    for f in &mut cfg.ensemble.files {
        if f.is_relative() {
            *f = base_dir.join(&*f);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path, preset: Preset) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, preset, path.parent().unwrap_or(Path::new(".")))
}
