//! Result tables and their CSV/TOML serialisation.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use cvqkd_cs::channel::Detection;
use cvqkd_cs::security::EstimateSource;
use serde::Serialize;
use thiserror::Error;

use crate::config::{EstimatorKind, ExperimentConfig};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

#[derive(Debug, Error, PartialEq)]
pub enum MseError {
    #[error("{estimates} estimates for {truth} true values")]
    LengthMismatch { estimates: usize, truth: usize },
    #[error("mean square error of an empty list")]
    Empty,
}

/// `(1/M) Σ (x̂_i − x_i)²`, with compensated summation.
pub fn compute_mse(estimates: &[f64], truth: &[f64]) -> Result<f64, MseError> {
    if estimates.len() != truth.len() {
        return Err(MseError::LengthMismatch {
            estimates: estimates.len(),
            truth: truth.len(),
        });
    }
    if estimates.is_empty() {
        return Err(MseError::Empty);
    }
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for (e, t) in estimates.iter().zip(truth) {
        let v = (e - t) * (e - t);
        let s = sum + v;
        carry += if sum.abs() >= v.abs() { (sum - s) + v } else { (v - s) + sum };
        sum = s;
    }
    Ok((sum + carry) / estimates.len() as f64)
}

/// One row of `estimates.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRow {
    pub distance: f64,
    pub subchannel: usize,
    pub fraction: f64,
    pub seed: u64,
    pub estimator: EstimatorKind,
    #[serde(rename = "T_true")]
    pub t_true: f64,
    #[serde(rename = "T_hat")]
    pub t_hat: f64,
    pub eps_true: f64,
    /// Empty when `T̂ = 0`.
    pub eps_hat: Option<f64>,
    pub residual: f64,
    pub flags: String,
}

/// One row of `mse.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseRow {
    pub distance: f64,
    pub fraction: f64,
    pub estimator: EstimatorKind,
    pub seeds: usize,
    #[serde(rename = "MSE_T")]
    pub mse_t: f64,
    /// Over the estimates that carry an `ε̂`; NaN when none do.
    #[serde(rename = "MSE_eps")]
    pub mse_eps: f64,
}

/// One row of `keyrate.csv`. Estimated sources are averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyRateRow {
    pub distance: f64,
    pub detection: Detection,
    #[serde(serialize_with = "source_str")]
    pub source: EstimateSource,
    #[serde(rename = "I_AB")]
    pub i_ab: f64,
    #[serde(rename = "chi_BE")]
    pub chi_be: f64,
    #[serde(rename = "K")]
    pub k: f64,
}

fn source_str<S: serde::Serializer>(s: &EstimateSource, ser: S) -> Result<S::Ok, S::Error> {
    ser.serialize_str(s.as_str())
}

/// One row of `mip.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MipRow {
    pub distance: f64,
    pub subchannel: usize,
    pub fraction: f64,
    pub model: EstimatorKind,
    pub mip: f64,
    pub subsampled: bool,
}

/// Key rate of one seed's estimated ensemble, before averaging.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedKeyRate {
    pub distance: f64,
    pub seed: u64,
    pub detection: Detection,
    pub source: EstimateSource,
    pub i_ab: f64,
    pub chi_be: f64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub estimates: Vec<EstimateRow>,
    pub mse: Vec<MseRow>,
    pub keyrate: Vec<KeyRateRow>,
    pub seed_keyrates: Vec<SeedKeyRate>,
    pub mip: Vec<MipRow>,
}

pub const ESTIMATES_CSV: &str = "estimates.csv";
pub const MSE_CSV: &str = "mse.csv";
pub const KEYRATE_CSV: &str = "keyrate.csv";
pub const MIP_CSV: &str = "mip.csv";
/// Resolved config and its hash.
pub const REPORT_TOML: &str = "report.toml";

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<(), ReportError> {
    let csv_err = |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
    wtr.write_record(header).map_err(csv_err)?;
    for row in rows {
        wtr.serialize(row).map_err(csv_err)?;
    }
    wtr.flush().map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Serialize)]
struct Sidecar<'a> {
    config_hash: &'a str,
    version: &'a str,
    config: &'a ExperimentConfig,
}

/// Writes the sidecar plus whichever tables are non-empty. Returns the
/// paths written.
pub fn write_reports(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    std::fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    let sidecar = Sidecar {
        config_hash: &report.config_hash,
        version: env!("CARGO_PKG_VERSION"),
        config: &report.config,
    };
    let path = dir.join(REPORT_TOML);
    std::fs::write(&path, toml::to_string(&sidecar).expect("sidecar serialises")).map_err(|source| {
        ReportError::Io {
            path: path.clone(),
            source,
        }
    })?;
    written.push(path);

    macro_rules! table {
        ($rows:expr, $name:expr, $header:expr) => {
            if !$rows.is_empty() {
                let path = dir.join($name);
                write_csv(&path, &$header, &$rows)?;
                written.push(path);
            }
        };
    }
    table!(
        report.estimates,
        ESTIMATES_CSV,
        ["distance", "subchannel", "fraction", "seed", "estimator", "T_true", "T_hat", "eps_true", "eps_hat", "residual", "flags"]
    );
    table!(report.mse, MSE_CSV, ["distance", "fraction", "estimator", "seeds", "MSE_T", "MSE_eps"]);
    table!(report.keyrate, KEYRATE_CSV, ["distance", "detection", "source", "I_AB", "chi_BE", "K"]);
    table!(report.mip, MIP_CSV, ["distance", "subchannel", "fraction", "model", "mip", "subsampled"]);
    Ok(written)
}
