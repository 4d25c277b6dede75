use nalgebra::{DMatrix, DVector};

use super::operator::LinearOperator;
use super::C64;
use crate::error::{Error, Result};

/// Relative pivot size below which a refit is treated as rank deficient.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmpConfig {
    /// Sparsity budget `K_max`.
    pub max_atoms: usize,
    /// Residual tolerance `δ`: stop once `‖y − Θŝ‖₂ ≤ δ`.
    pub tolerance: f64,
}

impl OmpConfig {
    pub fn new(max_atoms: usize, tolerance: f64) -> Self {
        Self {
            max_atoms,
            tolerance,
        }
    }
}

/// `δ = factor · √m_s · σ`, the scale of the residual left by the true
/// solution under per-entry noise `σ`.
pub fn noise_scaled_tolerance(factor: f64, sampled: usize, noise_std: f64) -> f64 {
    factor * (sampled as f64).sqrt() * noise_std
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCoefficients {
    /// Dense coefficient vector, zero off the support.
    pub coefficients: Vec<C64>,
    /// Selected atoms in selection order.
    pub support: Vec<usize>,
    pub residual_norm: f64,
    /// Residual norm before the first and after every accepted atom.
    pub residual_history: Vec<f64>,
    /// Set when the newest atom made the refit rank deficient and was dropped.
    pub degenerate_support: bool,
}

impl SparseCoefficients {
    pub fn nonzeros(&self) -> usize {
        self.coefficients.iter().filter(|c| c.norm() != 0.0).count()
    }
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Least squares on the selected columns via QR. Returns `None` when the
/// triangular factor has a pivot that is negligible next to the largest.
fn refit(columns: &[Vec<C64>], measurement: &DVector<C64>) -> Option<DVector<C64>> {
    let rows = measurement.len();
    let k = columns.len();
    if k > rows {
        return None;
    }
    let a = DMatrix::from_fn(rows, k, |r, c| columns[c][r]);
    let qr = a.qr();
    let r = qr.r();
    let max_pivot = (0..k).map(|i| r[(i, i)].norm()).fold(0.0f64, f64::max);
    if max_pivot == 0.0 || (0..k).any(|i| r[(i, i)].norm() <= RANK_TOLERANCE * max_pivot) {
        return None;
    }
    let rhs = qr.q().adjoint() * measurement;
    r.solve_upper_triangular(&rhs)
}

/// Orthogonal matching pursuit.
///
/// Each step picks the column with the largest normalised correlation
/// `|⟨θ_k, r⟩| / ‖θ_k‖` (lowest index on ties), then refits all selected
/// coefficients by least squares. Stops when the residual is within
/// `tolerance` or the support reaches `max_atoms`.
pub fn omp_solve<O: LinearOperator + ?Sized>(
    op: &O,
    measurement: &[C64],
    config: &OmpConfig,
) -> Result<SparseCoefficients> {
    if config.max_atoms == 0 {
        return Err(Error::InvalidSparsity);
    }
    if !(config.tolerance.is_finite() && config.tolerance >= 0.0) {
        return Err(Error::InvalidTolerance(config.tolerance));
    }
    if measurement.len() != op.nrows() {
        return Err(Error::LengthMismatch {
            what: "measurement",
            expected: op.nrows(),
            actual: measurement.len(),
        });
    }

    let ncols = op.ncols();
    let norms = op.column_norms();
    let y = DVector::from_column_slice(measurement);

    let mut support: Vec<usize> = Vec::new();
    let mut columns: Vec<Vec<C64>> = Vec::new();
    let mut in_support = vec![false; ncols];
    let mut fit: Option<DVector<C64>> = None;
    let mut residual = measurement.to_vec();
    let mut residual_norm = norm(&residual);
    let mut history = vec![residual_norm];
    let mut degenerate = false;

    while support.len() < config.max_atoms && residual_norm > config.tolerance {
        let corr = op.adjoint(&residual);
        let mut best: Option<(usize, f64)> = None;
        for (k, (c, &n)) in corr.iter().zip(&norms).enumerate() {
            if in_support[k] || n == 0.0 {
                continue;
            }
            let score = c.norm() / n;
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((k, score));
            }
        }
        let Some((k, _)) = best else { break };

        columns.push(op.column(k));
        match refit(&columns, &y) {
            Some(coeffs) => {
                support.push(k);
                in_support[k] = true;
                let mut r = measurement.to_vec();
                for (col, c) in columns.iter().zip(coeffs.iter()) {
                    for (ri, ci) in r.iter_mut().zip(col) {
                        *ri -= ci * c;
                    }
                }
                residual = r;
                residual_norm = norm(&residual);
                history.push(residual_norm);
                fit = Some(coeffs);
            }
            None => {
                columns.pop();
                degenerate = true;
                break;
            }
        }
    }

    let mut coefficients = vec![C64::new(0.0, 0.0); ncols];
    if let Some(fit) = fit {
        for (&k, &c) in support.iter().zip(fit.iter()) {
            coefficients[k] = c;
        }
    }
    Ok(SparseCoefficients {
        coefficients,
        support,
        residual_norm,
        residual_history: history,
        degenerate_support: degenerate,
    })
}
