use nalgebra::DMatrix;

use super::dft::{twiddle_angle, DftScale, UnitaryDft};
use super::plan::SamplingPlan;
use super::C64;
use crate::error::{Error, Result};

/// Linear map from coefficient space (`ncols`) to measurement space (`nrows`).
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, coeffs: &[C64]) -> Vec<C64>;
    fn adjoint(&self, measurement: &[C64]) -> Vec<C64>;
    fn column(&self, k: usize) -> Vec<C64>;

    fn column_norms(&self) -> Vec<f64> {
        (0..self.ncols())
            .map(|k| self.column(k).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt())
            .collect()
    }

    fn to_dense(&self) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.nrows(), self.ncols());
        for k in 0..self.ncols() {
            for (r, v) in self.column(k).into_iter().enumerate() {
                out[(r, k)] = v;
            }
        }
        out
    }
}

/// Sparse basis `Ψ` behind a sensing operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    Identity,
    Dft(DftScale),
}

/// `Θ = Φ · diag(w) · Ψ`: row selection after a diagonal weighting of the
/// synthesised signal.
///
/// Weights are stored per sampled row, so `weights[r]` multiplies signal
/// entry `plan.indices()[r]`. The variables model uses Alice's quadratures
/// as weights, the statistics model the constant modulation variance.
#[derive(Debug, Clone)]
pub struct SensingOperator {
    len: usize,
    rows: Vec<usize>,
    weights: Vec<f64>,
    basis: Basis,
    dft: Option<UnitaryDft>,
}

impl SensingOperator {
    pub fn new(plan: &SamplingPlan, weights: Vec<f64>, basis: Basis) -> Result<Self> {
        if weights.len() != plan.sampled() {
            return Err(Error::LengthMismatch {
                what: "sensing weights",
                expected: plan.sampled(),
                actual: weights.len(),
            });
        }
        let dft = match basis {
            Basis::Identity => None,
            Basis::Dft(scale) => Some(UnitaryDft::with_scale(plan.len(), scale)),
        };
        Ok(Self {
            len: plan.len(),
            rows: plan.indices().to_vec(),
            weights,
            basis,
            dft,
        })
    }

    pub fn uniform(plan: &SamplingPlan, weight: f64, basis: Basis) -> Self {
        Self::new(plan, vec![weight; plan.sampled()], basis)
            .expect("weights built from the plan")
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    /// Same rows and weights over a different basis.
    pub fn with_basis(&self, basis: Basis) -> Self {
        let dft = match basis {
            Basis::Identity => None,
            Basis::Dft(scale) => Some(UnitaryDft::with_scale(self.len, scale)),
        };
        Self {
            basis,
            dft,
            ..self.clone()
        }
    }

    pub(crate) fn dft(&self) -> Option<&UnitaryDft> {
        self.dft.as_ref()
    }
}

impl LinearOperator for SensingOperator {
    fn nrows(&self) -> usize {
        self.rows.len()
    }

    fn ncols(&self) -> usize {
        self.len
    }

    fn apply(&self, coeffs: &[C64]) -> Vec<C64> {
        assert_eq!(coeffs.len(), self.len);
        let signal;
        let signal_ref = match &self.dft {
            Some(dft) => {
                signal = dft.synthesize(coeffs);
                &signal[..]
            }
            None => coeffs,
        };
        self.rows
            .iter()
            .zip(&self.weights)
            .map(|(&i, &w)| signal_ref[i] * w)
            .collect()
    }

    fn adjoint(&self, measurement: &[C64]) -> Vec<C64> {
        assert_eq!(measurement.len(), self.rows.len());
        let mut scattered = vec![C64::new(0.0, 0.0); self.len];
        for ((&i, &w), &y) in self.rows.iter().zip(&self.weights).zip(measurement) {
            scattered[i] = y * w;
        }
        match &self.dft {
            Some(dft) => dft.analyze(&scattered),
            None => scattered,
        }
    }

    fn column(&self, k: usize) -> Vec<C64> {
        match self.basis {
            Basis::Identity => self
                .rows
                .iter()
                .zip(&self.weights)
                .map(|(&i, &w)| C64::new(if i == k { w } else { 0.0 }, 0.0))
                .collect(),
            Basis::Dft(scale) => {
                let s = scale.entry_scale(self.len);
                self.rows
                    .iter()
                    .zip(&self.weights)
                    .map(|(&i, &w)| C64::from_polar(w * s, twiddle_angle(i, k, self.len)))
                    .collect()
            }
        }
    }

    fn column_norms(&self) -> Vec<f64> {
        match self.basis {
            Basis::Identity => {
                let mut norms = vec![0.0; self.len];
                for (&i, &w) in self.rows.iter().zip(&self.weights) {
                    norms[i] = w.abs();
                }
                norms
            }
            Basis::Dft(scale) => {
                // Every basis entry has modulus `s`, so all columns share one norm.
                let s = scale.entry_scale(self.len);
                let energy: f64 = self.weights.iter().map(|w| w * w).sum();
                vec![s * energy.sqrt(); self.len]
            }
        }
    }
}

/// Explicit matrix, for small problems and reference checks.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator(pub DMatrix<C64>);

impl LinearOperator for DenseOperator {
    fn nrows(&self) -> usize {
        self.0.nrows()
    }

    fn ncols(&self) -> usize {
        self.0.ncols()
    }

    fn apply(&self, coeffs: &[C64]) -> Vec<C64> {
        let x = nalgebra::DVector::from_column_slice(coeffs);
        (&self.0 * x).iter().copied().collect()
    }

    fn adjoint(&self, measurement: &[C64]) -> Vec<C64> {
        let y = nalgebra::DVector::from_column_slice(measurement);
        (self.0.adjoint() * y).iter().copied().collect()
    }

    fn column(&self, k: usize) -> Vec<C64> {
        self.0.column(k).iter().copied().collect()
    }
}
