use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::{Fft, FftPlanner};

use super::C64;

/// Normalisation of the inverse-DFT synthesis matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DftScale {
    /// `Ψ_{jk} = e^{+2πi jk/m} / √m`; orthonormal columns.
    #[default]
    Unitary,
    /// `Ψ_{jk} = e^{+2πi jk/m} / m`, the textbook `D⁻¹`.
    Inverse,
}

impl DftScale {
    /// Entry magnitude `|Ψ_{jk}|` for a length-`m` transform.
    pub fn entry_scale(self, m: usize) -> f64 {
        match self {
            DftScale::Unitary => 1.0 / (m as f64).sqrt(),
            DftScale::Inverse => 1.0 / m as f64,
        }
    }
}

/// Dense unitary inverse-DFT basis, column `k` = `e^{2πi jk/m}/√m`.
pub fn idft_basis(m: usize) -> DMatrix<C64> {
    let s = DftScale::Unitary.entry_scale(m.max(1));
    DMatrix::from_fn(m, m, |j, k| C64::from_polar(s, twiddle_angle(j, k, m)))
}

/// `2π (jk mod m) / m`, reduced before the float conversion.
pub(crate) fn twiddle_angle(j: usize, k: usize, m: usize) -> f64 {
    let r = ((j as u128 * k as u128) % m as u128) as f64;
    2.0 * PI * r / m as f64
}

/// FFT-backed application of `Ψ` and `Ψᴴ`.
#[derive(Clone)]
pub struct UnitaryDft {
    len: usize,
    scale: DftScale,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for UnitaryDft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UnitaryDft")
            .field("len", &self.len)
            .field("scale", &self.scale)
            .finish()
    }
}

impl UnitaryDft {
    pub fn new(len: usize) -> Self {
        Self::with_scale(len, DftScale::Unitary)
    }

    pub fn with_scale(len: usize, scale: DftScale) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            len,
            scale,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn scale(&self) -> DftScale {
        self.scale
    }

    /// `Ψ s`: coefficients to signal domain.
    pub fn synthesize(&self, coeffs: &[C64]) -> Vec<C64> {
        assert_eq!(coeffs.len(), self.len);
        let mut buf = coeffs.to_vec();
        self.inverse.process(&mut buf);
        let s = self.scale.entry_scale(self.len);
        buf.iter_mut().for_each(|v| *v *= s);
        buf
    }

    /// `Ψᴴ v`: signal to coefficient domain.
    pub fn analyze(&self, signal: &[C64]) -> Vec<C64> {
        assert_eq!(signal.len(), self.len);
        let mut buf = signal.to_vec();
        self.forward.process(&mut buf);
        let s = self.scale.entry_scale(self.len);
        buf.iter_mut().for_each(|v| *v *= s);
        buf
    }

    /// Unnormalised `Σ_n u_n e^{+2πi nk/m}` for every `k`.
    pub(crate) fn raw_inverse(&self, data: &[C64]) -> Vec<C64> {
        let mut buf = data.to_vec();
        self.inverse.process(&mut buf);
        buf
    }
}
