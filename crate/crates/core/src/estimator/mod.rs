//! Per-sub-channel channel-parameter estimators and their aggregation.

pub mod aggregate;
pub mod statistics;
pub mod variables;

use bitflags::bitflags;

use crate::cs::{noise_scaled_tolerance, OmpConfig};

pub use aggregate::{aggregate_estimates, AggregateEstimate};
pub use statistics::{
    estimate_from_variance, estimate_subchannel_statistics, measured_variance, NoiseSplit,
    VarianceMode, VarianceModelInstance, FLOOR_TOLERANCE,
};
pub use variables::{
    estimate_subchannel_variables, estimate_whole_channel_variables, excess_noise_from_variables,
    WholeChannelEstimate, DEGENERATE_QUADRATURE,
};

bitflags! {
    /// Conditions met while estimating one sub-channel. None are fatal.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
    pub struct EstimateFlags: u32 {
        /// The reconstructed channel sums to a non-positive value.
        const UNESTIMABLE_TRANSMITTANCE = 1 << 0;
        /// `T̂ = 0`, so no excess-noise estimate was formed.
        const EXCESS_NOISE_SKIPPED = 1 << 1;
        /// Bob's variance does not exceed vacuum plus electronic noise.
        const BELOW_NOISE_FLOOR = 1 << 2;
        /// OMP dropped an atom that made its refit rank deficient.
        const DEGENERATE_SUPPORT = 1 << 3;
        /// Raw `T̂` exceeded 1 and was clamped.
        const TRANSMITTANCE_CLAMPED = 1 << 4;
        /// Raw `ε̂` was negative and was clamped.
        const EXCESS_NOISE_CLAMPED = 1 << 5;
    }
}

impl EstimateFlags {
    /// Flags that make an estimate unusable for aggregation.
    pub const UNUSABLE: Self = Self::UNESTIMABLE_TRANSMITTANCE
        .union(Self::EXCESS_NOISE_SKIPPED)
        .union(Self::BELOW_NOISE_FLOOR);

    const LABELS: [(Self, &'static str); 6] = [
        (Self::UNESTIMABLE_TRANSMITTANCE, "unestimable_transmittance"),
        (Self::EXCESS_NOISE_SKIPPED, "excess_noise_skipped"),
        (Self::BELOW_NOISE_FLOOR, "below_noise_floor"),
        (Self::DEGENERATE_SUPPORT, "degenerate_support"),
        (Self::TRANSMITTANCE_CLAMPED, "transmittance_clamped"),
        (Self::EXCESS_NOISE_CLAMPED, "excess_noise_clamped"),
    ];

    /// Snake-case names joined by `|`; empty when no flag is set.
    pub fn label(self) -> String {
        Self::LABELS
            .iter()
            .filter(|(f, _)| self.contains(*f))
            .map(|(_, name)| *name)
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn is_usable(self) -> bool {
        !self.intersects(Self::UNUSABLE)
    }
}

/// Estimated parameters of one sub-channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SubChannelEstimate {
    pub index: usize,
    /// `T̂` as computed, before clamping.
    pub transmittance_raw: f64,
    /// `T̂` clamped to `[0, 1]`.
    pub transmittance: f64,
    /// `ε̂` as computed; `None` when `T̂ = 0`.
    pub excess_noise_raw: Option<f64>,
    /// `max(ε̂, 0)`.
    pub excess_noise: Option<f64>,
    /// Final OMP residual norm.
    pub residual_norm: f64,
    /// Norm of the discarded imaginary part of the reconstructed channel.
    pub imaginary_norm: f64,
    /// Number of measurement rows used.
    pub sampled: usize,
    /// Atoms selected by OMP.
    pub atoms: usize,
    pub flags: EstimateFlags,
}

impl SubChannelEstimate {
    /// Fills the clamped fields and the clamping flags from raw values.
    pub(crate) fn from_raw(
        index: usize,
        transmittance_raw: f64,
        excess_noise_raw: Option<f64>,
        mut flags: EstimateFlags,
    ) -> Self {
        if transmittance_raw > 1.0 {
            flags |= EstimateFlags::TRANSMITTANCE_CLAMPED;
        }
        if excess_noise_raw.is_some_and(|e| e < 0.0) {
            flags |= EstimateFlags::EXCESS_NOISE_CLAMPED;
        }
        Self {
            index,
            transmittance_raw,
            transmittance: transmittance_raw.clamp(0.0, 1.0),
            excess_noise_raw,
            excess_noise: excess_noise_raw.map(|e| e.max(0.0)),
            residual_norm: 0.0,
            imaginary_norm: 0.0,
            sampled: 0,
            atoms: 0,
            flags,
        }
    }
}

/// How the OMP residual tolerance `δ` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    /// `δ = factor · √m_s · σ̂`, with `σ̂` the per-entry noise scale the
    /// estimator knows about.
    NoiseScaled { factor: f64 },
    Absolute(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    /// Sparsity budget `K_max`.
    pub max_atoms: usize,
    pub tolerance: Tolerance,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            max_atoms: 1,
            tolerance: Tolerance::NoiseScaled { factor: 1.1 },
        }
    }
}

impl EstimatorConfig {
    /// Noise-free setting: stop only on an exact fit or the budget.
    pub fn exact(max_atoms: usize) -> Self {
        Self {
            max_atoms,
            tolerance: Tolerance::Absolute(0.0),
        }
    }

    pub(crate) fn omp(&self, sampled: usize, noise_std: f64) -> OmpConfig {
        let delta = match self.tolerance {
            Tolerance::NoiseScaled { factor } => noise_scaled_tolerance(factor, sampled, noise_std),
            Tolerance::Absolute(d) => d,
        };
        OmpConfig::new(self.max_atoms, delta)
    }
}

/// `T̂ = (Σ Ĥ)² / (η m²)`: the squared block mean of the reconstructed
/// channel gain, divided by the detector efficiency.
pub fn transmittance_from_sum(sum: f64, len: usize, eta: f64) -> f64 {
    let mean = sum / len as f64;
    mean * mean / eta
}
