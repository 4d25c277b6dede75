//! Estimation from Bob's measured variance and the public modulation
//! variance only; no individual quadrature is disclosed.
//!
//! Each entry of the variance vector obeys `R_y = V_A h_R + (1 + ν_el) + ηTε`
//! with `h_R = ηT`. After removing the calibrated `1 + ν_el` floor the
//! remainder is constant over the sub-channel, a DC impulse for OMP on
//! `Θ_R = Φ (V_A I) Ψ`.
//!
//! The `ηTε` part is constant too, so the sparse fit absorbs it: with an
//! exact variance the estimator returns `T(1 + ε/V_A)` and `ε̂ = 0`.

use super::{EstimateFlags, EstimatorConfig, SubChannelEstimate};
use crate::channel::{ProtocolParams, SubChannel};
use crate::cs::{omp_solve, Basis, DftScale, SamplingPlan, SensingOperator, UnitaryDft, C64};
use crate::error::{Error, Result};

/// Margin (SNU) above `1 + ν_el` that Bob's variance must exceed.
pub const FLOOR_TOLERANCE: f64 = 1e-6;

/// Mean-zero variance `Σ y² / m`.
pub fn measured_variance(bob: &[f64]) -> Result<f64> {
    if bob.len() < 2 {
        return Err(Error::TooFewSamples(bob.len()));
    }
    Ok(bob.iter().map(|y| y * y).sum::<f64>() / bob.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceMode {
    /// Every entry is the variance of the whole block.
    Replicated,
    /// Entry `j` is the variance of the `j`-th disjoint run of `block_size`
    /// samples; a trailing partial run is dropped.
    Blockwise { block_size: usize },
}

/// The measured-variance vector of one sub-channel.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceModelInstance {
    pub index: usize,
    pub entries: Vec<f64>,
    pub modulation_variance: f64,
    pub mode: VarianceMode,
    /// Samples behind each entry; `None` for an exact (analytic) variance.
    pub samples_per_entry: Option<usize>,
}

impl VarianceModelInstance {
    pub fn from_block(index: usize, bob: &[f64], mode: VarianceMode, modulation_variance: f64) -> Result<Self> {
        let (entries, n) = match mode {
            VarianceMode::Replicated => (vec![measured_variance(bob)?; bob.len()], bob.len()),
            VarianceMode::Blockwise { block_size } => {
                if block_size < 2 {
                    return Err(Error::InvalidParameter {
                        name: "block_size",
                        value: block_size as f64,
                        reason: "a sub-block variance needs at least two samples",
                    });
                }
                if bob.len() < block_size {
                    return Err(Error::TooFewSamples(bob.len()));
                }
                let entries = bob
                    .chunks_exact(block_size)
                    .map(measured_variance)
                    .collect::<Result<Vec<_>>>()?;
                (entries, block_size)
            }
        };
        Ok(Self {
            index,
            entries,
            modulation_variance,
            mode,
            samples_per_entry: Some(n),
        })
    }

    /// `len` copies of a known variance.
    pub fn replicated(index: usize, variance: f64, len: usize, modulation_variance: f64) -> Self {
        Self {
            index,
            entries: vec![variance; len],
            modulation_variance,
            mode: VarianceMode::Replicated,
            samples_per_entry: None,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mean_variance(&self) -> f64 {
        self.entries.iter().sum::<f64>() / self.entries.len() as f64
    }

    /// Standard deviation of one entry under Gaussian sampling, `V √(2/n)`.
    fn entry_noise(&self) -> f64 {
        match self.samples_per_entry {
            Some(n) => self.mean_variance() * (2.0 / n as f64).sqrt(),
            None => 0.0,
        }
    }
}

/// The noise variance `σ² = (1 + ν_el) + ηTε` split into its calibrated and
/// channel-dependent parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSplit {
    /// `1 + ν_el`.
    pub vacuum_electronic: f64,
    /// `η T ε`.
    pub signal_dependent: f64,
}

impl NoiseSplit {
    pub fn new(channel: &SubChannel, params: &ProtocolParams) -> Self {
        Self {
            vacuum_electronic: 1.0 + params.electronic_noise,
            signal_dependent: params.detector_efficiency * channel.transmittance * channel.excess_noise,
        }
    }

    pub fn total(&self) -> f64 {
        self.vacuum_electronic + self.signal_dependent
    }
}

/// Estimates `(T̂, ε̂)` from a variance vector sampled by `plan`.
///
/// `T̂ = Σ Re Ĥ_R / (η L)` over the `L` entries and
/// `ε̂ = [Σ R_vy,s − η T̂ m_s V_A] / (m_s η T̂)`.
pub fn estimate_subchannel_statistics(
    instance: &VarianceModelInstance,
    params: &ProtocolParams,
    plan: &SamplingPlan,
    cfg: &EstimatorConfig,
) -> Result<SubChannelEstimate> {
    params.validate()?;
    if plan.len() != instance.len() {
        return Err(Error::LengthMismatch {
            what: "sampling plan",
            expected: instance.len(),
            actual: plan.len(),
        });
    }
    let floor = 1.0 + params.electronic_noise;
    let eta = params.detector_efficiency;
    let va = instance.modulation_variance;

    if instance.mean_variance() - floor < FLOOR_TOLERANCE {
        let mut est = SubChannelEstimate::from_raw(
            instance.index,
            0.0,
            None,
            EstimateFlags::BELOW_NOISE_FLOOR | EstimateFlags::EXCESS_NOISE_SKIPPED,
        );
        est.sampled = plan.sampled();
        return Ok(est);
    }

    let sampled: Vec<f64> = plan.indices().iter().map(|&i| instance.entries[i] - floor).collect();
    let measurement: Vec<C64> = sampled.iter().map(|&r| C64::new(r, 0.0)).collect();
    let op = SensingOperator::uniform(plan, va, Basis::Dft(DftScale::Unitary));
    let sol = omp_solve(&op, &measurement, &cfg.omp(plan.sampled(), instance.entry_noise()))?;
    let channel = UnitaryDft::new(instance.len()).synthesize(&sol.coefficients);
    let sum: f64 = channel.iter().map(|h| h.re).sum();

    let mut flags = EstimateFlags::empty();
    if sol.degenerate_support {
        flags |= EstimateFlags::DEGENERATE_SUPPORT;
    }
    let transmittance = if sum > 0.0 {
        sum / (eta * instance.len() as f64)
    } else {
        flags |= EstimateFlags::UNESTIMABLE_TRANSMITTANCE;
        0.0
    };
    let excess = (transmittance > 0.0).then(|| {
        let ms = plan.sampled() as f64;
        let eta_t = eta * transmittance;
        (sampled.iter().sum::<f64>() - eta_t * ms * va) / (ms * eta_t)
    });
    if excess.is_none() {
        flags |= EstimateFlags::EXCESS_NOISE_SKIPPED;
    }

    let mut est = SubChannelEstimate::from_raw(instance.index, transmittance, excess, flags);
    est.residual_norm = sol.residual_norm;
    est.imaginary_norm = channel.iter().map(|h| h.im * h.im).sum::<f64>().sqrt();
    est.sampled = plan.sampled();
    est.atoms = sol.support.len();
    Ok(est)
}

/// Replicated-mode estimate from a single known variance over `len` entries.
pub fn estimate_from_variance(
    index: usize,
    variance: f64,
    len: usize,
    params: &ProtocolParams,
    plan: &SamplingPlan,
    cfg: &EstimatorConfig,
) -> Result<SubChannelEstimate> {
    let instance = VarianceModelInstance::replicated(index, variance, len, params.modulation_variance);
    estimate_subchannel_statistics(&instance, params, plan, cfg)
}
