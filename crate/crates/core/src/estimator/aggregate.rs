use super::SubChannelEstimate;
use crate::channel::SubChannelEnsemble;
use crate::error::{Error, Result};

/// Probability-weighted means of per-sub-channel estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateEstimate {
    /// `⟨T̂⟩ = Σ p_i T̂_i`.
    pub mean_transmittance: f64,
    /// `⟨√T̂⟩`.
    pub mean_sqrt_transmittance: f64,
    /// `⟨ε̂⟩` over the clamped estimates.
    pub mean_excess_noise: f64,
    /// `⟨ε̂⟩` over the raw estimates.
    pub mean_excess_noise_raw: f64,
    pub used: usize,
    /// Estimates left out because they were flagged unusable.
    pub excluded: usize,
}

/// Weighted means over usable estimates, with the weights of the excluded
/// ones redistributed proportionally.
pub fn aggregate_estimates(
    estimates: &[SubChannelEstimate],
    ensemble: &SubChannelEnsemble,
) -> Result<AggregateEstimate> {
    if estimates.len() != ensemble.len() {
        return Err(Error::LengthMismatch {
            what: "estimates",
            expected: ensemble.len(),
            actual: estimates.len(),
        });
    }
    let mut weight = 0.0;
    let (mut t, mut st, mut e, mut e_raw) = (0.0, 0.0, 0.0, 0.0);
    let mut used = 0;
    for (est, ch) in estimates.iter().zip(ensemble.channels()) {
        let (Some(eps), Some(eps_raw)) = (est.excess_noise, est.excess_noise_raw) else {
            continue;
        };
        if !est.flags.is_usable() {
            continue;
        }
        let p = ch.probability;
        weight += p;
        t += p * est.transmittance;
        st += p * est.transmittance.sqrt();
        e += p * eps;
        e_raw += p * eps_raw;
        used += 1;
    }
    if used == 0 || weight <= 0.0 {
        return Err(Error::NoUsableEstimates);
    }
    Ok(AggregateEstimate {
        mean_transmittance: t / weight,
        mean_sqrt_transmittance: st / weight,
        mean_excess_noise: e / weight,
        mean_excess_noise_raw: e_raw / weight,
        used,
        excluded: estimates.len() - used,
    })
}
