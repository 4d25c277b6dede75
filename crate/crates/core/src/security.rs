//! Asymptotic reverse-reconciliation key rate under collective attacks.
//!
//! A fading channel is replaced by the Gaussian state with the same
//! covariance matrix: `a = V`, `c = ⟨√T⟩ √(V² − 1)` and
//! `b = ⟨T⟩(V − 1 + ⟨ε⟩) + 1`. That is a fixed channel of transmittance
//! `⟨√T⟩²` and input-referred noise `b/⟨√T⟩² − V`, so the usual closed forms
//! for the symplectic spectrum apply. Detector inefficiency and electronic
//! noise are trusted and modelled as a beamsplitter fed by one arm of a
//! thermal EPR pair.

use bitflags::bitflags;
use serde::{Deserialize, Serialize};

use crate::channel::{Detection, EnsembleMeans, ProtocolParams};
use crate::error::{Error, Result};
use crate::estimator::AggregateEstimate;

/// Eigenvalues this far below 1 mark an unphysical covariance matrix.
const PHYSICAL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimateSource {
    #[serde(rename = "true")]
    True,
    #[serde(rename = "estimated-variables")]
    EstimatedVariables,
    #[serde(rename = "estimated-statistics")]
    EstimatedStatistics,
}

impl EstimateSource {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::True => "true",
            Self::EstimatedVariables => "estimated-variables",
            Self::EstimatedStatistics => "estimated-statistics",
        }
    }
}

impl std::fmt::Display for EstimateSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ensemble means the key rate depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSummary {
    pub mean_transmittance: f64,
    pub mean_sqrt_transmittance: f64,
    pub mean_excess_noise: f64,
    pub source: EstimateSource,
}

impl ChannelSummary {
    pub fn new(
        mean_transmittance: f64,
        mean_sqrt_transmittance: f64,
        mean_excess_noise: f64,
        source: EstimateSource,
    ) -> Result<Self> {
        let s = Self {
            mean_transmittance,
            mean_sqrt_transmittance,
            mean_excess_noise,
            source,
        };
        s.validate()?;
        Ok(s)
    }

    /// A non-fading channel.
    pub fn deterministic(transmittance: f64, excess_noise: f64, source: EstimateSource) -> Result<Self> {
        Self::new(transmittance, transmittance.sqrt(), excess_noise, source)
    }

    pub fn from_means(means: &EnsembleMeans) -> Result<Self> {
        Self::new(means.transmittance, means.sqrt_transmittance, means.excess_noise, EstimateSource::True)
    }

    /// Uses `max(Σ p_i ε̂_i, 0)` over the raw `ε̂_i`. Clamping each term
    /// first would bias the mean upward whenever `ε` is small next to the
    /// per-sub-channel spread.
    pub fn from_aggregate(agg: &AggregateEstimate, source: EstimateSource) -> Result<Self> {
        let eps = agg.mean_excess_noise_raw.max(0.0);
        Self::new(agg.mean_transmittance, agg.mean_sqrt_transmittance, eps, source)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.mean_transmittance;
        let st = self.mean_sqrt_transmittance;
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::InvalidSummary("mean transmittance must lie in (0, 1]"));
        }
        if !(st > 0.0 && st * st <= t * (1.0 + 1e-12)) {
            return Err(Error::InvalidSummary("mean root transmittance must satisfy 0 < ⟨√T⟩² ≤ ⟨T⟩"));
        }
        if !(self.mean_excess_noise.is_finite() && self.mean_excess_noise >= 0.0) {
            return Err(Error::InvalidSummary("mean excess noise must be finite and non-negative"));
        }
        Ok(())
    }

    /// Transmittance of the equivalent non-fading channel, `⟨√T⟩²`.
    pub fn effective_transmittance(&self) -> f64 {
        self.mean_sqrt_transmittance * self.mean_sqrt_transmittance
    }
}

/// Input-referred noise contributions (SNU).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseBudget {
    /// `χ_line = 1/T − 1 + ε`.
    pub line: f64,
    /// Detector noise `χ_h`.
    pub detector: f64,
    /// `χ_tot = χ_line + χ_h / T`.
    pub total: f64,
}

/// Detector noise referred to Bob's input: `(1 − η + ν_el)/η` for homodyne,
/// `(2 − η + 2ν_el)/η` for heterodyne.
pub fn detector_noise(params: &ProtocolParams) -> f64 {
    let eta = params.detector_efficiency;
    let nu = params.electronic_noise;
    match params.detection {
        Detection::Homodyne => ((1.0 - eta) + nu) / eta,
        Detection::Heterodyne => (1.0 + (1.0 - eta) + 2.0 * nu) / eta,
    }
}

pub fn noise_budget(transmittance: f64, excess_noise: f64, params: &ProtocolParams) -> Result<NoiseBudget> {
    if !(transmittance > 0.0 && transmittance <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "transmittance",
            value: transmittance,
            reason: "must lie in (0, 1]",
        });
    }
    if !(excess_noise.is_finite() && excess_noise >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "excess_noise",
            value: excess_noise,
            reason: "must be finite and non-negative",
        });
    }
    let line = 1.0 / transmittance - 1.0 + excess_noise;
    let detector = detector_noise(params);
    Ok(NoiseBudget {
        line,
        detector,
        total: line + detector / transmittance,
    })
}

/// Von Neumann entropy of a thermal mode with symplectic eigenvalue `x`:
/// `G(x) = ((x+1)/2) log₂((x+1)/2) − ((x−1)/2) log₂((x−1)/2)`.
pub fn g_func(x: f64) -> Result<f64> {
    if x.is_nan() || x < 1.0 - 1e-9 {
        return Err(Error::UnphysicalEigenvalue(x));
    }
    if x <= 1.0 {
        return Ok(0.0);
    }
    let p = (x + 1.0) / 2.0;
    let q = (x - 1.0) / 2.0;
    Ok(p * p.log2() - q * q.log2())
}

bitflags! {
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
    pub struct RateFlags: u32 {
        /// The mutual-information log argument was not positive.
        const INVALID_REGIME = 1 << 0;
        /// A symplectic eigenvalue fell below 1 beyond rounding.
        const UNPHYSICAL_COVARIANCE = 1 << 1;
    }
}

/// `I(A:B)` in bits per channel use, and any regime flag.
///
/// Homodyne: `½ log₂[⟨T⟩(V+χ_tot) / (⟨T⟩(V+χ_tot) − ⟨√T⟩²(V−1))]` with
/// `χ_tot` evaluated at `(⟨T⟩, ⟨ε⟩)`. Heterodyne measures both quadratures,
/// doubling the expression with the heterodyne `χ_tot`.
pub fn mutual_information(summary: &ChannelSummary, params: &ProtocolParams) -> Result<(f64, RateFlags)> {
    summary.validate()?;
    params.validate()?;
    let v = params.epr_variance();
    let t = summary.mean_transmittance;
    let chi = noise_budget(t, summary.mean_excess_noise, params)?.total;
    let num = t * (v + chi);
    let den = num - summary.effective_transmittance() * (v - 1.0);
    if !(den > 0.0 && num > 0.0) {
        return Ok((0.0, RateFlags::INVALID_REGIME));
    }
    let half = 0.5 * (num / den).log2();
    let bits = match params.detection {
        Detection::Homodyne => half,
        Detection::Heterodyne => 2.0 * half,
    };
    Ok((bits, RateFlags::empty()))
}

/// `[[a I, c σ_z], [c σ_z, b I]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoModeCovariance {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl TwoModeCovariance {
    pub fn from_summary(summary: &ChannelSummary, params: &ProtocolParams) -> Self {
        let v = params.epr_variance();
        let t = summary.mean_transmittance;
        Self {
            a: v,
            b: t * (v - 1.0 + summary.mean_excess_noise) + 1.0,
            c: summary.mean_sqrt_transmittance * (v * v - 1.0).sqrt(),
        }
    }

    /// `(λ₁, λ₂)`, descending, from `Δ = a² + b² − 2c²` and `det = (ab − c²)²`.
    pub fn symplectic_eigenvalues(&self) -> (f64, f64) {
        let delta = self.a * self.a + self.b * self.b - 2.0 * self.c * self.c;
        let det = (self.a * self.b - self.c * self.c).powi(2);
        pair_from_invariants(delta, det)
    }
}

fn pair_from_invariants(sum: f64, product: f64) -> (f64, f64) {
    let disc = (sum * sum - 4.0 * product).max(0.0).sqrt();
    (
        ((sum + disc) / 2.0).max(0.0).sqrt(),
        ((sum - disc) / 2.0).max(0.0).sqrt(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HolevoBound {
    /// `χ(B:E)` in bits per channel use.
    pub chi_be: f64,
    /// `λ₁..λ₅`: the unconditional pair, the conditional pair, and the
    /// pure mode left after Bob's measurement.
    pub eigenvalues: [f64; 5],
    pub flags: RateFlags,
}

/// `χ(B:E) = G(λ₁) + G(λ₂) − G(λ₃) − G(λ₄) − G(λ₅)`.
pub fn holevo_bound(summary: &ChannelSummary, params: &ProtocolParams) -> Result<HolevoBound> {
    summary.validate()?;
    params.validate()?;
    let v = params.epr_variance();
    let cov = TwoModeCovariance::from_summary(summary, params);
    let t = summary.effective_transmittance();
    let line = cov.b / t - v;
    let chi_h = detector_noise(params);
    let chi_tot = line + chi_h / t;

    let big_a = v * v * (1.0 - 2.0 * t) + 2.0 * t + t * t * (v + line).powi(2);
    let big_b = (t * (v * line + 1.0)).powi(2);
    let (l1, l2) = pair_from_invariants(big_a, big_b);
    let sb = big_b.sqrt();
    let scale = t * (v + chi_tot);
    let (ca, cb) = match params.detection {
        Detection::Homodyne => (
            (big_a * chi_h + v * sb + t * (v + line)) / scale,
            sb * (v + sb * chi_h) / scale,
        ),
        Detection::Heterodyne => (
            (big_a * chi_h * chi_h
                + big_b
                + 1.0
                + 2.0 * chi_h * (v * sb + t * (v + line))
                + 2.0 * t * (v * v - 1.0))
                / (scale * scale),
            ((v + sb * chi_h) / scale).powi(2),
        ),
    };
    let (l3, l4) = pair_from_invariants(ca, cb);
    let eigenvalues = [l1, l2, l3, l4, 1.0];

    let mut flags = RateFlags::empty();
    if eigenvalues.iter().any(|&l| l < 1.0 - PHYSICAL_TOLERANCE) {
        flags |= RateFlags::UNPHYSICAL_COVARIANCE;
    }
    let g = |l: f64| g_func(l.max(1.0));
    let chi_be = g(l1)? + g(l2)? - g(l3)? - g(l4)? - g(1.0)?;
    Ok(HolevoBound {
        chi_be,
        eigenvalues,
        flags,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateReport {
    pub mutual_information: f64,
    pub holevo: f64,
    /// `K = β I(A:B) − χ(B:E)`, possibly negative.
    pub key_rate: f64,
    pub eigenvalues: [f64; 5],
    pub detection: Detection,
    pub source: EstimateSource,
    pub flags: RateFlags,
}

pub fn secret_key_rate(summary: &ChannelSummary, params: &ProtocolParams) -> Result<KeyRateReport> {
    let (info, info_flags) = mutual_information(summary, params)?;
    let holevo = holevo_bound(summary, params)?;
    Ok(KeyRateReport {
        mutual_information: info,
        holevo: holevo.chi_be,
        key_rate: params.reconciliation_efficiency * info - holevo.chi_be,
        eigenvalues: holevo.eigenvalues,
        detection: params.detection,
        source: summary.source,
        flags: info_flags | holevo.flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{conditional_spectrum, symplectic_spectrum, two_mode_covariance};

    fn params(va: f64, eta: f64, nu: f64, beta: f64, detection: Detection) -> ProtocolParams {
        ProtocolParams::new(va, eta, nu, beta, detection).unwrap()
    }

    fn defaults(detection: Detection) -> ProtocolParams {
        params(4.0, 0.6, 0.05, 0.95, detection)
    }

    fn det(t: f64, e: f64) -> ChannelSummary {
        ChannelSummary::deterministic(t, e, EstimateSource::True).unwrap()
    }

    #[test]
    fn ideal_noise_budget() {
        let p = params(4.0, 1.0, 0.0, 1.0, Detection::Homodyne);
        let n = noise_budget(1.0, 0.0, &p).unwrap();
        assert_eq!((n.line, n.detector, n.total), (0.0, 0.0, 0.0));
        let n = noise_budget(0.5, 0.1, &p).unwrap();
        assert!((n.line - 1.1).abs() < 1e-15 && (n.total - 1.1).abs() < 1e-15);
        assert!(noise_budget(0.0, 0.0, &p).is_err());
    }

    #[test]
    fn noise_budget_matches_single_fraction_form() {
        let p = defaults(Detection::Homodyne);
        let (t, e, eta, nu) = (0.5, 0.05, 0.6, 0.05);
        let n = noise_budget(t, e, &p).unwrap();
        let single = (-eta * t + 1.0 + eta * t * e + nu) / (eta * t);
        assert!((n.total - single).abs() < 1e-12);
        assert!((n.total - (n.line + n.detector / t)).abs() < 1e-12);
    }

    #[test]
    fn g_values() {
        assert_eq!(g_func(1.0).unwrap(), 0.0);
        assert!((g_func(3.0).unwrap() - 2.0).abs() < 1e-15);
        let tiny = g_func(1.0 + 1e-12).unwrap();
        assert!(tiny.is_finite() && tiny >= 0.0);
        assert!(g_func(0.5).is_err());
        assert!(g_func(f64::NAN).is_err());
    }

    #[test]
    fn deterministic_ideal_information_is_one_bit() {
        let p = params(3.0, 1.0, 0.0, 1.0, Detection::Homodyne);
        let (i, flags) = mutual_information(&det(1.0, 0.0), &p).unwrap();
        assert!((i - 1.0).abs() < 1e-12);
        assert!(flags.is_empty());
        let r = secret_key_rate(&det(1.0, 0.0), &p).unwrap();
        assert!(r.holevo.abs() < 1e-9);
        assert!((r.key_rate - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fading_lowers_information() {
        let p = defaults(Detection::Homodyne);
        let fixed = mutual_information(&det(0.5, 0.01), &p).unwrap().0;
        let fading = ChannelSummary::new(0.5, 0.68, 0.01, EstimateSource::True).unwrap();
        assert!(mutual_information(&fading, &p).unwrap().0 < fixed);
    }

    #[test]
    fn information_forms_agree() {
        let p = defaults(Detection::Homodyne);
        let s = ChannelSummary::new(0.5, 0.7, 0.01, EstimateSource::True).unwrap();
        let v = p.epr_variance();
        let chi = noise_budget(0.5, 0.01, &p).unwrap().total;
        let first = 0.5 * ((v + 1.0) / (v - (0.49 * (v * v - 1.0) / (0.5 * (v + chi))) + 1.0)).log2();
        assert!((mutual_information(&s, &p).unwrap().0 - first).abs() < 1e-12);
    }

    #[test]
    fn lossless_channel_leaks_nothing() {
        let p = params(4.0, 1.0, 0.0, 0.95, Detection::Homodyne);
        let h = holevo_bound(&det(1.0, 0.0), &p).unwrap();
        assert!(h.chi_be.abs() < 1e-9);
    }

    #[test]
    fn no_modulation_no_information() {
        for d in [Detection::Homodyne, Detection::Heterodyne] {
            let p = params(1e-9, 0.6, 0.05, 0.95, d);
            let h = holevo_bound(&det(0.4, 0.0), &p).unwrap();
            assert!(h.chi_be.abs() < 1e-6, "{d}: {}", h.chi_be);
            for l in h.eigenvalues {
                assert!((l - 1.0).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn closed_forms_match_numeric_spectrum() {
        for d in [Detection::Homodyne, Detection::Heterodyne] {
            let p = defaults(d);
            let s = ChannelSummary::new(0.5, 0.69, 0.05, EstimateSource::True).unwrap();
            let h = holevo_bound(&s, &p).unwrap();
            let cov = TwoModeCovariance::from_summary(&s, &p);
            let gamma = two_mode_covariance(cov.a, cov.b, cov.c);
            let numeric = symplectic_spectrum(&gamma);
            assert!((numeric[1] - h.eigenvalues[0]).abs() < 1e-8);
            assert!((numeric[0] - h.eigenvalues[1]).abs() < 1e-8);

            let nu = p.electronic_noise;
            let eta = p.detector_efficiency;
            let v = match d {
                Detection::Homodyne => 1.0 + nu / (1.0 - eta),
                Detection::Heterodyne => 1.0 + 2.0 * nu / (1.0 - eta),
            };
            let cond = conditional_spectrum(&gamma, eta, v, d == Detection::Heterodyne);
            let mut closed = vec![h.eigenvalues[2], h.eigenvalues[3], h.eigenvalues[4]];
            closed.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for (a, b) in cond.iter().zip(&closed) {
                assert!((a - b).abs() < 1e-8, "{d}: {cond:?} vs {closed:?}");
            }
        }
    }

    #[test]
    fn key_rate_decreases_with_excess_noise() {
        for d in [Detection::Homodyne, Detection::Heterodyne] {
            let p = defaults(d);
            let rates: Vec<f64> = (0..=10)
                .map(|k| secret_key_rate(&det(0.6, k as f64 * 0.01), &p).unwrap().key_rate)
                .collect();
            assert!(rates.windows(2).all(|w| w[1] < w[0]), "{d}: {rates:?}");
        }
    }

    #[test]
    fn summary_validation() {
        assert!(ChannelSummary::new(0.0, 0.0, 0.0, EstimateSource::True).is_err());
        assert!(ChannelSummary::new(0.5, 0.8, 0.0, EstimateSource::True).is_err());
        assert!(ChannelSummary::new(0.5, 0.7, -0.1, EstimateSource::True).is_err());
        assert!(ChannelSummary::deterministic(0.3, 0.0, EstimateSource::True).is_ok());
    }

    #[test]
    fn aggregate_summary_clamps_after_averaging() {
        let mut agg = AggregateEstimate {
            mean_transmittance: 0.5,
            mean_sqrt_transmittance: 0.7,
            mean_excess_noise: 0.03,
            mean_excess_noise_raw: 0.01,
            used: 4,
            excluded: 0,
        };
        let s = ChannelSummary::from_aggregate(&agg, EstimateSource::EstimatedVariables).unwrap();
        assert_eq!((s.mean_excess_noise, s.source), (0.01, EstimateSource::EstimatedVariables));
        agg.mean_excess_noise_raw = -0.002;
        let s = ChannelSummary::from_aggregate(&agg, EstimateSource::EstimatedVariables).unwrap();
        assert_eq!(s.mean_excess_noise, 0.0);
    }
}
