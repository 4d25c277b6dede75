//! Estimation from disclosed Alice/Bob quadrature pairs.
//!
//! On the sampled rows `y_s = diag(x_s) h + z_s`, where `h = √(ηT)·1` is
//! constant over a sub-channel. In the unitary inverse-DFT basis `h` is a
//! single DC impulse, so OMP on `Θ = Φ diag(x) Ψ` recovers it from few rows.

use std::ops::Range;

use super::{aggregate_estimates, transmittance_from_sum, AggregateEstimate, EstimateFlags, EstimatorConfig, SubChannelEstimate};
use crate::channel::{ProtocolParams, QuadratureDataset, SubChannelEnsemble};
use crate::cs::{omp_solve, Basis, DftScale, LinearOperator, SamplingPlan, SensingOperator, SparseCoefficients, C64};
use crate::error::{Error, Result};

/// Alice values with `|x| < DEGENERATE_QUADRATURE · √V_A` are screened out of
/// the sampling plan.
pub const DEGENERATE_QUADRATURE: f64 = 1e-6;

/// `ε̂ = [Σ y_s² − η T̂ Σ x_s² − m_s (1 + ν_el)] / (m_s η T̂)`; `None` when
/// `T̂ ≤ 0`.
pub fn excess_noise_from_variables(
    alice: &[f64],
    bob: &[f64],
    transmittance: f64,
    params: &ProtocolParams,
) -> Option<f64> {
    if transmittance <= 0.0 || alice.is_empty() {
        return None;
    }
    let eta_t = params.detector_efficiency * transmittance;
    let ms = alice.len() as f64;
    let yy: f64 = bob.iter().map(|y| y * y).sum();
    let xx: f64 = alice.iter().map(|x| x * x).sum();
    Some((yy - eta_t * xx - ms * (1.0 + params.electronic_noise)) / (ms * eta_t))
}

fn screen(plan: &SamplingPlan, alice: &[f64], params: &ProtocolParams) -> SamplingPlan {
    let floor = DEGENERATE_QUADRATURE * params.modulation_variance.sqrt();
    plan.screened(|i| alice[i].abs() >= floor)
}

fn check_block(alice: &[f64], bob: &[f64], plan: &SamplingPlan) -> Result<()> {
    if bob.len() != alice.len() {
        return Err(Error::LengthMismatch {
            what: "Bob block",
            expected: alice.len(),
            actual: bob.len(),
        });
    }
    if plan.len() != alice.len() {
        return Err(Error::LengthMismatch {
            what: "sampling plan",
            expected: alice.len(),
            actual: plan.len(),
        });
    }
    Ok(())
}

/// One sparse solve over a concatenation of blocks, read out per block.
struct BlockProblem<'a> {
    alice: Vec<&'a [f64]>,
    bob: Vec<&'a [f64]>,
    /// Screened plan per block, in block-local indices.
    plans: Vec<SamplingPlan>,
    indices: Vec<usize>,
}

impl BlockProblem<'_> {
    fn ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.alice
            .iter()
            .map(|a| {
                let r = start..start + a.len();
                start = r.end;
                r
            })
            .collect()
    }

    fn solve(&self, params: &ProtocolParams, cfg: &EstimatorConfig) -> Result<Vec<SubChannelEstimate>> {
        let ranges = self.ranges();
        let total = ranges.last().map_or(0, |r| r.end);
        let mut rows = Vec::new();
        let mut weights = Vec::new();
        let mut measurement = Vec::new();
        for ((plan, range), (a, b)) in self.plans.iter().zip(&ranges).zip(self.alice.iter().zip(&self.bob)) {
            for &i in plan.indices() {
                rows.push(range.start + i);
                weights.push(a[i]);
                measurement.push(C64::new(b[i], 0.0));
            }
        }
        let global = SamplingPlan::from_indices(total, rows)?;
        let op = SensingOperator::new(&global, weights, Basis::Dft(DftScale::Unitary))?;
        let noise_std = (1.0 + params.electronic_noise).sqrt();
        let omp = cfg.omp(measurement.len(), noise_std);
        let sol: SparseCoefficients = omp_solve(&op, &measurement, &omp)?;

        let dft = crate::cs::UnitaryDft::new(total);
        let channel = dft.synthesize(&sol.coefficients);
        let fitted = if self.plans.len() > 1 { Some(op.apply(&sol.coefficients)) } else { None };

        let mut out = Vec::with_capacity(self.plans.len());
        let mut row = 0;
        for (b, range) in ranges.iter().enumerate() {
            let plan = &self.plans[b];
            let block = &channel[range.clone()];
            let sum: f64 = block.iter().map(|h| h.re).sum();
            let imaginary_norm = block.iter().map(|h| h.im * h.im).sum::<f64>().sqrt();
            let residual_norm = match &fitted {
                None => sol.residual_norm,
                Some(fit) => measurement[row..row + plan.sampled()]
                    .iter()
                    .zip(&fit[row..row + plan.sampled()])
                    .map(|(y, f)| (y - f).norm_sqr())
                    .sum::<f64>()
                    .sqrt(),
            };
            row += plan.sampled();

            let mut flags = EstimateFlags::empty();
            if sol.degenerate_support {
                flags |= EstimateFlags::DEGENERATE_SUPPORT;
            }
            let transmittance = if sum > 0.0 {
                transmittance_from_sum(sum, range.len(), params.detector_efficiency)
            } else {
                flags |= EstimateFlags::UNESTIMABLE_TRANSMITTANCE;
                0.0
            };
            let xs = plan.gather(self.alice[b]);
            let ys = plan.gather(self.bob[b]);
            let excess = excess_noise_from_variables(&xs, &ys, transmittance, params);
            if excess.is_none() {
                flags |= EstimateFlags::EXCESS_NOISE_SKIPPED;
            }
            let mut est = SubChannelEstimate::from_raw(self.indices[b], transmittance, excess, flags);
            est.residual_norm = residual_norm;
            est.imaginary_norm = imaginary_norm;
            est.sampled = plan.sampled();
            est.atoms = sol.support.len();
            out.push(est);
        }
        Ok(out)
    }
}

/// Estimates `(T̂, ε̂)` of one sub-channel from the rows of `plan`.
///
/// `T̂ = (Σ Re Ĥ)² / (η m²)` with `Ĥ = Ψ Ŝ` the reconstructed gain vector;
/// `ε̂` follows from the sampled second moments.
pub fn estimate_subchannel_variables(
    index: usize,
    alice: &[f64],
    bob: &[f64],
    plan: &SamplingPlan,
    params: &ProtocolParams,
    cfg: &EstimatorConfig,
) -> Result<SubChannelEstimate> {
    params.validate()?;
    check_block(alice, bob, plan)?;
    let problem = BlockProblem {
        alice: vec![alice],
        bob: vec![bob],
        plans: vec![screen(plan, alice, params)],
        indices: vec![index],
    };
    Ok(problem.solve(params, cfg)?.remove(0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WholeChannelEstimate {
    pub estimates: Vec<SubChannelEstimate>,
    /// `None` when no sub-channel estimate is usable.
    pub aggregate: Option<AggregateEstimate>,
}

/// One joint sparse recovery over the concatenated `Σ m_i`-point channel
/// vector, read out per block as `T̂_i = (mean of Re Ĥ over block i)² / η`.
pub fn estimate_whole_channel_variables(
    dataset: &QuadratureDataset,
    plans: &[SamplingPlan],
    ensemble: &SubChannelEnsemble,
    cfg: &EstimatorConfig,
) -> Result<WholeChannelEstimate> {
    let params = &dataset.params;
    params.validate()?;
    for (what, actual) in [("dataset blocks", dataset.blocks.len()), ("sampling plans", plans.len())] {
        if actual != ensemble.len() {
            return Err(Error::LengthMismatch {
                what,
                expected: ensemble.len(),
                actual,
            });
        }
    }
    for ((block, plan), ch) in dataset.blocks.iter().zip(plans).zip(ensemble.channels()) {
        if block.alice.len() != ch.block_length {
            return Err(Error::LengthMismatch {
                what: "dataset block",
                expected: ch.block_length,
                actual: block.alice.len(),
            });
        }
        check_block(&block.alice, &block.bob, plan)?;
    }
    let problem = BlockProblem {
        alice: dataset.blocks.iter().map(|b| b.alice.as_slice()).collect(),
        bob: dataset.blocks.iter().map(|b| b.bob.as_slice()).collect(),
        plans: dataset
            .blocks
            .iter()
            .zip(plans)
            .map(|(b, p)| screen(p, &b.alice, params))
            .collect(),
        indices: ensemble.channels().iter().map(|c| c.index).collect(),
    };
    let estimates = problem.solve(params, cfg)?;
    let aggregate = aggregate_estimates(&estimates, ensemble).ok();
    Ok(WholeChannelEstimate { estimates, aggregate })
}
