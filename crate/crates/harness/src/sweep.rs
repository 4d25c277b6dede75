//! Simulation, estimation, MIP and key-rate sweeps over
//! (distance, seed, fraction).

use cvqkd_cs::channel::{
    build_ensemble, ensemble_means, read_transmittance_file, simulate_block, BlockLengths, ExcessPolicy,
    LogNormalSampler, ProtocolParams, QuadratureDataset, SubChannelEnsemble, TransmittanceSource,
};
use cvqkd_cs::cs::{
    make_sampling_plan, mutual_incoherence, mutual_incoherence_columns, sample_columns, Basis, DftScale,
    LinearOperator, SamplingPlan, SensingOperator,
};
use cvqkd_cs::estimator::{
    aggregate_estimates, estimate_subchannel_statistics, estimate_subchannel_variables, SubChannelEstimate,
    VarianceModelInstance,
};
use cvqkd_cs::security::{secret_key_rate, ChannelSummary, EstimateSource, KeyRateReport};
use cvqkd_cs::seed::derive_seed;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{EstimatorKind, ExperimentConfig, SourceKind};
use crate::report::{compute_mse, EstimateRow, KeyRateRow, MipRow, MseRow, RunReport, SeedKeyRate};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("distance {distance}: {source}")]
    Ensemble { distance: f64, source: cvqkd_cs::Error },
    #[error("distance {distance}, seed {seed}: {source}")]
    Cell {
        distance: f64,
        seed: u64,
        source: cvqkd_cs::Error,
    },
}

/// Which parts of the sweep to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stages {
    pub estimates: bool,
    pub mip: bool,
    pub keyrate: bool,
}

impl Stages {
    pub const ALL: Self = Self {
        estimates: true,
        mip: true,
        keyrate: true,
    };
}

// Labels mixed into derived seeds.
const DATA: u64 = 0;
const PLAN: u64 = 1;
const MIP_COLUMNS: u64 = 2;

/// One ensemble per configured distance label.
pub fn build_ensembles(cfg: &ExperimentConfig) -> Result<Vec<(f64, SubChannelEnsemble)>, SweepError> {
    let n = &cfg.ensemble;
    let params = cfg.protocol_params();
    n.distances
        .iter()
        .enumerate()
        .map(|(d, &distance)| {
            let err = |source| SweepError::Ensemble { distance, source };
            let source = match n.source {
                SourceKind::Lognormal => TransmittanceSource::LogNormal(LogNormalSampler::at_distance(
                    distance,
                    n.attenuation_db_per_km,
                    n.log_sigma,
                    derive_seed(n.seed, &[d as u64]),
                )),
                SourceKind::Files => TransmittanceSource::Records(read_transmittance_file(&n.files[d]).map_err(err)?),
            };
            let ens = build_ensemble(
                &source,
                &ExcessPolicy::Constant(n.excess_noise),
                n.subchannels,
                &BlockLengths::Uniform(n.block_length),
                &params,
            )
            .map_err(err)?;
            Ok((distance, ens))
        })
        .collect()
}

/// Dataset of one (distance, seed) cell.
pub fn simulate_cell(
    cfg: &ExperimentConfig,
    ensemble: &SubChannelEnsemble,
    distance_index: usize,
    seed: u64,
) -> cvqkd_cs::Result<QuadratureDataset> {
    simulate_block(
        ensemble,
        &cfg.protocol_params(),
        derive_seed(seed, &[DATA, distance_index as u64]),
        cfg.experiment.noise,
    )
}

/// Sampling plan for one estimator run. The variables and statistics
/// models draw independent plans.
fn plan_for(
    len: usize,
    fraction: f64,
    seed: u64,
    cell: (usize, usize, usize),
    kind: EstimatorKind,
) -> cvqkd_cs::Result<SamplingPlan> {
    let (d, f, i) = cell;
    make_sampling_plan(len, fraction, derive_seed(seed, &[PLAN, d as u64, f as u64, i as u64, kind as u64]))
}

fn variance_instances(cfg: &ExperimentConfig, data: &QuadratureDataset) -> cvqkd_cs::Result<Vec<VarianceModelInstance>> {
    data.blocks
        .par_iter()
        .enumerate()
        .map(|(i, b)| VarianceModelInstance::from_block(i, &b.bob, cfg.variance_mode(), cfg.protocol.modulation_variance))
        .collect()
}

/// Estimates of one cell, indexed `[fraction][estimator][sub-channel]`.
type CellEstimates = Vec<Vec<Vec<SubChannelEstimate>>>;

fn estimate_cell(
    cfg: &ExperimentConfig,
    data: &QuadratureDataset,
    instances: &[VarianceModelInstance],
    d: usize,
    seed: u64,
) -> cvqkd_cs::Result<CellEstimates> {
    let params = cfg.protocol_params();
    let est_cfg = cfg.estimator_config();
    cfg.experiment
        .fractions
        .iter()
        .enumerate()
        .map(|(f, &fraction)| {
            cfg.experiment
                .estimators
                .kinds()
                .iter()
                .map(|&kind| {
                    (0..data.blocks.len())
                        .into_par_iter()
                        .map(|i| match kind {
                            EstimatorKind::Variables => {
                                let b = &data.blocks[i];
                                let plan = plan_for(b.alice.len(), fraction, seed, (d, f, i), kind)?;
                                estimate_subchannel_variables(i, &b.alice, &b.bob, &plan, &params, &est_cfg)
                            }
                            EstimatorKind::Statistics => {
                                let inst = &instances[i];
                                let plan = plan_for(inst.len(), fraction, seed, (d, f, i), kind)?;
                                estimate_subchannel_statistics(inst, &params, &plan, &est_cfg)
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// MIP of each model's sensing operator, reported with the `1/m` inverse-DFT
/// scaling.
fn mip_cell(
    cfg: &ExperimentConfig,
    data: &QuadratureDataset,
    instances: &[VarianceModelInstance],
    d: usize,
    seed: u64,
) -> cvqkd_cs::Result<Vec<(usize, usize, EstimatorKind, f64, bool)>> {
    let mip = &cfg.mip;
    let basis = Basis::Dft(DftScale::Inverse);
    let mut jobs = Vec::new();
    for f in 0..cfg.experiment.fractions.len() {
        for &kind in cfg.experiment.estimators.kinds() {
            for i in 0..data.blocks.len() {
                jobs.push((f, kind, i));
            }
        }
    }
    jobs.into_par_iter()
        .map(|(f, kind, i)| {
            let fraction = cfg.experiment.fractions[f];
            let op = match kind {
                EstimatorKind::Variables => {
                    let alice = &data.blocks[i].alice;
                    let plan = plan_for(alice.len(), fraction, seed, (d, f, i), kind)?;
                    SensingOperator::new(&plan, plan.gather(alice), basis)?
                }
                EstimatorKind::Statistics => {
                    let inst = &instances[i];
                    let plan = plan_for(inst.len(), fraction, seed, (d, f, i), kind)?;
                    SensingOperator::uniform(&plan, inst.modulation_variance, basis)
                }
            };
            let m = op.ncols();
            let (value, subsampled) = if mip.full || m <= mip.columns {
                (mutual_incoherence(&op, mip.normalize)?, false)
            } else {
                let cols = sample_columns(m, mip.columns, derive_seed(seed, &[MIP_COLUMNS, d as u64, f as u64, i as u64]));
                (mutual_incoherence_columns(&op, &cols, mip.normalize)?, true)
            };
            Ok((f, i, kind, value, subsampled))
        })
        .collect()
}

fn source_of(kind: EstimatorKind) -> EstimateSource {
    match kind {
        EstimatorKind::Variables => EstimateSource::EstimatedVariables,
        EstimatorKind::Statistics => EstimateSource::EstimatedStatistics,
    }
}

/// Key rates of the seed's aggregated estimates, one per detection scheme.
/// Empty when no sub-channel estimate is usable.
fn estimated_key_rates(
    cfg: &ExperimentConfig,
    ensemble: &SubChannelEnsemble,
    estimates: &[SubChannelEstimate],
    kind: EstimatorKind,
) -> cvqkd_cs::Result<Vec<KeyRateReport>> {
    let Ok(agg) = aggregate_estimates(estimates, ensemble) else {
        return Ok(Vec::new());
    };
    let summary = ChannelSummary::from_aggregate(&agg, source_of(kind))?;
    let params = cfg.protocol_params();
    cfg.experiment
        .detections
        .iter()
        .map(|&det| secret_key_rate(&summary, &params.with_detection(det)))
        .collect()
}

/// Key rate of the true ensemble means for each detection scheme.
pub fn true_key_rates(ensemble: &SubChannelEnsemble, params: &ProtocolParams, detections: &[cvqkd_cs::channel::Detection]) -> cvqkd_cs::Result<Vec<KeyRateReport>> {
    let summary = ChannelSummary::from_means(&ensemble_means(ensemble))?;
    detections
        .iter()
        .map(|&det| secret_key_rate(&summary, &params.with_detection(det)))
        .collect()
}

struct CellOutput {
    estimates: CellEstimates,
    mip: Vec<(usize, usize, EstimatorKind, f64, bool)>,
}

/// Runs the configured sweep. Cells run in parallel; the report is
/// assembled serially in (distance, fraction, estimator, sub-channel, seed)
/// order, so it does not depend on scheduling.
pub fn run_sweep(cfg: &ExperimentConfig, stages: Stages) -> Result<RunReport, SweepError> {
    let ensembles = build_ensembles(cfg)?;
    let seeds = &cfg.experiment.seeds;
    let need_estimates = stages.estimates || stages.keyrate;

    let cells: Vec<(usize, usize)> = (0..ensembles.len())
        .flat_map(|d| (0..seeds.len()).map(move |s| (d, s)))
        .collect();
    let outputs: Vec<CellOutput> = cells
        .par_iter()
        .map(|&(d, s)| {
            let (distance, ens) = &ensembles[d];
            let seed = seeds[s];
            let err = |source| SweepError::Cell {
                distance: *distance,
                seed,
                source,
            };
            let want_mip = stages.mip && cfg.mip.enabled && s == 0;
            if !need_estimates && !want_mip {
                return Ok(CellOutput {
                    estimates: Vec::new(),
                    mip: Vec::new(),
                });
            }
            let data = simulate_cell(cfg, ens, d, seed).map_err(err)?;
            let instances = variance_instances(cfg, &data).map_err(err)?;
            let estimates = if need_estimates {
                estimate_cell(cfg, &data, &instances, d, seed).map_err(err)?
            } else {
                Vec::new()
            };
            let mip = if want_mip {
                mip_cell(cfg, &data, &instances, d, seed).map_err(err)?
            } else {
                Vec::new()
            };
            Ok(CellOutput { estimates, mip })
        })
        .collect::<Result<_, SweepError>>()?;
    let output = |d: usize, s: usize| &outputs[d * seeds.len() + s];

    let kinds = cfg.experiment.estimators.kinds();
    let mut report = RunReport {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        estimates: Vec::new(),
        mse: Vec::new(),
        keyrate: Vec::new(),
        seed_keyrates: Vec::new(),
        mip: Vec::new(),
    };

    for (d, (distance, ens)) in ensembles.iter().enumerate() {
        let channels = ens.channels();
        if stages.estimates {
            for (f, &fraction) in cfg.experiment.fractions.iter().enumerate() {
                for (k, &kind) in kinds.iter().enumerate() {
                    let (mut t_hat, mut t_true, mut e_hat, mut e_true) = (vec![], vec![], vec![], vec![]);
                    for ch in channels {
                        for (s, &seed) in seeds.iter().enumerate() {
                            let est = &output(d, s).estimates[f][k][ch.index];
                            report.estimates.push(EstimateRow {
                                distance: *distance,
                                subchannel: ch.index,
                                fraction,
                                seed,
                                estimator: kind,
                                t_true: ch.transmittance,
                                t_hat: est.transmittance,
                                eps_true: ch.excess_noise,
                                eps_hat: est.excess_noise,
                                residual: est.residual_norm,
                                flags: est.flags.label(),
                            });
                            t_hat.push(est.transmittance);
                            t_true.push(ch.transmittance);
                            if let Some(e) = est.excess_noise {
                                e_hat.push(e);
                                e_true.push(ch.excess_noise);
                            }
                        }
                    }
                    report.mse.push(MseRow {
                        distance: *distance,
                        fraction,
                        estimator: kind,
                        seeds: seeds.len(),
                        mse_t: compute_mse(&t_hat, &t_true).unwrap_or(f64::NAN),
                        mse_eps: compute_mse(&e_hat, &e_true).unwrap_or(f64::NAN),
                    });
                }
            }
        }

        if stages.mip && cfg.mip.enabled {
            let mut rows: Vec<MipRow> = output(d, 0)
                .mip
                .iter()
                .map(|&(f, i, kind, mip, subsampled)| MipRow {
                    distance: *distance,
                    subchannel: i,
                    fraction: cfg.experiment.fractions[f],
                    model: kind,
                    mip,
                    subsampled,
                })
                .collect();
            rows.sort_by(|a, b| (a.model, a.subchannel).cmp(&(b.model, b.subchannel)));
            rows.sort_by(|a, b| a.fraction.total_cmp(&b.fraction));
            report.mip.extend(rows);
        }

        if stages.keyrate {
            let params = cfg.protocol_params();
            let truth = true_key_rates(ens, &params, &cfg.experiment.detections)
                .map_err(|source| SweepError::Ensemble { distance: *distance, source })?;
            report.keyrate.extend(truth.iter().map(|r| KeyRateRow {
                distance: *distance,
                detection: r.detection,
                source: r.source,
                i_ab: r.mutual_information,
                chi_be: r.holevo,
                k: r.key_rate,
            }));
            let kf = cfg.keyrate_fraction();
            let f = cfg
                .experiment
                .fractions
                .iter()
                .position(|&x| x == kf)
                .expect("validated key-rate fraction");
            for (k, &kind) in kinds.iter().enumerate() {
                let mut per_seed: Vec<Vec<KeyRateReport>> = Vec::new();
                for (s, &seed) in seeds.iter().enumerate() {
                    let rates = estimated_key_rates(cfg, ens, &output(d, s).estimates[f][k], kind).map_err(|source| {
                        SweepError::Cell {
                            distance: *distance,
                            seed,
                            source,
                        }
                    })?;
                    report.seed_keyrates.extend(rates.iter().map(|r| SeedKeyRate {
                        distance: *distance,
                        seed,
                        detection: r.detection,
                        source: r.source,
                        i_ab: r.mutual_information,
                        chi_be: r.holevo,
                        k: r.key_rate,
                    }));
                    per_seed.push(rates);
                }
                for (j, &det) in cfg.experiment.detections.iter().enumerate() {
                    let got: Vec<&KeyRateReport> = per_seed.iter().filter_map(|r| r.get(j)).collect();
                    let n = got.len() as f64;
                    let mean = |f: fn(&KeyRateReport) -> f64| {
                        if got.is_empty() {
                            f64::NAN
                        } else {
                            got.iter().map(|r| f(r)).sum::<f64>() / n
                        }
                    };
                    report.keyrate.push(KeyRateRow {
                        distance: *distance,
                        detection: det,
                        source: source_of(kind),
                        i_ab: mean(|r| r.mutual_information),
                        chi_be: mean(|r| r.holevo),
                        k: mean(|r| r.key_rate),
                    });
                }
            }
        }
    }
    Ok(report)
}
