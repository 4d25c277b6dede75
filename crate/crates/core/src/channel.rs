//! Sub-channel decomposition of the atmospheric link and synthetic
//! quadrature data.
//!
//! Within sub-channel `i` Bob's quadrature obeys
//! `y_j = √(η T_i) x_j + z_j` with `z_j ~ N(0, 1 + η T_i ε_i + ν_el)` and
//! Alice's `x_j ~ N(0, V_A)`.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::stream_rng;

/// Coherent-state detection scheme at Bob's side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detection {
    Homodyne,
    Heterodyne,
}

impl Detection {
    pub fn as_str(self) -> &'static str {
        match self {
            Detection::Homodyne => "homodyne",
            Detection::Heterodyne => "heterodyne",
        }
    }
}

impl std::fmt::Display for Detection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Protocol and trusted-detector parameters, all noise terms in SNU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Alice's Gaussian modulation variance `V_A`.
    pub modulation_variance: f64,
    /// Detector efficiency `η`.
    pub detector_efficiency: f64,
    /// Detector electronic noise `ν_el`.
    pub electronic_noise: f64,
    /// Reconciliation efficiency `β`.
    pub reconciliation_efficiency: f64,
    pub detection: Detection,
}

impl ProtocolParams {
    pub fn new(
        modulation_variance: f64,
        detector_efficiency: f64,
        electronic_noise: f64,
        reconciliation_efficiency: f64,
        detection: Detection,
    ) -> Result<Self> {
        let params = Self {
            modulation_variance,
            detector_efficiency,
            electronic_noise,
            reconciliation_efficiency,
            detection,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, name, value, reason| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    value,
                    reason,
                })
            }
        };
        let va = self.modulation_variance;
        check(va.is_finite() && va > 0.0, "modulation_variance", va, "must be > 0")?;
        let eta = self.detector_efficiency;
        check(eta > 0.0 && eta <= 1.0, "detector_efficiency", eta, "must lie in (0, 1]")?;
        let nu = self.electronic_noise;
        check(nu.is_finite() && nu >= 0.0, "electronic_noise", nu, "must be >= 0")?;
        let beta = self.reconciliation_efficiency;
        check(
            beta > 0.0 && beta <= 1.0,
            "reconciliation_efficiency",
            beta,
            "must lie in (0, 1]",
        )
    }

    /// Equivalent EPR variance `V = V_A + 1`.
    pub fn epr_variance(&self) -> f64 {
        self.modulation_variance + 1.0
    }

    pub fn with_detection(mut self, detection: Detection) -> Self {
        self.detection = detection;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubChannel {
    pub index: usize,
    pub transmittance: f64,
    pub excess_noise: f64,
    pub probability: f64,
    pub block_length: usize,
}

impl SubChannel {
    /// Variance of the additive noise `z`: `1 + η T ε + ν_el`.
    pub fn noise_variance(&self, params: &ProtocolParams) -> f64 {
        (1.0 + params.electronic_noise)
            + params.detector_efficiency * self.transmittance * self.excess_noise
    }

    /// Bob's quadrature variance `η T V_A + 1 + η T ε + ν_el`.
    pub fn bob_variance(&self, params: &ProtocolParams) -> f64 {
        params.detector_efficiency * self.transmittance * params.modulation_variance
            + self.noise_variance(params)
    }

    /// Channel gain `√(η T)` applied to Alice's quadrature.
    pub fn gain(&self, params: &ProtocolParams) -> f64 {
        (params.detector_efficiency * self.transmittance).sqrt()
    }
}

/// Ordered set of sub-channels; probabilities sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubChannelEnsemble {
    channels: Vec<SubChannel>,
}

const PROBABILITY_TOLERANCE: f64 = 1e-9;

impl SubChannelEnsemble {
    pub fn new(channels: Vec<SubChannel>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        for (k, ch) in channels.iter().enumerate() {
            if ch.index != k {
                return Err(Error::LengthMismatch {
                    what: "sub-channel index",
                    expected: k,
                    actual: ch.index,
                });
            }
            validate_channel(ch)?;
        }
        let sum: f64 = channels.iter().map(|c| c.probability).sum();
        if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(Error::ProbabilitySum { sum });
        }
        Ok(Self { channels })
    }

    pub fn channels(&self) -> &[SubChannel] {
        &self.channels
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn total_length(&self) -> usize {
        self.channels.iter().map(|c| c.block_length).sum()
    }
}

fn validate_channel(ch: &SubChannel) -> Result<()> {
    let t = ch.transmittance;
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::InvalidTransmittance {
            index: ch.index,
            value: t,
        });
    }
    if !(ch.excess_noise.is_finite() && ch.excess_noise >= 0.0) {
        return Err(Error::InvalidExcessNoise {
            index: ch.index,
            value: ch.excess_noise,
        });
    }
    if !(0.0..=1.0).contains(&ch.probability) {
        return Err(Error::InvalidProbability {
            index: ch.index,
            value: ch.probability,
        });
    }
    if ch.block_length == 0 {
        return Err(Error::EmptyBlock { index: ch.index });
    }
    Ok(())
}

/// One row of a transmittance ensemble file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmittanceRecord {
    #[serde(rename = "T")]
    pub transmittance: f64,
    #[serde(rename = "epsilon", default)]
    pub excess_noise: Option<f64>,
    #[serde(rename = "p", default)]
    pub probability: Option<f64>,
}

impl TransmittanceRecord {
    pub fn new(transmittance: f64) -> Self {
        Self {
            transmittance,
            excess_noise: None,
            probability: None,
        }
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    index: usize,
    #[serde(rename = "T")]
    transmittance: f64,
    #[serde(default)]
    epsilon: Option<f64>,
    #[serde(default)]
    p: Option<f64>,
}

/// Reads `index,T,epsilon,p` rows; `epsilon` and `p` may be absent or empty.
/// Rows are returned in index order and indices must be `0..M`.
pub fn read_transmittance_csv<R: Read>(reader: R) -> Result<Vec<TransmittanceRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows: Vec<CsvRow> = Vec::new();
    for row in rdr.deserialize() {
        rows.push(row?);
    }
    rows.sort_by_key(|r| r.index);
    for (k, r) in rows.iter().enumerate() {
        if r.index != k {
            return Err(Error::Csv(format!(
                "indices must be 0..{} without gaps, found {}",
                rows.len(),
                r.index
            )));
        }
    }
    Ok(rows
        .into_iter()
        .map(|r| TransmittanceRecord {
            transmittance: r.transmittance,
            excess_noise: r.epsilon,
            probability: r.p,
        })
        .collect())
}

pub fn read_transmittance_file(path: &Path) -> Result<Vec<TransmittanceRecord>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
    read_transmittance_csv(file)
}

pub fn write_ensemble_csv<W: Write>(ensemble: &SubChannelEnsemble, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["index", "T", "epsilon", "p"])?;
    for ch in ensemble.channels() {
        wtr.write_record([
            ch.index.to_string(),
            ch.transmittance.to_string(),
            ch.excess_noise.to_string(),
            ch.probability.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}

/// Bounded log-normal transmittance sampler.
///
/// `T = min(1, T̄ · exp(σ g − σ²/2))` with `g ~ N(0,1)`, so the unclipped
/// mean is `T̄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalSampler {
    pub mean_transmittance: f64,
    pub log_sigma: f64,
    pub seed: u64,
}

impl LogNormalSampler {
    /// Mean transmittance decaying as `10^(-α d / 10)` with `α` in dB/km.
    pub fn at_distance(distance_km: f64, attenuation_db_per_km: f64, log_sigma: f64, seed: u64) -> Self {
        Self {
            mean_transmittance: 10f64.powf(-attenuation_db_per_km * distance_km / 10.0),
            log_sigma,
            seed,
        }
    }

    pub fn sample(&self, count: usize) -> Vec<f64> {
        let mut rng = stream_rng(self.seed, 0);
        let s = self.log_sigma;
        (0..count)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                (self.mean_transmittance * (s * g - 0.5 * s * s).exp()).min(1.0)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransmittanceSource {
    Records(Vec<TransmittanceRecord>),
    LogNormal(LogNormalSampler),
}

/// Excess noise per sub-channel when the source does not carry one.
#[derive(Debug, Clone, PartialEq)]
pub enum ExcessPolicy {
    Constant(f64),
    PerChannel(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockLengths {
    Uniform(usize),
    PerChannel(Vec<usize>),
}

/// Assembles a validated ensemble of `count` sub-channels.
///
/// A record's own `epsilon` takes precedence over `excess`. Probabilities
/// are taken from the records when every record has one, otherwise
/// `p_i = m_i / Σ m_j`.
pub fn build_ensemble(
    source: &TransmittanceSource,
    excess: &ExcessPolicy,
    count: usize,
    lengths: &BlockLengths,
    params: &ProtocolParams,
) -> Result<SubChannelEnsemble> {
    params.validate()?;
    if count == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let records = match source {
        TransmittanceSource::Records(r) => {
            if r.len() != count {
                return Err(Error::LengthMismatch {
                    what: "transmittance records",
                    expected: count,
                    actual: r.len(),
                });
            }
            r.clone()
        }
        TransmittanceSource::LogNormal(s) => {
            s.sample(count).into_iter().map(TransmittanceRecord::new).collect()
        }
    };
    for (i, r) in records.iter().enumerate() {
        let t = r.transmittance;
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::InvalidTransmittance { index: i, value: t });
        }
    }
    let block_lengths: Vec<usize> = match lengths {
        BlockLengths::Uniform(m) => vec![*m; count],
        BlockLengths::PerChannel(v) => {
            if v.len() != count {
                return Err(Error::LengthMismatch {
                    what: "block lengths",
                    expected: count,
                    actual: v.len(),
                });
            }
            v.clone()
        }
    };
    if let Some(i) = block_lengths.iter().position(|&m| m == 0) {
        return Err(Error::EmptyBlock { index: i });
    }
    let policy_eps = |i: usize| -> Result<f64> {
        match excess {
            ExcessPolicy::Constant(e) => Ok(*e),
            ExcessPolicy::PerChannel(v) => v.get(i).copied().ok_or(Error::LengthMismatch {
                what: "per-channel excess noise",
                expected: count,
                actual: v.len(),
            }),
        }
    };

    let given = records.iter().filter(|r| r.probability.is_some()).count();
    let probabilities: Vec<f64> = if given == count {
        records.iter().map(|r| r.probability.unwrap_or_default()).collect()
    } else if given == 0 {
        let total: usize = block_lengths.iter().sum();
        block_lengths.iter().map(|&m| m as f64 / total as f64).collect()
    } else {
        return Err(Error::PartialProbabilities);
    };

    let channels = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(SubChannel {
                index: i,
                transmittance: r.transmittance,
                excess_noise: match r.excess_noise {
                    Some(e) => e,
                    None => policy_eps(i)?,
                },
                probability: probabilities[i],
                block_length: block_lengths[i],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SubChannelEnsemble::new(channels)
}

/// Probability-weighted ensemble means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleMeans {
    pub transmittance: f64,
    pub sqrt_transmittance: f64,
    pub excess_noise: f64,
}

pub fn ensemble_means(ensemble: &SubChannelEnsemble) -> EnsembleMeans {
    let mut means = EnsembleMeans {
        transmittance: 0.0,
        sqrt_transmittance: 0.0,
        excess_noise: 0.0,
    };
    for ch in ensemble.channels() {
        means.transmittance += ch.probability * ch.transmittance;
        means.sqrt_transmittance += ch.probability * ch.transmittance.sqrt();
        means.excess_noise += ch.probability * ch.excess_noise;
    }
    means
}

/// Whether the additive noise `z` is drawn or forced to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    Gaussian,
    /// `z ≡ 0`, used by exact-recovery checks.
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureBlock {
    pub alice: Vec<f64>,
    pub bob: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureDataset {
    pub blocks: Vec<QuadratureBlock>,
    pub seed: u64,
    pub params: ProtocolParams,
    pub noise: NoiseMode,
}

/// Sends Alice's block through one sub-channel. With `rng = None` the noise
/// term is zero.
pub fn transmit<R: Rng + ?Sized>(
    alice: &[f64],
    channel: &SubChannel,
    params: &ProtocolParams,
    rng: Option<&mut R>,
) -> Vec<f64> {
    let gain = channel.gain(params);
    match rng {
        None => alice.iter().map(|&x| gain * x).collect(),
        Some(rng) => {
            let sigma = channel.noise_variance(params).sqrt();
            alice
                .iter()
                .map(|&x| {
                    let g: f64 = StandardNormal.sample(rng);
                    gain * x + sigma * g
                })
                .collect()
        }
    }
}

/// Draws Alice's modulation and Bob's outcomes for every sub-channel.
///
/// Sub-channel `i` uses stream `i` of the generator keyed by `seed`, so the
/// parallel generation is bitwise identical to a serial one.
pub fn simulate_block(
    ensemble: &SubChannelEnsemble,
    params: &ProtocolParams,
    seed: u64,
    noise: NoiseMode,
) -> Result<QuadratureDataset> {
    params.validate()?;
    let sd = params.modulation_variance.sqrt();
    let blocks = ensemble
        .channels()
        .par_iter()
        .map(|ch| {
            let mut rng = stream_rng(seed, ch.index as u64);
            let alice: Vec<f64> = (0..ch.block_length)
                .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let bob = match noise {
                NoiseMode::Gaussian => transmit(&alice, ch, params, Some(&mut rng)),
                NoiseMode::Zero => transmit::<rand_chacha::ChaCha20Rng>(&alice, ch, params, None),
            };
            QuadratureBlock { alice, bob }
        })
        .collect();
    Ok(QuadratureDataset {
        blocks,
        seed,
        params: *params,
        noise,
    })
}

/// Audit dump of a dataset as `i,j,x,y` rows.
pub fn write_dataset_csv<W: Write>(dataset: &QuadratureDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["i", "j", "x", "y"])?;
    for (i, block) in dataset.blocks.iter().enumerate() {
        for (j, (x, y)) in block.alice.iter().zip(&block.bob).enumerate() {
            wtr.write_record([i.to_string(), j.to_string(), x.to_string(), y.to_string()])?;
        }
    }
    wtr.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}
