//! Mutual incoherence `μ(Θ) = max_{k≠j} |⟨θ_k, θ_j⟩|`.
//!
//! For a weighted, row-sampled DFT operator the Gram matrix is circulant:
//! `⟨θ_k, θ_j⟩ = s² Σ_r w_r² e^{2πi φ_r (j−k)/m}` depends on `j − k` only,
//! so one length-`m` FFT yields every pairwise inner product.

use rand::seq::index;

use super::dft::UnitaryDft;
use super::operator::{Basis, LinearOperator, SensingOperator};
use super::C64;
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Largest column count for which a full (all-pairs) MIP is computed.
pub const DENSE_COLUMN_LIMIT: usize = 20_000;

/// `g[d] = ⟨θ_k, θ_{k+d}⟩` for the DFT basis.
fn circulant_gram(op: &SensingOperator, dft: &UnitaryDft) -> Vec<C64> {
    let m = op.ncols();
    let mut energy = vec![C64::new(0.0, 0.0); m];
    for (&i, &w) in op.rows().iter().zip(op.weights()) {
        energy[i] = C64::new(w * w, 0.0);
    }
    let s = dft.scale().entry_scale(m);
    let mut g = dft.raw_inverse(&energy);
    g.iter_mut().for_each(|v| *v *= s * s);
    g
}

/// MIP over all column pairs. `normalize` divides by the column norms.
pub fn mutual_incoherence(op: &SensingOperator, normalize: bool) -> Result<f64> {
    let m = op.ncols();
    if m < 2 {
        return Err(Error::TooFewColumns);
    }
    if m > DENSE_COLUMN_LIMIT {
        return Err(Error::MemoryGuard {
            columns: m,
            limit: DENSE_COLUMN_LIMIT,
        });
    }
    match (op.basis(), op.dft()) {
        (Basis::Dft(_), Some(dft)) => {
            let g = circulant_gram(op, dft);
            let raw = g[1..].iter().map(|v| v.norm()).fold(0.0, f64::max);
            Ok(normalise(raw, g[0].re, normalize))
        }
        // Distinct identity columns never share a row.
        _ => Ok(0.0),
    }
}

/// MIP restricted to the given columns, for large `m`.
pub fn mutual_incoherence_columns(
    op: &SensingOperator,
    columns: &[usize],
    normalize: bool,
) -> Result<f64> {
    let m = op.ncols();
    if columns.len() < 2 {
        return Err(Error::TooFewColumns);
    }
    if let Some(&bad) = columns.iter().find(|&&k| k >= m) {
        return Err(Error::PlanIndexOutOfRange { index: bad, len: m });
    }
    match (op.basis(), op.dft()) {
        (Basis::Dft(_), Some(dft)) => {
            let g = circulant_gram(op, dft);
            let mut raw = 0.0f64;
            for (a, &k) in columns.iter().enumerate() {
                for &j in &columns[a + 1..] {
                    if j != k {
                        let d = (j + m - k) % m;
                        raw = raw.max(g[d].norm());
                    }
                }
            }
            Ok(normalise(raw, g[0].re, normalize))
        }
        _ => Ok(0.0),
    }
}

fn normalise(raw: f64, column_energy: f64, normalize: bool) -> f64 {
    if normalize {
        if column_energy > 0.0 {
            raw / column_energy
        } else {
            0.0
        }
    } else {
        raw
    }
}

/// `count` distinct columns out of `m`, sorted. Returns all columns when
/// `count ≥ m`.
pub fn sample_columns(m: usize, count: usize, seed: u64) -> Vec<usize> {
    if count >= m {
        return (0..m).collect();
    }
    let mut rng = rng_from_seed(seed);
    let mut cols = index::sample(&mut rng, m, count).into_vec();
    cols.sort_unstable();
    cols
}

/// All-pairs MIP from explicit columns. Quadratic in the column count; used
/// as a reference on small operators.
pub fn dense_mutual_incoherence<O: LinearOperator + ?Sized>(op: &O, normalize: bool) -> Result<f64> {
    let n = op.ncols();
    if n < 2 {
        return Err(Error::TooFewColumns);
    }
    if n > DENSE_COLUMN_LIMIT {
        return Err(Error::MemoryGuard {
            columns: n,
            limit: DENSE_COLUMN_LIMIT,
        });
    }
    let cols: Vec<Vec<C64>> = (0..n).map(|k| op.column(k)).collect();
    let norms: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    let mut mu = 0.0f64;
    for k in 0..n {
        for j in k + 1..n {
            let ip: C64 = cols[k].iter().zip(&cols[j]).map(|(a, b)| a.conj() * b).sum();
            let v = if normalize {
                let d = norms[k] * norms[j];
                if d > 0.0 {
                    ip.norm() / d
                } else {
                    0.0
                }
            } else {
                ip.norm()
            };
            mu = mu.max(v);
        }
    }
    Ok(mu)
}
