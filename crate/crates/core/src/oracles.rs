//! Slow, independent reference computations for the test suites.
//!
//! Nothing here shares code with the production paths it checks: the DFT is
//! an explicit double sum, sparse fits enumerate every support, and the
//! symplectic spectra are computed from full covariance matrices with a
//! generic eigensolver.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::cs::{LinearOperator, C64};

/// `Σ_j v_j e^{∓2πi jk/m} / √m`; `inverse` selects the `+` sign.
pub fn direct_dft(v: &[C64], inverse: bool) -> Vec<C64> {
    let m = v.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    let s = 1.0 / (m as f64).sqrt();
    (0..m)
        .map(|k| {
            v.iter()
                .enumerate()
                .map(|(j, &x)| {
                    let ang = sign * 2.0 * std::f64::consts::PI * (j * k) as f64 / m as f64;
                    x * C64::from_polar(s, ang)
                })
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SubsetFit {
    /// Sorted support.
    pub support: Vec<usize>,
    /// Dense coefficients.
    pub coefficients: Vec<C64>,
    pub residual_norm: f64,
}

fn lstsq(a: &DMatrix<C64>, y: &DVector<C64>) -> Option<(DVector<C64>, f64)> {
    let svd = a.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().fold(0.0f64, |m, &s| m.max(s));
    let min_sv = svd.singular_values.iter().fold(f64::INFINITY, |m, &s| m.min(s));
    if max_sv == 0.0 || min_sv <= 1e-12 * max_sv {
        return None;
    }
    let x = svd.solve(y, 0.0).ok()?;
    let r = (y - a * &x).norm();
    Some((x, r))
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Best least-squares fit over every support of exactly `k` columns.
pub fn best_subset_fit<O: LinearOperator>(op: &O, y: &[C64], k: usize) -> SubsetFit {
    let dense = op.to_dense();
    let yv = DVector::from_column_slice(y);
    let mut best: Option<SubsetFit> = None;
    for support in combinations(dense.ncols(), k) {
        let a = DMatrix::from_fn(dense.nrows(), k, |r, c| dense[(r, support[c])]);
        let Some((x, r)) = lstsq(&a, &yv) else { continue };
        if best.as_ref().is_none_or(|b| r < b.residual_norm) {
            let mut coefficients = vec![C64::new(0.0, 0.0); dense.ncols()];
            for (&s, &c) in support.iter().zip(x.iter()) {
                coefficients[s] = c;
            }
            best = Some(SubsetFit {
                support,
                coefficients,
                residual_norm: r,
            });
        }
    }
    best.expect("at least one well-posed support")
}

/// Smallest support size `k ≤ k_max` whose best fit reaches `δ`, with that fit.
pub fn sparsest_fit_within<O: LinearOperator>(
    op: &O,
    y: &[C64],
    k_max: usize,
    delta: f64,
) -> Option<SubsetFit> {
    let norm: f64 = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if norm <= delta {
        return Some(SubsetFit {
            support: vec![],
            coefficients: vec![C64::new(0.0, 0.0); op.ncols()],
            residual_norm: norm,
        });
    }
    (1..=k_max)
        .map(|k| best_subset_fit(op, y, k))
        .find(|fit| fit.residual_norm <= delta)
}

/// Symplectic form `Ω = ⊕ [[0, 1], [-1, 0]]` on `modes` modes, ordering
/// `(x₁, p₁, x₂, p₂, ...)`.
pub fn symplectic_form(modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * modes, 2 * modes);
    for k in 0..modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

/// Symplectic eigenvalues (ascending) as the moduli of the spectrum of
/// `iΩγ`, computed through the similar antisymmetric matrix
/// `M = γ^{1/2} Ω γ^{1/2}`: the eigenvalues of `MᵀM` are the `λ²`, each twice.
pub fn symplectic_spectrum(gamma: &DMatrix<f64>) -> Vec<f64> {
    let n = gamma.nrows();
    let eig = SymmetricEigen::new(gamma.clone());
    let sqrt_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    let root = &eig.eigenvectors * sqrt_diag * eig.eigenvectors.transpose();
    let m = &root * symplectic_form(n / 2) * &root;
    let sq = SymmetricEigen::new(m.transpose() * &m);
    let mut vals: Vec<f64> = sq.eigenvalues.iter().map(|v| v.max(0.0).sqrt()).collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect()
}

/// Two-mode EPR covariance of variance `v`.
fn epr(v: f64) -> DMatrix<f64> {
    let c = (v * v - 1.0).max(0.0).sqrt();
    DMatrix::from_row_slice(
        4,
        4,
        &[
            v, 0.0, c, 0.0, //
            0.0, v, 0.0, -c, //
            c, 0.0, v, 0.0, //
            0.0, -c, 0.0, v,
        ],
    )
}

/// `[[a·I, c·σz], [c·σz, b·I]]`.
pub fn two_mode_covariance(a: f64, b: f64, c: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[
            a, 0.0, c, 0.0, //
            0.0, a, 0.0, -c, //
            c, 0.0, b, 0.0, //
            0.0, -c, 0.0, b,
        ],
    )
}

fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

/// Spectrum of Alice's and the detector modes conditioned on Bob's outcome.
///
/// Modes: `A, B₁` from `gamma_ab`, then an EPR pair `F₀, G` of variance
/// `epr_variance`; `B₁` and `F₀` mix on a beamsplitter of transmittance
/// `eta`; the output `B₂` is measured by homodyne (x quadrature) or ideal
/// heterodyne. Returns the three symplectic eigenvalues of `A F G`, ascending.
pub fn conditional_spectrum(
    gamma_ab: &DMatrix<f64>,
    eta: f64,
    epr_variance: f64,
    heterodyne: bool,
) -> Vec<f64> {
    let mut full = DMatrix::<f64>::zeros(8, 8);
    full.view_mut((0, 0), (4, 4)).copy_from(gamma_ab);
    full.view_mut((4, 4), (4, 4)).copy_from(&epr(epr_variance));

    let t = eta.sqrt();
    let r = (1.0 - eta).max(0.0).sqrt();
    let mut s = DMatrix::<f64>::identity(8, 8);
    for q in 0..2 {
        let (b, f) = (2 + q, 4 + q);
        s[(b, b)] = t;
        s[(b, f)] = r;
        s[(f, b)] = -r;
        s[(f, f)] = t;
    }
    let mixed = &s * full * s.transpose();

    let keep = [0, 1, 4, 5, 6, 7];
    let meas = [2, 3];
    let g_keep = select(&mixed, &keep, &keep);
    let g_meas = select(&mixed, &meas, &meas);
    let corr = select(&mixed, &keep, &meas);

    let update = if heterodyne {
        let inv = (g_meas + DMatrix::identity(2, 2)).try_inverse().expect("positive definite");
        &corr * inv * corr.transpose()
    } else {
        let mut pinv = DMatrix::zeros(2, 2);
        pinv[(0, 0)] = 1.0 / g_meas[(0, 0)];
        &corr * pinv * corr.transpose()
    };
    symplectic_spectrum(&(g_keep - update))
}

/// Pairwise (cascade) summation, an ordering independent of a left fold.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vacuum_and_thermal_spectra() {
        let id = DMatrix::<f64>::identity(4, 4);
        for v in symplectic_spectrum(&id) {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let thermal = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 3.0, 2.0, 2.0]));
        let s = symplectic_spectrum(&thermal);
        assert!((s[0] - 2.0).abs() < 1e-12 && (s[1] - 3.0).abs() < 1e-12);
        for v in symplectic_spectrum(&epr(5.0)) {
            assert!((v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn subset_enumeration_counts() {
        assert_eq!(combinations(5, 2).len(), 10);
        assert_eq!(combinations(32, 2).len(), 496);
    }

    #[test]
    fn pairwise_sum_small() {
        assert_eq!(pairwise_sum(&[1.0, 2.0, 3.0]), 6.0);
    }
}
