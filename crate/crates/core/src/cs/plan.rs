use rand::seq::index;

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Random row selection `φ` of `m_s` distinct indices out of `0..m`,
/// kept sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingPlan {
    len: usize,
    indices: Vec<usize>,
    seed: Option<u64>,
}

impl SamplingPlan {
    /// Every row, in order.
    pub fn full(len: usize) -> Self {
        Self {
            len,
            indices: (0..len).collect(),
            seed: None,
        }
    }

    pub fn from_indices(len: usize, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        for w in indices.windows(2) {
            if w[0] == w[1] {
                return Err(Error::PlanDuplicateIndex(w[0]));
            }
        }
        if let Some(&last) = indices.last() {
            if last >= len {
                return Err(Error::PlanIndexOutOfRange { index: last, len });
            }
        }
        Ok(Self {
            len,
            indices,
            seed: None,
        })
    }

    /// Length `m` of the block the plan samples from.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Number of sampled rows `m_s`.
    pub fn sampled(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn fraction(&self) -> f64 {
        self.indices.len() as f64 / self.len as f64
    }

    pub fn is_full(&self) -> bool {
        self.indices.len() == self.len
    }

    /// Picks the sampled entries of `values`.
    pub fn gather<T: Copy>(&self, values: &[T]) -> Vec<T> {
        self.indices.iter().map(|&i| values[i]).collect()
    }

    /// Replaces sampled rows for which `keep` is false by unsampled rows for
    /// which it holds, scanning upward from the rejected index (wrapping).
    /// Rows are dropped when no replacement exists.
    pub fn screened(&self, keep: impl Fn(usize) -> bool) -> Self {
        if self.indices.iter().all(|&i| keep(i)) {
            return self.clone();
        }
        let mut taken = vec![false; self.len];
        for &i in &self.indices {
            taken[i] = true;
        }
        let mut out = Vec::with_capacity(self.indices.len());
        for &i in &self.indices {
            if keep(i) {
                out.push(i);
                continue;
            }
            let replacement = (1..self.len)
                .map(|d| (i + d) % self.len)
                .find(|&j| !taken[j] && keep(j));
            if let Some(j) = replacement {
                taken[j] = true;
                out.push(j);
            }
        }
        out.sort_unstable();
        Self {
            len: self.len,
            indices: out,
            seed: self.seed,
        }
    }
}

/// Draws `max(1, round(f·m))` distinct rows without replacement.
pub fn make_sampling_plan(len: usize, fraction: f64, seed: u64) -> Result<SamplingPlan> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidFraction(fraction));
    }
    if len == 0 {
        return Err(Error::EmptyBlock { index: 0 });
    }
    let count = ((fraction * len as f64).round() as usize).clamp(1, len);
    if count == len {
        return Ok(SamplingPlan {
            seed: Some(seed),
            ..SamplingPlan::full(len)
        });
    }
    let mut rng = rng_from_seed(seed);
    let mut indices = index::sample(&mut rng, len, count).into_vec();
    indices.sort_unstable();
    Ok(SamplingPlan {
        len,
        indices,
        seed: Some(seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_fraction_selects_everything() {
        let plan = make_sampling_plan(10, 1.0, 3).unwrap();
        assert_eq!(plan.indices(), (0..10).collect::<Vec<_>>().as_slice());
        assert!(plan.is_full());
    }

    #[test]
    fn ten_percent_of_ten_thousand() {
        let plan = make_sampling_plan(10_000, 0.1, 8).unwrap();
        assert_eq!(plan.sampled(), 1000);
        assert!(plan.indices().windows(2).all(|w| w[0] < w[1]));
        assert!(plan.indices().iter().all(|&i| i < 10_000));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = make_sampling_plan(8, 0.5, 99).unwrap();
        assert_eq!(a.sampled(), 4);
        for _ in 0..5 {
            assert_eq!(make_sampling_plan(8, 0.5, 99).unwrap(), a);
        }
    }

    #[test]
    fn tiny_fraction_keeps_one_row() {
        assert_eq!(make_sampling_plan(10, 0.01, 1).unwrap().sampled(), 1);
    }

    #[test]
    fn rejects_out_of_range_fractions() {
        for f in [0.0, -0.2, 1.5, f64::NAN] {
            assert!(matches!(make_sampling_plan(10, f, 0), Err(Error::InvalidFraction(_))));
        }
    }

    #[test]
    fn from_indices_validates() {
        assert!(SamplingPlan::from_indices(4, vec![0, 0]).is_err());
        assert!(SamplingPlan::from_indices(4, vec![4]).is_err());
        assert_eq!(
            SamplingPlan::from_indices(4, vec![3, 1]).unwrap().indices(),
            &[1, 3]
        );
    }

    #[test]
    fn screening_swaps_rejected_rows() {
        let plan = SamplingPlan::from_indices(6, vec![1, 2]).unwrap();
        let s = plan.screened(|i| i != 2);
        assert_eq!(s.indices(), &[1, 3]);
        let none = plan.screened(|_| false);
        assert!(none.is_empty());
    }
}
