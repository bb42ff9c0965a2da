//! Permutation significance of weights, Benjamini–Hochberg adjustment and
//! the Wilcoxon signed-rank test.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::model::{Label, LongitudinalDataset};
use crate::scalar::Scalar;
use crate::synth::line_rng;
use crate::trainer::{DualSvm, TrainError, TrainOptions};

/// Largest number of non-zero differences for which the exact null distribution is used.
pub const EXACT_SIGN_RANK_LIMIT: usize = 25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("p-value {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("signed-rank test needs at least 5 pairs with a non-zero difference among them (got {pairs} pairs, {nonzero} non-zero)")]
    TooFewPairs { pairs: usize, nonzero: usize },
    #[error("samples have different lengths ({0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("the permutation count must be at least 1")]
    NoPermutations,
    #[error("could not start a worker pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Benjamini–Hochberg step-up adjustment, returned in input order.
pub fn bh_adjust<T: Scalar>(p: &[T]) -> Result<Vec<T>, StatsError> {
    for (index, &v) in p.iter().enumerate() {
        if !(v >= T::zero() && v <= T::one()) {
            return Err(StatsError::OutOfRange {
                index,
                value: v.as_f64(),
            });
        }
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).expect("finite p-values"));
    let mut out = vec![T::zero(); m];
    let mut running = T::one();
    for rank in (1..=m).rev() {
        let i = order[rank - 1];
        running = running.min(T::of(m as f64) * p[i] / T::of(rank as f64));
        out[i] = running;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignRankResult {
    /// Sum of the ranks of positive differences, `W+`.
    pub statistic: f64,
    /// `P(W+ ≥ observed)` under the null: evidence that `x` exceeds `y`.
    pub p_value: f64,
    pub p_two_sided: f64,
    pub n_effective: usize,
    pub exact: bool,
}

/// Average ranks of `values` (1-based), ties sharing the mean of their positions.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; values.len()];
    let mut k = 0;
    while k < order.len() {
        let mut end = k + 1;
        while end < order.len() && values[order[end]] == values[order[k]] {
            end += 1;
        }
        let rank = (k + 1 + end) as f64 / 2.0;
        for &i in &order[k..end] {
            ranks[i] = rank;
        }
        k = end;
    }
    ranks
}

/// Wilcoxon signed-rank test on the paired differences `x − y`.
///
/// Zero differences are dropped, tied magnitudes get average ranks. Up to
/// [`EXACT_SIGN_RANK_LIMIT`] non-zero differences the null distribution is
/// enumerated exactly (tie pattern included); above it a continuity-corrected
/// normal approximation with tie-corrected variance is used.
pub fn signed_rank_test(x: &[f64], y: &[f64]) -> Result<SignRankResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if x.len() < 5 || n == 0 {
        return Err(StatsError::TooFewPairs {
            pairs: x.len(),
            nonzero: n,
        });
    }
    let ranks = average_ranks(&diffs.iter().map(|d| d.abs()).collect::<Vec<_>>());
    let w_plus: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();

    let (upper, lower, exact) = if n <= EXACT_SIGN_RANK_LIMIT {
        let (upper, lower) = exact_tails(&ranks, w_plus);
        (upper, lower, true)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0;
        let mut sorted = ranks.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite ranks"));
        for group in sorted.chunk_by(|a, b| a == b) {
            let t = group.len() as f64;
            var -= (t * t * t - t) / 48.0;
        }
        let sd = var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        let upper = normal.sf((w_plus - mean - 0.5) / sd);
        let lower = normal.cdf((w_plus - mean + 0.5) / sd);
        (upper, lower, false)
    };
    Ok(SignRankResult {
        statistic: w_plus,
        p_value: upper.min(1.0),
        p_two_sided: (2.0 * upper.min(lower)).min(1.0),
        n_effective: n,
        exact,
    })
}

/// `(P(W+ ≥ w), P(W+ ≤ w))` by dynamic programming over doubled (integer) ranks.
fn exact_tails(ranks: &[f64], w_plus: f64) -> (f64, f64) {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; total + 1];
    counts[0] = 1.0;
    let mut reach = 0;
    for &r in &doubled {
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let all: f64 = counts.iter().sum();
    let w = (2.0 * w_plus).round() as usize;
    let upper: f64 = counts[w..].iter().sum();
    let lower: f64 = counts[..=w].iter().sum();
    (upper / all, lower / all)
}

/// Kolmogorov–Smirnov distance between the sample's empirical CDF and U(0, 1).
pub fn ks_uniform_statistic(samples: &[f64]) -> f64 {
    let mut u = samples.to_vec();
    u.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let n = u.len() as f64;
    u.iter().enumerate().fold(0.0, |d: f64, (i, &v)| {
        d.max((i + 1) as f64 / n - v).max(v - i as f64 / n)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermutationOptions<T> {
    pub train: TrainOptions<T>,
    pub permutations: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl<T: Scalar> PermutationOptions<T> {
    pub fn new(c: T, permutations: usize, seed: u64) -> Self {
        Self {
            train: TrainOptions::new(c),
            permutations,
            seed,
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationReport<T> {
    pub raw_p: Vec<T>,
    pub adjusted_p: Vec<T>,
    #[serde(rename = "B")]
    pub permutations: usize,
    pub seed: u64,
    pub observed_w: Vec<T>,
    /// Permutations whose refit had no usable direction; their weights count as zero.
    pub degenerate: usize,
}

/// Subject labels for permutation `k`, shuffled on stream `(seed, k)`.
pub fn permuted_labels(labels: &[Label], seed: u64, k: usize) -> Vec<Label> {
    let mut out = labels.to_vec();
    out.shuffle(&mut line_rng(seed, k));
    out
}

pub fn permutation_test<T: Scalar>(
    ds: &LongitudinalDataset<T>,
    c: T,
    permutations: usize,
    seed: u64,
) -> Result<PermutationReport<T>, StatsError> {
    permutation_test_with(ds, &PermutationOptions::new(c, permutations, seed))
}

/// Refits the model on `B` subject-level label permutations and compares `|w_j|`.
pub fn permutation_test_with<T: Scalar>(
    ds: &LongitudinalDataset<T>,
    opts: &PermutationOptions<T>,
) -> Result<PermutationReport<T>, StatsError> {
    if opts.permutations == 0 {
        return Err(StatsError::NoPermutations);
    }
    ds.require_both_classes().map_err(TrainError::from)?;
    let svm = DualSvm::longitudinal(ds);
    let labels = ds.labels();
    let observed = svm
        .weights(&svm.observation_labels(&labels), &opts.train)?
        .ok_or(TrainError::DegenerateSolution { v_norm: 0.0 })?;

    let one = |k: usize| -> Result<Option<Vec<T>>, TrainError> {
        let perm = permuted_labels(&labels, opts.seed, k);
        match svm.weights(&svm.observation_labels(&perm), &opts.train) {
            Err(TrainError::DegenerateSolution { .. }) => Ok(None),
            other => other,
        }
    };
    let run = || -> Result<Vec<Option<Vec<T>>>, TrainError> {
        (1..=opts.permutations).into_par_iter().map(one).collect()
    };
    let fits = match opts.jobs {
        None => run()?,
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| StatsError::ThreadPool(e.to_string()))?
            .install(run)?,
    };

    let p = ds.p();
    let mut exceed = vec![0usize; p];
    let mut degenerate = 0;
    for fit in &fits {
        match fit {
            None => {
                degenerate += 1;
                for (j, e) in exceed.iter_mut().enumerate() {
                    if observed[j] == T::zero() {
                        *e += 1;
                    }
                }
            }
            Some(w) => {
                for j in 0..p {
                    if w[j].abs() >= observed[j].abs() {
                        exceed[j] += 1;
                    }
                }
            }
        }
    }
    let denom = T::of((opts.permutations + 1) as f64);
    let raw_p: Vec<T> = exceed.iter().map(|&e| T::of((e + 1) as f64) / denom).collect();
    let adjusted_p = bh_adjust(&raw_p)?;
    Ok(PermutationReport {
        raw_p,
        adjusted_p,
        permutations: opts.permutations,
        seed: opts.seed,
        observed_w: observed,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bh_examples() {
        assert_eq!(bh_adjust(&[1.0, 1.0, 1.0]).unwrap(), vec![1.0, 1.0, 1.0]);
        assert_eq!(bh_adjust(&[0.005, 1.0]).unwrap(), vec![0.01, 1.0]);
        let q: Vec<f64> = bh_adjust(&[0.01, 0.02, 0.03, 0.04]).unwrap();
        assert!(q.iter().all(|v| (v - 0.04).abs() < 1e-15));
        assert!(bh_adjust::<f64>(&[]).unwrap().is_empty());
        assert_eq!(
            bh_adjust(&[0.2, 1.5]),
            Err(StatsError::OutOfRange { index: 1, value: 1.5 })
        );
        assert!(bh_adjust(&[f64::NAN]).is_err());
    }

    #[test]
    fn sign_rank_all_positive_six() {
        let x = [2.0, 3.0, 5.0, 8.0, 13.0, 21.0];
        let y = [1.0, 1.5, 2.0, 3.0, 4.0, 5.0];
        let r = signed_rank_test(&x, &y).unwrap();
        assert_eq!(r.n_effective, 6);
        assert_eq!(r.statistic, 21.0);
        assert!((r.p_value - 1.0 / 64.0).abs() < 1e-15);
        assert!((r.p_two_sided - 2.0 / 64.0).abs() < 1e-15);
        assert!(r.exact);
    }

    #[test]
    fn sign_rank_rejects_degenerate_input() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!(matches!(signed_rank_test(&x, &x), Err(StatsError::TooFewPairs { nonzero: 0, .. })));
        assert!(matches!(
            signed_rank_test(&x[..4], &[0.0; 4]),
            Err(StatsError::TooFewPairs { .. })
        ));
        assert!(matches!(signed_rank_test(&x, &[0.0; 4]), Err(StatsError::LengthMismatch(5, 4))));
    }

    #[test]
    fn sign_rank_normal_branch() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin() + 0.3).collect();
        let y = vec![0.0; 40];
        let r = signed_rank_test(&x, &y).unwrap();
        assert!(!r.exact);
        assert!(r.p_value > 0.0 && r.p_value < 0.05);
        let back = signed_rank_test(&y, &x).unwrap();
        assert!(back.p_value > 0.95);
    }

    #[test]
    fn average_ranks_share_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn ks_statistic_of_grid() {
        let u: Vec<f64> = (0..10).map(|i| (i as f64 + 0.5) / 10.0).collect();
        assert!((ks_uniform_statistic(&u) - 0.05).abs() < 1e-12);
        assert!((ks_uniform_statistic(&[1.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn label_permutations_preserve_class_sizes() {
        let labels = [Label::Positive, Label::Positive, Label::Negative, Label::Negative, Label::Negative];
        for k in 0..20 {
            let perm = permuted_labels(&labels, 5, k);
            assert_eq!(perm.iter().filter(|l| **l == Label::Positive).count(), 2);
        }
        assert_eq!(permuted_labels(&labels, 5, 3), permuted_labels(&labels, 5, 3));
    }
}
