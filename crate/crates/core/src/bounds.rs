//! Radius–margin bounds on the VC dimension.

use serde::{Deserialize, Serialize};

use crate::model::{LongitudinalDataset, TrainedClassifier};
use crate::scalar::{norm2, Scalar};

/// Largest observation norm `max ‖X_i(t_ij)‖₂`.
pub fn radius<T: Scalar>(ds: &LongitudinalDataset<T>) -> T {
    ds.flat_observations()
        .map(|fo| norm2(&fo.observation.features))
        .fold(T::zero(), |m, v| m.max(v))
}

fn capped_ceil(ratio: f64, m: usize) -> usize {
    let cap = m + 1;
    if !(ratio < cap as f64) {
        cap
    } else {
        (ratio.ceil() as usize).min(cap)
    }
}

/// `min(m+1, ⌈r²/d²⌉)`, or `m+1` when `d ≤ 0`.
pub fn vc_bound_pointwise(r: f64, d: f64, m: usize) -> usize {
    if !(d > 0.0) {
        return m + 1;
    }
    capped_ceil((r * r) / (d * d), m)
}

/// `min(m+1, ⌈n²r²/μ²⌉)`, or `m+1` when `μ ≤ 0`.
pub fn vc_bound_longitudinal(m: usize, n: usize, r: f64, mu: f64) -> usize {
    if !(mu > 0.0) {
        return m + 1;
    }
    let nr = n as f64 * r;
    capped_ceil((nr * nr) / (mu * mu), m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Number of subjects.
    pub m: usize,
    /// Time points per subject.
    pub n: usize,
    pub r: f64,
    /// Minimal average margin.
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundBranch {
    /// The sample-size cap `m + 1` is the active term.
    SampleSize,
    RadiusMargin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundDiagnostic {
    pub inputs: BoundInputs,
    pub bound: usize,
    pub branch: BoundBranch,
    /// Set when subjects were not observed on a common grid; `n` is then the largest count.
    pub heuristic: bool,
}

impl BoundInputs {
    pub fn diagnose(self) -> BoundDiagnostic {
        let bound = vc_bound_longitudinal(self.m, self.n, self.r, self.mu);
        let branch = if self.mu > 0.0 && bound < self.m + 1 {
            BoundBranch::RadiusMargin
        } else {
            BoundBranch::SampleSize
        };
        BoundDiagnostic {
            inputs: self,
            bound,
            branch,
            heuristic: false,
        }
    }
}

/// Whether every subject is observed at the same times.
pub fn is_regular<T: Scalar>(ds: &LongitudinalDataset<T>) -> bool {
    let first = &ds.subjects()[0];
    ds.subjects().iter().all(|s| s.times().eq(first.times()))
}

/// Bound for a trained classifier on its dataset; `μ` is the smallest
/// per-subject average margin.
pub fn diagnose<T: Scalar>(ds: &LongitudinalDataset<T>, model: &TrainedClassifier<T>) -> BoundDiagnostic {
    let margin = model.margin();
    let mu = ds
        .subjects()
        .iter()
        .map(|s| {
            let times: Vec<T> = s.times().collect();
            margin.average(&times).expect("validated subjects are non-empty").as_f64()
        })
        .fold(f64::INFINITY, f64::min);
    let n = ds.subjects().iter().map(|s| s.observations.len()).max().unwrap_or(0);
    let mut diag = BoundInputs {
        m: ds.len(),
        n,
        r: radius(ds).as_f64(),
        mu,
    }
    .diagnose();
    diag.heuristic = !is_regular(ds);
    diag
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_dataset, Label, Observation, Subject};

    #[test]
    fn pointwise_examples() {
        assert_eq!(vc_bound_pointwise(1.0, 10.0, 10), 1);
        assert_eq!(vc_bound_pointwise(5.0, 0.0, 7), 8);
        assert_eq!(vc_bound_pointwise(3.0, 1.0, 100), 9);
        assert_eq!(vc_bound_pointwise(3.0, -1.0, 4), 5);
    }

    #[test]
    fn longitudinal_examples() {
        assert_eq!(vc_bound_longitudinal(10, 1, 1.0, 10.0), 1);
        assert_eq!(vc_bound_longitudinal(10, 3, 1.0, -0.5), 11);
        assert_eq!(vc_bound_longitudinal(10, 3, 1.0, 0.0), 11);
        assert_eq!(vc_bound_longitudinal(5, 4, 2.0, 8.0), 1);
        assert_eq!(vc_bound_longitudinal(5, 4, 2.0, 1e-300), 6);
    }

    #[test]
    fn radius_examples() {
        let ds = validate_dataset(vec![Subject::new(
            "a",
            Label::Positive,
            vec![Observation::new(0.0, vec![3.0, 4.0])],
        )])
        .unwrap();
        assert_eq!(radius(&ds), 5.0);
        let ds = validate_dataset(vec![Subject::new(
            "a",
            Label::Positive,
            vec![Observation::new(0.0, vec![0.0, 0.0]), Observation::new(1.0, vec![0.0, 0.0])],
        )])
        .unwrap();
        assert_eq!(radius(&ds), 0.0);
    }

    #[test]
    fn branch_reporting() {
        let d = BoundInputs { m: 5, n: 4, r: 2.0, mu: 8.0 }.diagnose();
        assert_eq!((d.bound, d.branch), (1, BoundBranch::RadiusMargin));
        let d = BoundInputs { m: 5, n: 4, r: 2.0, mu: 0.1 }.diagnose();
        assert_eq!((d.bound, d.branch), (6, BoundBranch::SampleSize));
        let d = BoundInputs { m: 5, n: 4, r: 2.0, mu: -1.0 }.diagnose();
        assert_eq!(d.branch, BoundBranch::SampleSize);
    }
}
