mod common;

use lsvm::baselines::{
    benchmark_with, common_grid, evaluate_accuracy, stack, stack_subject, train_lda, train_stacked_svm, unstack,
    BaselineError, BenchmarkConfig, Method, StackedVector,
};
use lsvm::model::{Label, Observation, Subject};
use lsvm::synth::{SimpleCaseConfig, SynthConfig};
use lsvm::Dataset;
use proptest::prelude::*;
use rand::Rng;

fn regular_dataset(seed: u64, m: usize, p: usize, n: usize) -> Dataset {
    let mut rng = common::rng(seed);
    let subjects = (0..m)
        .map(|i| {
            let label = if i % 2 == 0 { Label::Positive } else { Label::Negative };
            let obs = (0..n)
                .map(|t| {
                    let x = (0..p).map(|k| common::normal(&mut rng) + if k == 0 { label.sign::<f64>() } else { 0.0 });
                    Observation::new(t as f64, x.collect())
                })
                .collect();
            Subject::new(format!("s{i}"), label, obs)
        })
        .collect();
    Dataset::new(subjects).unwrap()
}

fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Shrunk-covariance discriminant direction built from explicit sums.
fn lda_oracle(ds: &Dataset, gamma: f64) -> Vec<f64> {
    let rows: Vec<(Vec<f64>, Label)> = ds.subjects().iter().map(|s| (stack_subject(s).x, s.label)).collect();
    let dim = rows[0].0.len();
    let mean = |l: Label| {
        let members: Vec<&Vec<f64>> = rows.iter().filter(|r| r.1 == l).map(|r| &r.0).collect();
        (0..dim).map(|j| members.iter().map(|v| v[j]).sum::<f64>() / members.len() as f64).collect::<Vec<_>>()
    };
    let (mp, mn) = (mean(Label::Positive), mean(Label::Negative));
    let dof = (rows.len() - 2) as f64;
    let mut s = vec![vec![0.0; dim]; dim];
    for (x, l) in &rows {
        let mu = if *l == Label::Positive { &mp } else { &mn };
        for i in 0..dim {
            for j in 0..dim {
                s[i][j] += (x[i] - mu[i]) * (x[j] - mu[j]) / dof;
            }
        }
    }
    let avg_var = (0..dim).map(|i| s[i][i]).sum::<f64>() / dim as f64;
    let shrunk: Vec<Vec<f64>> = (0..dim)
        .map(|i| (0..dim).map(|j| (1.0 - gamma) * s[i][j] + if i == j { gamma * avg_var } else { 0.0 }).collect())
        .collect();
    let w = solve_dense(shrunk, mp.iter().zip(&mn).map(|(a, b)| a - b).collect());
    let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    w.iter().map(|x| x / n).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stack_then_unstack_is_identity(seed in any::<u64>(), m in 2usize..6, p in 1usize..4, n in 1usize..5) {
        let ds = regular_dataset(seed, m, p, n);
        let grid = common_grid(&ds).unwrap();
        for (s, (v, label)) in ds.subjects().iter().zip(stack(&ds).unwrap()) {
            prop_assert_eq!(v.x.len(), n * p);
            prop_assert_eq!(label, s.label);
            prop_assert_eq!(&unstack(&v, &grid).unwrap(), &s.observations);
        }
    }

    #[test]
    fn lda_matches_explicit_solve(seed in any::<u64>(), gamma in 0.05f64..=1.0, wide in any::<bool>()) {
        // wide problems exercise the low-rank path
        let ds = if wide { regular_dataset(seed, 6, 4, 3) } else { regular_dataset(seed, 12, 2, 2) };
        let clf = train_lda(&ds, gamma).unwrap();
        for (a, b) in clf.w.iter().zip(lda_oracle(&ds, gamma)) {
            prop_assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn lda_is_rotation_equivariant(seed in any::<u64>(), angle in 0.0f64..std::f64::consts::TAU) {
        let ds = regular_dataset(seed, 8, 2, 3);
        let (s, c) = angle.sin_cos();
        let rotated = Dataset::new(
            ds.subjects()
                .iter()
                .map(|sub| {
                    let obs = sub
                        .observations
                        .iter()
                        .map(|o| Observation::new(o.time, vec![c * o.features[0] - s * o.features[1], s * o.features[0] + c * o.features[1]]))
                        .collect();
                    Subject::new(sub.id.clone(), sub.label, obs)
                })
                .collect(),
        )
        .unwrap();
        let a = train_lda(&ds, 1.0).unwrap();
        let b = train_lda(&rotated, 1.0).unwrap();
        for t in 0..3 {
            let (w0, w1) = (a.w[2 * t], a.w[2 * t + 1]);
            prop_assert!((c * w0 - s * w1 - b.w[2 * t]).abs() <= 1e-9);
            prop_assert!((s * w0 + c * w1 - b.w[2 * t + 1]).abs() <= 1e-9);
        }
        prop_assert!((a.b - b.b).abs() <= 1e-9);
    }
}

fn duplicated(ds: &Dataset) -> Dataset {
    let mut subjects = ds.subjects().to_vec();
    for s in ds.subjects() {
        subjects.push(Subject::new(format!("{}-copy", s.id), s.label, s.observations.clone()));
    }
    Dataset::new(subjects).unwrap()
}

#[test]
fn duplicating_the_training_set_keeps_predictions() {
    let mut rng = common::rng(4);
    for seed in 0..10 {
        let ds = regular_dataset(seed, 8, 3, 2);
        let twice = duplicated(&ds);
        let probes: Vec<StackedVector<f64>> =
            (0..20).map(|_| StackedVector { x: (0..6).map(|_| rng.random_range(-3.0..3.0)).collect() }).collect();

        // doubling every point at half the box bound leaves the dual unchanged
        let a = train_stacked_svm(&ds, 1.0).unwrap();
        let b = train_stacked_svm(&twice, 0.5).unwrap();
        let c = train_lda(&ds, 1.0).unwrap();
        let d = train_lda(&twice, 1.0).unwrap();
        for x in &probes {
            let (va, vb) = (a.decision_value(x).unwrap(), b.decision_value(x).unwrap());
            if va.abs() > 1e-4 {
                assert_eq!(a.predict(x).unwrap(), b.predict(x).unwrap(), "svm {va} vs {vb}");
            }
            assert_eq!(c.predict(x).unwrap(), d.predict(x).unwrap());
        }
    }
}

#[test]
fn irregular_sampling_is_rejected() {
    let ds = common::random_dataset(&mut common::rng(1), 6, 2, 4);
    let regular = ds.subjects().iter().all(|s| s.times().eq(ds.subjects()[0].times()));
    if !regular {
        assert!(matches!(train_lda(&ds, 0.5), Err(BaselineError::IrregularSampling { .. })));
    }
    let ds = regular_dataset(0, 4, 2, 2);
    assert!(matches!(train_lda(&ds, 1.5), Err(BaselineError::InvalidShrinkage(_))));
}

#[test]
fn separable_training_set_is_fit_exactly() {
    let ds = regular_dataset(3, 10, 1, 1);
    let shifted = Dataset::new(
        ds.subjects()
            .iter()
            .map(|s| {
                let x = s.label.sign::<f64>() * 5.0 + 0.1 * s.observations[0].features[0];
                Subject::new(s.id.clone(), s.label, vec![Observation::new(0.0, vec![x])])
            })
            .collect(),
    )
    .unwrap();
    let svm = train_stacked_svm(&shifted, 10.0).unwrap();
    assert_eq!(evaluate_accuracy(&svm, &shifted).unwrap(), 1.0);
    assert_eq!(evaluate_accuracy(&train_lda(&shifted, 0.5).unwrap(), &shifted).unwrap(), 1.0);
}

#[test]
fn benchmark_trials_are_reproducible() {
    let generator = SynthConfig::Simple(SimpleCaseConfig::new(4, 3, 3, 0.5, 9));
    let mut cfg = BenchmarkConfig::new(vec![Method::Lsvm, Method::StackedSvm, Method::Lda], 5, generator);
    let a = benchmark_with(&cfg).unwrap();
    cfg.jobs = Some(2);
    let b = benchmark_with(&cfg).unwrap();
    assert_eq!(a.accuracies, b.accuracies);
    assert_eq!(a.accuracies.len(), 5);
    assert_eq!(a.pairwise.len(), 3);
    assert_ne!(cfg.trial_seeds(0), cfg.trial_seeds(1));
    for row in &a.accuracies {
        assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
    }
    cfg.trials = 4;
    assert!(matches!(benchmark_with(&cfg), Err(BaselineError::TooFewTrials(4))));
}
