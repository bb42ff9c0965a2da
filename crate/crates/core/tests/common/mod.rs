//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use lsvm::linalg::Matrix;
use lsvm::model::{Label, LongitudinalDataset, Observation, Subject};
use lsvm::qp::{solve_qp, QpProblem};
use lsvm::synth::EllipsoidConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Random dataset with both classes, `2 ≤ m ≤ max_m` subjects, `1 ≤ p ≤ max_p`
/// features and `1 ≤ nᵢ ≤ max_n` observations at sorted integer-ish times.
pub fn random_dataset(rng: &mut impl Rng, max_m: usize, max_p: usize, max_n: usize) -> LongitudinalDataset<f64> {
    let m = rng.random_range(2..=max_m);
    let p = rng.random_range(1..=max_p);
    let shift = rng.random_range(0.0..1.5);
    let subjects = (0..m)
        .map(|i| {
            let label = if i % 2 == 0 { Label::Positive } else { Label::Negative };
            let n = rng.random_range(1..=max_n);
            let mut times: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
            times.sort_by(f64::total_cmp);
            let obs = times
                .into_iter()
                .map(|t| {
                    let x = (0..p)
                        .map(|k| normal(rng) + if k == 0 { label.sign::<f64>() * shift * (1.0 + 0.2 * t) } else { 0.0 })
                        .collect();
                    Observation::new(t, x)
                })
                .collect();
            Subject::new(format!("s{i}"), label, obs)
        })
        .collect();
    LongitudinalDataset::new(subjects).expect("valid random dataset")
}

/// One observation per subject, all at the same time, linearly separable in 2-D.
pub fn separable_single_time(rng: &mut impl Rng, m: usize) -> LongitudinalDataset<f64> {
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (u0, u1) = (angle.cos(), angle.sin());
    let offset = rng.random_range(-1.0..1.0);
    let mut subjects = Vec::new();
    let mut i = 0;
    while subjects.len() < m {
        let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let s = u0 * x[0] + u1 * x[1] - offset;
        if s.abs() < 0.3 {
            continue;
        }
        // alternate classes so both are present
        let want = if i % 2 == 0 { s > 0.0 } else { s < 0.0 };
        if !want {
            continue;
        }
        let label = if s > 0.0 { Label::Positive } else { Label::Negative };
        subjects.push(Subject::new(format!("s{i}"), label, vec![Observation::new(1.0, x.to_vec())]));
        i += 1;
    }
    LongitudinalDataset::new(subjects).expect("valid separable dataset")
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Step-up BH written from the definition: `qᵢ = min(1, min_{pⱼ ≥ pᵢ} m·pⱼ / #{l : pₗ ≤ pⱼ})`.
pub fn bh_oracle(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    p.iter()
        .map(|&pi| {
            let mut best = 1.0f64;
            for &pj in p {
                if pj >= pi {
                    let rank = p.iter().filter(|&&pl| pl <= pj).count();
                    best = best.min(m as f64 * pj / rank as f64);
                }
            }
            best
        })
        .collect()
}

/// Twice the average rank of each `|d|`, as integers.
fn doubled_ranks(d: &[f64]) -> Vec<u64> {
    d.iter()
        .map(|x| {
            let below = d.iter().filter(|y| y.abs() < x.abs()).count() as u64;
            let equal = d.iter().filter(|y| y.abs() == x.abs()).count() as u64;
            2 * below + equal + 1
        })
        .collect()
}

/// `P(W+ ≥ observed)` by visiting all `2ⁿ` sign patterns of the non-zero differences.
pub fn sign_rank_enumeration(x: &[f64], y: &[f64]) -> f64 {
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|v| *v != 0.0).collect();
    let ranks = doubled_ranks(&d);
    let observed: u64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let n = d.len();
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let w: u64 = (0..n).filter(|k| mask >> k & 1 == 1).map(|k| ranks[k]).sum();
        if w >= observed {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}

/// Random convex QP `min ½xᵀBBᵀx + cᵀx` over a random box.
pub fn random_box_qp(rng: &mut impl Rng) -> QpProblem<f64> {
    let n = rng.random_range(1..=10);
    let k = rng.random_range(1..=n);
    let b = Matrix::from_fn(n, k, |_, _| normal(rng));
    let c = (0..n).map(|_| 3.0 * normal(rng)).collect();
    let lower: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..0.5)).collect();
    let upper = lower.iter().map(|l| l + rng.random_range(0.1..3.0)).collect();
    QpProblem::new(b.gram_rows(), c).with_bounds(lower, upper)
}

/// Largest amount by which the solver's objective exceeds that of a random
/// feasible point, over `problems` problems and `points` points each.
pub fn qp_spot_check(seed: u64, problems: usize, points: usize, tol: f64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..problems {
        let qp = random_box_qp(&mut rng);
        let sol = solve_qp(&qp, tol, 200).expect("box QP solves");
        let best = qp.objective(&sol.x);
        for _ in 0..points {
            let x: Vec<f64> = qp
                .lower
                .iter()
                .zip(&qp.upper)
                .map(|(&l, &u)| rng.random_range(l..=u))
                .collect();
            worst = worst.max(best - qp.objective(&x));
        }
    }
    worst
}

/// Voxels covered by a selection-line artefact at some generation.
pub fn ever_inside_selection(cfg: &EllipsoidConfig) -> Vec<bool> {
    let mut ever = vec![false; cfg.voxels()];
    let base = cfg.render(0.0, 0.0);
    for line in 0..cfg.lines_per_class {
        for (sx, sz) in cfg.axis_trajectory(line, Label::Positive) {
            for (k, (v, b)) in cfg.render(sx, sz).iter().zip(&base).enumerate() {
                if v != b {
                    ever[k] = true;
                }
            }
        }
    }
    ever
}
