mod common;

use lsvm::linalg::Matrix;
use lsvm::qp::{kkt_residuals, solve_qp, QpProblem, QpStatus};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-8;

#[test]
fn no_random_feasible_point_beats_the_solver() {
    let excess = common::qp_spot_check(3, 100, 1000, TOL);
    assert!(excess <= TOL, "a feasible point improved on the optimum by {excess}");
}

/// Box QP with one equality row through a strictly interior point.
fn interior_problem(seed: u64) -> QpProblem<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = common::random_box_qp(&mut rng);
    let n = base.dim();
    let x0: Vec<f64> = base
        .lower
        .iter()
        .zip(&base.upper)
        .map(|(l, u)| l + (u - l) * rng.random_range(0.2..0.8))
        .collect();
    let a: Vec<f64> = (0..n).map(|_| common::normal(&mut rng)).collect();
    let b = a.iter().zip(&x0).map(|(p, q)| p * q).sum();
    base.with_equalities(Matrix::from_vec(1, n, a).unwrap(), vec![b])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn strong_duality(seed in any::<u64>()) {
        let qp = interior_problem(seed);
        let sol = solve_qp(&qp, TOL, 200).unwrap();
        prop_assert_eq!(sol.status, QpStatus::Optimal);
        let gap = (sol.dual_objective(&qp) - sol.objective).abs();
        prop_assert!(gap <= 10.0 * TOL * (1.0 + sol.objective.abs()), "gap {gap}");
    }

    #[test]
    fn returned_point_is_feasible(seed in any::<u64>()) {
        let qp = interior_problem(seed);
        let sol = solve_qp(&qp, TOL, 200).unwrap();
        for ((x, l), u) in sol.x.iter().zip(&qp.lower).zip(&qp.upper) {
            prop_assert!(*x >= l - 10.0 * TOL && *x <= u + 10.0 * TOL);
        }
        let k = kkt_residuals(&qp, &sol).unwrap();
        prop_assert!(k.max() <= TOL * 10.0, "{k:?}");
    }

    #[test]
    fn reruns_are_bitwise_identical(seed in any::<u64>()) {
        let qp = interior_problem(seed);
        let a = solve_qp(&qp, TOL, 200).unwrap();
        let b = solve_qp(&qp, TOL, 200).unwrap();
        prop_assert_eq!(a.x, b.x);
        prop_assert_eq!(a.iterations, b.iterations);
    }
}

#[test]
fn factored_hessian_gives_the_same_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let n = rng.random_range(3..12);
        let k = rng.random_range(1..n);
        let f = Matrix::from_fn(n, k, |_, _| common::normal(&mut rng));
        let c: Vec<f64> = (0..n).map(|_| -1.0).collect();
        let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let bounds = (vec![0.0; n], vec![1.0; n]);
        let dense = QpProblem::new(f.gram_rows(), c.clone())
            .with_equalities(Matrix::from_vec(1, n, y.clone()).unwrap(), vec![0.0])
            .with_bounds(bounds.0.clone(), bounds.1.clone());
        let factored = QpProblem::factored(f, c)
            .with_equalities(Matrix::from_vec(1, n, y).unwrap(), vec![0.0])
            .with_bounds(bounds.0, bounds.1);
        let a = solve_qp(&dense, TOL, 200).unwrap();
        let b = solve_qp(&factored, TOL, 200).unwrap();
        assert!((a.objective - b.objective).abs() <= 1e-7 * (1.0 + a.objective.abs()));
    }
}
