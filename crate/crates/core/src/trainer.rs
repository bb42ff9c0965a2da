//! Training through the dual quadratic program.
//!
//! Observations of all subjects are flattened in `(subject, observation)`
//! order. With `r = (i, j)` the dual reads
//!
//! ```txt
//!     maximize   Σᵣ αᵣ − ½ Σᵣₛ αᵣ αₛ yᵣ yₛ ⟨Xᵣ, Xₛ⟩
//!     subject to Σᵣ αᵣ yᵣ = 0
//!                Σᵣ αᵣ (t̄ − tᵣ) = 0
//!                0 ≤ αᵣ ≤ C
//! ```
//!
//! and the primal quantities follow as `v = Σ αᵣ yᵣ Xᵣ`, with `(a', b')`
//! read off the tight constraints `yᵣ(v·Xᵣ + b') = 1 + a'(tᵣ − t̄)`.

use thiserror::Error;

use crate::linalg::Matrix;
use crate::model::{
    DatasetError, DualArtifacts, Label, LongitudinalDataset, TrainedClassifier, TrainingMeta,
};
use crate::qp::{self, Hessian, QpError, QpProblem, QpSolution, QpStatus};
use crate::scalar::{axpy, dot, norm2, Scalar};

/// `‖v‖₂` at or below this value means no usable direction was found.
pub const DEGENERATE_NORM: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("C must be positive (use infinity for the hard-margin problem)")]
    InvalidC,
    #[error(transparent)]
    Solver(#[from] QpError),
    #[error("dual solver stopped with status {status:?} (KKT residual {residual:e})")]
    NotConverged { status: QpStatus, residual: f64 },
    #[error("degenerate solution: ‖v‖ = {v_norm:e}; no direction achieves a positive average margin")]
    DegenerateSolution { v_norm: f64 },
    #[error("no support vectors to recover the offsets from")]
    NoSupportVectors,
    #[error("multiplier vector has length {found}, expected {expected}")]
    LengthMismatch { expected: usize, found: usize },
}

/// Flat index over all observations plus their labels and times.
#[derive(Debug, Clone, PartialEq)]
pub struct GramIndex<T> {
    entries: Vec<(usize, usize)>,
    labels: Vec<T>,
    times: Vec<T>,
    t_bar: T,
}

impl<T: Scalar> GramIndex<T> {
    pub fn new(ds: &LongitudinalDataset<T>) -> Self {
        let mut entries = Vec::with_capacity(ds.total_obs());
        let mut labels = Vec::with_capacity(ds.total_obs());
        let mut times = Vec::with_capacity(ds.total_obs());
        for fo in ds.flat_observations() {
            entries.push((fo.subject, fo.index));
            labels.push(fo.label.sign());
            times.push(fo.observation.time);
        }
        let t_bar = times.iter().copied().sum::<T>() / T::of(times.len() as f64);
        Self {
            entries,
            labels,
            times,
            t_bar,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(subject, observation)` of flat index `r`.
    pub fn pair(&self, r: usize) -> (usize, usize) {
        self.entries[r]
    }

    pub fn flat_index(&self, subject: usize, observation: usize) -> Option<usize> {
        self.entries.binary_search(&(subject, observation)).ok()
    }

    pub fn labels(&self) -> &[T] {
        &self.labels
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn t_bar(&self) -> T {
        self.t_bar
    }

    /// Coefficients `t̄ − tᵣ` of the time-balance constraint.
    pub fn time_balance_row(&self) -> Vec<T> {
        self.times.iter().map(|&t| self.t_bar - t).collect()
    }

    fn with_labels(&self, labels: Vec<T>) -> Self {
        Self {
            labels,
            ..self.clone()
        }
    }
}

/// Inner products of all flattened observations.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix<T> {
    pub k: Matrix<T>,
}

/// Flattened observations as rows of an `N × p` matrix.
pub fn design_matrix<T: Scalar>(ds: &LongitudinalDataset<T>) -> Matrix<T> {
    let mut data = Vec::with_capacity(ds.total_obs() * ds.p());
    for fo in ds.flat_observations() {
        data.extend_from_slice(&fo.observation.features);
    }
    Matrix::from_vec(ds.total_obs(), ds.p(), data).expect("flattened observations fill the design matrix")
}

pub fn build_gram<T: Scalar>(ds: &LongitudinalDataset<T>) -> (GramIndex<T>, GramMatrix<T>) {
    (
        GramIndex::new(ds),
        GramMatrix {
            k: design_matrix(ds).gram_rows(),
        },
    )
}

/// Dual in minimization form: `Q = diag(y) K diag(y)`, `c = −1`, equality rows
/// `y` and `t̄ − t`, bounds `[0, C]` (`C = ∞` gives the hard-margin problem).
pub fn assemble_dual<T: Scalar>(gi: &GramIndex<T>, k: &GramMatrix<T>, c: T) -> QpProblem<T> {
    let n = gi.len();
    let y = &gi.labels;
    let q = Matrix::from_fn(n, n, |r, s| y[r] * y[s] * k.k[(r, s)]);
    dual_constraints(QpProblem::new(q, vec![-T::one(); n]), gi, c)
}

fn dual_constraints<T: Scalar>(p: QpProblem<T>, gi: &GramIndex<T>, c: T) -> QpProblem<T> {
    let n = gi.len();
    let a = Matrix::from_rows(&[gi.labels.clone(), gi.time_balance_row()], n).expect("two rows of length N");
    p.with_equalities(a, vec![T::zero(); 2])
        .with_bounds(vec![T::zero(); n], vec![c; n])
}

/// Multipliers counted as support vectors, and the subset strictly inside the box.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution<T> {
    pub alphas: Vec<T>,
    pub support: Vec<usize>,
    pub free_support: Vec<usize>,
    /// Value of the maximized dual objective.
    pub objective: T,
}

/// Threshold above which a multiplier is a support vector: `max(1e-8, 1e-6·C)`.
///
/// For the hard-margin problem the box has no upper end, so the scale is
/// taken from the largest multiplier instead.
pub fn support_threshold<T: Scalar>(c: T, alphas: &[T]) -> T {
    let scale = if c.is_finite() {
        c
    } else {
        alphas.iter().fold(T::zero(), |m, &a| m.max(a))
    };
    T::of(1e-8).max(T::of(1e-6) * scale)
}

impl<T: Scalar> DualSolution<T> {
    pub fn classify(alphas: Vec<T>, c: T, threshold: T, objective: T) -> Self {
        let support: Vec<usize> = (0..alphas.len()).filter(|&r| alphas[r] > threshold).collect();
        let free_support = support
            .iter()
            .copied()
            .filter(|&r| !c.is_finite() || alphas[r] < c - threshold)
            .collect();
        Self {
            alphas,
            support,
            free_support,
            objective,
        }
    }
}

/// `v = Σᵣ αᵣ yᵣ Xᵣ`.
pub fn recover_primal<T: Scalar>(
    ds: &LongitudinalDataset<T>,
    gi: &GramIndex<T>,
    alphas: &[T],
) -> Result<Vec<T>, TrainError> {
    if alphas.len() != gi.len() {
        return Err(TrainError::LengthMismatch {
            expected: gi.len(),
            found: alphas.len(),
        });
    }
    let mut v = vec![T::zero(); ds.p()];
    for (r, fo) in ds.flat_observations().enumerate() {
        let coef = alphas[r] * gi.labels[r];
        if coef != T::zero() {
            axpy(coef, &fo.observation.features, &mut v);
        }
    }
    Ok(v)
}

/// Least-squares `(a', b')` over the free support rows of
/// `yᵣ(v·Xᵣ + b') = 1 + a'(tᵣ − t̄)`.
///
/// A multiplier counts as support above `tol` and as free below `C − tol`.
/// Falls back to all support rows when none is free. If the selected rows
/// leave `a'` undetermined (every `tᵣ = t̄`, or one common `yᵣ(tᵣ − t̄)`), `a' = 0`.
pub fn recover_offsets<T: Scalar>(
    ds: &LongitudinalDataset<T>,
    gi: &GramIndex<T>,
    alphas: &[T],
    v: &[T],
    c: T,
    tol: T,
) -> Result<(T, T), TrainError> {
    let dual = DualSolution::classify(alphas.to_vec(), c, tol, T::zero());
    let rows = if dual.free_support.is_empty() {
        &dual.support
    } else {
        &dual.free_support
    };
    if rows.is_empty() {
        return Err(TrainError::NoSupportVectors);
    }
    let x = design_matrix(ds);
    Ok(offsets_least_squares(&x, gi, v, rows).unwrap_or_else(|b_prime| (T::zero(), b_prime)))
}

/// `Ok((a', b'))`, or `Err(b')` with `a' = 0` when the rows leave `a'` undetermined.
fn offsets_least_squares<T: Scalar>(x: &Matrix<T>, gi: &GramIndex<T>, v: &[T], rows: &[usize]) -> Result<(T, T), T> {
    // b' − yᵣ(tᵣ − t̄)·a' = yᵣ − v·Xᵣ   (multiplied through by yᵣ)
    let t_tol = T::of(1e-12) * (T::one() + gi.t_bar.abs());
    let mut s_uu = T::zero();
    let mut s_u1 = T::zero();
    let mut s_ur = T::zero();
    let mut s_r = T::zero();
    let mut informative = false;
    for &r in rows {
        let y = gi.labels[r];
        let dt = gi.times[r] - gi.t_bar;
        if dt.abs() > t_tol {
            informative = true;
        }
        let u = -y * dt;
        let rhs = y - dot(x.row(r), v);
        s_uu = s_uu + u * u;
        s_u1 = s_u1 + u;
        s_ur = s_ur + u * rhs;
        s_r = s_r + rhs;
    }
    let m = T::of(rows.len() as f64);
    if informative {
        let det = m * s_uu - s_u1 * s_u1;
        if det > T::of(1e-12) * m * s_uu {
            let a_prime = (m * s_ur - s_u1 * s_r) / det;
            let b_prime = (s_r - s_u1 * a_prime) / m;
            return Ok((a_prime, b_prime));
        }
    }
    Err(s_r / m)
}

/// `(w, a, b, d)` of the margin form.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginForm<T> {
    pub w: Vec<T>,
    pub a: T,
    pub b: T,
    pub d: T,
    pub v_norm: T,
}

/// `w = v/‖v‖`, `a = a'/‖v‖`, `b = b'/‖v‖`, `d = (1 − a'·t̄)/‖v‖`.
pub fn normalize_to_margin_form<T: Scalar>(
    v: &[T],
    a_prime: T,
    b_prime: T,
    t_bar: T,
) -> Result<MarginForm<T>, TrainError> {
    let v_norm = norm2(v);
    if !(v_norm > T::of(DEGENERATE_NORM)) {
        return Err(TrainError::DegenerateSolution {
            v_norm: v_norm.as_f64(),
        });
    }
    Ok(MarginForm {
        w: v.iter().map(|&x| x / v_norm).collect(),
        a: a_prime / v_norm,
        b: b_prime / v_norm,
        d: (T::one() - a_prime * t_bar) / v_norm,
        v_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions<T> {
    /// Box bound on the multipliers; `T::infinity()` for the hard-margin problem.
    pub c: T,
    pub tol: T,
    pub max_iter: usize,
    /// Recorded in the model metadata only.
    pub seed: Option<u64>,
}

impl<T: Scalar> TrainOptions<T> {
    pub fn new(c: T) -> Self {
        Self {
            c,
            tol: T::of(qp::DEFAULT_TOL),
            max_iter: qp::DEFAULT_MAX_ITER,
            seed: None,
        }
    }

    pub fn with_tol(mut self, tol: T) -> Self {
        self.tol = tol;
        self
    }
}

/// Trains with default solver settings.
pub fn train<T: Scalar>(ds: &LongitudinalDataset<T>, c: T, tol: T) -> Result<TrainedClassifier<T>, TrainError> {
    train_with(ds, &TrainOptions::new(c).with_tol(tol))
}

pub fn train_with<T: Scalar>(
    ds: &LongitudinalDataset<T>,
    opts: &TrainOptions<T>,
) -> Result<TrainedClassifier<T>, TrainError> {
    ds.require_both_classes()?;
    DualSvm::longitudinal(ds).fit(ds, &GramIndex::new(ds).labels, opts)
}

/// Shared dual machinery for the longitudinal machine and the stacked SVM.
///
/// Holds the design matrix (and the Gram matrix when it is cheaper than the
/// factor form), so repeated fits with different labels reuse them.
pub(crate) struct DualSvm<T> {
    x: Matrix<T>,
    gram: Option<Matrix<T>>,
    index: GramIndex<T>,
    /// Whether the time-balance row takes part; the classical SVM drops it.
    time_balance: bool,
}

pub(crate) struct DualFit<T> {
    pub alphas: Vec<T>,
    pub v: Vec<T>,
    pub a_prime: T,
    pub b_prime: T,
    pub dual: DualSolution<T>,
    pub solution: QpSolution<T>,
}

impl<T: Scalar> DualSvm<T> {
    pub fn longitudinal(ds: &LongitudinalDataset<T>) -> Self {
        Self::from_parts(design_matrix(ds), GramIndex::new(ds), true)
    }

    /// Classical soft-margin SVM on the rows of `x`.
    pub fn classical(x: Matrix<T>, labels: Vec<T>) -> Self {
        let n = x.rows();
        let index = GramIndex {
            entries: (0..n).map(|r| (r, 0)).collect(),
            labels,
            times: vec![T::zero(); n],
            t_bar: T::zero(),
        };
        Self::from_parts(x, index, false)
    }

    fn from_parts(x: Matrix<T>, index: GramIndex<T>, time_balance: bool) -> Self {
        let gram = (x.cols() >= x.rows()).then(|| x.gram_rows());
        Self {
            x,
            gram,
            index,
            time_balance,
        }
    }

    fn problem(&self, labels: &[T], c: T) -> QpProblem<T> {
        let n = self.x.rows();
        let hessian = match &self.gram {
            Some(k) => Hessian::Dense(Matrix::from_fn(n, n, |r, s| labels[r] * labels[s] * k[(r, s)])),
            None => {
                let mut f = self.x.clone();
                for (r, &y) in labels.iter().enumerate() {
                    if y < T::zero() {
                        f.row_mut(r).iter_mut().for_each(|v| *v = -*v);
                    }
                }
                Hessian::Factored(f)
            }
        };
        let mut rows = vec![labels.to_vec()];
        if self.time_balance {
            rows.push(self.index.time_balance_row());
        }
        let k = rows.len();
        QpProblem::with_hessian(hessian, vec![-T::one(); n])
            .with_equalities(Matrix::from_rows(&rows, n).expect("constraint rows of length N"), vec![T::zero(); k])
            .with_bounds(vec![T::zero(); n], vec![c; n])
    }

    /// Solves the dual for the given per-observation labels (±1).
    pub fn solve(&self, labels: &[T], opts: &TrainOptions<T>) -> Result<DualFit<T>, TrainError> {
        if !(opts.c > T::zero()) {
            return Err(TrainError::InvalidC);
        }
        let problem = self.problem(labels, opts.c);
        let solution = qp::solve_qp(&problem, opts.tol, opts.max_iter)?;
        if solution.status != QpStatus::Optimal {
            return Err(TrainError::NotConverged {
                status: solution.status,
                residual: solution.kkt.max().as_f64(),
            });
        }
        let alphas = solution.x.clone();
        let index = self.index.with_labels(labels.to_vec());
        let mut v = vec![T::zero(); self.x.cols()];
        for (r, (&a, &y)) in alphas.iter().zip(labels).enumerate() {
            if a != T::zero() {
                axpy(a * y, self.x.row(r), &mut v);
            }
        }
        let threshold = support_threshold(opts.c, &alphas);
        let mut dual = DualSolution::classify(alphas.clone(), opts.c, threshold, -solution.objective);
        // an iterate sits a distance of order μ/multiplier from an active bound,
        // so a row is only free if it is farther from each bound than that bound's multiplier
        dual.free_support.retain(|&r| {
            alphas[r] > solution.lower_duals[r] && (!opts.c.is_finite() || opts.c - alphas[r] > solution.upper_duals[r])
        });
        let least_squares = if dual.free_support.is_empty() {
            None
        } else {
            match offsets_least_squares(&self.x, &index, &v, &dual.free_support) {
                Ok(offsets) => Some(offsets),
                Err(b_prime) if !self.time_balance => Some((T::zero(), b_prime)),
                Err(_) => None,
            }
        };
        // Too few tight rows to pin (a', b') down; the equality multipliers are exactly (b', a').
        let (a_prime, b_prime) = least_squares.unwrap_or_else(|| {
            let a_prime = if self.time_balance { solution.eq_duals[1] } else { T::zero() };
            (a_prime, solution.eq_duals[0])
        });
        Ok(DualFit {
            alphas,
            v,
            a_prime,
            b_prime,
            dual,
            solution,
        })
    }

    pub fn fit(
        &self,
        ds: &LongitudinalDataset<T>,
        labels: &[T],
        opts: &TrainOptions<T>,
    ) -> Result<TrainedClassifier<T>, TrainError> {
        let fit = self.solve(labels, opts)?;
        let t_bar = self.index.t_bar;
        let form = normalize_to_margin_form(&fit.v, fit.a_prime, fit.b_prime, t_bar)?;
        let label_balance = dot(&fit.alphas, labels).abs();
        let time_balance = dot(&fit.alphas, &self.index.time_balance_row()).abs();
        debug_assert_eq!(ds.total_obs(), fit.alphas.len());
        Ok(TrainedClassifier {
            w: form.w,
            a: form.a,
            b: form.b,
            d: form.d,
            raw: DualArtifacts {
                v: fit.v,
                a_prime: fit.a_prime,
                b_prime: fit.b_prime,
                v_norm: form.v_norm,
                support: fit.dual.support.iter().map(|&r| self.index.pair(r)).collect(),
                alphas: fit.alphas,
                t_bar,
                c: opts.c,
            },
            meta: TrainingMeta {
                seed: opts.seed,
                tol: opts.tol.as_f64(),
                iterations: fit.solution.iterations,
                primal_residual: fit.solution.kkt.primal_residual.as_f64(),
                dual_residual: fit.solution.kkt.dual_residual.as_f64(),
                complementarity: fit.solution.kkt.complementarity.as_f64(),
                label_balance_residual: label_balance.as_f64(),
                time_balance_residual: time_balance.as_f64(),
            },
        })
    }

    /// Unit weight vector for `labels`, or `None` when the fit is degenerate.
    pub fn weights(&self, labels: &[T], opts: &TrainOptions<T>) -> Result<Option<Vec<T>>, TrainError> {
        let fit = self.solve(labels, opts)?;
        let n = norm2(&fit.v);
        if !(n > T::of(DEGENERATE_NORM)) {
            return Ok(None);
        }
        Ok(Some(fit.v.iter().map(|&x| x / n).collect()))
    }

    pub fn observation_labels(&self, subject_labels: &[Label]) -> Vec<T> {
        self.index
            .entries
            .iter()
            .map(|&(i, _)| subject_labels[i].sign())
            .collect()
    }
}

/// Solution of the primal soft-margin problem solved directly.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalReference<T> {
    pub objective: T,
    pub v: Vec<T>,
    pub a_prime: T,
    pub b_prime: T,
    pub slacks: Vec<T>,
}

/// Solves `min ½‖v‖² + C·Σξ` s.t. `yᵣ(v·Xᵣ + b') ≥ 1 + a'(tᵣ − t̄) − ξᵣ`, `ξ ≥ 0`
/// as a QP in `(v, a', b', ξ)`. Meant as an independent check on small problems.
pub fn train_primal_reference<T: Scalar>(
    ds: &LongitudinalDataset<T>,
    c: T,
    tol: T,
) -> Result<PrimalReference<T>, TrainError> {
    ds.require_both_classes()?;
    if !(c > T::zero()) {
        return Err(TrainError::InvalidC);
    }
    let gi = GramIndex::new(ds);
    let x = design_matrix(ds);
    let (n, p) = (gi.len(), ds.p());
    let soft = c.is_finite();
    let nvar = p + 2 + if soft { n } else { 0 };
    let (ia, ib) = (p, p + 1);

    let q = Matrix::from_fn(nvar, nvar, |i, j| if i == j && i < p { T::one() } else { T::zero() });
    let mut lin = vec![T::zero(); nvar];
    let mut g = Matrix::zeros(n, nvar);
    for r in 0..n {
        let y = gi.labels[r];
        let row = g.row_mut(r);
        for (k, &xv) in x.row(r).iter().enumerate() {
            row[k] = -y * xv;
        }
        row[ia] = gi.times[r] - gi.t_bar;
        row[ib] = -y;
        if soft {
            row[p + 2 + r] = -T::one();
        }
    }
    let mut lower = vec![T::neg_infinity(); nvar];
    if soft {
        for r in 0..n {
            lin[p + 2 + r] = c;
            lower[p + 2 + r] = T::zero();
        }
    }
    let problem = QpProblem::new(q, lin)
        .with_inequalities(g, vec![-T::one(); n])
        .with_bounds(lower, vec![T::infinity(); nvar]);
    let sol = qp::solve_qp(&problem, tol, qp::DEFAULT_MAX_ITER)?;
    if sol.status != QpStatus::Optimal {
        return Err(TrainError::NotConverged {
            status: sol.status,
            residual: sol.kkt.max().as_f64(),
        });
    }
    Ok(PrimalReference {
        objective: sol.objective,
        v: sol.x[..p].to_vec(),
        a_prime: sol.x[ia],
        b_prime: sol.x[ib],
        slacks: if soft { sol.x[p + 2..].to_vec() } else { vec![T::zero(); n] },
    })
}

/// Soft-margin primal objective `½‖v‖² + C·Σ max(0, 1 + a'(tᵣ − t̄) − yᵣ(v·Xᵣ + b'))`.
pub fn primal_objective<T: Scalar>(ds: &LongitudinalDataset<T>, v: &[T], a_prime: T, b_prime: T, c: T) -> T {
    let gi = GramIndex::new(ds);
    let mut hinge = T::zero();
    for (r, fo) in ds.flat_observations().enumerate() {
        let margin = gi.labels[r] * (dot(v, &fo.observation.features) + b_prime);
        let need = T::one() + a_prime * (gi.times[r] - gi.t_bar);
        hinge = hinge + (need - margin).max(T::zero());
    }
    T::of(0.5) * dot(v, v) + if c.is_finite() { c * hinge } else { T::zero() }
}
