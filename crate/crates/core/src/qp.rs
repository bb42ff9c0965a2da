//! Dense convex quadratic programming.
//!
//! ```txt
//!     minimize    ½ xᵀQx + cᵀx
//!     subject to  A x  = b
//!                 G x <= h
//!                 l <= x <= u        (entries of l, u may be infinite)
//! ```
//!
//! Solved with an infeasible-start primal–dual interior-point method using
//! Mehrotra's predictor–corrector. Each Newton system is reduced to the
//! normal matrix `M = Q + G̃ᵀ(Z/S)G̃` and a Schur complement on the
//! equality rows. When the Hessian is supplied as a factor `Q = F Fᵀ` with
//! fewer columns than rows, `M` is inverted through the Woodbury identity.

use std::cell::OnceCell;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Cholesky, Matrix};
use crate::scalar::{axpy, dot, max_abs, Scalar};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Hessian eigenvalues down to `-PSD_FLOOR·‖Q‖` are tolerated as rounding noise.
pub const PSD_FLOOR: f64 = 1e-8;

const STEP_FRACTION: f64 = 0.99;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("quadratic term is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("quadratic term is not positive semidefinite")]
    NotPsd,
    #[error("lower bound exceeds upper bound at index {0}")]
    InvalidBounds(usize),
    #[error("tolerance must be positive and finite")]
    InvalidTolerance,
    #[error("problem data contains NaN or an infinite coefficient")]
    NonFinite,
}

/// The quadratic term, either as a dense matrix or as a factor `F` with `Q = F Fᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Hessian<T> {
    Dense(Matrix<T>),
    Factored(Matrix<T>),
}

impl<T: Scalar> Hessian<T> {
    pub fn dim(&self) -> usize {
        match self {
            Hessian::Dense(q) => q.rows(),
            Hessian::Factored(f) => f.rows(),
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        match self {
            Hessian::Dense(q) => q.mul_vec(x),
            Hessian::Factored(f) => f.mul_vec(&f.tr_mul_vec(x)),
        }
    }

    pub fn to_dense(&self) -> Matrix<T> {
        match self {
            Hessian::Dense(q) => q.clone(),
            Hessian::Factored(f) => f.gram_rows(),
        }
    }

    fn max_diag(&self) -> T {
        match self {
            Hessian::Dense(q) => (0..q.rows()).fold(T::zero(), |m, i| m.max(q[(i, i)].abs())),
            Hessian::Factored(f) => (0..f.rows()).fold(T::zero(), |m, i| m.max(dot(f.row(i), f.row(i)))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem<T> {
    pub hessian: Hessian<T>,
    pub c: Vec<T>,
    pub a_eq: Matrix<T>,
    pub b_eq: Vec<T>,
    pub g: Matrix<T>,
    pub h: Vec<T>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> QpProblem<T> {
    /// Unconstrained problem `min ½xᵀQx + cᵀx`; add constraints with the `with_*` builders.
    pub fn new(q: Matrix<T>, c: Vec<T>) -> Self {
        Self::with_hessian(Hessian::Dense(q), c)
    }

    /// Problem whose quadratic term is `F Fᵀ`.
    pub fn factored(f: Matrix<T>, c: Vec<T>) -> Self {
        Self::with_hessian(Hessian::Factored(f), c)
    }

    pub fn with_hessian(hessian: Hessian<T>, c: Vec<T>) -> Self {
        let n = c.len();
        Self {
            hessian,
            a_eq: Matrix::zeros(0, n),
            b_eq: vec![],
            g: Matrix::zeros(0, n),
            h: vec![],
            lower: vec![T::neg_infinity(); n],
            upper: vec![T::infinity(); n],
            c,
        }
    }

    pub fn with_equalities(mut self, a: Matrix<T>, b: Vec<T>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_inequalities(mut self, g: Matrix<T>, h: Vec<T>) -> Self {
        self.g = g;
        self.h = h;
        self
    }

    pub fn with_bounds(mut self, lower: Vec<T>, upper: Vec<T>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn objective(&self, x: &[T]) -> T {
        let qx = self.hessian.mul_vec(x);
        T::of(0.5) * dot(x, &qx) + dot(&self.c, x)
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.dim();
        let dim_err = |what: &str| Err(QpError::DimensionMismatch(what.to_string()));
        if self.hessian.dim() != n {
            return dim_err("Q and c");
        }
        if let Hessian::Dense(q) = &self.hessian {
            if !q.is_square() {
                return dim_err("Q is not square");
            }
        }
        if self.a_eq.cols() != n || self.a_eq.rows() != self.b_eq.len() {
            return dim_err("equality block");
        }
        if self.g.cols() != n || self.g.rows() != self.h.len() {
            return dim_err("inequality block");
        }
        if self.lower.len() != n || self.upper.len() != n {
            return dim_err("bounds");
        }
        let finite = |v: &[T]| v.iter().all(|x| x.is_finite());
        let hessian_data = match &self.hessian {
            Hessian::Dense(q) | Hessian::Factored(q) => q.as_slice(),
        };
        if !finite(hessian_data)
            || !finite(&self.c)
            || !finite(self.a_eq.as_slice())
            || !finite(&self.b_eq)
            || !finite(self.g.as_slice())
            || !finite(&self.h)
            || self.lower.iter().chain(&self.upper).any(|v| v.is_nan())
        {
            return Err(QpError::NonFinite);
        }
        for i in 0..n {
            if self.lower[i] > self.upper[i] || self.lower[i] == T::infinity() || self.upper[i] == T::neg_infinity() {
                return Err(QpError::InvalidBounds(i));
            }
        }
        if let Hessian::Dense(q) = &self.hessian {
            let asym = q.max_abs_asymmetry();
            if asym > T::of(1e-10) {
                return Err(QpError::NotSymmetric(asym.as_f64()));
            }
            let scale = q.frobenius_norm();
            if scale > T::zero() {
                let mut shifted = q.clone();
                shifted.add_to_diagonal(T::of(PSD_FLOOR) * scale);
                if Cholesky::factor(shifted, T::zero()).is_err() {
                    return Err(QpError::NotPsd);
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    MaxIterations,
    Infeasible,
    Unbounded,
}

/// Infinity-norm KKT residuals.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KktResiduals<T> {
    pub primal_residual: T,
    pub dual_residual: T,
    pub complementarity: T,
}

impl<T: Scalar> KktResiduals<T> {
    pub fn max(&self) -> T {
        self.primal_residual
            .max(self.dual_residual)
            .max(self.complementarity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution<T> {
    pub x: Vec<T>,
    pub objective: T,
    /// Multipliers `y` of `Ax = b` with the Lagrangian sign `+yᵀ(Ax - b)`.
    pub eq_duals: Vec<T>,
    pub in_duals: Vec<T>,
    pub lower_duals: Vec<T>,
    pub upper_duals: Vec<T>,
    pub status: QpStatus,
    pub kkt: KktResiduals<T>,
    pub iterations: usize,
}

impl<T: Scalar> QpSolution<T> {
    /// Value of the Lagrangian dual function at the returned multipliers.
    ///
    /// Uses stationarity to eliminate the linear term, so it equals the
    /// primal objective exactly when the duality gap is closed.
    pub fn dual_objective(&self, p: &QpProblem<T>) -> T {
        let qx = p.hessian.mul_vec(&self.x);
        let mut val = -T::of(0.5) * dot(&self.x, &qx) - dot(&p.b_eq, &self.eq_duals) - dot(&p.h, &self.in_duals);
        for i in 0..p.dim() {
            if p.lower[i].is_finite() {
                val = val + p.lower[i] * self.lower_duals[i];
            }
            if p.upper[i].is_finite() {
                val = val - p.upper[i] * self.upper_duals[i];
            }
        }
        val
    }
}

/// Recomputes stationarity, feasibility and complementarity from scratch.
pub fn kkt_residuals<T: Scalar>(p: &QpProblem<T>, s: &QpSolution<T>) -> Result<KktResiduals<T>, QpError> {
    let n = p.dim();
    if s.x.len() != n
        || s.eq_duals.len() != p.b_eq.len()
        || s.in_duals.len() != p.h.len()
        || s.lower_duals.len() != n
        || s.upper_duals.len() != n
    {
        return Err(QpError::DimensionMismatch("solution and problem".into()));
    }
    Ok(residuals_at(p, &s.x, &s.eq_duals, &s.in_duals, &s.lower_duals, &s.upper_duals))
}

fn residuals_at<T: Scalar>(
    p: &QpProblem<T>,
    x: &[T],
    y: &[T],
    z_g: &[T],
    z_l: &[T],
    z_u: &[T],
) -> KktResiduals<T> {
    let zero = T::zero();
    let mut primal = zero;
    let ax = p.a_eq.mul_vec(x);
    for (v, b) in ax.iter().zip(&p.b_eq) {
        primal = primal.max((*v - *b).abs());
    }
    let gx = p.g.mul_vec(x);
    let mut compl = zero;
    let mut dual_infeas = zero;
    for k in 0..gx.len() {
        let slack = p.h[k] - gx[k];
        primal = primal.max(-slack);
        compl = compl.max((z_g[k] * slack).abs());
        dual_infeas = dual_infeas.max(-z_g[k]);
    }
    for i in 0..x.len() {
        if p.lower[i].is_finite() {
            let slack = x[i] - p.lower[i];
            primal = primal.max(-slack);
            compl = compl.max((z_l[i] * slack).abs());
        }
        if p.upper[i].is_finite() {
            let slack = p.upper[i] - x[i];
            primal = primal.max(-slack);
            compl = compl.max((z_u[i] * slack).abs());
        }
        dual_infeas = dual_infeas.max(-z_l[i]).max(-z_u[i]);
    }
    let mut grad = p.hessian.mul_vec(x);
    for (g, c) in grad.iter_mut().zip(&p.c) {
        *g = *g + *c;
    }
    if !y.is_empty() {
        axpy(T::one(), &p.a_eq.tr_mul_vec(y), &mut grad);
    }
    if !z_g.is_empty() {
        axpy(T::one(), &p.g.tr_mul_vec(z_g), &mut grad);
    }
    for i in 0..x.len() {
        grad[i] = grad[i] - z_l[i] + z_u[i];
    }
    KktResiduals {
        primal_residual: primal,
        dual_residual: max_abs(&grad).max(dual_infeas),
        complementarity: compl,
    }
}

/// Solves the problem to KKT tolerance `tol`.
///
/// Infeasibility, unboundedness and iteration exhaustion are reported
/// through [`QpSolution::status`]; `Err` is reserved for malformed input.
pub fn solve_qp<T: Scalar>(p: &QpProblem<T>, tol: T, max_iter: usize) -> Result<QpSolution<T>, QpError> {
    if !(tol > T::zero()) || !tol.is_finite() {
        return Err(QpError::InvalidTolerance);
    }
    p.validate()?;
    Ok(Ipm::new(p, tol, max_iter).run())
}

/// Bookkeeping for one interior-point solve.
struct Ipm<'a, T> {
    p: &'a QpProblem<T>,
    tol: T,
    max_iter: usize,
    /// Equality rows that are not identically zero.
    eq_rows: Vec<usize>,
    a: Matrix<T>,
    b: Vec<T>,
    lb: Vec<usize>,
    ub: Vec<usize>,
    /// Materialized Hessian; always set unless the Woodbury path is in use,
    /// in which case it is filled on demand as a fallback.
    dense_q: OnceCell<Matrix<T>>,
    woodbury: bool,
    reg: T,
}

struct Iterate<T> {
    x: Vec<T>,
    y: Vec<T>,
    s_g: Vec<T>,
    z_g: Vec<T>,
    s_l: Vec<T>,
    z_l: Vec<T>,
    s_u: Vec<T>,
    z_u: Vec<T>,
}

struct Residual<T> {
    rd: Vec<T>,
    rp: Vec<T>,
    r_g: Vec<T>,
    r_l: Vec<T>,
    r_u: Vec<T>,
}

struct Direction<T> {
    dx: Vec<T>,
    dy: Vec<T>,
    ds_g: Vec<T>,
    dz_g: Vec<T>,
    ds_l: Vec<T>,
    dz_l: Vec<T>,
    ds_u: Vec<T>,
    dz_u: Vec<T>,
}

enum NormalSolver<T> {
    Dense(Cholesky<T>),
    Woodbury {
        inv_diag: Vec<T>,
        factor: Matrix<T>,
        capacitance: Cholesky<T>,
    },
}

impl<T: Scalar> NormalSolver<T> {
    fn solve(&self, r: &[T]) -> Vec<T> {
        match self {
            NormalSolver::Dense(ch) => ch.solve(r),
            NormalSolver::Woodbury {
                inv_diag,
                factor,
                capacitance,
            } => {
                // One refinement step recovers the accuracy the identity loses
                // when the diagonal spans many orders of magnitude.
                let mut x = Self::woodbury(inv_diag, factor, capacitance, r);
                let fx = factor.mul_vec(&factor.tr_mul_vec(&x));
                let resid: Vec<T> = (0..r.len()).map(|i| r[i] - fx[i] - x[i] / inv_diag[i]).collect();
                let dx = Self::woodbury(inv_diag, factor, capacitance, &resid);
                axpy(T::one(), &dx, &mut x);
                x
            }
        }
    }

    /// `(D + FFᵀ)⁻¹ r = D⁻¹r − D⁻¹F (I + FᵀD⁻¹F)⁻¹ FᵀD⁻¹r`
    fn woodbury(inv_diag: &[T], factor: &Matrix<T>, capacitance: &Cholesky<T>, r: &[T]) -> Vec<T> {
        let scaled: Vec<T> = r.iter().zip(inv_diag).map(|(&a, &b)| a * b).collect();
        let mut t = factor.tr_mul_vec(&scaled);
        capacitance.solve_in_place(&mut t);
        let ft = factor.mul_vec(&t);
        scaled
            .iter()
            .zip(&ft)
            .zip(inv_diag)
            .map(|((&s, &f), &d)| s - f * d)
            .collect()
    }
}

/// Factored normal matrix plus the equality Schur complement.
struct KktFactor<T> {
    normal: NormalSolver<T>,
    /// `M⁻¹Aᵀ`, one column per kept equality row, stored as rows.
    m_inv_at: Vec<Vec<T>>,
    schur: Option<Cholesky<T>>,
}

impl<'a, T: Scalar> Ipm<'a, T> {
    fn new(p: &'a QpProblem<T>, tol: T, max_iter: usize) -> Self {
        let n = p.dim();
        let a_scale = T::one() + max_abs(p.a_eq.as_slice());
        let zero_row = T::of(1e-13) * a_scale;
        let eq_rows: Vec<usize> = (0..p.a_eq.rows())
            .filter(|&i| max_abs(p.a_eq.row(i)) > zero_row)
            .collect();
        let a = Matrix::from_fn(eq_rows.len(), n, |r, j| p.a_eq[(eq_rows[r], j)]);
        let b = eq_rows.iter().map(|&i| p.b_eq[i]).collect();
        let lb = (0..n).filter(|&i| p.lower[i].is_finite()).collect::<Vec<_>>();
        let ub = (0..n).filter(|&i| p.upper[i].is_finite()).collect::<Vec<_>>();
        let fully_boxed = (0..n).all(|i| p.lower[i].is_finite() || p.upper[i].is_finite());
        let woodbury = matches!(&p.hessian, Hessian::Factored(f) if f.cols() < f.rows())
            && p.g.rows() == 0
            && fully_boxed;
        let dense_q = OnceCell::new();
        if !woodbury {
            let _ = dense_q.set(p.hessian.to_dense());
        }
        let scale = T::one().max(p.hessian.max_diag());
        let reg = T::epsilon().sqrt() * T::of(1e-5) * scale;
        Self {
            p,
            tol,
            max_iter,
            eq_rows,
            a,
            b,
            lb,
            ub,
            dense_q,
            woodbury,
            reg,
        }
    }

    fn n_ineq(&self) -> usize {
        self.p.g.rows() + self.lb.len() + self.ub.len()
    }

    fn initial_point(&self) -> Iterate<T> {
        let p = self.p;
        let one = T::one();
        let x: Vec<T> = (0..p.dim())
            .map(|i| {
                let (l, u) = (p.lower[i], p.upper[i]);
                match (l.is_finite(), u.is_finite()) {
                    (true, true) => T::of(0.5) * (l + u),
                    (true, false) => l + one,
                    (false, true) => u - one,
                    (false, false) => T::zero(),
                }
            })
            .collect();
        let gx = p.g.mul_vec(&x);
        let s_g: Vec<T> = gx.iter().zip(&p.h).map(|(&g, &h)| (h - g).max(one)).collect();
        let s_l: Vec<T> = self.lb.iter().map(|&i| x[i] - p.lower[i]).collect();
        let s_u: Vec<T> = self.ub.iter().map(|&i| p.upper[i] - x[i]).collect();
        // A degenerate box l == u has zero slack; nudge it off the boundary.
        let floor = T::of(1e-8);
        let s_l = s_l.into_iter().map(|s| s.max(floor)).collect::<Vec<_>>();
        let s_u = s_u.into_iter().map(|s| s.max(floor)).collect::<Vec<_>>();
        Iterate {
            z_g: vec![one; s_g.len()],
            z_l: vec![one; s_l.len()],
            z_u: vec![one; s_u.len()],
            y: vec![T::zero(); self.eq_rows.len()],
            x,
            s_g,
            s_l,
            s_u,
        }
    }

    fn residual(&self, it: &Iterate<T>) -> Residual<T> {
        let p = self.p;
        let mut rd = p.hessian.mul_vec(&it.x);
        for (r, c) in rd.iter_mut().zip(&p.c) {
            *r = *r + *c;
        }
        if !it.y.is_empty() {
            axpy(T::one(), &self.a.tr_mul_vec(&it.y), &mut rd);
        }
        if !it.z_g.is_empty() {
            axpy(T::one(), &p.g.tr_mul_vec(&it.z_g), &mut rd);
        }
        for (k, &i) in self.lb.iter().enumerate() {
            rd[i] = rd[i] - it.z_l[k];
        }
        for (k, &i) in self.ub.iter().enumerate() {
            rd[i] = rd[i] + it.z_u[k];
        }
        let rp = self
            .a
            .mul_vec(&it.x)
            .iter()
            .zip(&self.b)
            .map(|(&ax, &b)| ax - b)
            .collect();
        let r_g = p
            .g
            .mul_vec(&it.x)
            .iter()
            .zip(&it.s_g)
            .zip(&p.h)
            .map(|((&gx, &s), &h)| gx + s - h)
            .collect();
        let r_l = self
            .lb
            .iter()
            .zip(&it.s_l)
            .map(|(&i, &s)| p.lower[i] - it.x[i] + s)
            .collect();
        let r_u = self
            .ub
            .iter()
            .zip(&it.s_u)
            .map(|(&i, &s)| it.x[i] - p.upper[i] + s)
            .collect();
        Residual { rd, rp, r_g, r_l, r_u }
    }

    /// Multipliers expanded back to the caller's constraint layout.
    fn expand_duals(&self, it: &Iterate<T>) -> (Vec<T>, Vec<T>, Vec<T>) {
        let n = self.p.dim();
        let mut y = vec![T::zero(); self.p.a_eq.rows()];
        for (k, &r) in self.eq_rows.iter().enumerate() {
            y[r] = it.y[k];
        }
        let mut zl = vec![T::zero(); n];
        for (k, &i) in self.lb.iter().enumerate() {
            zl[i] = it.z_l[k];
        }
        let mut zu = vec![T::zero(); n];
        for (k, &i) in self.ub.iter().enumerate() {
            zu[i] = it.z_u[k];
        }
        (y, zl, zu)
    }

    fn kkt_of(&self, it: &Iterate<T>) -> KktResiduals<T> {
        let (y, zl, zu) = self.expand_duals(it);
        residuals_at(self.p, &it.x, &y, &it.z_g, &zl, &zu)
    }

    fn factor(&self, it: &Iterate<T>) -> Option<KktFactor<T>> {
        self.factor_with(it, self.woodbury).or_else(|| {
            if self.woodbury {
                self.factor_with(it, false)
            } else {
                None
            }
        })
    }

    fn factor_with(&self, it: &Iterate<T>, woodbury: bool) -> Option<KktFactor<T>> {
        let p = self.p;
        let n = p.dim();
        let d_g: Vec<T> = it.z_g.iter().zip(&it.s_g).map(|(&z, &s)| z / s).collect();
        let mut diag = vec![T::zero(); n];
        for (k, &i) in self.lb.iter().enumerate() {
            diag[i] = diag[i] + it.z_l[k] / it.s_l[k];
        }
        for (k, &i) in self.ub.iter().enumerate() {
            diag[i] = diag[i] + it.z_u[k] / it.s_u[k];
        }
        let mut reg = self.reg;
        let normal = loop {
            let attempt = match (woodbury, &p.hessian) {
                (true, Hessian::Factored(f)) => {
                    let inv_diag: Vec<T> = diag.iter().map(|&d| T::one() / (d + reg)).collect();
                    let mut cap = f.weighted_gram_cols(&inv_diag);
                    cap.add_to_diagonal(T::one());
                    Cholesky::factor(cap, T::zero()).ok().map(|capacitance| NormalSolver::Woodbury {
                        inv_diag,
                        factor: f.clone(),
                        capacitance,
                    })
                }
                _ => {
                    let q = self.dense_q.get_or_init(|| p.hessian.to_dense());
                    let mut m = if p.g.rows() > 0 {
                        let gdg = p.g.weighted_gram_cols(&d_g);
                        Matrix::from_fn(n, n, |i, j| gdg[(i, j)] + q[(i, j)])
                    } else {
                        q.clone()
                    };
                    for i in 0..n {
                        m[(i, i)] = m[(i, i)] + diag[i] + reg;
                    }
                    Cholesky::factor(m, T::zero()).ok().map(NormalSolver::Dense)
                }
            };
            match attempt {
                Some(s) => break s,
                None if reg < T::of(1e-2) * T::one().max(p.hessian.max_diag()) => reg = reg * T::of(100.0),
                None => return None,
            }
        };
        let k = self.a.rows();
        if k == 0 {
            return Some(KktFactor {
                normal,
                m_inv_at: vec![],
                schur: None,
            });
        }
        let m_inv_at: Vec<Vec<T>> = (0..k).map(|r| normal.solve(self.a.row(r))).collect();
        let mut schur = Matrix::from_fn(k, k, |i, j| dot(self.a.row(i), &m_inv_at[j]));
        let s_scale = (0..k).fold(T::zero(), |m, i| m.max(schur[(i, i)]));
        schur.add_to_diagonal(T::epsilon() * T::of(10.0) * T::one().max(s_scale));
        let schur = Cholesky::factor(schur, T::zero()).ok()?;
        Some(KktFactor {
            normal,
            m_inv_at,
            schur: Some(schur),
        })
    }

    /// Newton direction for complementarity target `rsz` (one entry per inequality, G rows then lower then upper).
    fn direction(
        &self,
        f: &KktFactor<T>,
        it: &Iterate<T>,
        res: &Residual<T>,
        rsz_g: &[T],
        rsz_l: &[T],
        rsz_u: &[T],
    ) -> Direction<T> {
        let p = self.p;
        let w = |z: &[T], s: &[T], r: &[T], rsz: &[T]| -> Vec<T> {
            (0..z.len()).map(|k| (z[k] * r[k] - rsz[k]) / s[k]).collect()
        };
        let w_g = w(&it.z_g, &it.s_g, &res.r_g, rsz_g);
        let w_l = w(&it.z_l, &it.s_l, &res.r_l, rsz_l);
        let w_u = w(&it.z_u, &it.s_u, &res.r_u, rsz_u);

        let mut rhs: Vec<T> = res.rd.iter().map(|&v| -v).collect();
        if !w_g.is_empty() {
            axpy(-T::one(), &p.g.tr_mul_vec(&w_g), &mut rhs);
        }
        for (k, &i) in self.lb.iter().enumerate() {
            rhs[i] = rhs[i] + w_l[k];
        }
        for (k, &i) in self.ub.iter().enumerate() {
            rhs[i] = rhs[i] - w_u[k];
        }

        let mut dx = f.normal.solve(&rhs);
        let dy = match &f.schur {
            None => vec![],
            Some(schur) => {
                let mut t: Vec<T> = (0..self.a.rows())
                    .map(|r| dot(self.a.row(r), &dx) + res.rp[r])
                    .collect();
                schur.solve_in_place(&mut t);
                for (r, &ty) in t.iter().enumerate() {
                    axpy(-ty, &f.m_inv_at[r], &mut dx);
                }
                t
            }
        };

        let gdx = p.g.mul_vec(&dx);
        let d_g_dir = |gd: &[T], r: &[T], z: &[T], s: &[T], wv: &[T]| -> (Vec<T>, Vec<T>) {
            let ds = (0..gd.len()).map(|k| -r[k] - gd[k]).collect();
            let dz = (0..gd.len()).map(|k| z[k] / s[k] * gd[k] + wv[k]).collect();
            (ds, dz)
        };
        let (ds_g, dz_g) = d_g_dir(&gdx, &res.r_g, &it.z_g, &it.s_g, &w_g);
        let ldx: Vec<T> = self.lb.iter().map(|&i| -dx[i]).collect();
        let (ds_l, dz_l) = d_g_dir(&ldx, &res.r_l, &it.z_l, &it.s_l, &w_l);
        let udx: Vec<T> = self.ub.iter().map(|&i| dx[i]).collect();
        let (ds_u, dz_u) = d_g_dir(&udx, &res.r_u, &it.z_u, &it.s_u, &w_u);
        Direction {
            dx,
            dy,
            ds_g,
            dz_g,
            ds_l,
            dz_l,
            ds_u,
            dz_u,
        }
    }

    fn max_step(it: &Iterate<T>, d: &Direction<T>) -> T {
        let mut alpha = T::one();
        let mut clip = |v: &[T], dv: &[T]| {
            for (&x, &dx) in v.iter().zip(dv) {
                if dx < T::zero() {
                    alpha = alpha.min(-x / dx);
                }
            }
        };
        clip(&it.s_g, &d.ds_g);
        clip(&it.z_g, &d.dz_g);
        clip(&it.s_l, &d.ds_l);
        clip(&it.z_l, &d.dz_l);
        clip(&it.s_u, &d.ds_u);
        clip(&it.z_u, &d.dz_u);
        alpha
    }

    fn complementarity_sum(it: &Iterate<T>) -> T {
        dot(&it.s_g, &it.z_g) + dot(&it.s_l, &it.z_l) + dot(&it.s_u, &it.z_u)
    }

    fn stepped_gap(it: &Iterate<T>, d: &Direction<T>, alpha: T) -> T {
        let part = |s: &[T], ds: &[T], z: &[T], dz: &[T]| -> T {
            (0..s.len()).fold(T::zero(), |acc, k| acc + (s[k] + alpha * ds[k]) * (z[k] + alpha * dz[k]))
        };
        part(&it.s_g, &d.ds_g, &it.z_g, &d.dz_g)
            + part(&it.s_l, &d.ds_l, &it.z_l, &d.dz_l)
            + part(&it.s_u, &d.ds_u, &it.z_u, &d.dz_u)
    }

    fn apply(it: &mut Iterate<T>, d: &Direction<T>, alpha: T) {
        axpy(alpha, &d.dx, &mut it.x);
        axpy(alpha, &d.dy, &mut it.y);
        axpy(alpha, &d.ds_g, &mut it.s_g);
        axpy(alpha, &d.dz_g, &mut it.z_g);
        axpy(alpha, &d.ds_l, &mut it.s_l);
        axpy(alpha, &d.dz_l, &mut it.z_l);
        axpy(alpha, &d.ds_u, &mut it.s_u);
        axpy(alpha, &d.dz_u, &mut it.z_u);
    }

    fn finish(&self, it: &Iterate<T>, status: QpStatus, iterations: usize, kkt: KktResiduals<T>) -> QpSolution<T> {
        let (eq_duals, lower_duals, upper_duals) = self.expand_duals(it);
        QpSolution {
            objective: self.p.objective(&it.x),
            x: it.x.clone(),
            eq_duals,
            in_duals: it.z_g.clone(),
            lower_duals,
            upper_duals,
            status,
            kkt,
            iterations,
        }
    }

    fn run(&self) -> QpSolution<T> {
        let m = self.n_ineq();
        let mut it = self.initial_point();
        let x_scale = T::one() + max_abs(&it.x);
        let data_scale = T::one() + max_abs(&self.p.c) + self.p.hessian.max_diag() + max_abs(&self.b) + max_abs(&self.p.h);
        let blowup = T::of(1e12);
        let mut best: Option<(T, Iterate<T>, KktResiduals<T>)> = None;
        let mut stalled = 0usize;

        for iter in 0..=self.max_iter {
            let kkt = self.kkt_of(&it);
            if kkt.max() <= self.tol {
                return self.finish(&it, QpStatus::Optimal, iter, kkt);
            }
            if best.as_ref().is_none_or(|(b, _, _)| kkt.max() < *b) {
                best = Some((kkt.max(), self.clone_iterate(&it), kkt));
            }
            if iter == self.max_iter {
                break;
            }
            let dual_size = max_abs(&it.y).max(max_abs(&it.z_g)).max(max_abs(&it.z_l)).max(max_abs(&it.z_u));
            if max_abs(&it.x) > blowup * x_scale * data_scale {
                return self.finish(&it, QpStatus::Unbounded, iter, kkt);
            }
            if dual_size > blowup * data_scale && kkt.primal_residual > self.tol {
                return self.finish(&it, QpStatus::Infeasible, iter, kkt);
            }

            let res = self.residual(&it);
            let Some(fac) = self.factor(&it) else {
                break;
            };
            let mu = if m > 0 {
                Self::complementarity_sum(&it) / T::of(m as f64)
            } else {
                T::zero()
            };
            let sz = |s: &[T], z: &[T]| -> Vec<T> { s.iter().zip(z).map(|(&a, &b)| a * b).collect() };
            let aff = self.direction(
                &fac,
                &it,
                &res,
                &sz(&it.s_g, &it.z_g),
                &sz(&it.s_l, &it.z_l),
                &sz(&it.s_u, &it.z_u),
            );
            let step = if m == 0 {
                Self::apply(&mut it, &aff, T::one());
                T::one()
            } else {
                let alpha_aff = Self::max_step(&it, &aff);
                let mu_aff = Self::stepped_gap(&it, &aff, alpha_aff) / T::of(m as f64);
                let sigma = (mu_aff / mu).powi(3).min(T::one());
                let target = sigma * mu;
                let corr = |s: &[T], z: &[T], ds: &[T], dz: &[T]| -> Vec<T> {
                    (0..s.len()).map(|k| s[k] * z[k] + ds[k] * dz[k] - target).collect()
                };
                let dir = self.direction(
                    &fac,
                    &it,
                    &res,
                    &corr(&it.s_g, &it.z_g, &aff.ds_g, &aff.dz_g),
                    &corr(&it.s_l, &it.z_l, &aff.ds_l, &aff.dz_l),
                    &corr(&it.s_u, &it.z_u, &aff.ds_u, &aff.dz_u),
                );
                let alpha = (T::of(STEP_FRACTION) * Self::max_step(&it, &dir)).min(T::one());
                Self::apply(&mut it, &dir, alpha);
                alpha
            };
            if !it.x.iter().all(|v| v.is_finite()) {
                break;
            }
            stalled = if step < T::of(1e-10) { stalled + 1 } else { 0 };
            if stalled >= 5 {
                let kkt = self.kkt_of(&it);
                let status = if kkt.primal_residual > self.tol {
                    QpStatus::Infeasible
                } else {
                    QpStatus::MaxIterations
                };
                return self.finish(&it, status, iter + 1, kkt);
            }
        }
        let (_, it, kkt) = best.expect("at least one iterate is evaluated");
        self.finish(&it, QpStatus::MaxIterations, self.max_iter, kkt)
    }

    fn clone_iterate(&self, it: &Iterate<T>) -> Iterate<T> {
        Iterate {
            x: it.x.clone(),
            y: it.y.clone(),
            s_g: it.s_g.clone(),
            z_g: it.z_g.clone(),
            s_l: it.s_l.clone(),
            z_l: it.z_l.clone(),
            s_u: it.s_u.clone(),
            z_u: it.z_u.clone(),
        }
    }
}
