//! Dense strictly convex QP solver.
//!
//! Solves `min ½uᵀHu + fᵀu  s.t.  A_in u ⪯ b_in,  A_eq u = b_eq`.
//!
//! Equalities are eliminated first through an orthonormal nullspace basis
//! `Z`, then the reduced inequality problem is solved with the dual active
//! set method of Goldfarb and Idnani. Only the reduced Hessian `ZᵀHZ` has to
//! be positive definite.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::row_space_split;

const RANK_TOLERANCE: f64 = 1e-10;
const STATIONARITY_LIMIT: f64 = 1e-8;
const FEASIBILITY_LIMIT: f64 = 1e-9;
const COMPLEMENTARITY_LIMIT: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("Hessian is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("reduced Hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("problem data contains non-finite values")]
    NonFinite,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained problem.
    pub fn new(h: DMatrix<f64>, f: DVector<f64>) -> Self {
        let d = f.len();
        Self {
            h,
            f,
            a_in: DMatrix::zeros(0, d),
            b_in: DVector::zeros(0),
            a_eq: DMatrix::zeros(0, d),
            b_eq: DVector::zeros(0),
        }
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_in = a;
        self.b_in = b;
        self
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.h * u)) + self.f.dot(u)
    }

    fn validate(&self) -> Result<(), QpError> {
        let d = self.dim();
        let shape_err = |what: &str, got: (usize, usize), want: (usize, usize)| {
            QpError::Dimension(format!("{what} is {}×{}, expected {}×{}", got.0, got.1, want.0, want.1))
        };
        if self.h.shape() != (d, d) {
            return Err(shape_err("H", self.h.shape(), (d, d)));
        }
        if self.a_in.shape() != (self.b_in.len(), d) {
            return Err(shape_err("A_in", self.a_in.shape(), (self.b_in.len(), d)));
        }
        if self.a_eq.shape() != (self.b_eq.len(), d) {
            return Err(shape_err("A_eq", self.a_eq.shape(), (self.b_eq.len(), d)));
        }
        let finite = self.h.iter().chain(self.f.iter()).chain(self.a_in.iter()).chain(self.b_in.iter());
        let finite = finite.chain(self.a_eq.iter()).chain(self.b_eq.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(QpError::NonFinite);
        }
        let asym = (&self.h - self.h.transpose()).amax();
        if asym > 1e-10 * self.h.amax().max(1.0) {
            return Err(QpError::NotSymmetric(asym));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 200,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

impl QpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::Infeasible => "infeasible",
            QpStatus::IterationLimit => "iteration_limit",
        }
    }
}

/// Infinity-norm KKT residuals of a candidate primal-dual pair.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct KktResidual {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.complementarity)
    }

    pub fn certifies(&self) -> bool {
        self.stationarity <= STATIONARITY_LIMIT
            && self.primal <= FEASIBILITY_LIMIT
            && self.complementarity <= COMPLEMENTARITY_LIMIT
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub status: QpStatus,
    pub u: DVector<f64>,
    /// Inequality multipliers, `λ ⪰ 0`.
    pub lambda: DVector<f64>,
    /// Equality multipliers, free sign.
    pub nu: DVector<f64>,
    /// Active inequality rows, ascending.
    pub active_set: Vec<usize>,
    pub kkt: KktResidual,
    /// Nonnegative inequality weights `y` with `yᵀA_in = 0` on the equality
    /// nullspace and `yᵀb_in < 0`, reported on `Infeasible`.
    pub certificate: Option<DVector<f64>>,
    pub iterations: usize,
}

impl QpSolution {
    pub fn kkt_residual(&self) -> f64 {
        self.kkt.max()
    }
}

/// KKT residuals of `(u, λ, ν)` for `problem`.
pub fn kkt_residual(problem: &QpProblem, u: &DVector<f64>, lambda: &DVector<f64>, nu: &DVector<f64>) -> KktResidual {
    let grad = &problem.h * u + &problem.f + problem.a_in.transpose() * lambda + problem.a_eq.transpose() * nu;
    let slack_in = &problem.a_in * u - &problem.b_in;
    let slack_eq = &problem.a_eq * u - &problem.b_eq;
    let primal = slack_in
        .iter()
        .map(|s| s.max(0.0))
        .chain(slack_eq.iter().map(|s| s.abs()))
        .chain(lambda.iter().map(|l| (-l).max(0.0)))
        .fold(0.0, f64::max);
    let complementarity = lambda.iter().zip(slack_in.iter()).map(|(l, s)| (l * s).abs()).fold(0.0, f64::max);
    KktResidual {
        stationarity: grad.amax(),
        primal,
        complementarity,
    }
}

/// `H = 2(JᵀJ + ΛᵀΛ)`, `f = 2ηJᵀe`: the quadratic form of
/// `‖Ju + ηe‖² + ‖Λu‖²` up to a constant.
pub fn build_least_squares_qp(
    j: &DMatrix<f64>,
    eta: f64,
    e: &DVector<f64>,
    lambda: &DMatrix<f64>,
) -> Result<QpProblem, QpError> {
    if j.nrows() != e.len() {
        return Err(QpError::Dimension(format!("J has {} rows but e has {}", j.nrows(), e.len())));
    }
    if lambda.shape() != (j.ncols(), j.ncols()) {
        return Err(QpError::Dimension(format!(
            "Λ is {}×{}, expected {}×{}",
            lambda.nrows(),
            lambda.ncols(),
            j.ncols(),
            j.ncols()
        )));
    }
    let mut h = (j.tr_mul(j) + lambda.tr_mul(lambda)) * 2.0;
    // exact symmetry keeps solves bit-reproducible under transposition
    h = (&h + h.transpose()) * 0.5;
    let f = j.tr_mul(e) * (2.0 * eta);
    Ok(QpProblem::new(h, f))
}

/// Solves `problem`. A returned `Optimal` solution always satisfies the KKT
/// certification limits; violating them is treated as a solver bug.
pub fn solve(problem: &QpProblem, config: &SolverConfig) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let d = problem.dim();
    let m_in = problem.b_in.len();

    // Equality elimination: u = u0 + Z w.
    let split = row_space_split(&problem.a_eq, RANK_TOLERANCE);
    if split.independent_rows.len() < problem.b_eq.len() {
        log::warn!(
            "dropping {} linearly dependent equality rows",
            problem.b_eq.len() - split.independent_rows.len()
        );
    }
    let a_kept = select_rows(&problem.a_eq, &split.independent_rows);
    let b_kept = DVector::from_iterator(split.rank, split.independent_rows.iter().map(|&i| problem.b_eq[i]));
    let u0 = if split.rank == 0 {
        DVector::zeros(d)
    } else {
        let m = &a_kept * &split.range;
        let y = m.lu().solve(&b_kept).ok_or(QpError::NotPositiveDefinite)?;
        &split.range * y
    };
    let eq_scale = 1.0 + problem.b_eq.amax() + problem.a_eq.amax();
    if (&problem.a_eq * &u0 - &problem.b_eq).amax() > FEASIBILITY_LIMIT * eq_scale {
        return Ok(QpSolution {
            status: QpStatus::Infeasible,
            u: u0,
            lambda: DVector::zeros(m_in),
            nu: DVector::zeros(problem.b_eq.len()),
            active_set: Vec::new(),
            kkt: KktResidual::default(),
            certificate: None,
            iterations: 0,
        });
    }
    let z = &split.null;
    let h_r = z.tr_mul(&(&problem.h * z));
    let h_r = (&h_r + h_r.transpose()) * 0.5;
    let f_r = z.tr_mul(&(&problem.h * &u0 + &problem.f));
    let a_r = &problem.a_in * z;
    let b_r = &problem.b_in - &problem.a_in * &u0;

    let dual = GoldfarbIdnani::new(&h_r, &f_r, &a_r, &b_r, config)?.run();
    let u = &u0 + z * &dual.w;
    let mut lambda = DVector::zeros(m_in);
    for (&i, &l) in dual.active.iter().zip(dual.multipliers.iter()) {
        lambda[i] = l;
    }
    let mut active_set = dual.active.clone();
    active_set.sort_unstable();

    let mut solution = QpSolution {
        status: dual.status,
        nu: equality_multipliers(problem, &split.independent_rows, &a_kept, &u, &lambda),
        u,
        lambda,
        active_set,
        kkt: KktResidual::default(),
        certificate: dual.certificate.map(|c| {
            let mut full = DVector::zeros(m_in);
            for (i, v) in c {
                full[i] = v;
            }
            full
        }),
        iterations: dual.iterations,
    };
    solution.kkt = kkt_residual(problem, &solution.u, &solution.lambda, &solution.nu);
    if solution.status == QpStatus::Optimal && !solution.kkt.certifies() {
        polish(problem, &split.independent_rows, &mut solution);
    }
    if solution.status == QpStatus::Optimal {
        let scale = 1.0 + problem.f.amax() + problem.h.amax() * solution.u.amax();
        let k = &solution.kkt;
        assert!(
            k.stationarity <= STATIONARITY_LIMIT * scale
                && k.primal <= FEASIBILITY_LIMIT * scale
                && k.complementarity <= COMPLEMENTARITY_LIMIT * scale,
            "QP solution failed KKT certification: {k:?}"
        );
    }
    Ok(solution)
}

fn select_rows(a: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), a.ncols(), |i, j| a[(rows[i], j)])
}

/// Least-squares `ν` from stationarity, using independent rows only.
fn equality_multipliers(
    problem: &QpProblem,
    rows: &[usize],
    a_kept: &DMatrix<f64>,
    u: &DVector<f64>,
    lambda: &DVector<f64>,
) -> DVector<f64> {
    let mut nu = DVector::zeros(problem.b_eq.len());
    if rows.is_empty() {
        return nu;
    }
    let rhs = -(&problem.h * u + &problem.f + problem.a_in.transpose() * lambda);
    let qr = a_kept.transpose().qr();
    let mut qtb = rhs;
    qr.q_tr_mul(&mut qtb);
    let r = qr.r();
    if let Some(sol) = r.solve_upper_triangular(&qtb.rows(0, rows.len()).into_owned()) {
        for (k, &i) in rows.iter().enumerate() {
            nu[i] = sol[k];
        }
    }
    nu
}

/// Refines an optimal point by solving the equality-constrained KKT system
/// of the final active set directly.
fn polish(problem: &QpProblem, eq_rows: &[usize], sol: &mut QpSolution) {
    let d = problem.dim();
    let rows: Vec<(bool, usize)> = eq_rows
        .iter()
        .map(|&i| (true, i))
        .chain(sol.active_set.iter().map(|&i| (false, i)))
        .collect();
    let m = rows.len();
    let mut kkt = DMatrix::zeros(d + m, d + m);
    let mut rhs = DVector::zeros(d + m);
    kkt.view_mut((0, 0), (d, d)).copy_from(&problem.h);
    rhs.rows_mut(0, d).copy_from(&(-&problem.f));
    for (k, &(eq, i)) in rows.iter().enumerate() {
        let (row, b) = if eq {
            (problem.a_eq.row(i), problem.b_eq[i])
        } else {
            (problem.a_in.row(i), problem.b_in[i])
        };
        kkt.view_mut((d + k, 0), (1, d)).copy_from(&row);
        kkt.view_mut((0, d + k), (d, 1)).copy_from(&row.transpose());
        rhs[d + k] = b;
    }
    let Some(x) = kkt.full_piv_lu().solve(&rhs) else {
        return;
    };
    let u = x.rows(0, d).into_owned();
    let mut lambda = DVector::zeros(problem.b_in.len());
    let mut nu = DVector::zeros(problem.b_eq.len());
    for (k, &(eq, i)) in rows.iter().enumerate() {
        if eq {
            nu[i] = x[d + k];
        } else {
            lambda[i] = x[d + k].max(0.0);
        }
    }
    let kkt = kkt_residual(problem, &u, &lambda, &nu);
    if kkt.max() < sol.kkt.max() {
        sol.u = u;
        sol.lambda = lambda;
        sol.nu = nu;
        sol.kkt = kkt;
    }
}

struct DualResult {
    status: QpStatus,
    w: DVector<f64>,
    active: Vec<usize>,
    multipliers: Vec<f64>,
    certificate: Option<Vec<(usize, f64)>>,
    iterations: usize,
}

/// Dual active set iteration on `min ½wᵀHw + fᵀw s.t. A w ⪯ b` with `H ≻ 0`.
///
/// Maintains `J = L⁻ᵀQ` and upper triangular `R` such that the active
/// normals `N` satisfy `Qᵀ L⁻¹ N = [R; 0]`. Internally constraints are in the
/// `nᵀw ≥ c` form with `n = −A_i`, `c = −b_i`.
struct GoldfarbIdnani<'a> {
    a: &'a DMatrix<f64>,
    b: &'a DVector<f64>,
    config: &'a SolverConfig,
    w: DVector<f64>,
    jm: DMatrix<f64>,
    r: DMatrix<f64>,
    active: Vec<usize>,
    multipliers: Vec<f64>,
    iterations: usize,
}

impl<'a> GoldfarbIdnani<'a> {
    fn new(
        h: &DMatrix<f64>,
        f: &DVector<f64>,
        a: &'a DMatrix<f64>,
        b: &'a DVector<f64>,
        config: &'a SolverConfig,
    ) -> Result<Self, QpError> {
        let k = f.len();
        let chol = h.clone().cholesky().ok_or(QpError::NotPositiveDefinite)?;
        let l = chol.l();
        let jm = l
            .transpose()
            .solve_upper_triangular(&DMatrix::identity(k, k))
            .ok_or(QpError::NotPositiveDefinite)?;
        let w = -chol.solve(f);
        Ok(Self {
            a,
            b,
            config,
            w,
            jm,
            r: DMatrix::zeros(k, k),
            active: Vec::new(),
            multipliers: Vec::new(),
            iterations: 0,
        })
    }

    /// `b_i − A_i w`; negative means violated.
    fn slack(&self, i: usize) -> f64 {
        self.b[i] - self.a.row(i).dot(&self.w.transpose())
    }

    fn normal(&self, i: usize) -> DVector<f64> {
        -self.a.row(i).transpose()
    }

    fn most_violated(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.b.len() {
            if self.active.contains(&i) {
                continue;
            }
            let s = self.slack(i);
            let tol = self.config.tolerance * (1.0 + self.b[i].abs());
            if s < -tol && best.is_none_or(|(_, bs)| s < bs) {
                best = Some((i, s));
            }
        }
        best.map(|(i, _)| i)
    }

    fn result(self, status: QpStatus, certificate: Option<Vec<(usize, f64)>>) -> DualResult {
        DualResult {
            status,
            w: self.w,
            active: self.active,
            multipliers: self.multipliers,
            certificate,
            iterations: self.iterations,
        }
    }

    fn run(mut self) -> DualResult {
        let k = self.w.len();
        loop {
            let Some(p) = self.most_violated() else {
                return self.result(QpStatus::Optimal, None);
            };
            let n_p = self.normal(p);
            let mut u_p = 0.0;
            loop {
                if self.iterations >= self.config.max_iterations {
                    return self.result(QpStatus::IterationLimit, None);
                }
                self.iterations += 1;
                let q = self.active.len();
                let dvec = self.jm.tr_mul(&n_p);
                let d2 = dvec.rows(q, k - q);
                let z = self.jm.columns(q, k - q) * d2;
                let r = if q == 0 {
                    DVector::zeros(0)
                } else {
                    self.r
                        .view((0, 0), (q, q))
                        .solve_upper_triangular(&dvec.rows(0, q).into_owned())
                        .expect("R has a nonzero diagonal")
                };

                let r_scale = r.amax().max(f64::MIN_POSITIVE);
                let mut t1 = f64::INFINITY;
                let mut drop_at = None;
                for j in 0..q {
                    if r[j] > 1e-14 * r_scale {
                        let ratio = self.multipliers[j] / r[j];
                        if ratio < t1 {
                            t1 = ratio;
                            drop_at = Some(j);
                        }
                    }
                }
                let full_step = d2.norm() > 1e-12 * dvec.norm().max(f64::MIN_POSITIVE);
                let t2 = if full_step {
                    -self.slack(p) / d2.norm_squared()
                } else {
                    f64::INFINITY
                };

                if t1.is_infinite() && t2.is_infinite() {
                    let mut cert: Vec<(usize, f64)> = self.active.iter().zip(r.iter()).map(|(&i, &rj)| (i, -rj)).collect();
                    cert.push((p, 1.0));
                    return self.result(QpStatus::Infeasible, Some(cert));
                }
                if t2.is_infinite() {
                    for j in 0..q {
                        self.multipliers[j] -= t1 * r[j];
                    }
                    u_p += t1;
                    self.drop(drop_at.expect("finite partial step has an index"));
                    continue;
                }
                let t = t1.min(t2);
                self.w += &z * t;
                for j in 0..q {
                    self.multipliers[j] -= t * r[j];
                }
                u_p += t;
                if t2 <= t1 {
                    self.add(p, dvec, u_p);
                    break;
                }
                self.drop(drop_at.expect("partial step has an index"));
            }
        }
    }

    fn add(&mut self, p: usize, mut dvec: DVector<f64>, multiplier: f64) {
        let k = self.w.len();
        let q = self.active.len();
        for j in (q + 1..k).rev() {
            let (c, s) = givens(dvec[j - 1], dvec[j]);
            if s == 0.0 {
                continue;
            }
            dvec[j - 1] = c * dvec[j - 1] + s * dvec[j];
            dvec[j] = 0.0;
            rotate_columns(&mut self.jm, j - 1, j, c, s);
        }
        for i in 0..=q {
            self.r[(i, q)] = dvec[i];
        }
        self.active.push(p);
        self.multipliers.push(multiplier);
    }

    fn drop(&mut self, l: usize) {
        let q = self.active.len();
        self.active.remove(l);
        self.multipliers.remove(l);
        for col in l..q - 1 {
            for i in 0..q {
                self.r[(i, col)] = self.r[(i, col + 1)];
            }
        }
        for i in 0..q {
            self.r[(i, q - 1)] = 0.0;
        }
        for j in l..q - 1 {
            let (c, s) = givens(self.r[(j, j)], self.r[(j + 1, j)]);
            if s == 0.0 {
                continue;
            }
            for col in j..q - 1 {
                let (x, y) = (self.r[(j, col)], self.r[(j + 1, col)]);
                self.r[(j, col)] = c * x + s * y;
                self.r[(j + 1, col)] = -s * x + c * y;
            }
            self.r[(j + 1, j)] = 0.0;
            rotate_columns(&mut self.jm, j, j + 1, c, s);
        }
    }
}

/// `(c, s)` with `[c s; −s c]·[a; b] = [h; 0]`.
fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        return (1.0, 0.0);
    }
    let h = a.hypot(b);
    (a / h, b / h)
}

fn rotate_columns(m: &mut DMatrix<f64>, i: usize, j: usize, c: f64, s: f64) {
    for row in 0..m.nrows() {
        let (x, y) = (m[(row, i)], m[(row, j)]);
        m[(row, i)] = c * x + s * y;
        m[(row, j)] = -s * x + c * y;
    }
}

/// Independent reference solvers for small inequality-constrained problems.
pub mod oracle {
    use super::QpProblem;
    use nalgebra::{DMatrix, DVector};

    /// Exact solution by enumerating every candidate active set of size at
    /// most `d`. Exponential in the number of rows; intended for `m ≤ 12`.
    pub fn enumerate_active_sets(problem: &QpProblem, tol: f64) -> Option<DVector<f64>> {
        let d = problem.dim();
        let m = problem.b_in.len();
        assert!(problem.b_eq.is_empty(), "enumeration oracle handles inequalities only");
        for mask in 0u32..(1u32 << m) {
            let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
            if rows.len() > d {
                continue;
            }
            let s = rows.len();
            let mut kkt = DMatrix::zeros(d + s, d + s);
            let mut rhs = DVector::zeros(d + s);
            kkt.view_mut((0, 0), (d, d)).copy_from(&problem.h);
            rhs.rows_mut(0, d).copy_from(&(-&problem.f));
            for (k, &i) in rows.iter().enumerate() {
                kkt.view_mut((d + k, 0), (1, d)).copy_from(&problem.a_in.row(i));
                kkt.view_mut((0, d + k), (d, 1)).copy_from(&problem.a_in.row(i).transpose());
                rhs[d + k] = problem.b_in[i];
            }
            let lu = kkt.full_piv_lu();
            if !lu.is_invertible() {
                continue;
            }
            let Some(x) = lu.solve(&rhs) else { continue };
            let u = x.rows(0, d).into_owned();
            let dual_ok = (0..s).all(|k| x[d + k] >= -tol);
            let primal_ok = (&problem.a_in * &u - &problem.b_in).iter().all(|v| *v <= tol);
            if dual_ok && primal_ok {
                return Some(u);
            }
        }
        None
    }

    /// Accelerated projected gradient on the dual with adaptive restart,
    /// iterated until the projected-gradient step falls below `tol`.
    /// Returns the primal point and the number of iterations used.
    pub fn dual_projected_gradient(problem: &QpProblem, tol: f64, max_iterations: usize) -> Option<(DVector<f64>, usize)> {
        let chol = problem.h.clone().cholesky()?;
        let a = &problem.a_in;
        let hinv_at = chol.solve(&a.transpose());
        let hinv_f = chol.solve(&problem.f);
        let primal = |lambda: &DVector<f64>| -(&hinv_f + &hinv_at * lambda);
        let m = a.nrows();
        if m == 0 {
            return Some((-hinv_f, 0));
        }
        let mm = a * &hinv_at;
        let c = a * &hinv_f + &problem.b_in;
        let lipschitz = mm.clone().symmetric_eigenvalues().max().max(f64::MIN_POSITIVE);
        let step = 1.0 / lipschitz;
        let project = |v: DVector<f64>| v.map(|x| x.max(0.0));
        let mut lambda = DVector::zeros(m);
        let mut y = lambda.clone();
        let mut theta = 1.0f64;
        for it in 0..max_iterations {
            let grad = &mm * &y + &c;
            let next = project(&y - grad * step);
            // gradient-mapping norm at the current iterate
            let g_here = &mm * &next + &c;
            let pg = (&next - project(&next - &g_here * step)).amax() * lipschitz;
            if pg <= tol {
                return Some((primal(&next), it + 1));
            }
            let restart = (&y - &next).dot(&(&next - &lambda)) > 0.0;
            let theta_next = if restart { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt()) };
            y = if restart {
                next.clone()
            } else {
                &next + (&next - &lambda) * ((theta - 1.0) / theta_next)
            };
            theta = theta_next;
            lambda = next;
        }
        None
    }
}
