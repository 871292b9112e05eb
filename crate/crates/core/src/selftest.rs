//! Randomized oracle suites behind the `check-jacobians`, `qp-selftest` and
//! `lemma1-test` subcommands.

use std::fmt;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::constraints::{evaluate_obstacles, vfi_blocks, Line, Obstacles, Plane, SpherePrimitive};
use crate::kinematics::{fkm, is_angular_param, pose_jacobians, sub_jacobians, ChainFrame, ParameterVector, RobotModel};
use crate::measurement::{extract, linearize, measurement_error, MeasureSpace};
use crate::qp::{oracle, solve, QpProblem, QpStatus, SolverConfig};

pub const JACOBIAN_LIMIT: f64 = 1e-5;
pub const QP_SOLUTION_LIMIT: f64 = 1e-7;
pub const QP_KKT_LIMIT: f64 = 1e-8;
pub const LEMMA_SLACK: f64 = 1e-12;

const FD_STEP: f64 = 1e-6;

/// Worst relative error per Jacobian family.
#[derive(Clone, Debug)]
pub struct JacobianReport {
    pub states: usize,
    pub families: Vec<(String, f64)>,
}

impl JacobianReport {
    pub fn max(&self) -> f64 {
        self.families.iter().map(|f| f.1).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max() <= JACOBIAN_LIMIT
    }
}

impl fmt::Display for JacobianReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} random VS050 states, central differences with step {FD_STEP:e}", self.states)?;
        for (name, e) in &self.families {
            writeln!(f, "  {name:<28} max relative error {e:.3e}")?;
        }
        write!(
            f,
            "{}: max {:.3e} (limit {JACOBIAN_LIMIT:e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.max()
        )
    }
}

fn central_difference<F: Fn(&DVector<f64>) -> DVector<f64>>(f: F, x: &DVector<f64>) -> DMatrix<f64> {
    let rows = f(x).len();
    let mut j = DMatrix::zeros(rows, x.len());
    for k in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += FD_STEP;
        xm[k] -= FD_STEP;
        j.set_column(k, &((f(&xp) - f(&xm)) / (2.0 * FD_STEP)));
    }
    j
}

/// `‖A − B‖max / max(1, ‖B‖max)`.
fn relative_error(analytic: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    if analytic.is_empty() {
        return 0.0;
    }
    (analytic - reference).amax() / reference.amax().max(1.0)
}

/// A configuration inside 80% of the joint range and parameters within the
/// usual DH and offset bounds around the nominal values.
pub fn random_state(rng: &mut ChaCha8Rng, model: &RobotModel) -> (DVector<f64>, ParameterVector) {
    let n = model.dof();
    let q = DVector::from_fn(n, |i, _| {
        let mid = 0.5 * (model.q_min[i] + model.q_max[i]);
        mid + 0.8 * (rng.random_range(model.q_min[i]..model.q_max[i]) - mid)
    });
    let mut a = model.nominal_parameters();
    for k in 0..a.len() {
        let dh = k < 4 * n;
        let width = match (dh, is_angular_param(n, k)) {
            (true, true) => 1f64.to_radians(),
            (true, false) => 0.001,
            (false, true) => 20f64.to_radians(),
            (false, false) => 0.1,
        };
        a.0[k] += rng.random_range(-width..width);
    }
    (q, a)
}

/// Spheres on several frames plus lines and planes near the arm.
fn random_obstacles(rng: &mut ChaCha8Rng) -> Obstacles {
    let mut v3 = |s: f64| Vector3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s));
    let frames = [ChainFrame::Base, ChainFrame::Joint(2), ChainFrame::Joint(4), ChainFrame::Effector];
    let spheres = frames
        .iter()
        .map(|f| SpherePrimitive::new(*f, v3(0.05), 0.03).expect("positive radius"))
        .collect();
    let lines = (0..2)
        .map(|_| Line::new(v3(0.5), v3(1.0).normalize(), 0.02).expect("unit direction"))
        .collect();
    let planes = (0..2)
        .map(|_| Plane::new(v3(1.0).normalize(), -0.5, 0.02).expect("unit normal"))
        .collect();
    Obstacles { spheres, lines, planes }
}

/// Pose, sub-, measure-space and VFI distance Jacobians against central
/// differences on `states` random states.
pub fn check_jacobians(seed: u64, states: usize) -> JacobianReport {
    let model = RobotModel::vs050();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names = [
        "pose wrt q",
        "pose wrt a",
        "rotation wrt q",
        "translation wrt q",
        "distance wrt q",
        "measure pose wrt a",
        "measure rotation wrt a",
        "measure translation wrt a",
        "measure distance wrt a",
        "measure pose wrt q",
        "vfi distance wrt q",
        "vfi distance wrt a",
    ];
    let mut worst = vec![0.0f64; names.len()];
    let kinds = [MeasureSpace::Pose, MeasureSpace::Rotation, MeasureSpace::Translation, MeasureSpace::Distance];
    for _ in 0..states {
        let (q, a) = random_state(&mut rng, &model);
        // keep the measured pose near the estimate, away from the sign tie
        let (_, a_true) = random_state(&mut rng, &model);
        let q_true = q.map(|v| v + rng.random_range(-0.1..0.1));
        let obstacles = random_obstacles(&mut rng);
        let vec8 = |qq: &DVector<f64>, aa: &ParameterVector| {
            DVector::from_column_slice(fkm(&model, qq, aa).expect("state dimensions").vec8().as_slice())
        };
        let kin = pose_jacobians(&model, &q, &a).expect("state dimensions");
        let mut record = |i: usize, e: f64| worst[i] = worst[i].max(e);
        record(0, relative_error(&kin.jq, &central_difference(|qq| vec8(qq, &a), &q)));
        record(1, relative_error(&kin.ja, &central_difference(|aa| vec8(&q, &ParameterVector(aa.clone())), &a.0)));

        let rt = |qq: &DVector<f64>| {
            let x = fkm(&model, qq, &a).expect("state dimensions");
            let t = x.translation();
            (x.rotation().vec4(), t)
        };
        let sub = sub_jacobians(&kin.pose, &kin.jq);
        record(2, relative_error(&sub.rotation, &central_difference(|qq| DVector::from_column_slice(rt(qq).0.as_slice()), &q)));
        let fd_t = central_difference(|qq| DVector::from_column_slice(rt(qq).1.as_slice()), &q);
        record(3, relative_error(&sub.translation, &fd_t));
        if let Ok(jd) = &sub.distance {
            let fd = central_difference(|qq| DVector::from_element(1, rt(qq).1.norm()), &q);
            record(4, relative_error(&DMatrix::from_row_slice(1, jd.len(), jd.as_slice()), &fd));
        }

        let truth = fkm(&model, &q_true, &a_true).expect("state dimensions");
        for (slot, kind) in kinds.iter().enumerate() {
            let y = extract(*kind, &truth).expect("measurable kind");
            let lin = linearize(&kin, &y).expect("matching kinds");
            let err = |qq: &DVector<f64>, aa: &ParameterVector| {
                let est = extract(*kind, &fkm(&model, qq, aa).expect("state dimensions")).expect("measurable kind");
                measurement_error(&est, &lin.measured).expect("matching kinds").0
            };
            record(5 + slot, relative_error(&lin.jacobian_a, &central_difference(|aa| err(&q, &ParameterVector(aa.clone())), &a.0)));
            if *kind == MeasureSpace::Pose {
                record(9, relative_error(&lin.jacobian_q, &central_difference(|qq| err(qq, &a), &q)));
            }
        }

        let blocks = vfi_blocks(&model, &q, &a, &obstacles, 1.0, 0.5).expect("state dimensions");
        let h = |qq: &DVector<f64>, aa: &ParameterVector| evaluate_obstacles(&model, qq, aa, &obstacles).expect("state dimensions").0;
        // B = −dD/dx = dh/dx
        record(10, relative_error(&blocks.task.matrix, &central_difference(|qq| h(qq, &a), &q)));
        record(11, relative_error(&blocks.adaptation.matrix, &central_difference(|aa| h(&q, &ParameterVector(aa.clone())), &a.0)));
    }
    JacobianReport {
        states,
        families: names.iter().map(|s| s.to_string()).zip(worst).collect(),
    }
}

/// One random problem and how the solver fared against the oracle.
#[derive(Clone, Debug)]
pub struct QpComparison {
    pub problem: QpProblem,
    pub solver: DVector<f64>,
    pub oracle: Option<DVector<f64>>,
    pub error: f64,
    pub kkt: f64,
}

#[derive(Clone, Debug)]
pub struct QpReport {
    pub problems: usize,
    pub max_error: f64,
    pub max_kkt: f64,
    pub non_optimal: usize,
    pub oracle_failures: usize,
    pub worst: Option<QpComparison>,
}

impl QpReport {
    pub fn passed(&self) -> bool {
        self.non_optimal == 0 && self.oracle_failures == 0 && self.max_error <= QP_SOLUTION_LIMIT && self.max_kkt <= QP_KKT_LIMIT
    }
}

impl fmt::Display for QpReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} random feasible problems, 2 to 4 variables, 0 to 8 inequality rows", self.problems)?;
        writeln!(f, "  max |u - u_oracle|   {:.3e} (limit {QP_SOLUTION_LIMIT:e})", self.max_error)?;
        writeln!(f, "  max KKT residual     {:.3e} (limit {QP_KKT_LIMIT:e})", self.max_kkt)?;
        writeln!(f, "  non-optimal returns  {}", self.non_optimal)?;
        writeln!(f, "  oracle failures      {}", self.oracle_failures)?;
        if let Some(w) = &self.worst {
            writeln!(f, "  worst problem:")?;
            writeln!(f, "    H = {:?}", w.problem.h.as_slice())?;
            writeln!(f, "    f = {:?}", w.problem.f.as_slice())?;
            writeln!(f, "    A = {:?} (column major, {} rows)", w.problem.a_in.as_slice(), w.problem.a_in.nrows())?;
            writeln!(f, "    b = {:?}", w.problem.b_in.as_slice())?;
            writeln!(f, "    solver u = {:?}", w.solver.as_slice())?;
            writeln!(f, "    oracle u = {:?}", w.oracle.as_ref().map(|o| o.as_slice().to_vec()))?;
        }
        write!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// A strictly convex problem whose inequalities hold at a random point.
/// Some problems repeat a row to exercise degenerate active sets.
pub fn random_qp(rng: &mut ChaCha8Rng) -> QpProblem {
    let d = rng.random_range(2..=4);
    let m = rng.random_range(0..=8);
    let g = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let h = g.tr_mul(&g) + DMatrix::identity(d, d) * 0.1;
    let h = (&h + h.transpose()) * 0.5;
    let f = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
    let mut a = DMatrix::from_fn(m, d, |_, _| rng.random_range(-1.0..1.0));
    if m >= 2 && rng.random_bool(0.1) {
        let row = a.row(0).clone_owned();
        a.set_row(m - 1, &row);
    }
    let point = DVector::from_fn(d, |_, _| rng.random_range(-0.5..0.5));
    let mut b = &a * point + DVector::from_fn(m, |_, _| rng.random_range(0.0..0.5));
    if m >= 2 && a.row(0) == a.row(m - 1) {
        b[m - 1] = b[0];
    }
    QpProblem::new(h, f).with_inequalities(a, b)
}

/// Solver against accelerated dual projected gradient run to `1e-12`.
pub fn qp_selftest(seed: u64, problems: usize) -> QpReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = SolverConfig::default();
    let mut report = QpReport {
        problems,
        max_error: 0.0,
        max_kkt: 0.0,
        non_optimal: 0,
        oracle_failures: 0,
        worst: None,
    };
    for _ in 0..problems {
        let problem = random_qp(&mut rng);
        let sol = solve(&problem, &config).expect("generated problems are well formed");
        if sol.status != QpStatus::Optimal {
            report.non_optimal += 1;
            continue;
        }
        let kkt = sol.kkt.max();
        report.max_kkt = report.max_kkt.max(kkt);
        let reference = oracle::dual_projected_gradient(&problem, 1e-12, 1_000_000).map(|r| r.0);
        let error = match &reference {
            Some(u) => (&sol.u - u).amax(),
            None => {
                report.oracle_failures += 1;
                f64::INFINITY
            }
        };
        if report.worst.as_ref().is_none_or(|w| error > w.error) {
            report.max_error = report.max_error.max(error);
            report.worst = Some(QpComparison { problem, solver: sol.u, oracle: reference, error, kkt });
        }
    }
    report
}

#[derive(Clone, Debug)]
pub struct LemmaReport {
    pub trials: usize,
    pub violations: usize,
    /// Largest `‖t_λ − t‖ − ‖t̂ − t‖`; never positive when the claim holds.
    pub worst_margin: f64,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

impl fmt::Display for LemmaReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} trials, R in (0.1, 2), |t_hat| in [R, 5R], t uniform on the R-sphere", self.trials)?;
        writeln!(f, "  violations   {}", self.violations)?;
        writeln!(f, "  worst margin {:.3e}", self.worst_margin)?;
        write!(f, "{}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
        let n: f64 = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

/// Moving `t̂` radially toward the sphere never increases its distance to
/// any point `t` on the sphere.
pub fn lemma1_test(seed: u64, trials: usize) -> LemmaReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = LemmaReport { trials, violations: 0, worst_margin: f64::NEG_INFINITY };
    for _ in 0..trials {
        let r = rng.random_range(0.1..2.0);
        let t_hat = unit_vector(&mut rng) * r * rng.random_range(1.0..=5.0);
        let t = unit_vector(&mut rng) * r;
        let lambda = rng.random_range(0.0..=1.0);
        let t_lambda =
            crate::measurement::lemma1_step(&t_hat, r, lambda).expect("|t_hat| >= R and lambda in [0, 1]");
        let margin = (t_lambda - t).norm() - (t_hat - t).norm();
        report.worst_margin = report.worst_margin.max(margin);
        if margin > LEMMA_SLACK {
            report.violations += 1;
        }
    }
    report
}
