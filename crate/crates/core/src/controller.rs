//! Task-space control law, parameter adaptation law and the closed loop
//! that runs them.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{
    joint_limit_block, parameter_limit_block, vfi_blocks, evaluate_obstacles, ConstraintError, Obstacles,
    StackedInequalities, VfiBlocks,
};
use crate::dq::{conjugate_matrix8, pose_error, UnitDualQuaternion};
use crate::kinematics::{pose_jacobians, KinematicsError, ParameterBounds, ParameterVector, PoseJacobians, RobotModel};
use crate::measurement::{linearize, MeasureLinearization, MeasureSpaceError, Measurement};
use crate::qp::{build_least_squares_qp, solve, QpError, QpProblem, QpSolution, QpStatus, SolverConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("invalid gains: {0}")]
    InvalidGains(String),
    #[error("{which} QP ended with status {status:?}")]
    QpFailed { which: &'static str, status: QpStatus },
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Measurement(#[from] MeasureSpaceError),
    #[error("no plausible parameters found in {0} tries")]
    NoPlausibleParameters(usize),
}

/// How the estimated task error `x̆` is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskErrorKind {
    /// `vec8(x̂* x_d ∓ 1)` with `G = H⁻₈(x_d) C₈ J`.
    #[default]
    Multiplicative,
    /// `vec8(x̂) − vec8(x_d)` with `G = J`.
    Additive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerGains {
    pub eta_q: f64,
    pub eta_a: f64,
    pub lambda_q: DMatrix<f64>,
    pub lambda_a: DMatrix<f64>,
    pub eta_vfi: f64,
    /// Gronwall gain on joint position limits.
    pub eta_joint: f64,
    /// Gronwall gain on parameter bounds.
    pub eta_param: f64,
    /// Share of the VFI slack given to adaptation.
    pub alpha: f64,
}

impl ControllerGains {
    pub fn validate(&self, n: usize, p: usize) -> Result<(), ControllerError> {
        let bad = |s: String| Err(ControllerError::InvalidGains(s));
        for (name, v) in [
            ("eta_q", self.eta_q),
            ("eta_a", self.eta_a),
            ("eta_vfi", self.eta_vfi),
            ("eta_joint", self.eta_joint),
            ("eta_param", self.eta_param),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        for (name, m, dim) in [("lambda_q", &self.lambda_q, n), ("lambda_a", &self.lambda_a, p)] {
            if m.shape() != (dim, dim) {
                return bad(format!("{name} must be {dim}×{dim}"));
            }
            if m.tr_mul(m).cholesky().is_none() {
                return bad(format!("{name} must be positive definite"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControllerConfig {
    pub gains: ControllerGains,
    pub error_kind: TaskErrorKind,
    pub solver: SolverConfig,
    pub adaptation: bool,
    /// Control period `T` used for the Euler updates.
    pub period: f64,
    /// Shrink `u_â` by halving until the discrete update raises `V` by at
    /// most this slack. Only applied while the robot moves.
    pub lyapunov_guard: Option<f64>,
}

/// Halvings tried by the guard before `u_â` is zeroed.
pub const GUARD_HALVINGS: usize = 30;

/// `x̆` and its Jacobians with respect to `q` and `â`.
#[derive(Clone, Debug)]
pub struct TaskLinearization {
    pub kin: PoseJacobians,
    pub x_breve: DVector<f64>,
    pub g_q: DMatrix<f64>,
    pub g_a: DMatrix<f64>,
}

pub fn linearize_task(
    model: &RobotModel,
    q: &DVector<f64>,
    a: &ParameterVector,
    x_d: &UnitDualQuaternion,
    kind: TaskErrorKind,
) -> Result<TaskLinearization, ControllerError> {
    let kin = pose_jacobians(model, q, a)?;
    let (x_breve, g_q, g_a) = match kind {
        TaskErrorKind::Multiplicative => {
            let e = pose_error(&kin.pose, x_d).vec8();
            let g8 = x_d.dual_quaternion().hamilton_minus() * conjugate_matrix8();
            let g = DMatrix::from_fn(8, 8, |i, j| g8[(i, j)]);
            (DVector::from_column_slice(e.as_slice()), &g * &kin.jq, &g * &kin.ja)
        }
        TaskErrorKind::Additive => {
            let e = kin.pose.vec8() - x_d.vec8();
            (DVector::from_column_slice(e.as_slice()), kin.jq.clone(), kin.ja.clone())
        }
    };
    Ok(TaskLinearization { kin, x_breve, g_q, g_a })
}

/// `V = ½ x̆ᵀx̆`.
pub fn lyapunov(x_breve: &DVector<f64>) -> f64 {
    0.5 * x_breve.norm_squared()
}

/// `x̆ᵀG_q u_q + x̆ᵀG_â u_â`.
pub fn v_dot_estimate(lin: &TaskLinearization, u_q: &DVector<f64>, u_a: &DVector<f64>) -> f64 {
    lin.x_breve.dot(&(&lin.g_q * u_q)) + lin.x_breve.dot(&(&lin.g_a * u_a))
}

/// All inequality blocks at one state.
#[derive(Clone, Debug)]
pub struct ConstraintBlocks {
    pub joints: StackedInequalities,
    pub params: StackedInequalities,
    pub vfi: VfiBlocks,
}

pub fn build_blocks(
    model: &RobotModel,
    q: &DVector<f64>,
    a: &ParameterVector,
    bounds: &ParameterBounds,
    obstacles: &Obstacles,
    gains: &ControllerGains,
) -> Result<ConstraintBlocks, ControllerError> {
    Ok(ConstraintBlocks {
        joints: joint_limit_block(q, model, gains.eta_joint),
        params: parameter_limit_block(a, bounds, gains.eta_param),
        vfi: vfi_blocks(model, q, a, obstacles, gains.eta_vfi, gains.alpha)?,
    })
}

fn stack_rows(parts: &[(&DMatrix<f64>, &DVector<f64>)], cols: usize) -> (DMatrix<f64>, DVector<f64>) {
    let rows: usize = parts.iter().map(|(_, b)| b.len()).sum();
    let mut a = DMatrix::zeros(rows, cols);
    let mut b = DVector::zeros(rows);
    let mut r = 0;
    for (m, v) in parts {
        a.view_mut((r, 0), (v.len(), cols)).copy_from(*m);
        b.rows_mut(r, v.len()).copy_from(*v);
        r += v.len();
    }
    (a, b)
}

/// The task-space QP: `min ‖G_q u + η_q x̆‖² + ‖Λ_q u‖²` subject to VFI and
/// joint-limit rows.
pub fn task_qp(lin: &TaskLinearization, blocks: &ConstraintBlocks, gains: &ControllerGains) -> Result<QpProblem, ControllerError> {
    let n = lin.g_q.ncols();
    let p = build_least_squares_qp(&lin.g_q, gains.eta_q, &lin.x_breve, &gains.lambda_q)?;
    let (a, b) = stack_rows(
        &[
            (&blocks.vfi.task.matrix, &blocks.vfi.task.bound),
            (&blocks.joints.matrix, &blocks.joints.bound),
        ],
        n,
    );
    Ok(p.with_inequalities(a, b))
}

/// Index of the Lyapunov row in the adaptation QP's inequalities.
pub fn lyapunov_row_index(blocks: &ConstraintBlocks) -> usize {
    blocks.vfi.adaptation.rows() + blocks.params.rows()
}

/// The adaptation QP: `min ‖J_ŷ u + η_â ỹ‖² + ‖Λ_â u‖²` subject to VFI,
/// parameter-bound and Lyapunov rows and `N_â u = 0`.
pub fn adaptation_qp(
    lin: &TaskLinearization,
    meas: &MeasureLinearization,
    blocks: &ConstraintBlocks,
    gains: &ControllerGains,
) -> Result<QpProblem, ControllerError> {
    let p_dim = lin.g_a.ncols();
    let qp = build_least_squares_qp(&meas.jacobian_a, gains.eta_a, &meas.error.0, &gains.lambda_a)?;
    let lyap = DMatrix::from_row_slice(1, p_dim, (lin.x_breve.transpose() * &lin.g_a).as_slice());
    let zero = DVector::zeros(1);
    let (a, b) = stack_rows(
        &[
            (&blocks.vfi.adaptation.matrix, &blocks.vfi.adaptation.bound),
            (&blocks.params.matrix, &blocks.params.bound),
            (&lyap, &zero),
        ],
        p_dim,
    );
    let rows = meas.projector.nrows();
    Ok(qp
        .with_inequalities(a, b)
        .with_equalities(meas.projector.clone(), DVector::zeros(rows)))
}

fn checked(which: &'static str, sol: QpSolution) -> Result<QpSolution, ControllerError> {
    match sol.status {
        QpStatus::Optimal => Ok(sol),
        status => Err(ControllerError::QpFailed { which, status }),
    }
}

/// Solves the task QP for `u_q`.
pub fn task_control_step(
    lin: &TaskLinearization,
    blocks: &ConstraintBlocks,
    config: &ControllerConfig,
) -> Result<QpSolution, ControllerError> {
    checked("task", solve(&task_qp(lin, blocks, &config.gains)?, &config.solver)?)
}

/// Solves the adaptation QP for `u_â`.
pub fn adaptation_step(
    lin: &TaskLinearization,
    meas: &MeasureLinearization,
    blocks: &ConstraintBlocks,
    config: &ControllerConfig,
) -> Result<QpSolution, ControllerError> {
    checked("adaptation", solve(&adaptation_qp(lin, meas, blocks, &config.gains)?, &config.solver)?)
}

/// Status of one QP in a cycle, `Skipped` when it was not run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepStatus {
    Solved(QpStatus),
    Skipped,
}

impl StepStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            StepStatus::Solved(s) => s.as_str(),
            StepStatus::Skipped => "skipped",
        }
    }
}

/// Controls and diagnostics of one cycle.
#[derive(Clone, Debug)]
pub struct ControlStep {
    pub u_q: DVector<f64>,
    pub u_a: DVector<f64>,
    pub x_breve: DVector<f64>,
    pub v: f64,
    pub v_dot_estimate: f64,
    /// `x̆ᵀG_â u_â`.
    pub lyapunov_term: f64,
    pub y_tilde: Option<DVector<f64>>,
    /// `‖N_â u_â‖∞`, zero when adaptation was skipped.
    pub projector_residual: f64,
    pub max_h: f64,
    pub min_clearance: f64,
    pub task_status: StepStatus,
    pub adapt_status: StepStatus,
    /// Factor the guard applied to the adaptation QP solution.
    pub guard_scale: f64,
}

/// Static pieces of the controller.
#[derive(Clone, Debug)]
pub struct AdaptiveController {
    pub model: RobotModel,
    pub bounds: ParameterBounds,
    pub obstacles: Obstacles,
    pub config: ControllerConfig,
}

impl AdaptiveController {
    pub fn new(
        model: RobotModel,
        bounds: ParameterBounds,
        obstacles: Obstacles,
        config: ControllerConfig,
    ) -> Result<Self, ControllerError> {
        config.gains.validate(model.dof(), model.parameter_count())?;
        if !(config.period > 0.0 && config.period.is_finite()) {
            return Err(ControllerError::InvalidGains(format!("period must be positive, got {}", config.period)));
        }
        if bounds.len() != model.parameter_count() {
            return Err(ControllerError::InvalidGains(format!(
                "parameter bounds have {} entries, expected {}",
                bounds.len(),
                model.parameter_count()
            )));
        }
        Ok(Self {
            model,
            bounds,
            obstacles,
            config,
        })
    }

    /// One cycle at `(q, â)`. With `move_robot = false` the task QP is
    /// skipped and `u_q = 0`.
    pub fn step(
        &self,
        q: &DVector<f64>,
        a: &ParameterVector,
        x_d: &UnitDualQuaternion,
        measurement: Option<&Measurement>,
        move_robot: bool,
    ) -> Result<ControlStep, ControllerError> {
        let lin = linearize_task(&self.model, q, a, x_d, self.config.error_kind)?;
        let blocks = build_blocks(&self.model, q, a, &self.bounds, &self.obstacles, &self.config.gains)?;
        let (u_q, task_status) = if move_robot {
            let sol = task_control_step(&lin, &blocks, &self.config)?;
            (sol.u, StepStatus::Solved(sol.status))
        } else {
            (DVector::zeros(self.model.dof()), StepStatus::Skipped)
        };
        let p = self.model.parameter_count();
        let meas = measurement.map(|y| linearize(&lin.kin, y)).transpose()?;
        let (u_a, adapt_status, projector_residual) = match &meas {
            Some(meas) if self.config.adaptation => {
                let sol = adaptation_step(&lin, meas, &blocks, &self.config)?;
                let residual = if meas.projector.nrows() == 0 {
                    0.0
                } else {
                    (&meas.projector * &sol.u).amax()
                };
                (sol.u, StepStatus::Solved(sol.status), residual)
            }
            _ => (DVector::zeros(p), StepStatus::Skipped, 0.0),
        };
        let y_tilde = meas.map(|m| m.error.0);
        let mut u_a = u_a;
        let mut guard_scale = 1.0;
        if let (true, Some(slack)) = (move_robot && u_a.amax() > 0.0, self.config.lyapunov_guard) {
            guard_scale = self.guard(q, a, x_d, &u_q, &u_a, lyapunov(&lin.x_breve) + slack)?;
            u_a *= guard_scale;
        }
        Ok(ControlStep {
            v: lyapunov(&lin.x_breve),
            v_dot_estimate: v_dot_estimate(&lin, &u_q, &u_a),
            lyapunov_term: lin.x_breve.dot(&(&lin.g_a * &u_a)),
            x_breve: lin.x_breve,
            y_tilde,
            projector_residual,
            max_h: blocks.vfi.max_h(),
            min_clearance: blocks.vfi.min_clearance(),
            u_q,
            u_a,
            task_status,
            adapt_status,
            guard_scale,
        })
    }

    /// Largest `β ∈ {1, ½, ¼, …}` with `V(q + T u_q, â + βT u_â) ≤ limit`,
    /// or zero. Every adaptation constraint has a nonnegative bound at a
    /// feasible state, so `β u_â` stays feasible.
    fn guard(
        &self,
        q: &DVector<f64>,
        a: &ParameterVector,
        x_d: &UnitDualQuaternion,
        u_q: &DVector<f64>,
        u_a: &DVector<f64>,
        limit: f64,
    ) -> Result<f64, ControllerError> {
        let t = self.config.period;
        let q_next = q + u_q * t;
        let mut beta = 1.0;
        for _ in 0..GUARD_HALVINGS {
            let a_next = ParameterVector(&a.0 + u_a * (beta * t));
            let x_hat = crate::kinematics::fkm(&self.model, &q_next, &a_next)?;
            let e = match self.config.error_kind {
                TaskErrorKind::Multiplicative => pose_error(&x_hat, x_d).vec8(),
                TaskErrorKind::Additive => x_hat.vec8() - x_d.vec8(),
            };
            if 0.5 * e.norm_squared() <= limit {
                return Ok(beta);
            }
            beta *= 0.5;
        }
        Ok(0.0)
    }
}

/// True iff every VFI constraint of the estimated model holds, `h ⪯ 0`.
pub fn is_plausible(
    model: &RobotModel,
    q: &DVector<f64>,
    a: &ParameterVector,
    obstacles: &Obstacles,
) -> Result<bool, ControllerError> {
    let (h, _) = evaluate_obstacles(model, q, a, obstacles)?;
    Ok(h.iter().all(|v| *v <= 0.0))
}

/// Returns `nominal` if it is plausible, otherwise uniform samples within
/// `bounds` until one is.
pub fn sample_plausible(
    model: &RobotModel,
    q: &DVector<f64>,
    nominal: &ParameterVector,
    bounds: &ParameterBounds,
    obstacles: &Obstacles,
    seed: u64,
    max_tries: usize,
) -> Result<ParameterVector, ControllerError> {
    if is_plausible(model, q, nominal, obstacles)? {
        return Ok(nominal.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..max_tries {
        let sample = ParameterVector(DVector::from_fn(bounds.len(), |i, _| {
            let (lo, hi) = (bounds.min[i], bounds.max[i]);
            if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                lo
            }
        }));
        if is_plausible(model, q, &sample, obstacles)? {
            return Ok(sample);
        }
    }
    Err(ControllerError::NoPlausibleParameters(max_tries))
}

/// The robot side of the loop.
pub trait Plant {
    fn configuration(&self) -> DVector<f64>;
    /// Sensor reading at time `t`; `None` when invalid.
    fn measure(&mut self, t: f64) -> Option<Measurement>;
    /// Commands the next configuration.
    fn apply(&mut self, q: &DVector<f64>);
}

#[derive(Clone, Debug, PartialEq)]
pub struct Setpoint {
    pub pose: UnitDualQuaternion,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunPlan {
    pub setpoints: Vec<Setpoint>,
    /// Adaptation-only cycles before the first setpoint.
    pub warmup_steps: usize,
    /// Move on once `‖x̆‖` stays below this for [`EARLY_EXIT_STEPS`] cycles.
    pub early_exit: Option<f64>,
}

pub const EARLY_EXIT_STEPS: usize = 50;

#[derive(Clone, Debug)]
pub struct StepRecord {
    pub index: usize,
    pub t: f64,
    /// Setpoint being tracked; warmup steps reference the first setpoint.
    pub setpoint: usize,
    pub warmup: bool,
    pub q: DVector<f64>,
    pub a: ParameterVector,
    pub measurement: Option<Measurement>,
    pub control: ControlStep,
    pub elapsed_s: f64,
}

#[derive(Clone, Debug)]
pub struct RunLog {
    pub records: Vec<StepRecord>,
    pub final_q: DVector<f64>,
    pub final_a: ParameterVector,
    pub fault: Option<(usize, ControllerError)>,
}

/// Runs the plan from `a0`. A controller error stops the loop and is
/// returned in the log alongside every record produced before it.
pub fn run_loop<P: Plant>(
    controller: &AdaptiveController,
    plant: &mut P,
    a0: &ParameterVector,
    plan: &RunPlan,
    max_steps: Option<usize>,
) -> RunLog {
    let mut a = a0.clone();
    let mut records = Vec::new();
    let mut index = 0usize;
    let budget = max_steps.unwrap_or(usize::MAX);
    let phases = plan
        .setpoints
        .first()
        .map(|_| (0usize, plan.warmup_steps, true))
        .into_iter()
        .chain(plan.setpoints.iter().enumerate().map(|(i, s)| (i, s.steps, false)));
    let mut fault = None;
    'outer: for (sp, steps, warmup) in phases {
        let x_d = plan.setpoints[sp].pose;
        let mut below = 0usize;
        for _ in 0..steps {
            if index >= budget {
                break 'outer;
            }
            let t = index as f64 * controller.config.period;
            let q = plant.configuration();
            let y = plant.measure(t);
            let started = Instant::now();
            let control = match controller.step(&q, &a, &x_d, y.as_ref(), !warmup) {
                Ok(c) => c,
                Err(e) => {
                    fault = Some((index, e));
                    break 'outer;
                }
            };
            let mut a_next = ParameterVector(&a.0 + &control.u_a * controller.config.period);
            a_next.project(&controller.bounds);
            let q_next = &q + &control.u_q * controller.config.period;
            let elapsed_s = started.elapsed().as_secs_f64();
            let small = control.x_breve.norm();
            records.push(StepRecord {
                index,
                t,
                setpoint: sp,
                warmup,
                q,
                a: a.clone(),
                measurement: y,
                control,
                elapsed_s,
            });
            plant.apply(&q_next);
            a = a_next;
            index += 1;
            if let (false, Some(threshold)) = (warmup, plan.early_exit) {
                below = if small < threshold { below + 1 } else { 0 };
                if below >= EARLY_EXIT_STEPS {
                    break;
                }
            }
        }
    }
    RunLog {
        records,
        final_q: plant.configuration(),
        final_a: a,
        fault,
    }
}
