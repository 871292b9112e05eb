//! Closed-loop simulation against a hidden true robot, CSV logging and the
//! run summary.

use std::io::Write;

use nalgebra::{DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::constraints::evaluate_obstacles;
use crate::controller::{
    run_loop, sample_plausible, AdaptiveController, ControllerError, Plant, RunPlan, Setpoint, StepRecord,
};
use crate::dq::{pose_error, rotation_error, PureQuaternion, UnitDualQuaternion, UnitQuaternion};
use crate::kinematics::{fkm, ParameterVector, RobotModel};
use crate::measurement::{extract, MeasureSpace, Measurement};
use crate::scenario::{NoiseModel, Scenario};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("setup failed: {0}")]
    Setup(ControllerError),
    #[error("cannot write log: {0}")]
    Io(#[from] std::io::Error),
}

/// The hidden robot: the nominal structure with the true parameters.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub model: RobotModel,
    pub a: ParameterVector,
}

impl GroundTruth {
    pub fn pose(&self, q: &DVector<f64>) -> UnitDualQuaternion {
        fkm(&self.model, q, &self.a).expect("configuration has the model's dimension")
    }
}

/// Small rotation `exp(δ/2)` with `δ ~ N(0, σ²I₃)` as an axis-angle vector.
fn rotation_noise(sigma: f64, rng: &mut ChaCha8Rng) -> UnitQuaternion {
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and nonnegative");
    let delta = Vector3::from_fn(|_, _| normal.sample(rng));
    let angle = delta.norm();
    if angle == 0.0 {
        UnitQuaternion::IDENTITY
    } else {
        UnitQuaternion::from_axis_angle(&(delta / angle), angle)
    }
}

fn gaussian3(sigma: f64, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and nonnegative");
    Vector3::from_fn(|_, _| normal.sample(rng))
}

/// What the sensor reports for the true pose at time `t`: `None` inside a
/// dropout window or for [`MeasureSpace::None`]. Noise is only drawn for
/// valid readings, and only for nonzero deviations.
pub fn synthesize_measurement(
    true_pose: &UnitDualQuaternion,
    space: MeasureSpace,
    noise: &NoiseModel,
    t: f64,
    dropout: &[(f64, f64)],
    rng: &mut ChaCha8Rng,
) -> Option<Measurement> {
    if dropout.iter().any(|&(a, b)| t >= a && t < b) {
        return None;
    }
    let exact = extract(space, true_pose)?;
    if noise.is_zero() {
        return Some(exact);
    }
    let noisy_r = |r: UnitQuaternion, rng: &mut ChaCha8Rng| {
        if noise.rotation > 0.0 {
            rotation_noise(noise.rotation, rng) * r
        } else {
            r
        }
    };
    let noisy_t = |t: Vector3<f64>, rng: &mut ChaCha8Rng| {
        if noise.translation > 0.0 {
            t + gaussian3(noise.translation, rng)
        } else {
            t
        }
    };
    Some(match exact {
        Measurement::Pose(x) => {
            let r = noisy_r(x.rotation(), rng);
            let t = noisy_t(x.translation(), rng);
            Measurement::Pose(UnitDualQuaternion::from_rotation_translation(&r, &t))
        }
        Measurement::Rotation(r) => Measurement::Rotation(noisy_r(r, rng)),
        Measurement::Translation(t) => Measurement::Translation(PureQuaternion::from_vec3(noisy_t(t.vec3(), rng))),
        Measurement::Distance(d) => {
            let e = if noise.distance > 0.0 {
                Normal::new(0.0, noise.distance).expect("finite sigma").sample(rng)
            } else {
                0.0
            };
            Measurement::Distance((d + e).max(0.0))
        }
    })
}

/// The simulated robot: integrates commanded configurations exactly and
/// reads its sensor from the hidden model.
pub struct SimulatedRobot<'a> {
    pub truth: &'a GroundTruth,
    pub q: DVector<f64>,
    space: MeasureSpace,
    noise: NoiseModel,
    dropout: Vec<(f64, f64)>,
    rng: ChaCha8Rng,
}

impl<'a> SimulatedRobot<'a> {
    pub fn new(truth: &'a GroundTruth, scenario: &Scenario, seed: u64) -> Self {
        Self {
            truth,
            q: scenario.q0.clone(),
            space: scenario.space,
            noise: scenario.noise.clone(),
            dropout: scenario.dropout.clone(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Plant for SimulatedRobot<'_> {
    fn configuration(&self) -> DVector<f64> {
        self.q.clone()
    }

    fn measure(&mut self, t: f64) -> Option<Measurement> {
        let x = self.truth.pose(&self.q);
        synthesize_measurement(&x, self.space, &self.noise, t, &self.dropout, &mut self.rng)
    }

    fn apply(&mut self, q: &DVector<f64>) {
        self.q = q.clone();
    }
}

/// One logged control cycle.
#[derive(Clone, Debug)]
pub struct LogRow {
    pub t: f64,
    pub q: DVector<f64>,
    pub a: DVector<f64>,
    pub err_x_real: f64,
    pub err_x_est: f64,
    /// `‖ỹ‖`, NaN without a valid measurement.
    pub err_y: f64,
    pub err_r_real: f64,
    pub err_r_meas: f64,
    pub err_t_real: f64,
    pub err_t_meas: f64,
    pub err_d_real: f64,
    pub err_d_meas: f64,
    /// Estimated model, metres; infinite without obstacles.
    pub min_clearance: f64,
    pub norm_uq: f64,
    pub norm_ua: f64,
    pub qp_task_status: &'static str,
    pub qp_adapt_status: &'static str,
    pub meas_valid: bool,
}

/// Quantities kept in memory next to the CSV row.
#[derive(Clone, Debug)]
pub struct Diagnostics {
    pub setpoint: usize,
    pub warmup: bool,
    pub v: f64,
    pub v_dot_estimate: f64,
    pub lyapunov_term: f64,
    pub projector_residual: f64,
    pub guard_scale: f64,
    pub y_tilde: Option<DVector<f64>>,
    pub max_h_estimated: f64,
    pub max_h_real: f64,
    pub min_clearance_real: f64,
    pub elapsed_s: f64,
}

#[derive(Clone, Debug)]
pub struct SimulationOutcome {
    pub rows: Vec<LogRow>,
    pub diagnostics: Vec<Diagnostics>,
    pub initial_estimate: ParameterVector,
    pub final_estimate: ParameterVector,
    pub truth: ParameterVector,
    /// Step index and error that aborted the run.
    pub fault: Option<(usize, ControllerError)>,
}

fn real_errors(x: &UnitDualQuaternion, x_hat: &UnitDualQuaternion, x_d: &UnitDualQuaternion) -> [f64; 8] {
    let (t, t_hat, t_d) = (x.translation(), x_hat.translation(), x_d.translation());
    [
        pose_error(x, x_d).split_norm(),
        pose_error(x_hat, x_d).split_norm(),
        rotation_error(&x.rotation(), &x_d.rotation()).norm(),
        rotation_error(&x_hat.rotation(), &x.rotation()).norm(),
        (t - t_d).norm(),
        (t_hat - t).norm(),
        (t.norm() - t_d.norm()).abs(),
        (t_hat.norm() - t.norm()).abs(),
    ]
}

fn log_row(
    rec: &StepRecord,
    truth: &GroundTruth,
    x_d: &UnitDualQuaternion,
    controller: &AdaptiveController,
) -> Result<(LogRow, Diagnostics), ControllerError> {
    let x = truth.pose(&rec.q);
    let x_hat = fkm(&controller.model, &rec.q, &rec.a)?;
    let e = real_errors(&x, &x_hat, x_d);
    let c = &rec.control;
    let (h_real, clearance_real) = evaluate_obstacles(&truth.model, &rec.q, &truth.a, &controller.obstacles)?;
    let row = LogRow {
        t: rec.t,
        q: rec.q.clone(),
        a: rec.a.0.clone(),
        err_x_real: e[0],
        err_x_est: e[1],
        err_y: c.y_tilde.as_ref().map_or(f64::NAN, |y| y.norm()),
        err_r_real: e[2],
        err_r_meas: e[3],
        err_t_real: e[4],
        err_t_meas: e[5],
        err_d_real: e[6],
        err_d_meas: e[7],
        min_clearance: c.min_clearance,
        norm_uq: c.u_q.norm(),
        norm_ua: c.u_a.norm(),
        qp_task_status: c.task_status.as_str(),
        qp_adapt_status: c.adapt_status.as_str(),
        meas_valid: rec.measurement.is_some(),
    };
    let diag = Diagnostics {
        setpoint: rec.setpoint,
        warmup: rec.warmup,
        v: c.v,
        v_dot_estimate: c.v_dot_estimate,
        lyapunov_term: c.lyapunov_term,
        projector_residual: c.projector_residual,
        guard_scale: c.guard_scale,
        y_tilde: c.y_tilde.clone(),
        max_h_estimated: c.max_h,
        max_h_real: h_real.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        min_clearance_real: clearance_real.iter().copied().fold(f64::INFINITY, f64::min),
        elapsed_s: rec.elapsed_s,
    };
    Ok((row, diag))
}

/// Runs a scenario. `seed` overrides the scenario's run seed and
/// `max_steps` caps the total number of cycles.
pub fn simulate(scenario: &Scenario, seed: Option<u64>, max_steps: Option<usize>) -> Result<SimulationOutcome, SimulationError> {
    let seed = seed.unwrap_or(scenario.seed);
    let truth = GroundTruth { model: scenario.model.clone(), a: scenario.truth.clone() };
    let nominal = scenario.model.nominal_parameters();
    let a0 = sample_plausible(
        &scenario.model,
        &scenario.q0,
        &nominal,
        &scenario.bounds,
        &scenario.obstacles,
        seed.wrapping_add(1),
        scenario.plausibility_tries,
    )
    .map_err(SimulationError::Setup)?;
    let controller = AdaptiveController::new(
        scenario.model.clone(),
        scenario.bounds.clone(),
        scenario.obstacles.clone(),
        scenario.config.clone(),
    )
    .map_err(SimulationError::Setup)?;
    let plan = RunPlan {
        setpoints: scenario
            .setpoints
            .iter()
            .map(|s| Setpoint { pose: s.pose, steps: s.steps })
            .collect(),
        warmup_steps: scenario.warmup_steps,
        early_exit: scenario.early_exit,
    };
    let mut robot = SimulatedRobot::new(&truth, scenario, seed);
    let log = run_loop(&controller, &mut robot, &a0, &plan, max_steps);

    let mut rows = Vec::with_capacity(log.records.len());
    let mut diagnostics = Vec::with_capacity(log.records.len());
    let mut fault = log.fault;
    for rec in &log.records {
        match log_row(rec, &truth, &plan.setpoints[rec.setpoint].pose, &controller) {
            Ok((r, d)) => {
                rows.push(r);
                diagnostics.push(d);
            }
            Err(e) => {
                fault.get_or_insert((rec.index, e));
                break;
            }
        }
    }
    Ok(SimulationOutcome {
        rows,
        diagnostics,
        initial_estimate: a0,
        final_estimate: log.final_a,
        truth: truth.a,
        fault,
    })
}

/// Column names in log order.
pub fn csv_header(n: usize, p: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|i| format!("q_{i}")));
    h.extend((1..=p).map(|i| format!("ahat_{i}")));
    h.extend(
        [
            "err_x_real",
            "err_x_est",
            "err_y",
            "err_r_real",
            "err_r_meas",
            "err_t_real",
            "err_t_meas",
            "err_d_real",
            "err_d_meas",
            "min_clearance",
            "norm_uq",
            "norm_ua",
            "qp_task_status",
            "qp_adapt_status",
            "meas_valid",
        ]
        .map(String::from),
    );
    h
}

fn number(v: f64) -> String {
    // 17 significant digits round-trip every f64.
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(out: &mut W, rows: &[LogRow], n: usize, p: usize) -> std::io::Result<()> {
    writeln!(out, "{}", csv_header(n, p).join(","))?;
    for r in rows {
        let mut cells = vec![number(r.t)];
        cells.extend(r.q.iter().map(|v| number(*v)));
        cells.extend(r.a.iter().map(|v| number(*v)));
        cells.extend(
            [
                r.err_x_real,
                r.err_x_est,
                r.err_y,
                r.err_r_real,
                r.err_r_meas,
                r.err_t_real,
                r.err_t_meas,
                r.err_d_real,
                r.err_d_meas,
                r.min_clearance,
                r.norm_uq,
                r.norm_ua,
            ]
            .map(number),
        );
        cells.push(r.qp_task_status.to_string());
        cells.push(r.qp_adapt_status.to_string());
        cells.push(if r.meas_valid { "1" } else { "0" }.to_string());
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()
}

/// End-of-run figures printed by the CLI.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub steps: usize,
    pub final_err_x_real: f64,
    pub final_err_x_est: f64,
    pub final_err_y: f64,
    pub min_clearance_estimated: f64,
    pub min_clearance_real: f64,
    pub step_time_mean_ms: f64,
    pub step_time_std_ms: f64,
}

impl SimulationOutcome {
    pub fn summary(&self) -> Summary {
        let last = self.rows.last();
        let times: Vec<f64> = self.diagnostics.iter().map(|d| d.elapsed_s * 1e3).collect();
        let count = times.len().max(1) as f64;
        let mean = times.iter().sum::<f64>() / count;
        let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / count;
        Summary {
            steps: self.rows.len(),
            final_err_x_real: last.map_or(f64::NAN, |r| r.err_x_real),
            final_err_x_est: last.map_or(f64::NAN, |r| r.err_x_est),
            final_err_y: last.map_or(f64::NAN, |r| r.err_y),
            min_clearance_estimated: self.rows.iter().map(|r| r.min_clearance).fold(f64::INFINITY, f64::min),
            min_clearance_real: self
                .diagnostics
                .iter()
                .map(|d| d.min_clearance_real)
                .fold(f64::INFINITY, f64::min),
            step_time_mean_ms: mean,
            step_time_std_ms: var.sqrt(),
        }
    }
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "steps                 {}", self.steps)?;
        writeln!(f, "final |x~| real       {:.3e}", self.final_err_x_real)?;
        writeln!(f, "final |x~| estimated  {:.3e}", self.final_err_x_est)?;
        writeln!(f, "final |y~|            {:.3e}", self.final_err_y)?;
        writeln!(f, "min clearance (est)   {:.3e} m", self.min_clearance_estimated)?;
        writeln!(f, "min clearance (real)  {:.3e} m", self.min_clearance_real)?;
        write!(
            f,
            "step time             {:.3} ms mean, {:.3} ms std",
            self.step_time_mean_ms, self.step_time_std_ms
        )
    }
}
