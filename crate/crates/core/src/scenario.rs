//! Scenario files: a TOML document with the sections `robot`, `truth`,
//! `bounds`, `measurement`, `gains`, `setpoints`, `obstacles` and `run`.
//!
//! Angles in `bounds` carry a `_deg` suffix; everything else is SI
//! (metres, radians, seconds).

use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::constraints::{Line, Obstacles, Plane, SpherePrimitive};
use crate::controller::{ControllerConfig, ControllerGains, TaskErrorKind};
use crate::dq::{UnitDualQuaternion, UnitQuaternion};
use crate::kinematics::{
    is_angular_param, param_name, ChainFrame, DhJoint, OffsetTransform, ParameterBounds, ParameterVector, RobotModel,
    PARAMS_PER_JOINT, PARAMS_PER_OFFSET,
};
use crate::measurement::MeasureSpace;
use crate::qp::SolverConfig;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid<T>(field: impl Into<String>, reason: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Invalid { field: field.into(), reason: reason.into() })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    robot: RawRobot,
    #[serde(default)]
    truth: RawTruth,
    #[serde(default)]
    bounds: RawBounds,
    #[serde(default)]
    measurement: RawMeasurement,
    #[serde(default)]
    gains: RawGains,
    #[serde(default)]
    setpoints: Vec<RawSetpoint>,
    #[serde(default)]
    obstacles: RawObstacles,
    #[serde(default)]
    run: RawRun,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRobot {
    preset: Option<String>,
    /// Rows of `[theta, d, a, alpha]`.
    dh: Option<Vec<[f64; 4]>>,
    base: Option<[f64; 6]>,
    effector: Option<[f64; 6]>,
    q_min: Option<Vec<f64>>,
    q_max: Option<Vec<f64>>,
    qdot_min: Option<Vec<f64>>,
    qdot_max: Option<Vec<f64>>,
    /// Symmetric joint velocity limit, overrides `qdot_min`/`qdot_max`.
    qdot_limit: Option<f64>,
    q0: Vec<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTruth {
    /// `a − nominal`, one entry per parameter.
    offsets: Option<Vec<f64>>,
    /// Uniform sampling in `nominal ± fraction · half_width`.
    fraction: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    #[serde(default = "default_dh_linear")]
    dh_linear: f64,
    #[serde(default = "default_dh_angular")]
    dh_angular_deg: f64,
    #[serde(default = "default_offset_linear")]
    base_linear: f64,
    #[serde(default = "default_offset_angular")]
    base_angular_deg: f64,
    #[serde(default = "default_offset_linear")]
    effector_linear: f64,
    #[serde(default = "default_offset_angular")]
    effector_angular_deg: f64,
    /// Per-parameter half widths, overriding the class values.
    half_width: Option<Vec<f64>>,
    /// Symmetric limits on `u_â`.
    rate_linear: Option<f64>,
    rate_angular_deg: Option<f64>,
}

fn default_dh_linear() -> f64 {
    0.001
}
fn default_dh_angular() -> f64 {
    1.0
}
fn default_offset_linear() -> f64 {
    0.1
}
fn default_offset_angular() -> f64 {
    20.0
}

impl Default for RawBounds {
    fn default() -> Self {
        Self {
            dh_linear: default_dh_linear(),
            dh_angular_deg: default_dh_angular(),
            base_linear: default_offset_linear(),
            base_angular_deg: default_offset_angular(),
            effector_linear: default_offset_linear(),
            effector_angular_deg: default_offset_angular(),
            half_width: None,
            rate_linear: None,
            rate_angular_deg: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasurement {
    #[serde(default = "default_space")]
    space: MeasureSpace,
    #[serde(default)]
    noise_translation: f64,
    #[serde(default)]
    noise_rotation: f64,
    #[serde(default)]
    noise_distance: f64,
    /// Windows `[start, end)` in seconds where readings are invalid.
    #[serde(default)]
    dropout: Vec<[f64; 2]>,
    /// Tolerated real-model penetration; defaults to three translation
    /// standard deviations.
    envelope: Option<f64>,
}

fn default_space() -> MeasureSpace {
    MeasureSpace::Pose
}

impl Default for RawMeasurement {
    fn default() -> Self {
        Self {
            space: default_space(),
            noise_translation: 0.0,
            noise_rotation: 0.0,
            noise_distance: 0.0,
            dropout: Vec::new(),
            envelope: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGains {
    #[serde(default = "default_eta")]
    eta_q: f64,
    #[serde(default = "default_eta")]
    eta_a: f64,
    /// Scalar multiple of the identity.
    #[serde(default = "default_lambda")]
    lambda_q: f64,
    #[serde(default = "default_lambda")]
    lambda_a: f64,
    #[serde(default = "default_eta_vfi")]
    eta_vfi: f64,
    #[serde(default = "default_eta_limits")]
    eta_joint: f64,
    #[serde(default = "default_eta_limits")]
    eta_param: f64,
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default)]
    error: TaskErrorKind,
    #[serde(default = "default_true")]
    adaptation: bool,
    #[serde(default = "default_true")]
    lyapunov_guard: bool,
    #[serde(default = "default_guard_slack")]
    guard_slack: f64,
}

fn default_guard_slack() -> f64 {
    1e-8
}

fn default_eta() -> f64 {
    40.0
}
fn default_lambda() -> f64 {
    0.01
}
fn default_eta_vfi() -> f64 {
    10.0
}
fn default_eta_limits() -> f64 {
    1.0
}
fn default_alpha() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}

impl Default for RawGains {
    fn default() -> Self {
        Self {
            eta_q: default_eta(),
            eta_a: default_eta(),
            lambda_q: default_lambda(),
            lambda_a: default_lambda(),
            eta_vfi: default_eta_vfi(),
            eta_joint: default_eta_limits(),
            eta_param: default_eta_limits(),
            alpha: default_alpha(),
            error: TaskErrorKind::default(),
            adaptation: true,
            lyapunov_guard: true,
            guard_slack: default_guard_slack(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSetpoint {
    /// Reach the true robot's pose at this configuration.
    q: Option<Vec<f64>>,
    translation: Option<[f64; 3]>,
    /// `[w, x, y, z]`, normalized on load.
    rotation: Option<[f64; 4]>,
    steps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObstacles {
    #[serde(default)]
    spheres: Vec<RawSphere>,
    #[serde(default)]
    lines: Vec<RawLine>,
    #[serde(default)]
    planes: Vec<RawPlane>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSphere {
    frame: ChainFrame,
    #[serde(default)]
    offset: [f64; 3],
    radius: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    point: [f64; 3],
    direction: [f64; 3],
    radius: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlane {
    normal: [f64; 3],
    offset: f64,
    #[serde(default)]
    margin: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    #[serde(default = "default_period")]
    period: f64,
    /// Adaptation-only time before the first setpoint, in seconds.
    #[serde(default)]
    warmup: f64,
    #[serde(default = "default_steps")]
    steps_per_setpoint: usize,
    early_exit: Option<f64>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_max_iterations")]
    max_iterations: usize,
    #[serde(default = "default_tolerance")]
    tolerance: f64,
    #[serde(default = "default_tries")]
    plausibility_tries: usize,
}

fn default_period() -> f64 {
    0.02
}
fn default_steps() -> usize {
    2000
}
fn default_max_iterations() -> usize {
    1000
}
fn default_tolerance() -> f64 {
    1e-10
}
fn default_tries() -> usize {
    10_000
}

impl Default for RawRun {
    fn default() -> Self {
        Self {
            period: default_period(),
            warmup: 0.0,
            steps_per_setpoint: default_steps(),
            early_exit: None,
            seed: 0,
            max_iterations: default_max_iterations(),
            tolerance: default_tolerance(),
            plausibility_tries: default_tries(),
        }
    }
}

/// Sensor noise standard deviations and the tolerated real penetration.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    pub translation: f64,
    pub rotation: f64,
    pub distance: f64,
    pub envelope: f64,
}

impl NoiseModel {
    pub fn is_zero(&self) -> bool {
        self.translation == 0.0 && self.rotation == 0.0 && self.distance == 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSetpoint {
    pub pose: UnitDualQuaternion,
    pub steps: usize,
}

/// A validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub model: RobotModel,
    pub q0: DVector<f64>,
    pub truth: ParameterVector,
    pub bounds: ParameterBounds,
    pub space: MeasureSpace,
    pub noise: NoiseModel,
    pub dropout: Vec<(f64, f64)>,
    pub config: ControllerConfig,
    pub setpoints: Vec<ScenarioSetpoint>,
    pub obstacles: Obstacles,
    pub period: f64,
    pub warmup_steps: usize,
    pub early_exit: Option<f64>,
    pub seed: u64,
    pub plausibility_tries: usize,
}

impl Scenario {
    pub fn in_dropout(&self, t: f64) -> bool {
        self.dropout.iter().any(|&(a, b)| t >= a && t < b)
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = toml::from_str(text)?;
    build(raw)
}

fn vector(field: &str, v: &[f64], len: usize) -> Result<DVector<f64>, ScenarioError> {
    if v.len() != len {
        return invalid(field, format!("expected {len} entries, got {}", v.len()));
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return invalid(format!("{field}[{i}]"), "must be finite");
    }
    Ok(DVector::from_column_slice(v))
}

fn positive(field: &str, v: f64) -> Result<f64, ScenarioError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        invalid(field, format!("must be positive, got {v}"))
    }
}

fn nonnegative(field: &str, v: f64) -> Result<f64, ScenarioError> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        invalid(field, format!("must be nonnegative, got {v}"))
    }
}

fn build_model(r: &RawRobot) -> Result<RobotModel, ScenarioError> {
    let mut model = match (&r.preset, &r.dh) {
        (Some(p), None) if p == "vs050" => {
            let mut m = RobotModel::vs050();
            if let Some(b) = r.base {
                m.base = OffsetTransform::from_slice(&b);
            }
            if let Some(e) = r.effector {
                m.effector = OffsetTransform::from_slice(&e);
            }
            if let Some(v) = &r.q_min {
                m.q_min = vector("robot.q_min", v, 6)?;
            }
            if let Some(v) = &r.q_max {
                m.q_max = vector("robot.q_max", v, 6)?;
            }
            m
        }
        (Some(p), None) => return invalid("robot.preset", format!("unknown preset `{p}`")),
        (None, Some(dh)) => {
            let n = dh.len();
            let need = |field: &str, v: &Option<Vec<f64>>| match v {
                Some(v) => vector(field, v, n),
                None => invalid(field, "required for a custom robot"),
            };
            let q_min = need("robot.q_min", &r.q_min)?;
            let q_max = need("robot.q_max", &r.q_max)?;
            let (qd_min, qd_max) = match r.qdot_limit {
                Some(l) => (DVector::from_element(n, -l), DVector::from_element(n, l)),
                None => (need("robot.qdot_min", &r.qdot_min)?, need("robot.qdot_max", &r.qdot_max)?),
            };
            let joints = dh
                .iter()
                .map(|j| DhJoint { theta: j[0], d: j[1], a: j[2], alpha: j[3] })
                .collect();
            RobotModel::new(
                joints,
                OffsetTransform::from_slice(&r.base.unwrap_or_default()),
                OffsetTransform::from_slice(&r.effector.unwrap_or_default()),
                (q_min, q_max),
                (qd_min, qd_max),
            )
            .or_else(|e| invalid("robot", e.to_string()))?
        }
        _ => return invalid("robot", "exactly one of `preset` and `dh` must be given"),
    };
    let n = model.dof();
    if let Some(l) = r.qdot_limit {
        positive("robot.qdot_limit", l)?;
        model.qdot_min = DVector::from_element(n, -l);
        model.qdot_max = DVector::from_element(n, l);
    } else if r.preset.is_some() {
        if let Some(v) = &r.qdot_min {
            model.qdot_min = vector("robot.qdot_min", v, n)?;
        }
        if let Some(v) = &r.qdot_max {
            model.qdot_max = vector("robot.qdot_max", v, n)?;
        }
    }
    // Re-run the model checks on the overridden limits.
    RobotModel::new(
        model.joints.clone(),
        model.base,
        model.effector,
        (model.q_min.clone(), model.q_max.clone()),
        (model.qdot_min.clone(), model.qdot_max.clone()),
    )
    .or_else(|e| invalid("robot", e.to_string()))
}

fn half_widths(b: &RawBounds, n: usize, p: usize) -> Result<DVector<f64>, ScenarioError> {
    if let Some(h) = &b.half_width {
        let h = vector("bounds.half_width", h, p)?;
        for (i, v) in h.iter().enumerate() {
            nonnegative(&format!("bounds.half_width[{i}]"), *v)?;
        }
        return Ok(h);
    }
    for (f, v) in [
        ("bounds.dh_linear", b.dh_linear),
        ("bounds.dh_angular_deg", b.dh_angular_deg),
        ("bounds.base_linear", b.base_linear),
        ("bounds.base_angular_deg", b.base_angular_deg),
        ("bounds.effector_linear", b.effector_linear),
        ("bounds.effector_angular_deg", b.effector_angular_deg),
    ] {
        nonnegative(f, v)?;
    }
    let dh_end = PARAMS_PER_JOINT * n;
    Ok(DVector::from_fn(p, |k, _| {
        let angular = is_angular_param(n, k);
        let (lin, ang) = if k < dh_end {
            (b.dh_linear, b.dh_angular_deg)
        } else if k < dh_end + PARAMS_PER_OFFSET {
            (b.base_linear, b.base_angular_deg)
        } else {
            (b.effector_linear, b.effector_angular_deg)
        };
        if angular {
            ang.to_radians()
        } else {
            lin
        }
    }))
}

fn build(raw: RawScenario) -> Result<Scenario, ScenarioError> {
    let model = build_model(&raw.robot)?;
    let (n, p) = (model.dof(), model.parameter_count());
    let q0 = vector("robot.q0", &raw.robot.q0, n)?;
    for i in 0..n {
        if q0[i] < model.q_min[i] || q0[i] > model.q_max[i] {
            return invalid(format!("robot.q0[{i}]"), "outside the joint limits");
        }
    }

    let nominal = model.nominal_parameters();
    let widths = half_widths(&raw.bounds, n, p)?;
    let mut bounds = ParameterBounds::around(&nominal, &widths);
    match (raw.bounds.rate_linear, raw.bounds.rate_angular_deg) {
        (None, None) => {}
        (Some(lin), Some(ang)) => {
            positive("bounds.rate_linear", lin)?;
            positive("bounds.rate_angular_deg", ang)?;
            let max = DVector::from_fn(p, |k, _| if is_angular_param(n, k) { ang.to_radians() } else { lin });
            bounds.rate = Some((-&max, max));
        }
        _ => return invalid("bounds", "`rate_linear` and `rate_angular_deg` must be given together"),
    }

    let truth = match (&raw.truth.offsets, raw.truth.fraction) {
        (Some(off), None) => ParameterVector(&nominal.0 + vector("truth.offsets", off, p)?),
        (None, Some(f)) => {
            if !(0.0..=1.0).contains(&f) {
                return invalid("truth.fraction", "must lie in [0, 1]");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(raw.truth.seed.unwrap_or(0));
            ParameterVector(DVector::from_fn(p, |k, _| {
                nominal.0[k] + f * widths[k] * rng.random_range(-1.0..=1.0)
            }))
        }
        (None, None) => nominal.clone(),
        (Some(_), Some(_)) => return invalid("truth", "give either `offsets` or `fraction`, not both"),
    };
    for k in 0..p {
        if truth.0[k] < bounds.min[k] || truth.0[k] > bounds.max[k] {
            return invalid(
                format!("truth parameter {k} ({})", param_name(n, k)),
                format!("{} lies outside [{}, {}]", truth.0[k], bounds.min[k], bounds.max[k]),
            );
        }
    }

    let m = &raw.measurement;
    let noise = NoiseModel {
        translation: nonnegative("measurement.noise_translation", m.noise_translation)?,
        rotation: nonnegative("measurement.noise_rotation", m.noise_rotation)?,
        distance: nonnegative("measurement.noise_distance", m.noise_distance)?,
        envelope: nonnegative("measurement.envelope", m.envelope.unwrap_or(3.0 * m.noise_translation))?,
    };
    let mut dropout = Vec::with_capacity(m.dropout.len());
    for (i, w) in m.dropout.iter().enumerate() {
        if !(w[0].is_finite() && w[1].is_finite() && w[0] < w[1]) {
            return invalid(format!("measurement.dropout[{i}]"), "needs start < end");
        }
        dropout.push((w[0], w[1]));
    }

    let g = &raw.gains;
    let gains = ControllerGains {
        eta_q: g.eta_q,
        eta_a: g.eta_a,
        lambda_q: DMatrix::identity(n, n) * g.lambda_q,
        lambda_a: DMatrix::identity(p, p) * g.lambda_a,
        eta_vfi: g.eta_vfi,
        eta_joint: g.eta_joint,
        eta_param: g.eta_param,
        alpha: g.alpha,
    };
    gains
        .validate(n, p)
        .or_else(|e| invalid("gains", e.to_string()))?;

    nonnegative("gains.guard_slack", g.guard_slack)?;
    let r = &raw.run;
    let period = positive("run.period", r.period)?;
    let warmup = nonnegative("run.warmup", r.warmup)?;
    if let Some(e) = r.early_exit {
        positive("run.early_exit", e)?;
    }
    positive("run.tolerance", r.tolerance)?;
    if r.max_iterations == 0 {
        return invalid("run.max_iterations", "must be positive");
    }

    if raw.setpoints.is_empty() {
        return invalid("setpoints", "at least one setpoint is required");
    }
    let mut setpoints = Vec::with_capacity(raw.setpoints.len());
    for (i, s) in raw.setpoints.iter().enumerate() {
        let field = |f: &str| format!("setpoints[{i}].{f}");
        let pose = match (&s.q, s.translation, s.rotation) {
            (Some(q), None, None) => {
                let q = vector(&field("q"), q, n)?;
                crate::kinematics::fkm(&model, &q, &truth).or_else(|e| invalid(field("q"), e.to_string()))?
            }
            (None, Some(t), r) => {
                let r = r.unwrap_or([1.0, 0.0, 0.0, 0.0]);
                let rq = UnitQuaternion::normalize(crate::dq::Quaternion::new(r[0], r[1], r[2], r[3]))
                    .or_else(|e| invalid(field("rotation"), e.to_string()))?;
                UnitDualQuaternion::from_rotation_translation(&rq, &Vector3::from(t))
            }
            _ => return invalid(format!("setpoints[{i}]"), "give either `q` or `translation` (with optional `rotation`)"),
        };
        setpoints.push(ScenarioSetpoint { pose, steps: s.steps.unwrap_or(r.steps_per_setpoint) });
    }

    let o = &raw.obstacles;
    let mut obstacles = Obstacles::default();
    for (i, s) in o.spheres.iter().enumerate() {
        if let ChainFrame::Joint(k) = s.frame {
            if k == 0 || k > n {
                return invalid(format!("obstacles.spheres[{i}].frame"), format!("joint index must be in 1..={n}"));
            }
        }
        obstacles.spheres.push(
            SpherePrimitive::new(s.frame, Vector3::from(s.offset), s.radius)
                .or_else(|e| invalid(format!("obstacles.spheres[{i}]"), e.to_string()))?,
        );
    }
    for (i, l) in o.lines.iter().enumerate() {
        obstacles.lines.push(
            Line::new(Vector3::from(l.point), Vector3::from(l.direction).normalize(), l.radius)
                .or_else(|e| invalid(format!("obstacles.lines[{i}]"), e.to_string()))?,
        );
    }
    for (i, pl) in o.planes.iter().enumerate() {
        obstacles.planes.push(
            Plane::new(Vector3::from(pl.normal).normalize(), pl.offset, pl.margin)
                .or_else(|e| invalid(format!("obstacles.planes[{i}]"), e.to_string()))?,
        );
    }
    if obstacles.spheres.is_empty() && !(obstacles.lines.is_empty() && obstacles.planes.is_empty()) {
        return invalid("obstacles.spheres", "lines and planes need at least one robot sphere");
    }

    Ok(Scenario {
        model,
        q0,
        truth,
        bounds,
        space: m.space,
        noise,
        dropout,
        config: ControllerConfig {
            gains,
            error_kind: g.error,
            solver: SolverConfig { tolerance: r.tolerance, max_iterations: r.max_iterations },
            adaptation: g.adaptation,
            period,
            lyapunov_guard: g.lyapunov_guard.then_some(g.guard_slack),
        },
        setpoints,
        obstacles,
        period,
        warmup_steps: (warmup / period).round() as usize,
        early_exit: r.early_exit,
        seed: r.seed,
        plausibility_tries: r.plausibility_tries,
    })
}
