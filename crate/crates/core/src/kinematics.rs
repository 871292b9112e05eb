//! Parameterized serial-manipulator kinematics.
//!
//! The chain is `base · ∏ DHᵢ(qᵢ) · effector`, where each DH step is
//! `rot_z(θᵢ + qᵢ) · trans_z(dᵢ) · trans_x(aᵢ) · rot_x(αᵢ)` and the base and
//! effector offsets are six sequential elementary motions
//! `trans_x · trans_y · trans_z · rot_x · rot_y · rot_z`.
//!
//! Every kinematic parameter lives in a [`ParameterVector`] laid out
//! joint-major `(θ₁, d₁, a₁, α₁, …, θₙ, dₙ, aₙ, αₙ)`, then the six base
//! offsets, then the six effector offsets. Because every elementary factor
//! depends on exactly one scalar, all Jacobian columns come from the same
//! prefix/suffix product rule.

use nalgebra::{DMatrix, DVector, RowDVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dq::{DualQuaternion, Quaternion, UnitDualQuaternion, UnitQuaternion};

/// Parameters per joint in the layout.
pub const PARAMS_PER_JOINT: usize = 4;
/// Parameters per offset transform in the layout.
pub const PARAMS_PER_OFFSET: usize = 6;

/// Below this translation norm the distance Jacobian is undefined.
pub const SINGULAR_DISTANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("expected {expected} {what}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("distance Jacobian is singular: translation norm {norm:e} is below {SINGULAR_DISTANCE:e}")]
    SingularDistance { norm: f64 },
    #[error("invalid robot model: {0}")]
    InvalidModel(String),
}

/// Standard (distal) Denavit–Hartenberg parameters of a revolute joint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DhJoint {
    pub theta: f64,
    pub d: f64,
    pub a: f64,
    pub alpha: f64,
}

/// Six sequential elementary transforms: translate x, y, z then rotate x, y, z.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct OffsetTransform {
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
}

impl OffsetTransform {
    pub fn to_array(&self) -> [f64; 6] {
        [self.tx, self.ty, self.tz, self.rx, self.ry, self.rz]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self {
            tx: s[0],
            ty: s[1],
            tz: s[2],
            rx: s[3],
            ry: s[4],
            rz: s[5],
        }
    }

    pub fn pose(&self) -> UnitDualQuaternion {
        OFFSET_MOTIONS
            .iter()
            .zip(self.to_array())
            .fold(UnitDualQuaternion::IDENTITY, |acc, (m, s)| acc * m.factor(s))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn unit(self) -> Vector3<f64> {
        match self {
            Axis::X => Vector3::x(),
            Axis::Y => Vector3::y(),
            Axis::Z => Vector3::z(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Motion {
    Rotation(Axis),
    Translation(Axis),
}

const OFFSET_MOTIONS: [Motion; 6] = [
    Motion::Translation(Axis::X),
    Motion::Translation(Axis::Y),
    Motion::Translation(Axis::Z),
    Motion::Rotation(Axis::X),
    Motion::Rotation(Axis::Y),
    Motion::Rotation(Axis::Z),
];

const DH_MOTIONS: [Motion; 4] = [
    Motion::Rotation(Axis::Z),
    Motion::Translation(Axis::Z),
    Motion::Translation(Axis::X),
    Motion::Rotation(Axis::X),
];

impl Motion {
    fn factor(self, s: f64) -> UnitDualQuaternion {
        match self {
            Motion::Rotation(axis) => {
                UnitDualQuaternion::from_rotation(&UnitQuaternion::from_axis_angle(&axis.unit(), s))
            }
            Motion::Translation(axis) => UnitDualQuaternion::from_translation(&(axis.unit() * s)),
        }
    }

    /// `ω` such that `d/ds factor(s) = ½ ω factor(s)`.
    fn generator(self) -> DualQuaternion {
        match self {
            Motion::Rotation(axis) => DualQuaternion::new(Quaternion::pure(&axis.unit()), Quaternion::ZERO),
            Motion::Translation(axis) => DualQuaternion::new(Quaternion::ZERO, Quaternion::pure(&axis.unit())),
        }
    }
}

/// A point along the chain where frames can be attached.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainFrame {
    /// After the base offset, before joint 1.
    Base,
    /// After the DH transform of joint `k` (1-based).
    Joint(usize),
    /// After the effector offset (the end-effector frame).
    Effector,
}

/// Kinematic parameters `â` or `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterVector(pub DVector<f64>);

impl ParameterVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    /// Clamps every entry into its box.
    pub fn project(&mut self, bounds: &ParameterBounds) {
        for ((v, lo), hi) in self.0.iter_mut().zip(bounds.min.iter()).zip(bounds.max.iter()) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn within(&self, bounds: &ParameterBounds) -> bool {
        self.0
            .iter()
            .zip(bounds.min.iter().zip(bounds.max.iter()))
            .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }
}

/// Box bounds on the parameters and, optionally, on their rates.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterBounds {
    pub min: DVector<f64>,
    pub max: DVector<f64>,
    pub rate: Option<(DVector<f64>, DVector<f64>)>,
}

impl ParameterBounds {
    /// Symmetric box `center ± half_width`.
    pub fn around(center: &ParameterVector, half_width: &DVector<f64>) -> Self {
        Self {
            min: &center.0 - half_width,
            max: &center.0 + half_width,
            rate: None,
        }
    }

    pub fn len(&self) -> usize {
        self.min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.min.is_empty()
    }
}

/// Index of a DH parameter: `which` is 0..4 for θ, d, a, α.
pub fn joint_param_index(joint: usize, which: usize) -> usize {
    PARAMS_PER_JOINT * joint + which
}

pub fn base_param_index(n_joints: usize, which: usize) -> usize {
    PARAMS_PER_JOINT * n_joints + which
}

pub fn effector_param_index(n_joints: usize, which: usize) -> usize {
    PARAMS_PER_JOINT * n_joints + PARAMS_PER_OFFSET + which
}

/// Whether parameter `index` is an angle (as opposed to a length).
pub fn is_angular_param(n_joints: usize, index: usize) -> bool {
    if index < PARAMS_PER_JOINT * n_joints {
        matches!(index % PARAMS_PER_JOINT, 0 | 3)
    } else {
        (index - PARAMS_PER_JOINT * n_joints) % PARAMS_PER_OFFSET >= 3
    }
}

/// Human-readable name of parameter `index`.
pub fn param_name(n_joints: usize, index: usize) -> String {
    const DH: [&str; 4] = ["theta", "d", "a", "alpha"];
    const OFF: [&str; 6] = ["tx", "ty", "tz", "rx", "ry", "rz"];
    if index < PARAMS_PER_JOINT * n_joints {
        format!("{}_{}", DH[index % 4], index / 4 + 1)
    } else {
        let k = index - PARAMS_PER_JOINT * n_joints;
        let part = if k < PARAMS_PER_OFFSET { "base" } else { "effector" };
        format!("{}_{}", part, OFF[k % 6])
    }
}

/// A revolute serial manipulator with base and effector offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotModel {
    pub joints: Vec<DhJoint>,
    pub base: OffsetTransform,
    pub effector: OffsetTransform,
    pub q_min: DVector<f64>,
    pub q_max: DVector<f64>,
    pub qdot_min: DVector<f64>,
    pub qdot_max: DVector<f64>,
}

impl RobotModel {
    pub fn new(
        joints: Vec<DhJoint>,
        base: OffsetTransform,
        effector: OffsetTransform,
        q_limits: (DVector<f64>, DVector<f64>),
        qdot_limits: (DVector<f64>, DVector<f64>),
    ) -> Result<Self, KinematicsError> {
        let n = joints.len();
        if n == 0 {
            return Err(KinematicsError::InvalidModel("at least one joint is required".into()));
        }
        for (what, v) in [
            ("q_min", &q_limits.0),
            ("q_max", &q_limits.1),
            ("qdot_min", &qdot_limits.0),
            ("qdot_max", &qdot_limits.1),
        ] {
            if v.len() != n {
                return Err(KinematicsError::DimensionMismatch { what, expected: n, actual: v.len() });
            }
        }
        let finite = joints
            .iter()
            .flat_map(|j| [j.theta, j.d, j.a, j.alpha])
            .chain(base.to_array())
            .chain(effector.to_array())
            .all(f64::is_finite);
        if !finite {
            return Err(KinematicsError::InvalidModel("non-finite kinematic parameter".into()));
        }
        for i in 0..n {
            if !(q_limits.0[i] < q_limits.1[i]) {
                return Err(KinematicsError::InvalidModel(format!("q_min[{i}] must be below q_max[{i}]")));
            }
            if !(qdot_limits.0[i] < qdot_limits.1[i]) {
                return Err(KinematicsError::InvalidModel(format!(
                    "qdot_min[{i}] must be below qdot_max[{i}]"
                )));
            }
        }
        Ok(Self {
            joints,
            base,
            effector,
            q_min: q_limits.0,
            q_max: q_limits.1,
            qdot_min: qdot_limits.0,
            qdot_max: qdot_limits.1,
        })
    }

    /// DENSO VS050 from the manufacturer's DH table, identity offsets,
    /// ±0.2 rad/s velocity limits.
    pub fn vs050() -> Self {
        use std::f64::consts::{FRAC_PI_2, PI};
        let theta = [-PI, FRAC_PI_2, -FRAC_PI_2, 0.0, PI, 0.0];
        let d = [0.345, 0.0, 0.0, 0.255, 0.0, 0.07];
        let a = [0.0, 0.250, 0.01, 0.0, 0.0, 0.0];
        let alpha = [FRAC_PI_2, 0.0, -FRAC_PI_2, FRAC_PI_2, FRAC_PI_2, 0.0];
        let joints = (0..6)
            .map(|i| DhJoint { theta: theta[i], d: d[i], a: a[i], alpha: alpha[i] })
            .collect();
        let q_max = DVector::from_row_slice(&VS050_Q_MAX);
        Self::new(
            joints,
            OffsetTransform::default(),
            OffsetTransform::default(),
            (-q_max.clone(), q_max),
            (DVector::from_element(6, -0.2), DVector::from_element(6, 0.2)),
        )
        .expect("VS050 model is valid")
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn parameter_count(&self) -> usize {
        PARAMS_PER_JOINT * self.dof() + 2 * PARAMS_PER_OFFSET
    }

    /// The model's own DH and offset values in the parameter layout.
    pub fn nominal_parameters(&self) -> ParameterVector {
        let mut v = Vec::with_capacity(self.parameter_count());
        for j in &self.joints {
            v.extend_from_slice(&[j.theta, j.d, j.a, j.alpha]);
        }
        v.extend_from_slice(&self.base.to_array());
        v.extend_from_slice(&self.effector.to_array());
        ParameterVector(DVector::from_vec(v))
    }

    /// Number of elementary factors before `frame`.
    fn factor_count(&self, frame: ChainFrame) -> usize {
        match frame {
            ChainFrame::Base => PARAMS_PER_OFFSET,
            ChainFrame::Joint(k) => PARAMS_PER_OFFSET + PARAMS_PER_JOINT * k.min(self.dof()),
            ChainFrame::Effector => self.parameter_count(),
        }
    }

    fn check(&self, q: &DVector<f64>, a: &ParameterVector) -> Result<(), KinematicsError> {
        if q.len() != self.dof() {
            return Err(KinematicsError::DimensionMismatch {
                what: "joint values",
                expected: self.dof(),
                actual: q.len(),
            });
        }
        if a.len() != self.parameter_count() {
            return Err(KinematicsError::DimensionMismatch {
                what: "parameters",
                expected: self.parameter_count(),
                actual: a.len(),
            });
        }
        Ok(())
    }

    /// Elementary factors in chain order: (motion, parameter index, joint index).
    fn factors(&self) -> impl Iterator<Item = (Motion, usize, Option<usize>)> + '_ {
        let n = self.dof();
        let base = OFFSET_MOTIONS
            .iter()
            .enumerate()
            .map(move |(k, m)| (*m, base_param_index(n, k), None));
        let joints = (0..n).flat_map(move |i| {
            DH_MOTIONS
                .iter()
                .enumerate()
                .map(move |(k, m)| (*m, joint_param_index(i, k), (k == 0).then_some(i)))
        });
        let effector = OFFSET_MOTIONS
            .iter()
            .enumerate()
            .map(move |(k, m)| (*m, effector_param_index(n, k), None));
        base.chain(joints).chain(effector)
    }
}

#[allow(clippy::approx_constant)] // published limit, not τ
const VS050_Q_MAX: [f64; 6] = [2.96, 2.09, 2.62, 4.71, 2.09, 6.28];

/// Pose of a chain frame and its Jacobians with respect to `q` (8×n) and `a` (8×p).
#[derive(Clone, Debug)]
pub struct PoseJacobians {
    pub pose: UnitDualQuaternion,
    pub jq: DMatrix<f64>,
    pub ja: DMatrix<f64>,
}

/// Evaluates the chain up to `frame`, followed by the constant `tail`.
pub fn frame_kinematics(
    model: &RobotModel,
    q: &DVector<f64>,
    a: &ParameterVector,
    frame: ChainFrame,
    tail: &UnitDualQuaternion,
) -> Result<PoseJacobians, KinematicsError> {
    model.check(q, a)?;
    let count = model.factor_count(frame);
    let factors: Vec<_> = model
        .factors()
        .take(count)
        .map(|(motion, param, joint)| {
            let s = a.0[param] + joint.map_or(0.0, |i| q[i]);
            (motion, param, joint, motion.factor(s))
        })
        .collect();

    // suffix[j] = F_j · … · F_last · tail
    let mut suffix = vec![*tail; count + 1];
    for j in (0..count).rev() {
        suffix[j] = factors[j].3 * suffix[j + 1];
    }

    let mut jq = DMatrix::zeros(8, model.dof());
    let mut ja = DMatrix::zeros(8, model.parameter_count());
    let mut prefix = UnitDualQuaternion::IDENTITY;
    for (j, (motion, param, joint, factor)) in factors.iter().enumerate() {
        // ∂/∂s (P_{j-1} F_j S_{j+1}) = ½ P_{j-1} ω_j S_j
        let column = (prefix.dual_quaternion() * motion.generator() * suffix[j].dual_quaternion() * 0.5).vec8();
        ja.set_column(*param, &column);
        if let Some(i) = joint {
            jq.set_column(*i, &column);
        }
        prefix = prefix * *factor;
    }
    Ok(PoseJacobians { pose: suffix[0], jq, ja })
}

/// End-effector pose `f(q, a)`.
pub fn fkm(model: &RobotModel, q: &DVector<f64>, a: &ParameterVector) -> Result<UnitDualQuaternion, KinematicsError> {
    frame_pose(model, q, a, ChainFrame::Effector, &UnitDualQuaternion::IDENTITY)
}

/// Pose of an arbitrary chain frame composed with a constant tail.
pub fn frame_pose(
    model: &RobotModel,
    q: &DVector<f64>,
    a: &ParameterVector,
    frame: ChainFrame,
    tail: &UnitDualQuaternion,
) -> Result<UnitDualQuaternion, KinematicsError> {
    model.check(q, a)?;
    let count = model.factor_count(frame);
    let pose = model
        .factors()
        .take(count)
        .fold(UnitDualQuaternion::IDENTITY, |acc, (motion, param, joint)| {
            acc * motion.factor(a.0[param] + joint.map_or(0.0, |i| q[i]))
        });
    Ok(pose * *tail)
}

/// End-effector pose and both Jacobians.
pub fn pose_jacobians(
    model: &RobotModel,
    q: &DVector<f64>,
    a: &ParameterVector,
) -> Result<PoseJacobians, KinematicsError> {
    frame_kinematics(model, q, a, ChainFrame::Effector, &UnitDualQuaternion::IDENTITY)
}

/// `J_{x̂,q}`, 8×n.
pub fn pose_jacobian_q(model: &RobotModel, q: &DVector<f64>, a: &ParameterVector) -> Result<DMatrix<f64>, KinematicsError> {
    Ok(pose_jacobians(model, q, a)?.jq)
}

/// `J_{x̂,â}`, 8×p.
pub fn pose_jacobian_a(model: &RobotModel, q: &DVector<f64>, a: &ParameterVector) -> Result<DMatrix<f64>, KinematicsError> {
    Ok(pose_jacobians(model, q, a)?.ja)
}

/// Rotation Jacobian: the primary rows of a pose Jacobian.
pub fn rotation_jacobian(pose_jacobian: &DMatrix<f64>) -> DMatrix<f64> {
    pose_jacobian.rows(0, 4).into_owned()
}

/// Translation Jacobian from `t = 2 D(x) P(x)*`.
pub fn translation_jacobian(pose: &UnitDualQuaternion, pose_jacobian: &DMatrix<f64>) -> DMatrix<f64> {
    let x = pose.dual_quaternion();
    let p_conj = x.primary.conj();
    let mut jt = DMatrix::zeros(3, pose_jacobian.ncols());
    for (c, col) in pose_jacobian.column_iter().enumerate() {
        let dp = Quaternion::new(col[0], col[1], col[2], col[3]);
        let dd = Quaternion::new(col[4], col[5], col[6], col[7]);
        let dt = (dd * p_conj + x.dual * dp.conj()) * 2.0;
        jt.set_column(c, &dt.imag());
    }
    jt
}

/// `J_d = t̂ᵀ/‖t̂‖ J_t`.
pub fn distance_jacobian(t: &Vector3<f64>, translation_jacobian: &DMatrix<f64>) -> Result<RowDVector<f64>, KinematicsError> {
    let norm = t.norm();
    if norm < SINGULAR_DISTANCE {
        return Err(KinematicsError::SingularDistance { norm });
    }
    Ok((t / norm).transpose() * translation_jacobian)
}

/// Rotation, translation and distance Jacobians derived from one pose Jacobian.
#[derive(Clone, Debug)]
pub struct SubJacobians {
    pub rotation: DMatrix<f64>,
    pub translation: DMatrix<f64>,
    pub distance: Result<RowDVector<f64>, KinematicsError>,
}

pub fn sub_jacobians(pose: &UnitDualQuaternion, pose_jacobian: &DMatrix<f64>) -> SubJacobians {
    let translation = translation_jacobian(pose, pose_jacobian);
    SubJacobians {
        rotation: rotation_jacobian(pose_jacobian),
        distance: distance_jacobian(&pose.translation(), &translation),
        translation,
    }
}

/// Position of a point rigidly attached to a chain frame, with its
/// translation Jacobians (3×n and 3×p).
#[derive(Clone, Debug)]
pub struct PointJacobians {
    pub position: Vector3<f64>,
    pub jq: DMatrix<f64>,
    pub ja: DMatrix<f64>,
}

pub fn point_jacobians(
    model: &RobotModel,
    q: &DVector<f64>,
    a: &ParameterVector,
    frame: ChainFrame,
    offset: &Vector3<f64>,
) -> Result<PointJacobians, KinematicsError> {
    let k = frame_kinematics(model, q, a, frame, &UnitDualQuaternion::from_translation(offset))?;
    Ok(PointJacobians {
        position: k.pose.translation(),
        jq: translation_jacobian(&k.pose, &k.jq),
        ja: translation_jacobian(&k.pose, &k.ja),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one_joint() -> RobotModel {
        RobotModel::new(
            vec![DhJoint { theta: 0.0, d: 0.0, a: 0.0, alpha: 0.0 }],
            OffsetTransform::default(),
            OffsetTransform::default(),
            (DVector::from_element(1, -3.0), DVector::from_element(1, 3.0)),
            (DVector::from_element(1, -1.0), DVector::from_element(1, 1.0)),
        )
        .unwrap()
    }

    fn random_state(rng: &mut ChaCha8Rng, model: &RobotModel) -> (DVector<f64>, ParameterVector) {
        let q = DVector::from_fn(model.dof(), |_, _| rng.random_range(-1.5..1.5));
        let mut a = model.nominal_parameters();
        for v in a.0.iter_mut() {
            *v += rng.random_range(-0.05..0.05);
        }
        (q, a)
    }

    #[test]
    fn trivial_robot_is_identity() {
        let m = one_joint();
        let x = fkm(&m, &DVector::zeros(1), &m.nominal_parameters()).unwrap();
        assert_eq!(x, UnitDualQuaternion::IDENTITY);
    }

    #[test]
    fn single_joint_column_is_half_k_times_rotation() {
        let m = one_joint();
        for q in [-2.0, -0.3, 0.0, 0.7, 2.5] {
            let qv = DVector::from_element(1, q);
            let k = pose_jacobians(&m, &qv, &m.nominal_parameters()).unwrap();
            let rz = UnitQuaternion::from_axis_angle(&Vector3::z(), q).quaternion();
            let expected = DualQuaternion::new(Quaternion::K * rz * 0.5, Quaternion::ZERO).vec8();
            assert!((k.jq.column(0) - expected).norm() < 1e-15);
        }
    }

    #[test]
    fn theta_column_equals_joint_column() {
        let m = RobotModel::vs050();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (q, a) = random_state(&mut rng, &m);
        let k = pose_jacobians(&m, &q, &a).unwrap();
        for i in 0..m.dof() {
            assert_eq!(k.jq.column(i), k.ja.column(joint_param_index(i, 0)));
        }
    }

    #[test]
    fn base_tx_column_is_left_translation_derivative() {
        let m = RobotModel::vs050();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (q, a) = random_state(&mut rng, &m);
        let k = pose_jacobians(&m, &q, &a).unwrap();
        let expected = (DualQuaternion::new(Quaternion::ZERO, Quaternion::I * 0.5) * k.pose.dual_quaternion()).vec8();
        assert!((k.ja.column(base_param_index(6, 0)) - expected).norm() < 1e-14);
    }

    #[test]
    fn base_translation_shifts_effector() {
        let m = RobotModel::vs050();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let (q, a) = random_state(&mut rng, &m);
            let mut shifted = a.clone();
            shifted.0[base_param_index(6, 0)] += 0.1;
            let t0 = fkm(&m, &q, &a).unwrap().translation();
            let t1 = fkm(&m, &q, &shifted).unwrap().translation();
            assert!((t1 - t0 - Vector3::new(0.1, 0.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn frames_before_a_joint_ignore_it() {
        let m = RobotModel::vs050();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (q, a) = random_state(&mut rng, &m);
        let k = frame_kinematics(&m, &q, &a, ChainFrame::Joint(2), &UnitDualQuaternion::IDENTITY).unwrap();
        for i in 2..6 {
            assert_eq!(k.jq.column(i).norm(), 0.0);
        }
        assert!(k.jq.column(1).norm() > 0.0);
        // effector offsets do not move a frame on the first links
        assert_eq!(k.ja.columns(effector_param_index(6, 0), 6).norm(), 0.0);
    }

    #[test]
    fn jacobian_error_decays_quadratically() {
        let m = RobotModel::vs050();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (q, a) = random_state(&mut rng, &m);
        let k = pose_jacobians(&m, &q, &a).unwrap();
        let dir = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let residual = |h: f64| {
            let x1 = fkm(&m, &(&q + &dir * h), &a).unwrap().vec8();
            (x1 - k.pose.vec8() - &k.jq * &dir * h).norm()
        };
        let (r1, r2) = (residual(1e-3), residual(5e-4));
        assert!((r1 / r2 - 4.0).abs() < 0.1, "ratio {}", r1 / r2);
    }

    #[test]
    fn vs050_reach_bound() {
        let m = RobotModel::vs050();
        let t = fkm(&m, &DVector::zeros(6), &m.nominal_parameters()).unwrap().translation();
        assert!(t.norm() <= 0.93);
    }

    #[test]
    fn distance_jacobian_along_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let jt = DMatrix::from_fn(3, 5, |_, _| rng.random_range(-1.0..1.0));
        let jd = distance_jacobian(&Vector3::new(0.0, 0.0, 1.0), &jt).unwrap();
        assert_eq!(jd, jt.row(2).into_owned());
        assert!(matches!(
            distance_jacobian(&Vector3::zeros(), &jt),
            Err(KinematicsError::SingularDistance { .. })
        ));
    }

    #[test]
    fn dimension_mismatch() {
        let m = RobotModel::vs050();
        assert!(matches!(
            fkm(&m, &DVector::zeros(5), &m.nominal_parameters()),
            Err(KinematicsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn projection_keeps_bounds() {
        let m = RobotModel::vs050();
        let nominal = m.nominal_parameters();
        let bounds = ParameterBounds::around(&nominal, &DVector::from_element(36, 0.01));
        let mut a = nominal.clone();
        a.0[3] += 1.0;
        a.0[7] -= 1.0;
        a.project(&bounds);
        assert!(a.within(&bounds));
        assert_eq!(a.0[3], bounds.max[3]);
    }

    #[test]
    fn parameter_names() {
        assert_eq!(param_name(6, 0), "theta_1");
        assert_eq!(param_name(6, 23), "alpha_6");
        assert_eq!(param_name(6, 24), "base_tx");
        assert_eq!(param_name(6, 35), "effector_rz");
        assert!(is_angular_param(6, 3));
        assert!(!is_angular_param(6, 26));
        assert!(is_angular_param(6, 27));
    }
}
