//! Partial task-space measurements, their errors, Jacobians and the
//! parametric projector that keeps unmeasured components fixed.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dq::{
    conjugate_matrix4, conjugate_matrix8, pose_error, rotation_error, PureQuaternion, UnitDualQuaternion,
    UnitQuaternion,
};
use crate::kinematics::{
    distance_jacobian, pose_jacobians, rotation_jacobian, translation_jacobian, KinematicsError, ParameterVector,
    PoseJacobians, RobotModel,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureSpaceError {
    #[error("measurement kind {actual:?} does not match space {expected:?}")]
    KindMismatch { expected: MeasureSpace, actual: MeasureSpace },
    #[error("distance must be finite and nonnegative, got {0}")]
    InvalidDistance(f64),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("lemma step requires R > 0, |t| >= R and lambda in [0, 1]")]
    LemmaDomain,
}

/// Observable slice of the task space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureSpace {
    Pose,
    Rotation,
    Translation,
    Distance,
    None,
}

impl MeasureSpace {
    /// Measurement coordinates `r`.
    pub fn dim(self) -> usize {
        match self {
            MeasureSpace::Pose => 8,
            MeasureSpace::Rotation => 4,
            MeasureSpace::Translation => 3,
            MeasureSpace::Distance => 1,
            MeasureSpace::None => 0,
        }
    }

    /// Rows of the parametric projector.
    pub fn projector_rows(self) -> usize {
        match self {
            MeasureSpace::Pose | MeasureSpace::None => 0,
            MeasureSpace::Rotation => 3,
            MeasureSpace::Translation => 4,
            MeasureSpace::Distance => 7,
        }
    }

    /// Whether the error is multiplicative (and Jacobians carry `H⁻(y)C`).
    pub fn is_multiplicative(self) -> bool {
        matches!(self, MeasureSpace::Pose | MeasureSpace::Rotation)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Measurement {
    Pose(UnitDualQuaternion),
    Rotation(UnitQuaternion),
    Translation(PureQuaternion),
    Distance(f64),
}

impl Measurement {
    pub fn space(&self) -> MeasureSpace {
        match self {
            Measurement::Pose(_) => MeasureSpace::Pose,
            Measurement::Rotation(_) => MeasureSpace::Rotation,
            Measurement::Translation(_) => MeasureSpace::Translation,
            Measurement::Distance(_) => MeasureSpace::Distance,
        }
    }

    pub fn distance(d: f64) -> Result<Self, MeasureSpaceError> {
        if d.is_finite() && d >= 0.0 {
            Ok(Measurement::Distance(d))
        } else {
            Err(MeasureSpaceError::InvalidDistance(d))
        }
    }

    /// Flips the sign of a pose or rotation so it lies in the hemisphere of
    /// `reference`. Other kinds are returned unchanged.
    pub fn canonicalized(&self, reference: &Measurement) -> Measurement {
        match (self, reference) {
            (Measurement::Pose(y), Measurement::Pose(r)) if y.vec8().dot(&r.vec8()) < 0.0 => Measurement::Pose(y.neg()),
            (Measurement::Rotation(y), Measurement::Rotation(r)) if y.vec4().dot(&r.vec4()) < 0.0 => {
                Measurement::Rotation(y.neg())
            }
            _ => *self,
        }
    }
}

/// ỹ as a plain vector of length `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementError(pub DVector<f64>);

impl MeasurementError {
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

/// The measurement a sensor of kind `space` would report for `pose`.
/// Returns `None` for [`MeasureSpace::None`].
pub fn extract(space: MeasureSpace, pose: &UnitDualQuaternion) -> Option<Measurement> {
    match space {
        MeasureSpace::Pose => Some(Measurement::Pose(*pose)),
        MeasureSpace::Rotation => Some(Measurement::Rotation(pose.rotation())),
        MeasureSpace::Translation => Some(Measurement::Translation(PureQuaternion::from_vec3(pose.translation()))),
        MeasureSpace::Distance => Some(Measurement::Distance(pose.translation().norm())),
        MeasureSpace::None => None,
    }
}

/// `ỹ` between an estimate and a measurement of the same kind.
pub fn measurement_error(estimate: &Measurement, measured: &Measurement) -> Result<MeasurementError, MeasureSpaceError> {
    let v = match (estimate, measured) {
        (Measurement::Pose(e), Measurement::Pose(y)) => DVector::from_column_slice(pose_error(e, y).vec8().as_slice()),
        (Measurement::Rotation(e), Measurement::Rotation(y)) => {
            DVector::from_column_slice(rotation_error(e, y).vec4().as_slice())
        }
        (Measurement::Translation(e), Measurement::Translation(y)) => {
            DVector::from_column_slice((e.vec3() - y.vec3()).as_slice())
        }
        (Measurement::Distance(e), Measurement::Distance(y)) => DVector::from_element(1, e - y),
        _ => {
            return Err(MeasureSpaceError::KindMismatch {
                expected: estimate.space(),
                actual: measured.space(),
            })
        }
    };
    Ok(MeasurementError(v))
}

/// `S(v)` with `S(v) w = v × w`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    v.cross_matrix()
}

/// Measure-space error, Jacobians and projector at one estimated state.
#[derive(Clone, Debug)]
pub struct MeasureLinearization {
    pub estimate: Measurement,
    /// Measurement after hemisphere canonicalization.
    pub measured: Measurement,
    pub error: MeasurementError,
    /// `∂ỹ/∂q`, r×n.
    pub jacobian_q: DMatrix<f64>,
    /// `∂ỹ/∂â`, r×p.
    pub jacobian_a: DMatrix<f64>,
    /// `N_â`, r̄×p.
    pub projector: DMatrix<f64>,
}

/// Linearizes the measurement map around `kin`, the estimated effector pose
/// with its Jacobians.
pub fn linearize(kin: &PoseJacobians, measured: &Measurement) -> Result<MeasureLinearization, MeasureSpaceError> {
    let space = measured.space();
    let estimate = extract(space, &kin.pose).expect("measurement kinds are observable");
    let measured = measured.canonicalized(&estimate);
    let error = measurement_error(&estimate, &measured)?;
    let jacobian_q = measure_jacobian_from(kin, &measured, &kin.jq)?;
    let jacobian_a = measure_jacobian_from(kin, &measured, &kin.ja)?;
    let projector = projector_from(space, kin);
    Ok(MeasureLinearization {
        estimate,
        measured,
        error,
        jacobian_q,
        jacobian_a,
        projector,
    })
}

/// Maps a pose Jacobian (8×k) to `∂ỹ/∂·` for the given measurement.
fn measure_jacobian_from(
    kin: &PoseJacobians,
    measured: &Measurement,
    pose_jacobian: &DMatrix<f64>,
) -> Result<DMatrix<f64>, MeasureSpaceError> {
    Ok(match measured {
        Measurement::Pose(y) => {
            let g = y.dual_quaternion().hamilton_minus() * conjugate_matrix8();
            to_dynamic(&g) * pose_jacobian
        }
        Measurement::Rotation(y) => {
            let g = y.quaternion().hamilton_minus() * conjugate_matrix4();
            to_dynamic(&g) * rotation_jacobian(pose_jacobian)
        }
        Measurement::Translation(_) => translation_jacobian(&kin.pose, pose_jacobian),
        Measurement::Distance(_) => {
            let jt = translation_jacobian(&kin.pose, pose_jacobian);
            let jd = distance_jacobian(&kin.pose.translation(), &jt)?;
            DMatrix::from_row_slice(1, jd.len(), jd.as_slice())
        }
    })
}

fn to_dynamic<R: nalgebra::Dim, C: nalgebra::Dim, S: nalgebra::RawStorage<f64, R, C>>(
    m: &nalgebra::Matrix<f64, R, C, S>,
) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// `J_{ŷ,â}` for measurement `y` at `(q, â)`.
pub fn measure_jacobian_a(
    model: &RobotModel,
    q: &DVector<f64>,
    a: &ParameterVector,
    measured: &Measurement,
) -> Result<DMatrix<f64>, MeasureSpaceError> {
    let kin = pose_jacobians(model, q, a)?;
    let estimate = extract(measured.space(), &kin.pose).expect("observable");
    measure_jacobian_from(&kin, &measured.canonicalized(&estimate), &kin.ja)
}

/// `J_{ŷ,q}` for measurement `y` at `(q, â)`.
pub fn measure_jacobian_q(
    model: &RobotModel,
    q: &DVector<f64>,
    a: &ParameterVector,
    measured: &Measurement,
) -> Result<DMatrix<f64>, MeasureSpaceError> {
    let kin = pose_jacobians(model, q, a)?;
    let estimate = extract(measured.space(), &kin.pose).expect("observable");
    measure_jacobian_from(&kin, &measured.canonicalized(&estimate), &kin.jq)
}

fn projector_from(space: MeasureSpace, kin: &PoseJacobians) -> DMatrix<f64> {
    let p = kin.ja.ncols();
    match space {
        MeasureSpace::Pose | MeasureSpace::None => DMatrix::zeros(0, p),
        MeasureSpace::Rotation => translation_jacobian(&kin.pose, &kin.ja),
        MeasureSpace::Translation => rotation_jacobian(&kin.ja),
        MeasureSpace::Distance => {
            let jr = rotation_jacobian(&kin.ja);
            let jt = translation_jacobian(&kin.pose, &kin.ja);
            let s = to_dynamic(&skew(&kin.pose.translation()));
            let mut n = DMatrix::zeros(7, p);
            n.rows_mut(0, 4).copy_from(&jr);
            n.rows_mut(4, 3).copy_from(&(s * jt));
            n
        }
    }
}

/// `N_â` at `(q, â)`.
pub fn projector(
    space: MeasureSpace,
    model: &RobotModel,
    q: &DVector<f64>,
    a: &ParameterVector,
) -> Result<DMatrix<f64>, MeasureSpaceError> {
    Ok(projector_from(space, &pose_jacobians(model, q, a)?))
}

/// Moves `t̂` toward the sphere of radius `R` along its own direction:
/// `(1−λ)t̂ + λR t̂/‖t̂‖`.
pub fn lemma1_step(t_hat: &Vector3<f64>, radius: f64, lambda: f64) -> Result<Vector3<f64>, MeasureSpaceError> {
    let norm = t_hat.norm();
    if !(radius > 0.0 && norm >= radius && (0.0..=1.0).contains(&lambda)) {
        return Err(MeasureSpaceError::LemmaDomain);
    }
    Ok(t_hat * (1.0 - lambda) + t_hat * (lambda * radius / norm))
}
