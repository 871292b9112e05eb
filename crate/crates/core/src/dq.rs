//! Quaternion and dual-quaternion algebra.
//!
//! Coefficients are always stacked real part first: `(w, x, y, z)` for
//! quaternions and `(primary w, x, y, z, dual w, x, y, z)` for dual
//! quaternions. Poses are unit dual quaternions `r + ½ε t r`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{Matrix4, SMatrix, SVector, Vector3, Vector4};
use thiserror::Error;

pub type Vector8 = SVector<f64, 8>;
pub type Matrix8 = SMatrix<f64, 8, 8>;

/// Largest deviation from the unit invariants that constructors silently repair.
pub const RENORMALIZE_LIMIT: f64 = 1e-6;

const NORM_TOLERANCE: f64 = 1e-12;
const ORTHOGONALITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DqError {
    #[error("quaternion norm {norm} is too far from 1 to renormalize")]
    NotUnitQuaternion { norm: f64 },
    #[error("dual quaternion violates the unit condition (primary norm {norm}, <P, D> = {dot})")]
    NotUnitDualQuaternion { norm: f64, dot: f64 },
    #[error("non-finite coefficient")]
    NonFinite,
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const ZERO: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    pub const ONE: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);
    pub const I: Quaternion = Quaternion::new(0.0, 1.0, 0.0, 0.0);
    pub const J: Quaternion = Quaternion::new(0.0, 0.0, 1.0, 0.0);
    pub const K: Quaternion = Quaternion::new(0.0, 0.0, 0.0, 1.0);

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Pure quaternion `îv₁ + ĵv₂ + k̂v₃`.
    pub fn pure(v: &Vector3<f64>) -> Self {
        Self::new(0.0, v.x, v.y, v.z)
    }

    pub fn from_vec4(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn vec4(&self) -> Vector4<f64> {
        Vector4::new(self.w, self.x, self.y, self.z)
    }

    /// Imaginary part as a 3-vector.
    pub fn imag(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn conj(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Left Hamilton operator: `vec4(a b) = H⁺(a) vec4(b)`.
    pub fn hamilton_plus(&self) -> Matrix4<f64> {
        let Quaternion { w, x, y, z } = *self;
        Matrix4::new(
            w, -x, -y, -z, //
            x, w, -z, y, //
            y, z, w, -x, //
            z, -y, x, w,
        )
    }

    /// Right Hamilton operator: `vec4(a b) = H⁻(b) vec4(a)`.
    pub fn hamilton_minus(&self) -> Matrix4<f64> {
        let Quaternion { w, x, y, z } = *self;
        Matrix4::new(
            w, -x, -y, -z, //
            x, w, z, -y, //
            y, -z, w, x, //
            z, y, -x, w,
        )
    }
}

impl Add for Quaternion {
    type Output = Quaternion;
    fn add(self, o: Quaternion) -> Quaternion {
        Quaternion::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Quaternion {
    type Output = Quaternion;
    fn sub(self, o: Quaternion) -> Quaternion {
        Quaternion::new(self.w - o.w, self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        Quaternion::new(-self.w, -self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Quaternion {
    type Output = Quaternion;
    fn mul(self, s: f64) -> Quaternion {
        Quaternion::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }
}

/// Hamilton product with `î² = ĵ² = k̂² = îĵk̂ = −1`.
impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, b: Quaternion) -> Quaternion {
        let a = self;
        Quaternion::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

impl fmt::Display for Quaternion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + {}i + {}j + {}k", self.w, self.x, self.y, self.z)
    }
}

/// Quaternion with zero real part, used for positions and translations.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct PureQuaternion(Vector3<f64>);

impl PureQuaternion {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Vector3::new(x, y, z))
    }

    pub fn from_vec3(v: Vector3<f64>) -> Self {
        Self(v)
    }

    pub fn vec3(&self) -> Vector3<f64> {
        self.0
    }

    pub fn quaternion(&self) -> Quaternion {
        Quaternion::pure(&self.0)
    }
}

/// Element of Spin(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitQuaternion(Quaternion);

impl UnitQuaternion {
    pub const IDENTITY: UnitQuaternion = UnitQuaternion(Quaternion::ONE);

    pub fn new(q: Quaternion) -> Result<Self, DqError> {
        if !q.is_finite() {
            return Err(DqError::NonFinite);
        }
        let norm = q.norm();
        if (norm - 1.0).abs() <= NORM_TOLERANCE {
            Ok(Self(q))
        } else if (norm - 1.0).abs() <= RENORMALIZE_LIMIT {
            Ok(Self(q * (1.0 / norm)))
        } else {
            Err(DqError::NotUnitQuaternion { norm })
        }
    }

    /// Normalizes any nonzero quaternion.
    pub fn normalize(q: Quaternion) -> Result<Self, DqError> {
        let norm = q.norm();
        if !norm.is_finite() || norm < f64::EPSILON {
            return Err(DqError::NotUnitQuaternion { norm });
        }
        Ok(Self(q * (1.0 / norm)))
    }

    /// Rotation by `angle` about the (not necessarily normalized) `axis`.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n < f64::EPSILON || angle == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let u = axis / n * s;
        Self(Quaternion::new(c, u.x, u.y, u.z))
    }

    pub fn quaternion(&self) -> Quaternion {
        self.0
    }

    pub fn vec4(&self) -> Vector4<f64> {
        self.0.vec4()
    }

    pub fn conj(&self) -> Self {
        Self(self.0.conj())
    }

    pub fn neg(&self) -> Self {
        Self(-self.0)
    }

    /// Rotates a vector: `r v r*`.
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        (self.0 * Quaternion::pure(v) * self.0.conj()).imag()
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;
    fn mul(self, o: UnitQuaternion) -> UnitQuaternion {
        UnitQuaternion(self.0 * o.0)
    }
}

/// `primary + ε dual` with `ε² = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct DualQuaternion {
    pub primary: Quaternion,
    pub dual: Quaternion,
}

impl DualQuaternion {
    pub const ZERO: DualQuaternion = DualQuaternion::new(Quaternion::ZERO, Quaternion::ZERO);
    pub const ONE: DualQuaternion = DualQuaternion::new(Quaternion::ONE, Quaternion::ZERO);

    pub const fn new(primary: Quaternion, dual: Quaternion) -> Self {
        Self { primary, dual }
    }

    pub fn from_vec8(v: &Vector8) -> Self {
        Self::new(
            Quaternion::new(v[0], v[1], v[2], v[3]),
            Quaternion::new(v[4], v[5], v[6], v[7]),
        )
    }

    pub fn vec8(&self) -> Vector8 {
        let (p, d) = (self.primary, self.dual);
        Vector8::from([p.w, p.x, p.y, p.z, d.w, d.x, d.y, d.z])
    }

    /// Conjugates both parts.
    pub fn conj(&self) -> Self {
        Self::new(self.primary.conj(), self.dual.conj())
    }

    /// `‖P‖₂ + ‖D‖₂`, the pose-error norm.
    pub fn split_norm(&self) -> f64 {
        self.primary.norm() + self.dual.norm()
    }

    /// Euclidean norm of the stacked coefficients.
    pub fn vec_norm(&self) -> f64 {
        self.vec8().norm()
    }

    pub fn is_finite(&self) -> bool {
        self.primary.is_finite() && self.dual.is_finite()
    }

    /// `vec8(a b) = H⁺₈(a) vec8(b)`.
    pub fn hamilton_plus(&self) -> Matrix8 {
        block_lower(self.primary.hamilton_plus(), self.dual.hamilton_plus())
    }

    /// `vec8(a b) = H⁻₈(b) vec8(a)`.
    pub fn hamilton_minus(&self) -> Matrix8 {
        block_lower(self.primary.hamilton_minus(), self.dual.hamilton_minus())
    }
}

fn block_lower(p: Matrix4<f64>, d: Matrix4<f64>) -> Matrix8 {
    let mut m = Matrix8::zeros();
    m.fixed_view_mut::<4, 4>(0, 0).copy_from(&p);
    m.fixed_view_mut::<4, 4>(4, 0).copy_from(&d);
    m.fixed_view_mut::<4, 4>(4, 4).copy_from(&p);
    m
}

impl Add for DualQuaternion {
    type Output = DualQuaternion;
    fn add(self, o: DualQuaternion) -> DualQuaternion {
        DualQuaternion::new(self.primary + o.primary, self.dual + o.dual)
    }
}

impl Sub for DualQuaternion {
    type Output = DualQuaternion;
    fn sub(self, o: DualQuaternion) -> DualQuaternion {
        DualQuaternion::new(self.primary - o.primary, self.dual - o.dual)
    }
}

impl Neg for DualQuaternion {
    type Output = DualQuaternion;
    fn neg(self) -> DualQuaternion {
        DualQuaternion::new(-self.primary, -self.dual)
    }
}

impl Mul<f64> for DualQuaternion {
    type Output = DualQuaternion;
    fn mul(self, s: f64) -> DualQuaternion {
        DualQuaternion::new(self.primary * s, self.dual * s)
    }
}

impl Mul for DualQuaternion {
    type Output = DualQuaternion;
    fn mul(self, b: DualQuaternion) -> DualQuaternion {
        DualQuaternion::new(
            self.primary * b.primary,
            self.primary * b.dual + self.dual * b.primary,
        )
    }
}

/// Element of Spin(3) ⋉ R³, i.e. a pose or rigid motion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnitDualQuaternion(DualQuaternion);

impl UnitDualQuaternion {
    pub const IDENTITY: UnitDualQuaternion = UnitDualQuaternion(DualQuaternion::ONE);

    /// Accepts `dq` if it satisfies the unit conditions, repairing deviations
    /// up to [`RENORMALIZE_LIMIT`].
    pub fn new(dq: DualQuaternion) -> Result<Self, DqError> {
        if !dq.is_finite() {
            return Err(DqError::NonFinite);
        }
        let norm = dq.primary.norm();
        let dot = dq.primary.dot(&dq.dual);
        let norm_dev = (norm - 1.0).abs();
        if norm_dev <= NORM_TOLERANCE && dot.abs() <= ORTHOGONALITY_TOLERANCE {
            return Ok(Self(dq));
        }
        if norm_dev > RENORMALIZE_LIMIT || dot.abs() > RENORMALIZE_LIMIT {
            return Err(DqError::NotUnitDualQuaternion { norm, dot });
        }
        let p = dq.primary * (1.0 / norm);
        let d = dq.dual * (1.0 / norm);
        let d = d - p * p.dot(&d);
        Ok(Self(DualQuaternion::new(p, d)))
    }

    /// `r + ½ ε t r`.
    pub fn from_rotation_translation(r: &UnitQuaternion, t: &Vector3<f64>) -> Self {
        let rq = r.quaternion();
        Self(DualQuaternion::new(rq, Quaternion::pure(t) * rq * 0.5))
    }

    pub fn from_translation(t: &Vector3<f64>) -> Self {
        Self::from_rotation_translation(&UnitQuaternion::IDENTITY, t)
    }

    pub fn from_rotation(r: &UnitQuaternion) -> Self {
        Self(DualQuaternion::new(r.quaternion(), Quaternion::ZERO))
    }

    pub fn dual_quaternion(&self) -> DualQuaternion {
        self.0
    }

    pub fn vec8(&self) -> Vector8 {
        self.0.vec8()
    }

    pub fn rotation(&self) -> UnitQuaternion {
        UnitQuaternion(self.0.primary)
    }

    /// `2 D(x) P(x)*`.
    pub fn translation(&self) -> Vector3<f64> {
        (self.0.dual * self.0.primary.conj() * 2.0).imag()
    }

    pub fn decompose(&self) -> (UnitQuaternion, PureQuaternion) {
        (self.rotation(), PureQuaternion::from_vec3(self.translation()))
    }

    pub fn compose(r: &UnitQuaternion, t: &PureQuaternion) -> Self {
        Self::from_rotation_translation(r, &t.vec3())
    }

    /// Conjugate, which is also the group inverse.
    pub fn conj(&self) -> Self {
        Self(self.0.conj())
    }

    /// The other element of the double cover representing the same pose.
    pub fn neg(&self) -> Self {
        Self(-self.0)
    }

    /// Applies the rigid motion to a point.
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation().rotate(p) + self.translation()
    }
}

impl Mul for UnitDualQuaternion {
    type Output = UnitDualQuaternion;
    fn mul(self, o: UnitDualQuaternion) -> UnitDualQuaternion {
        UnitDualQuaternion(self.0 * o.0)
    }
}

/// `vec4(a*) = C₄ vec4(a)`.
pub fn conjugate_matrix4() -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::new(1.0, -1.0, -1.0, -1.0))
}

/// `vec8(a*) = C₈ vec8(a)`.
pub fn conjugate_matrix8() -> Matrix8 {
    Matrix8::from_diagonal(&Vector8::from([1.0, -1.0, -1.0, -1.0, 1.0, -1.0, -1.0, -1.0]))
}

/// Unwinding-safe pose error `x̂* x_d ∓ 1`.
///
/// The `−1` branch is taken when its norm is not larger than the `+1` branch,
/// so the antipodal tie resolves to `−1`.
pub fn pose_error(estimate: &UnitDualQuaternion, desired: &UnitDualQuaternion) -> DualQuaternion {
    let e = estimate.conj().dual_quaternion() * desired.dual_quaternion();
    let minus = e - DualQuaternion::ONE;
    let plus = e + DualQuaternion::ONE;
    if minus.vec_norm() <= plus.vec_norm() {
        minus
    } else {
        plus
    }
}

/// Unwinding-safe rotation error `r̂* r_d ∓ 1`.
pub fn rotation_error(estimate: &UnitQuaternion, desired: &UnitQuaternion) -> Quaternion {
    let e = estimate.conj().quaternion() * desired.quaternion();
    let minus = e - Quaternion::ONE;
    let plus = e + Quaternion::ONE;
    if minus.norm() <= plus.norm() {
        minus
    } else {
        plus
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quat() -> impl Strategy<Value = Quaternion> {
        (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64)
            .prop_map(|(w, x, y, z)| Quaternion::new(w, x, y, z))
    }

    fn dq() -> impl Strategy<Value = DualQuaternion> {
        (quat(), quat()).prop_map(|(p, d)| DualQuaternion::new(p, d))
    }

    fn unit_dq() -> impl Strategy<Value = UnitDualQuaternion> {
        (
            prop::array::uniform3(-1.0..1.0f64),
            -6.0..6.0f64,
            prop::array::uniform3(-2.0..2.0f64),
        )
            .prop_map(|(axis, angle, t)| {
                let r = UnitQuaternion::from_axis_angle(&Vector3::from(axis), angle);
                UnitDualQuaternion::from_rotation_translation(&r, &Vector3::from(t))
            })
    }

    #[test]
    fn multiplication_table() {
        let (one, i, j, k) = (Quaternion::ONE, Quaternion::I, Quaternion::J, Quaternion::K);
        let table = [
            [one, i, j, k],
            [i, -one, k, -j],
            [j, -k, -one, i],
            [k, j, -i, -one],
        ];
        let basis = [one, i, j, k];
        for (a, row) in basis.iter().zip(&table) {
            for (b, expected) in basis.iter().zip(row) {
                assert_eq!(*a * *b, *expected);
            }
        }
        assert_eq!(i * j * k, -one);
    }

    #[test]
    fn expanded_product() {
        let a = Quaternion::ONE + Quaternion::I;
        let b = Quaternion::ONE + Quaternion::J;
        assert_eq!(a * b, Quaternion::new(1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn dual_unit_squares_to_zero() {
        let ei = DualQuaternion::new(Quaternion::ZERO, Quaternion::I);
        let ej = DualQuaternion::new(Quaternion::ZERO, Quaternion::J);
        assert_eq!(ei * ej, DualQuaternion::ZERO);
        let b = DualQuaternion::new(Quaternion::new(0.3, 1.0, -2.0, 0.5), Quaternion::K);
        assert_eq!(DualQuaternion::ONE * b, b);
    }

    #[test]
    fn conjugates() {
        assert_eq!(Quaternion::I.conj(), -Quaternion::I);
        assert_eq!(conjugate_matrix4() * Quaternion::I.vec4(), (-Quaternion::I).vec4());
        assert_eq!(conjugate_matrix4() * conjugate_matrix4(), Matrix4::identity());
    }

    #[test]
    fn vec_ordering() {
        assert_eq!(
            UnitDualQuaternion::IDENTITY.vec8(),
            Vector8::from([1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
        );
        assert_eq!(Quaternion::I.vec4(), Vector4::new(0.0, 1.0, 0.0, 0.0));
        assert_eq!(Quaternion::ONE.hamilton_minus(), Matrix4::identity());
    }

    #[test]
    fn decompose_examples() {
        let (r, t) = UnitDualQuaternion::IDENTITY.decompose();
        assert_eq!(r, UnitQuaternion::IDENTITY);
        assert_eq!(t.vec3(), Vector3::zeros());

        let x = UnitDualQuaternion::new(DualQuaternion::new(
            Quaternion::ONE,
            Quaternion::K * 0.5,
        ))
        .unwrap();
        let (r, t) = x.decompose();
        assert_eq!(r, UnitQuaternion::IDENTITY);
        assert_eq!(t.vec3(), Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn translation_then_rotation_matches_homogeneous_composition() {
        let r = UnitQuaternion::from_axis_angle(&Vector3::new(0.2, -1.0, 0.4), 0.9);
        let t = Vector3::new(0.3, -0.2, 1.1);
        let x = UnitDualQuaternion::from_translation(&t) * UnitDualQuaternion::from_rotation(&r);
        // Homogeneous oracle: T(t) R(r) applied to p is R p + t.
        let p = Vector3::new(-0.4, 0.7, 0.25);
        let rot = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
            r.quaternion().w,
            r.quaternion().x,
            r.quaternion().y,
            r.quaternion().z,
        ));
        let h = nalgebra::Translation3::from(t).to_homogeneous() * rot.to_homogeneous();
        let expected = h.transform_point(&nalgebra::Point3::from(p)).coords;
        assert!((x.transform_point(&p) - expected).norm() < 1e-14);
        assert!((x.translation() - t).norm() < 1e-15);
    }

    #[test]
    fn constructor_policy() {
        let slightly_off = DualQuaternion::new(Quaternion::new(1.0 + 1e-8, 0.0, 0.0, 0.0), Quaternion::ZERO);
        let x = UnitDualQuaternion::new(slightly_off).unwrap();
        assert!((x.dual_quaternion().primary.norm() - 1.0).abs() < 1e-15);
        let far_off = DualQuaternion::new(Quaternion::new(1.1, 0.0, 0.0, 0.0), Quaternion::ZERO);
        assert!(UnitDualQuaternion::new(far_off).is_err());
        let not_orthogonal = DualQuaternion::new(Quaternion::ONE, Quaternion::new(0.1, 0.0, 0.0, 0.0));
        assert!(UnitDualQuaternion::new(not_orthogonal).is_err());
        assert!(UnitQuaternion::new(Quaternion::new(2.0, 0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn error_examples() {
        let r = UnitQuaternion::from_axis_angle(&Vector3::new(1.0, 2.0, 3.0), 2.0);
        let x = UnitDualQuaternion::from_rotation_translation(&r, &Vector3::new(0.1, 0.2, 0.3));
        assert!(pose_error(&x, &x).vec_norm() < 1e-15);
        assert!(pose_error(&x, &x.neg()).vec_norm() < 1e-15);
        assert!(rotation_error(&r, &r.neg()).norm() < 1e-15);
    }

    #[test]
    fn antipodal_tie_takes_minus_branch() {
        // r̂* r_d = î has equal distance to +1 and −1.
        let a = UnitQuaternion::IDENTITY;
        let b = UnitQuaternion::new(Quaternion::I).unwrap();
        assert_eq!(rotation_error(&a, &b), Quaternion::I - Quaternion::ONE);
    }

    #[test]
    fn split_norm_example() {
        let e = DualQuaternion::new(Quaternion::I, Quaternion::J * 2.0);
        assert_eq!(e.split_norm(), 3.0);
        assert_eq!(DualQuaternion::ZERO.split_norm(), 0.0);
    }

    proptest! {
        #[test]
        fn hamilton_operator_duality(a in quat(), b in quat()) {
            let ab = (a * b).vec4();
            prop_assert!((ab - b.hamilton_minus() * a.vec4()).norm() <= 1e-13);
            prop_assert!((ab - a.hamilton_plus() * b.vec4()).norm() <= 1e-13);
        }

        #[test]
        fn hamilton_operator_duality8(a in dq(), b in dq()) {
            let ab = (a * b).vec8();
            prop_assert!((ab - b.hamilton_minus() * a.vec8()).norm() <= 1e-13);
            prop_assert!((ab - a.hamilton_plus() * b.vec8()).norm() <= 1e-13);
        }

        #[test]
        fn conjugate_matrix_property(a in dq()) {
            prop_assert_eq!(conjugate_matrix8() * a.vec8(), a.conj().vec8());
        }

        #[test]
        fn vec_bijection(a in dq()) {
            prop_assert_eq!(DualQuaternion::from_vec8(&a.vec8()), a);
            prop_assert_eq!(Quaternion::from_vec4(&a.primary.vec4()), a.primary);
        }

        #[test]
        fn split_norm_matches_vec8(a in dq()) {
            let v = a.vec8();
            let expected = v.rows(0, 4).norm() + v.rows(4, 4).norm();
            prop_assert!((a.split_norm() - expected).abs() < 1e-14);
        }

        #[test]
        fn unit_group_closure(a in unit_dq(), b in unit_dq()) {
            let c = (a * b).dual_quaternion();
            prop_assert!((c.primary.norm() - 1.0).abs() < 1e-10);
            prop_assert!(c.primary.dot(&c.dual).abs() < 1e-10);
            let unit = (a * a.conj()).dual_quaternion();
            prop_assert!((unit - DualQuaternion::ONE).vec_norm() < 1e-12);
        }

        #[test]
        fn decompose_roundtrip(x in unit_dq()) {
            let (r, t) = x.decompose();
            let y = UnitDualQuaternion::compose(&r, &t);
            prop_assert!((y.vec8() - x.vec8()).norm() < 1e-12);
        }

        #[test]
        fn error_picks_smaller_branch(a in unit_dq(), b in unit_dq()) {
            let e = a.conj().dual_quaternion() * b.dual_quaternion();
            let n = pose_error(&a, &b).vec_norm();
            prop_assert!(n <= (e + DualQuaternion::ONE).vec_norm());
            prop_assert!(n <= (e - DualQuaternion::ONE).vec_norm());
        }

        #[test]
        fn error_left_invariant(a in unit_dq(), b in unit_dq(), z in unit_dq()) {
            let n0 = pose_error(&a, &b).split_norm();
            let n1 = pose_error(&(z * a), &(z * b)).split_norm();
            prop_assert!((n0 - n1).abs() < 1e-10);
        }
    }
}
