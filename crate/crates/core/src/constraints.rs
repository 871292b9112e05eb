//! Linear inequality blocks for both QPs: joint limits, parameter bounds and
//! vector-field inequalities between robot spheres and static obstacles.
//!
//! Every block is written as `B u ⪯ b`. Constraint functions follow
//! `h = safe − distance`, so `h ≤ 0` means collision-free.

use nalgebra::{DMatrix, DVector, Vector3};
use thiserror::Error;

use crate::kinematics::{point_jacobians, ChainFrame, KinematicsError, ParameterBounds, ParameterVector, RobotModel};

const UNIT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("{what} must be a unit vector, norm is {norm}")]
    NotUnit { what: &'static str, norm: f64 },
    #[error("sphere radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("alpha must lie in [0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// `{t : nᵀt = offset}`; the free side is `nᵀt > offset`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
    /// Extra clearance added to each sphere radius.
    pub margin: f64,
}

impl Plane {
    pub fn new(normal: Vector3<f64>, offset: f64, margin: f64) -> Result<Self, ConstraintError> {
        check_unit("plane normal", &normal)?;
        Ok(Self { normal, offset, margin })
    }
}

/// Infinite line through `point` along `direction`; a cylinder of `radius`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Line {
    pub point: Vector3<f64>,
    pub direction: Vector3<f64>,
    pub radius: f64,
}

impl Line {
    pub fn new(point: Vector3<f64>, direction: Vector3<f64>, radius: f64) -> Result<Self, ConstraintError> {
        check_unit("line direction", &direction)?;
        Ok(Self { point, direction, radius })
    }
}

fn check_unit(what: &'static str, v: &Vector3<f64>) -> Result<(), ConstraintError> {
    let norm = v.norm();
    if (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(ConstraintError::NotUnit { what, norm });
    }
    Ok(())
}

/// A sphere rigidly attached to the chain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpherePrimitive {
    pub frame: ChainFrame,
    /// Center in the attachment frame.
    pub offset: Vector3<f64>,
    pub radius: f64,
}

impl SpherePrimitive {
    pub fn new(frame: ChainFrame, offset: Vector3<f64>, radius: f64) -> Result<Self, ConstraintError> {
        if !(radius > 0.0) {
            return Err(ConstraintError::NonPositiveRadius(radius));
        }
        Ok(Self { frame, offset, radius })
    }
}

/// Static obstacle set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Obstacles {
    pub spheres: Vec<SpherePrimitive>,
    pub lines: Vec<Line>,
    pub planes: Vec<Plane>,
}

impl Obstacles {
    pub fn row_count(&self) -> usize {
        self.spheres.len() * (self.lines.len() + self.planes.len())
    }

    pub fn is_empty(&self) -> bool {
        self.row_count() == 0
    }
}

/// `B u ⪯ b` plus the constraint values that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct StackedInequalities {
    pub matrix: DMatrix<f64>,
    pub bound: DVector<f64>,
    pub h: DVector<f64>,
    pub labels: Vec<String>,
}

impl StackedInequalities {
    pub fn empty(dim: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(0, dim),
            bound: DVector::zeros(0),
            h: DVector::zeros(0),
            labels: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.bound.len()
    }

    /// Appends `other` below `self`.
    pub fn stack(&self, other: &StackedInequalities) -> StackedInequalities {
        let cols = self.matrix.ncols().max(other.matrix.ncols());
        let mut matrix = DMatrix::zeros(self.rows() + other.rows(), cols);
        matrix.view_mut((0, 0), self.matrix.shape()).copy_from(&self.matrix);
        matrix.view_mut((self.rows(), 0), other.matrix.shape()).copy_from(&other.matrix);
        let cat = |a: &DVector<f64>, b: &DVector<f64>| DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied());
        StackedInequalities {
            matrix,
            bound: cat(&self.bound, &other.bound),
            h: cat(&self.h, &other.h),
            labels: self.labels.iter().chain(other.labels.iter()).cloned().collect(),
        }
    }
}

/// Gronwall box on a variable `v` with rate `u`:
/// `u_min ⪯ u ⪯ u_max` and `−η(v − v_min) ⪯ u ⪯ −η(v − v_max)`.
fn box_block(
    name: &str,
    value: &DVector<f64>,
    min: &DVector<f64>,
    max: &DVector<f64>,
    rate: Option<(&DVector<f64>, &DVector<f64>)>,
    eta: f64,
) -> StackedInequalities {
    let n = value.len();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut blocks: Vec<(DMatrix<f64>, DVector<f64>, DVector<f64>, &str)> = Vec::new();
    if let Some((rmin, rmax)) = rate {
        blocks.push((-&eye, -rmin, DVector::from_element(n, f64::NEG_INFINITY), "rate_min"));
        blocks.push((eye.clone(), rmax.clone(), DVector::from_element(n, f64::NEG_INFINITY), "rate_max"));
    }
    blocks.push((-&eye, (value - min) * eta, min - value, "min"));
    blocks.push((eye.clone(), (value - max) * -eta, value - max, "max"));
    let mut out = StackedInequalities::empty(n);
    for (m, b, h, tag) in blocks {
        out = out.stack(&StackedInequalities {
            matrix: m,
            bound: b,
            h,
            labels: (1..=n).map(|i| format!("{name}_{i}_{tag}")).collect(),
        });
    }
    out
}

/// `W_q q̇ ⪯ w_q`: velocity box then position rows, 4n rows.
pub fn joint_limit_block(q: &DVector<f64>, model: &RobotModel, eta: f64) -> StackedInequalities {
    box_block("q", q, &model.q_min, &model.q_max, Some((&model.qdot_min, &model.qdot_max)), eta)
}

/// `W_â ȧ̂ ⪯ w_â`: optional rate box then position rows.
pub fn parameter_limit_block(a: &ParameterVector, bounds: &ParameterBounds, eta: f64) -> StackedInequalities {
    box_block(
        "a",
        a.values(),
        &bounds.min,
        &bounds.max,
        bounds.rate.as_ref().map(|(lo, hi)| (lo, hi)),
        eta,
    )
}

/// Signed distance `nᵀt − offset`.
pub fn point_to_plane(t: &Vector3<f64>, plane: &Plane) -> f64 {
    plane.normal.dot(t) - plane.offset
}

/// `e⊥ = (I − llᵀ)(t − p)`.
fn line_perpendicular(t: &Vector3<f64>, line: &Line) -> Vector3<f64> {
    let v = t - line.point;
    v - line.direction * line.direction.dot(&v)
}

/// Squared distance `‖e⊥‖²`.
pub fn point_to_line_sq(t: &Vector3<f64>, line: &Line) -> f64 {
    line_perpendicular(t, line).norm_squared()
}

/// VFI rows for both QPs, with the gain split by `alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct VfiBlocks {
    pub task: StackedInequalities,
    pub adaptation: StackedInequalities,
    /// Clearance in metres per row: `‖e⊥‖ − (R_t + R_l)` or `d − (R_t + margin)`.
    pub clearance: DVector<f64>,
}

impl VfiBlocks {
    pub fn max_h(&self) -> f64 {
        self.task.h.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_clearance(&self) -> f64 {
        self.clearance.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Constraint values, clearances and distance Jacobians for every
/// (sphere, obstacle) pair. Line rows come first, then planes; each obstacle
/// contributes one row per sphere.
struct PairRows {
    h: Vec<f64>,
    clearance: Vec<f64>,
    jq: DMatrix<f64>,
    ja: DMatrix<f64>,
    labels: Vec<String>,
}

fn pair_rows(
    model: &RobotModel,
    q: &DVector<f64>,
    a: &ParameterVector,
    obstacles: &Obstacles,
) -> Result<PairRows, ConstraintError> {
    let rows = obstacles.row_count();
    let mut out = PairRows {
        h: Vec::with_capacity(rows),
        clearance: Vec::with_capacity(rows),
        jq: DMatrix::zeros(rows, model.dof()),
        ja: DMatrix::zeros(rows, model.parameter_count()),
        labels: Vec::with_capacity(rows),
    };
    let centers = obstacles
        .spheres
        .iter()
        .map(|s| point_jacobians(model, q, a, s.frame, &s.offset))
        .collect::<Result<Vec<_>, _>>()?;
    let mut row = 0;
    for (j, line) in obstacles.lines.iter().enumerate() {
        for (i, (sphere, c)) in obstacles.spheres.iter().zip(&centers).enumerate() {
            let e = line_perpendicular(&c.position, line);
            let safe = sphere.radius + line.radius;
            out.h.push(safe * safe - e.norm_squared());
            out.clearance.push(e.norm() - safe);
            // dD = 2 e⊥ᵀ dt; B = −dD
            let g = e.transpose() * 2.0;
            out.jq.row_mut(row).copy_from(&(g * &c.jq));
            out.ja.row_mut(row).copy_from(&(g * &c.ja));
            out.labels.push(format!("sphere_{}_line_{}", i + 1, j + 1));
            row += 1;
        }
    }
    for (k, plane) in obstacles.planes.iter().enumerate() {
        for (i, (sphere, c)) in obstacles.spheres.iter().zip(&centers).enumerate() {
            let d = point_to_plane(&c.position, plane);
            let safe = sphere.radius + plane.margin;
            out.h.push(safe - d);
            out.clearance.push(d - safe);
            let g = plane.normal.transpose();
            out.jq.row_mut(row).copy_from(&(g * &c.jq));
            out.ja.row_mut(row).copy_from(&(g * &c.ja));
            out.labels.push(format!("sphere_{}_plane_{}", i + 1, k + 1));
            row += 1;
        }
    }
    Ok(out)
}

/// Builds `(B_q, b_q)` and `(B_â, b_â)` with `b_q = −ηh(1−α)`, `b_â = −ηhα`.
pub fn vfi_blocks(
    model: &RobotModel,
    q: &DVector<f64>,
    a: &ParameterVector,
    obstacles: &Obstacles,
    eta: f64,
    alpha: f64,
) -> Result<VfiBlocks, ConstraintError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ConstraintError::InvalidAlpha(alpha));
    }
    let rows = pair_rows(model, q, a, obstacles)?;
    let h = DVector::from_vec(rows.h);
    Ok(VfiBlocks {
        task: StackedInequalities {
            matrix: -rows.jq,
            bound: &h * (-eta * (1.0 - alpha)),
            h: h.clone(),
            labels: rows.labels.clone(),
        },
        adaptation: StackedInequalities {
            matrix: -rows.ja,
            bound: &h * (-eta * alpha),
            h,
            labels: rows.labels,
        },
        clearance: DVector::from_vec(rows.clearance),
    })
}

/// Constraint values and clearances only, without Jacobians.
pub fn evaluate_obstacles(
    model: &RobotModel,
    q: &DVector<f64>,
    a: &ParameterVector,
    obstacles: &Obstacles,
) -> Result<(DVector<f64>, DVector<f64>), ConstraintError> {
    let rows = pair_rows(model, q, a, obstacles)?;
    Ok((DVector::from_vec(rows.h), DVector::from_vec(rows.clearance)))
}

/// Worst disagreement between predicted and finite-difference distance rates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceJacobianReport {
    pub max_error_q: f64,
    pub max_error_a: f64,
}

/// Compares `J q̇` and `J ȧ̂` for every VFI row against central differences of
/// the distance functions along the given directions.
pub fn distance_jacobian_check(
    model: &RobotModel,
    q: &DVector<f64>,
    a: &ParameterVector,
    obstacles: &Obstacles,
    qdot: &DVector<f64>,
    adot: &DVector<f64>,
    step: f64,
) -> Result<DistanceJacobianReport, ConstraintError> {
    let rows = pair_rows(model, q, a, obstacles)?;
    // distance terms are −h up to a constant
    let dist = |qq: &DVector<f64>, aa: &ParameterVector| pair_rows(model, qq, aa, obstacles).map(|r| -DVector::from_vec(r.h));
    let fd_q = (dist(&(q + qdot * step), a)? - dist(&(q - qdot * step), a)?) / (2.0 * step);
    let fd_a = (dist(q, &ParameterVector(&a.0 + adot * step))? - dist(q, &ParameterVector(&a.0 - adot * step))?)
        / (2.0 * step);
    let amax = |v: DVector<f64>| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(DistanceJacobianReport {
        max_error_q: amax(&rows.jq * qdot - fd_q),
        max_error_a: amax(&rows.ja * adot - fd_a),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn z_line() -> Line {
        Line::new(Vector3::zeros(), Vector3::z(), 0.02).unwrap()
    }

    fn ca_like() -> Obstacles {
        let radii = [0.04, 0.015, 0.015, 0.015, 0.015, 0.075];
        let spheres = radii
            .iter()
            .enumerate()
            .map(|(i, r)| SpherePrimitive::new(ChainFrame::Effector, Vector3::new(0.0, 0.0, -0.02 * i as f64), *r).unwrap())
            .collect();
        let lines = vec![
            Line::new(Vector3::new(0.5, 0.3, 0.0), Vector3::z(), 0.02).unwrap(),
            Line::new(Vector3::new(0.5, -0.3, 0.0), Vector3::z(), 0.02).unwrap(),
        ];
        let planes = vec![
            Plane::new(Vector3::z(), -0.2, 0.02).unwrap(),
            Plane::new(-Vector3::z(), -1.2, 0.02).unwrap(),
            Plane::new(Vector3::x(), -0.5, 0.02).unwrap(),
            Plane::new(-Vector3::x(), -1.0, 0.02).unwrap(),
        ];
        Obstacles { spheres, lines, planes }
    }

    #[test]
    fn plane_distance_examples() {
        let p = Plane::new(Vector3::z(), 0.0, 0.0).unwrap();
        assert_eq!(point_to_plane(&Vector3::new(0.0, 0.0, 1.0), &p), 1.0);
        assert_eq!(point_to_plane(&Vector3::new(3.0, -2.0, 0.0), &p), 0.0);
        let t = Vector3::new(0.3, 0.1, -0.4);
        assert!((point_to_plane(&(t + p.normal), &p) - point_to_plane(&t, &p) - 1.0).abs() < 1e-15);
        assert!(Plane::new(Vector3::new(0.0, 0.0, 2.0), 0.0, 0.0).is_err());
    }

    #[test]
    fn line_distance_examples() {
        let l = z_line();
        assert_eq!(point_to_line_sq(&Vector3::new(1.0, 0.0, 0.0), &l), 1.0);
        assert_eq!(point_to_line_sq(&Vector3::new(0.0, 0.0, 5.0), &l), 0.0);
        let t = Vector3::new(0.3, -0.2, 0.1);
        assert!((point_to_line_sq(&(t + l.direction * 7.0), &l) - point_to_line_sq(&t, &l)).abs() < 1e-15);
    }

    #[test]
    fn distances_match_sampled_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let dir = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize();
            let p = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let line = Line::new(p, dir, 0.0).unwrap();
            let t = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            // golden-section search along the line parameter
            let f = |s: f64| (p + dir * s - t).norm_squared();
            let (mut lo, mut hi) = (-10.0, 10.0);
            for _ in 0..200 {
                let m1 = lo + (hi - lo) * 0.382;
                let m2 = lo + (hi - lo) * 0.618;
                if f(m1) < f(m2) {
                    hi = m2
                } else {
                    lo = m1
                }
            }
            assert!((f(0.5 * (lo + hi)) - point_to_line_sq(&t, &line)).abs() < 1e-6);

            let plane = Plane::new(dir, rng.random_range(-1.0..1.0), 0.0).unwrap();
            let d = point_to_plane(&t, &plane);
            // nearest in-plane point by projection, then random in-plane samples never get closer
            let foot = t - dir * d;
            assert!(point_to_plane(&foot, &plane).abs() < 1e-12);
            for _ in 0..100 {
                let w = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
                let s = foot + (w - dir * dir.dot(&w));
                assert!((s - t).norm() >= d.abs() - 1e-12);
            }
        }
    }

    #[test]
    fn safe_distance_for_paper_radii() {
        let sphere = SpherePrimitive::new(ChainFrame::Effector, Vector3::zeros(), 0.04).unwrap();
        let safe = sphere.radius + z_line().radius;
        assert!((safe * safe - 0.0036).abs() < 1e-15);
    }

    #[test]
    fn joint_limit_examples() {
        let model = RobotModel::vs050();
        let mid = (&model.q_min + &model.q_max) / 2.0;
        let blk = joint_limit_block(&mid, &model, 1.0);
        assert_eq!(blk.rows(), 24);
        assert!(blk.bound.rows(0, 12).iter().all(|b| (*b - 0.2).abs() < 1e-15));
        for i in 0..6 {
            assert!((blk.bound[12 + i] - blk.bound[18 + i]).abs() < 1e-12);
        }
        let blk = joint_limit_block(&model.q_max, &model, 1.0);
        assert!(blk.bound.rows(18, 6).iter().all(|b| b.abs() < 1e-15));
        assert!(blk.h.rows(18, 6).iter().all(|h| h.abs() < 1e-15));
    }

    #[test]
    fn parameter_limit_examples() {
        let model = RobotModel::vs050();
        let nominal = model.nominal_parameters();
        let hw = DVector::from_fn(36, |k, _| {
            if crate::kinematics::is_angular_param(6, k) {
                1f64.to_radians()
            } else {
                0.001
            }
        });
        let bounds = ParameterBounds::around(&nominal, &hw);
        let blk = parameter_limit_block(&nominal, &bounds, 2.0);
        assert_eq!(blk.rows(), 72);
        assert!((blk.bound[1] - 0.002).abs() < 1e-15);
        assert!((blk.bound[0] - 2.0 * 1f64.to_radians()).abs() < 1e-15);
        let zero = parameter_limit_block(&nominal, &bounds, 0.0);
        assert!(zero.bound.iter().all(|b| *b == 0.0));
        let mut at_max = nominal.clone();
        at_max.0[1] = bounds.max[1];
        assert_eq!(parameter_limit_block(&at_max, &bounds, 2.0).bound[36 + 1], 0.0);
        let with_rate = ParameterBounds {
            rate: Some((DVector::from_element(36, -0.1), DVector::from_element(36, 0.1))),
            ..bounds
        };
        assert_eq!(parameter_limit_block(&nominal, &with_rate, 2.0).rows(), 144);
    }

    #[test]
    fn ca_layout_has_36_rows() {
        let model = RobotModel::vs050();
        let q = DVector::from_row_slice(&[0.0, 0.3, 1.2, 0.0, 1.2, 0.0]);
        let blk = vfi_blocks(&model, &q, &model.nominal_parameters(), &ca_like(), 10.0, 0.5).unwrap();
        assert_eq!(blk.task.rows(), 36);
        assert_eq!(blk.adaptation.matrix.shape(), (36, 36));
        assert_eq!(blk.task.labels[0], "sphere_1_line_1");
        assert_eq!(blk.task.labels[12], "sphere_1_plane_1");
    }

    #[test]
    fn alpha_split() {
        let model = RobotModel::vs050();
        let q = DVector::from_row_slice(&[0.0, 0.3, 1.2, 0.0, 1.2, 0.0]);
        let a = model.nominal_parameters();
        let obs = ca_like();
        for alpha in [0.0, 0.3, 0.5, 1.0] {
            let blk = vfi_blocks(&model, &q, &a, &obs, 10.0, alpha).unwrap();
            let sum = &blk.task.bound + &blk.adaptation.bound;
            assert!((sum + &blk.task.h * 10.0).amax() < 1e-14);
            if alpha == 0.0 {
                assert!(blk.adaptation.bound.iter().all(|b| *b == 0.0));
            }
            if alpha == 1.0 {
                assert!(blk.task.bound.iter().all(|b| *b == 0.0));
            }
        }
        assert!(vfi_blocks(&model, &q, &a, &obs, 10.0, 1.5).is_err());
    }

    #[test]
    fn jacobian_check_and_zero_velocity() {
        let model = RobotModel::vs050();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let obs = ca_like();
        for _ in 0..20 {
            let q = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
            let a = model.nominal_parameters();
            let qdot = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
            let adot = DVector::from_fn(36, |_, _| rng.random_range(-1.0..1.0));
            let r = distance_jacobian_check(&model, &q, &a, &obs, &qdot, &adot, 1e-6).unwrap();
            assert!(r.max_error_q < 1e-6 && r.max_error_a < 1e-6, "{r:?}");
            let z = distance_jacobian_check(&model, &q, &a, &obs, &DVector::zeros(6), &DVector::zeros(36), 1e-6).unwrap();
            assert_eq!(z.max_error_q, 0.0);
        }
    }

    proptest! {
        #[test]
        fn rest_is_feasible_when_safe(
            q in prop::collection::vec(-1.0..1.0f64, 6),
            eta in 0.0..20.0f64,
            alpha in 0.0..=1.0f64,
        ) {
            let model = RobotModel::vs050();
            let q = DVector::from_vec(q);
            let a = model.nominal_parameters();
            let blk = vfi_blocks(&model, &q, &a, &ca_like(), eta, alpha).unwrap();
            for i in 0..blk.task.rows() {
                if blk.task.h[i] <= 0.0 {
                    prop_assert!(blk.task.bound[i] >= 0.0 && blk.adaptation.bound[i] >= 0.0);
                }
            }
            let joints = joint_limit_block(&q, &model, eta);
            prop_assert!(joints.bound.iter().all(|b| *b >= 0.0));
        }
    }
}
