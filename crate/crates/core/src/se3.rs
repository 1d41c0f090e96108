//! Rigid-body value types: poses, twists, wrenches and the small amount of
//! SO(3)/SE(3) algebra the simulator and the environment need.

use nalgebra::{Matrix3, Matrix4, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec6 = Vector6<f64>;
pub type Quat = UnitQuaternion<f64>;

/// Tolerance on the norm of an axis handed to [`axis_angle_rotation`].
pub const UNIT_AXIS_TOL: f64 = 1e-9;

/// A rigid transform: `position` of the child origin and `orientation` of the
/// child axes, both expressed in the parent frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Quat,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(position: Vec3, orientation: Quat) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Vec3::zeros(), Quat::identity())
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vec3::new(x, y, z), Quat::identity())
    }

    /// `self ∘ other`: maps points of `other`'s child frame into `self`'s parent frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        let orientation = renormalize(self.orientation * other.orientation);
        Pose {
            position: self.position + self.orientation * other.position,
            orientation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose {
            position: -(inv * self.position),
            orientation: inv,
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.position + self.orientation * p
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.orientation * v
    }

    /// Homogeneous 4×4 matrix of the transform.
    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(self.orientation.to_rotation_matrix().matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.position);
        m
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
    }
}

fn renormalize(q: Quat) -> Quat {
    UnitQuaternion::new_normalize(q.into_inner())
}

/// Spatial velocity of the end-effector origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub linear: Vec3,
    pub angular: Vec3,
}

impl Twist {
    pub fn new(linear: Vec3, angular: Vec3) -> Self {
        Self { linear, angular }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vec6(v: &Vec6) -> Self {
        Self::new(v.fixed_rows::<3>(0).into(), v.fixed_rows::<3>(3).into())
    }

    pub fn to_vec6(&self) -> Vec6 {
        stack(&self.linear, &self.angular)
    }

    pub fn rotated(&self, q: &Quat) -> Self {
        Self::new(q * self.linear, q * self.angular)
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec6().iter().all(|v| v.is_finite())
    }
}

/// Force and torque about a reference point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    pub force: Vec3,
    pub torque: Vec3,
}

impl Wrench {
    pub fn new(force: Vec3, torque: Vec3) -> Self {
        Self { force, torque }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vec6(v: &Vec6) -> Self {
        Self::new(v.fixed_rows::<3>(0).into(), v.fixed_rows::<3>(3).into())
    }

    pub fn to_vec6(&self) -> Vec6 {
        stack(&self.force, &self.torque)
    }

    pub fn rotated(&self, q: &Quat) -> Self {
        Self::new(q * self.force, q * self.torque)
    }

    /// Equivalent wrench about `to` when `self` is referenced at `from`.
    pub fn shifted(&self, from: &Vec3, to: &Vec3) -> Self {
        Self::new(self.force, self.torque + (from - to).cross(&self.force))
    }

    pub fn is_zero(&self) -> bool {
        self.force == Vec3::zeros() && self.torque == Vec3::zeros()
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec6().iter().all(|v| v.is_finite())
    }
}

impl std::ops::Add for Wrench {
    type Output = Wrench;
    fn add(self, rhs: Wrench) -> Wrench {
        Wrench::new(self.force + rhs.force, self.torque + rhs.torque)
    }
}

impl std::ops::Neg for Wrench {
    type Output = Wrench;
    fn neg(self) -> Wrench {
        Wrench::new(-self.force, -self.torque)
    }
}

pub fn stack(a: &Vec3, b: &Vec3) -> Vec6 {
    Vec6::new(a.x, a.y, a.z, b.x, b.y, b.z)
}

/// Unit quaternion rotating by `angle` radians about `axis`.
///
/// The axis must be unit length to within [`UNIT_AXIS_TOL`].
pub fn axis_angle_rotation(axis: &Vec3, angle: f64) -> Result<Quat> {
    let norm = axis.norm();
    if !(norm - 1.0).abs().le(&UNIT_AXIS_TOL) || !angle.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "rotation axis must be unit length, got norm {norm}"
        )));
    }
    let half = 0.5 * angle;
    let (s, c) = half.sin_cos();
    let q = nalgebra::Quaternion::new(c, s * axis.x, s * axis.y, s * axis.z);
    Ok(UnitQuaternion::new_normalize(q))
}

/// Exponential map of a rotation vector.
pub fn exp_so3(rotvec: &Vec3) -> Quat {
    UnitQuaternion::from_scaled_axis(*rotvec)
}

/// Log map: rotation vector with angle in `[0, π]`.
pub fn rotation_vector(q: &Quat) -> Vec3 {
    q.scaled_axis()
}

pub fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Position difference (parent frame) stacked with the rotation vector of
/// `goal⁻¹·current`. Zero iff the two poses coincide.
pub fn pose_error(current: &Pose, goal: &Pose) -> Vec6 {
    let dp = current.position - goal.position;
    let rel = goal.orientation.inverse() * current.orientation;
    stack(&dp, &rotation_vector(&rel))
}

/// Squared weighted norm of a pose-error 6-vector.
pub fn weighted_norm_sq(err: &Vec6, rotation_weight: f64) -> f64 {
    let p: Vec3 = err.fixed_rows::<3>(0).into();
    let r: Vec3 = err.fixed_rows::<3>(3).into();
    p.norm_squared() + rotation_weight * rotation_weight * r.norm_squared()
}
