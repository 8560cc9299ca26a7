//! Rigid transforms and frame-tagged point clouds.
//!
//! A [`Pose`] maps points from a child frame into a parent frame:
//! `p_parent = R * p_child + t`. Composition follows matrix order, so
//! `a.compose(&b)` applies `b` first and then `a`.

use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix4, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;

/// Quaternions further than this from unit norm are rejected on construction.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 7]", into = "[f64; 7]")]
pub struct Pose {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose from an already-unit rotation. The quaternion is
    /// renormalized to absorb float drift.
    pub fn from_parts(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: UnitQuaternion::new_normalize(rotation.into_inner()),
            translation,
        }
    }

    /// `[qw, qx, qy, qz, tx, ty, tz]`, the layout used by every file format.
    pub fn from_array(v: [f64; 7]) -> Result<Self> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidPose(format!("non-finite component in {v:?}")));
        }
        let q = Quaternion::new(v[0], v[1], v[2], v[3]);
        let norm = q.norm();
        if (norm - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
            return Err(Error::InvalidPose(format!(
                "quaternion norm {norm} deviates from 1 by more than {QUATERNION_NORM_TOLERANCE}"
            )));
        }
        // already-unit quaternions are kept verbatim so files round-trip bit-exactly
        let rotation = if (norm - 1.0).abs() <= 1e-12 {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::new_normalize(q)
        };
        Ok(Self {
            rotation,
            translation: Vector3::new(v[4], v[5], v[6]),
        })
    }

    pub fn to_array(&self) -> [f64; 7] {
        let q = self.rotation.quaternion();
        let t = &self.translation;
        [q.w, q.i, q.j, q.k, t.x, t.y, t.z]
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    /// Rotation by `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let rotation = match nalgebra::Unit::try_new(axis, 1e-15) {
            Some(axis) => UnitQuaternion::from_axis_angle(&axis, angle),
            None => UnitQuaternion::identity(),
        };
        Self {
            rotation,
            translation: Vector3::zeros(),
        }
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::from_axis_angle(Vector3::x(), angle)
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::from_axis_angle(Vector3::y(), angle)
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(Vector3::z(), angle)
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn position(&self) -> Point3 {
        Point3::from(self.translation)
    }

    /// `self * other`: apply `other`, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let rotation = self.rotation * other.rotation;
        Pose {
            rotation: UnitQuaternion::new_normalize(rotation.into_inner()),
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rotation = self.rotation.inverse();
        Pose {
            translation: -(rotation * self.translation),
            rotation,
        }
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = self.rotation.to_rotation_matrix().to_homogeneous();
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Rotation angle in `[0, pi]`, insensitive to quaternion sign.
    pub fn rotation_angle(&self) -> f64 {
        let q = self.rotation.quaternion();
        2.0 * q.vector().norm().atan2(q.w.abs())
    }

    /// Angle of the relative rotation between two poses.
    pub fn angle_to(&self, other: &Pose) -> f64 {
        self.inverse().compose(other).rotation_angle()
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Linear translation and shortest-arc rotation interpolation; `s = 0`
    /// gives `self`, `s = 1` gives `other` up to rounding.
    pub(crate) fn interpolate(&self, other: &Pose, s: f64) -> Pose {
        let translation = self.translation + (other.translation - self.translation) * s;
        let mut relative = self.rotation.inverse() * other.rotation;
        if relative.quaternion().w < 0.0 {
            relative = UnitQuaternion::new_unchecked(-relative.into_inner());
        }
        let rotation = match relative.axis_angle() {
            Some((axis, angle)) => self.rotation * UnitQuaternion::from_axis_angle(&axis, angle * s),
            None => self.rotation,
        };
        Pose::from_parts(rotation, translation)
    }

    /// Same rotation with the translation shifted in the parent frame.
    pub fn translated(&self, dx: f64, dy: f64, dz: f64) -> Pose {
        Pose {
            rotation: self.rotation,
            translation: self.translation + Vector3::new(dx, dy, dz),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }
}

impl TryFrom<[f64; 7]> for Pose {
    type Error = Error;

    fn try_from(v: [f64; 7]) -> Result<Self> {
        Pose::from_array(v)
    }
}

impl From<Pose> for [f64; 7] {
    fn from(p: Pose) -> Self {
        p.to_array()
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;

    fn mul(self, rhs: &Pose) -> Pose {
        self.compose(rhs)
    }
}

impl Mul<Point3> for &Pose {
    type Output = Point3;

    fn mul(self, rhs: Point3) -> Point3 {
        self.transform_point(&rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Camera,
    PoseInitial,
    Robot,
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Frame::Camera => "camera",
            Frame::PoseInitial => "pose-initial",
            Frame::Robot => "robot",
        })
    }
}

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    colors: Option<Vec<Rgb>>,
    frame: Frame,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, frame: Frame) -> Result<Self> {
        check_finite(&points)?;
        Ok(Self {
            points,
            colors: None,
            frame,
        })
    }

    pub fn with_colors(points: Vec<Point3>, colors: Vec<Rgb>, frame: Frame) -> Result<Self> {
        check_finite(&points)?;
        if colors.len() != points.len() {
            return Err(Error::ColorCountMismatch {
                points: points.len(),
                colors: colors.len(),
            });
        }
        Ok(Self {
            points,
            colors: Some(colors),
            frame,
        })
    }

    pub fn empty(frame: Frame) -> Self {
        Self {
            points: Vec::new(),
            colors: None,
            frame,
        }
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn colors(&self) -> Option<&[Rgb]> {
        self.colors.as_deref()
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn require_frame(&self, expected: Frame) -> Result<()> {
        if self.frame == expected {
            Ok(())
        } else {
            Err(Error::FrameMismatch {
                expected,
                found: self.frame,
            })
        }
    }

    /// Subset in the given index order; colors follow their points.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            colors: self
                .colors
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
            frame: self.frame,
        }
    }

    /// Replaces every point through `f`, keeping colors and frame.
    pub(crate) fn map_points(&self, f: impl Fn(usize, &Point3) -> Point3) -> PointCloud {
        PointCloud {
            points: self
                .points
                .iter()
                .enumerate()
                .map(|(i, p)| f(i, p))
                .collect(),
            colors: self.colors.clone(),
            frame: self.frame,
        }
    }

    pub fn into_parts(self) -> (Vec<Point3>, Option<Vec<Rgb>>, Frame) {
        (self.points, self.colors, self.frame)
    }
}

fn check_finite(points: &[Point3]) -> Result<()> {
    match points
        .iter()
        .position(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
    {
        Some(i) => Err(Error::NonFinitePoint(i)),
        None => Ok(()),
    }
}

/// Maps every point of `cloud` through `pose` and retags it as `new_frame`.
pub fn transform_cloud(pose: &Pose, cloud: &PointCloud, new_frame: Frame) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| pose.transform_point(p)).collect(),
        colors: cloud.colors.clone(),
        frame: new_frame,
    }
}
