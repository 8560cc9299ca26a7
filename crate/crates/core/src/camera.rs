//! Pinhole projection and image-bounds membership.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::{Point3, Pose};

pub const DEFAULT_NEAR_Z: f64 = 0.10;
pub const DEFAULT_FAR_Z: f64 = 1.5;

/// Pinhole intrinsics plus the valid depth range along the optical axis.
/// No distortion model; clouds are assumed rectified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntrinsicsRepr", into = "IntrinsicsRepr")]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub near_z: f64,
    pub far_z: f64,
}

#[derive(Serialize, Deserialize)]
struct IntrinsicsRepr {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    #[serde(default = "default_near")]
    near_z: f64,
    #[serde(default = "default_far")]
    far_z: f64,
}

fn default_near() -> f64 {
    DEFAULT_NEAR_Z
}

fn default_far() -> f64 {
    DEFAULT_FAR_Z
}

impl TryFrom<IntrinsicsRepr> for CameraIntrinsics {
    type Error = Error;

    fn try_from(r: IntrinsicsRepr) -> Result<Self> {
        let k = CameraIntrinsics {
            fx: r.fx,
            fy: r.fy,
            cx: r.cx,
            cy: r.cy,
            width: r.width,
            height: r.height,
            near_z: r.near_z,
            far_z: r.far_z,
        };
        k.validate()?;
        Ok(k)
    }
}

impl From<CameraIntrinsics> for IntrinsicsRepr {
    fn from(k: CameraIntrinsics) -> Self {
        IntrinsicsRepr {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
            near_z: k.near_z,
            far_z: k.far_z,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
}

impl CameraIntrinsics {
    /// Intrinsics with the default depth range.
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            near_z: DEFAULT_NEAR_Z,
            far_z: DEFAULT_FAR_Z,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn with_depth_range(mut self, near_z: f64, far_z: f64) -> Result<Self> {
        self.near_z = near_z;
        self.far_z = far_z;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidIntrinsics(msg));
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return bad(format!("focal lengths must be positive, got {} {}", self.fx, self.fy));
        }
        if self.width == 0 || self.height == 0 {
            return bad(format!("image size {}x{} is empty", self.width, self.height));
        }
        if !(self.cx >= 0.0 && self.cx < f64::from(self.width)) {
            return bad(format!("cx {} outside [0, {})", self.cx, self.width));
        }
        if !(self.cy >= 0.0 && self.cy < f64::from(self.height)) {
            return bad(format!("cy {} outside [0, {})", self.cy, self.height));
        }
        if !(self.near_z > 0.0 && self.near_z < self.far_z && self.far_z.is_finite()) {
            return bad(format!(
                "depth range requires 0 < near_z < far_z, got {} {}",
                self.near_z, self.far_z
            ));
        }
        Ok(())
    }

    /// Optical-axis depth test, inclusive at both ends.
    pub fn depth_in_range(&self, z: f64) -> bool {
        z >= self.near_z && z <= self.far_z
    }

    /// Projects a point already expressed in the camera frame.
    pub fn project_local(&self, p: &Point3) -> Option<PixelCoord> {
        if !self.depth_in_range(p.z) {
            return None;
        }
        Some(PixelCoord {
            u: self.fx * p.x / p.z + self.cx,
            v: self.fy * p.y / p.z + self.cy,
        })
    }

    /// Camera-frame point at optical-axis depth `z` that projects to `px`.
    pub fn back_project(&self, px: PixelCoord, z: f64) -> Point3 {
        Point3::new((px.u - self.cx) * z / self.fx, (px.v - self.cy) * z / self.fy, z)
    }
}

/// Projects a base-frame point seen from `cam_pose` (camera-to-base).
/// `None` when the camera-frame depth lies outside `[near_z, far_z]`.
pub fn project(k: &CameraIntrinsics, cam_pose: &Pose, p: &Point3) -> Option<PixelCoord> {
    project_with_inverse(k, &cam_pose.inverse(), p)
}

pub(crate) fn project_with_inverse(
    k: &CameraIntrinsics,
    base_to_cam: &Pose,
    p: &Point3,
) -> Option<PixelCoord> {
    k.project_local(&base_to_cam.transform_point(p))
}

/// Half-open image bounds: `0 <= u < W` and `0 <= v < H`.
pub fn in_bounds(k: &CameraIntrinsics, px: PixelCoord) -> bool {
    px.u >= 0.0 && px.u < f64::from(k.width) && px.v >= 0.0 && px.v < f64::from(k.height)
}
