//! Invariant checks over a loaded demonstration.

use std::fmt;

use super::{Demonstration, ObservationMode};
use crate::camera::CameraIntrinsics;
use crate::se3::{Point3, Pose};
use crate::segment::{SegmentKind, SegmentedTrajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    /// Added to the step caps before a step counts as a jump.
    pub continuity_slack: f64,
    /// Frustum slack in pixels and meters; stored clouds are `f32`.
    pub frustum_slack: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            continuity_slack: 1e-9,
            frustum_slack: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub frame: Option<usize>,
    pub message: String,
}

impl Violation {
    fn global(message: impl Into<String>) -> Self {
        Self {
            frame: None,
            message: message.into(),
        }
    }

    fn at(frame: usize, message: impl Into<String>) -> Self {
        Self {
            frame: Some(frame),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.frame {
            Some(t) => write!(f, "frame {t}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Steps `t -> t+1` whose translation or rotation exceeds the caps. Steps
/// with both frames inside the same skill segment are skipped when
/// `segments` is given: skill motion is copied from the source.
pub fn check_continuity(
    arms: &[Pose],
    segments: Option<&SegmentedTrajectory>,
    step_cap: f64,
    angle_cap: f64,
    slack: f64,
) -> Vec<Violation> {
    let mut out = Vec::new();
    for t in 0..arms.len().saturating_sub(1) {
        let inside_skill = segments.is_some_and(|s| {
            s.segments
                .iter()
                .any(|g| g.kind == SegmentKind::Skill && g.contains(t) && g.contains(t + 1))
        });
        if inside_skill {
            continue;
        }
        let d = arms[t].distance_to(&arms[t + 1]);
        let a = arms[t].angle_to(&arms[t + 1]);
        if d > step_cap + slack {
            out.push(Violation::at(t, format!("step to {} moves {d:.6} m > cap {step_cap}", t + 1)));
        }
        if a > angle_cap + slack {
            out.push(Violation::at(t, format!("step to {} turns {a:.6} rad > cap {angle_cap}", t + 1)));
        }
    }
    out
}

fn in_frustum(k: &CameraIntrinsics, base_to_cam: &Pose, p: &Point3, slack: f64) -> bool {
    let c = base_to_cam.transform_point(p);
    if c.z < k.near_z - slack || c.z > k.far_z + slack || c.z <= 0.0 {
        return false;
    }
    let u = k.fx * c.x / c.z + k.cx;
    let v = k.fy * c.y / c.z + k.cy;
    u >= -slack && u < f64::from(k.width) + slack && v >= -slack && v < f64::from(k.height) + slack
}

/// Every violated invariant; empty when the demonstration is valid.
pub fn validate_demo(d: &Demonstration, opts: &ValidationOptions) -> Vec<Violation> {
    let mut out = Vec::new();
    if let Err(e) = d.check_structure() {
        out.push(Violation::global(e.to_string()));
        return out;
    }
    if d.len() < 2 {
        out.push(Violation::global(format!("{} frame(s), need at least 2", d.len())));
    }
    if d.objects.is_empty() {
        out.push(Violation::global("object configuration is empty"));
    }
    if !d.hand_eye.is_finite() {
        out.push(Violation::global("hand-eye pose is not finite"));
    }
    for (t, w) in d.frames.windows(2).enumerate() {
        if !(w[1].timestamp > w[0].timestamp) {
            out.push(Violation::at(
                t + 1,
                format!("timestamp {} does not follow {}", w[1].timestamp, w[0].timestamp),
            ));
        }
    }
    if d.frames.iter().any(|f| !f.timestamp.is_finite()) {
        out.push(Violation::global("non-finite timestamp"));
    }

    let segments = match &d.segments {
        Some(s) => {
            let seg = SegmentedTrajectory {
                segments: s.clone(),
            };
            match seg.validate(d.len(), &d.objects) {
                Ok(()) => Some(seg),
                Err(e) => {
                    out.push(Violation::global(e.to_string()));
                    None
                }
            }
        }
        None => None,
    };

    if let Some(g) = &d.generation {
        out.extend(check_continuity(
            &d.arm_poses(),
            segments.as_ref(),
            g.step_cap,
            g.angle_cap,
            opts.continuity_slack,
        ));
    }
    if let Some(v) = &d.vao {
        if v.pre_filter.len() != d.len() || v.visible.len() != d.len() {
            out.push(Violation::global(format!(
                "visibility record covers {}/{} frames, demonstration has {}",
                v.pre_filter.len(),
                v.visible.len(),
                d.len()
            )));
        }
        if d.mode != ObservationMode::RobotBaseFrame {
            out.push(Violation::global("visibility-filtered data must be in the robot base frame"));
        }
        for (t, f) in d.frames.iter().enumerate() {
            if f.observation.len() != v.n_points {
                out.push(Violation::at(
                    t,
                    format!("{} points, expected {}", f.observation.len(), v.n_points),
                ));
            }
            let to_cam = d.camera_pose(t).inverse();
            let outside = f
                .observation
                .points()
                .iter()
                .filter(|p| !in_frustum(&d.intrinsics, &to_cam, p, opts.frustum_slack))
                .count();
            if outside > 0 {
                out.push(Violation::at(t, format!("{outside} point(s) outside the camera frustum")));
            }
        }
        for (t, (pre, vis)) in v.pre_filter.iter().zip(&v.visible).enumerate() {
            if vis > pre {
                out.push(Violation::at(t, format!("visible count {vis} exceeds pre-filter count {pre}")));
            }
        }
    }
    out
}
