//! Visibility-aware observation shaping: frustum culling against the
//! wrist camera followed by farthest-point sampling to a fixed budget.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{in_bounds, project_with_inverse, CameraIntrinsics};
use crate::dataset::{DemoFrame, Demonstration, ObservationMode, VaoRecord};
use crate::error::{Error, Result};
use crate::se3::{Frame, Point3, PointCloud, Pose};

pub const DEFAULT_N_POINTS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadPolicy {
    /// Short clouds are cycled in sampling order up to the budget.
    #[default]
    Repeat,
    /// Short clouds are an error.
    Error,
}

/// Pixel grid for the optional hidden-surface pass: within each cell only
/// the point nearest to the camera survives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterOcclusion {
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaoConfig {
    pub intrinsics: CameraIntrinsics,
    /// Camera pose relative to the end-effector.
    pub hand_eye: Pose,
    pub n_points: usize,
    pub pad_policy: PadPolicy,
    pub occlusion: Option<RasterOcclusion>,
}

impl VaoConfig {
    pub fn new(intrinsics: CameraIntrinsics, hand_eye: Pose) -> Self {
        Self {
            intrinsics,
            hand_eye,
            n_points: DEFAULT_N_POINTS,
            pad_policy: PadPolicy::Repeat,
            occlusion: None,
        }
    }

    /// Camera settings taken from the demonstration itself.
    pub fn for_demo(d: &Demonstration) -> Self {
        Self::new(d.intrinsics, d.hand_eye)
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if self.n_points == 0 {
            return Err(Error::InvalidConfig("point budget must be at least 1".into()));
        }
        if let Some(o) = self.occlusion {
            if o.width == 0 || o.height == 0 {
                return Err(Error::InvalidConfig(format!(
                    "occlusion grid {}x{} is empty",
                    o.width, o.height
                )));
            }
        }
        Ok(())
    }
}

/// Indices of the points inside the camera frustum, in input order.
pub fn visible_indices(cfg: &VaoConfig, arm_pose: &Pose, cloud: &PointCloud) -> Result<Vec<usize>> {
    cloud.require_frame(Frame::Robot)?;
    let k = &cfg.intrinsics;
    let to_cam = arm_pose.compose(&cfg.hand_eye).inverse();
    let mut keep: Vec<usize> = cloud
        .points()
        .iter()
        .enumerate()
        .filter(|(_, p)| project_with_inverse(k, &to_cam, p).is_some_and(|px| in_bounds(k, px)))
        .map(|(i, _)| i)
        .collect();
    if let Some(grid) = cfg.occlusion {
        keep = nearest_per_cell(k, &to_cam, cloud.points(), &keep, grid);
    }
    Ok(keep)
}

fn nearest_per_cell(
    k: &CameraIntrinsics,
    to_cam: &Pose,
    points: &[Point3],
    candidates: &[usize],
    grid: RasterOcclusion,
) -> Vec<usize> {
    let (gw, gh) = (grid.width as usize, grid.height as usize);
    let mut best: Vec<Option<(f64, usize)>> = vec![None; gw * gh];
    for &i in candidates {
        let c = to_cam.transform_point(&points[i]);
        let u = k.fx * c.x / c.z + k.cx;
        let v = k.fy * c.y / c.z + k.cy;
        let cu = ((u * gw as f64 / f64::from(k.width)) as usize).min(gw - 1);
        let cv = ((v * gh as f64 / f64::from(k.height)) as usize).min(gh - 1);
        let cell = &mut best[cv * gw + cu];
        if cell.is_none_or(|(z, _)| c.z < z) {
            *cell = Some((c.z, i));
        }
    }
    let mut keep: Vec<usize> = best.into_iter().flatten().map(|(_, i)| i).collect();
    keep.sort_unstable();
    keep
}

/// Frustum-culled cloud; points stay in the base frame, order preserved.
pub fn visibility_filter(cfg: &VaoConfig, arm_pose: &Pose, cloud: &PointCloud) -> Result<PointCloud> {
    Ok(cloud.select(&visible_indices(cfg, arm_pose, cloud)?))
}

fn dist2(a: &Point3, b: &Point3) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    dx * dx + dy * dy + dz * dz
}

/// Farthest-point sampling of `n <= points.len()` indices in selection
/// order. The seed is the point farthest from the centroid; every tie
/// goes to the lowest index.
pub fn fps_indices(points: &[Point3], n: usize) -> Vec<usize> {
    let n = n.min(points.len());
    if n == 0 {
        return Vec::new();
    }
    let m = points.len() as f64;
    let (mut sx, mut sy, mut sz) = (0.0, 0.0, 0.0);
    for p in points {
        sx += p.x;
        sy += p.y;
        sz += p.z;
    }
    let centroid = Point3::new(sx / m, sy / m, sz / m);
    let mut seed = 0;
    let mut far = f64::NEG_INFINITY;
    for (i, p) in points.iter().enumerate() {
        let d = dist2(p, &centroid);
        if d > far {
            far = d;
            seed = i;
        }
    }

    let mut order = Vec::with_capacity(n);
    let mut min_d = vec![f64::INFINITY; points.len()];
    let mut current = seed;
    loop {
        order.push(current);
        min_d[current] = f64::NEG_INFINITY;
        if order.len() == n {
            break;
        }
        let c = points[current];
        let mut next = usize::MAX;
        let mut best = f64::NEG_INFINITY;
        for (i, (p, m)) in points.iter().zip(min_d.iter_mut()).enumerate() {
            if *m == f64::NEG_INFINITY {
                continue;
            }
            let d = dist2(p, &c);
            if d < *m {
                *m = d;
            }
            if *m > best {
                best = *m;
                next = i;
            }
        }
        current = next;
    }
    order
}

/// Exactly `n` points: sampled when the cloud is large enough, otherwise
/// the whole cloud in sampling order repeated cyclically (`Repeat`).
pub fn fps(cloud: &PointCloud, n: usize, pad: PadPolicy) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::InvalidConfig("point budget must be at least 1".into()));
    }
    let m = cloud.len();
    if m >= n {
        return Ok(cloud.select(&fps_indices(cloud.points(), n)));
    }
    if m == 0 || pad == PadPolicy::Error {
        return Err(Error::InsufficientPoints {
            needed: n,
            available: m,
        });
    }
    let order = fps_indices(cloud.points(), m);
    let idx: Vec<usize> = order.iter().copied().cycle().take(n).collect();
    Ok(cloud.select(&idx))
}

/// Culls and resamples every observation using the frame's own arm pose.
/// Returns the new demonstration and per-frame counts.
pub fn apply_vao(cfg: &VaoConfig, d: &Demonstration) -> Result<(Demonstration, VaoRecord)> {
    cfg.validate()?;
    d.require_mode(ObservationMode::RobotBaseFrame)?;
    let results: Vec<(DemoFrame, usize, usize)> = d
        .frames
        .par_iter()
        .enumerate()
        .map(|(t, f)| {
            let visible = visibility_filter(cfg, &f.action.arm, &f.observation)
                .map_err(|e| Error::at_frame(t, e))?;
            if visible.is_empty() {
                return Err(Error::EmptyVisibleSet { frame: t });
            }
            let n_visible = visible.len();
            let observation =
                fps(&visible, cfg.n_points, cfg.pad_policy).map_err(|e| Error::at_frame(t, e))?;
            Ok((
                DemoFrame {
                    observation,
                    ..f.clone()
                },
                f.observation.len(),
                n_visible,
            ))
        })
        .collect::<Result<_>>()?;
    let mut frames = Vec::with_capacity(results.len());
    let mut pre_filter = Vec::with_capacity(results.len());
    let mut visible = Vec::with_capacity(results.len());
    for (f, pre, vis) in results {
        frames.push(f);
        pre_filter.push(pre);
        visible.push(vis);
    }
    let record = VaoRecord {
        n_points: cfg.n_points,
        pre_filter,
        visible,
    };
    Ok((
        Demonstration {
            frames,
            vao: Some(record.clone()),
            ..d.clone()
        },
        record,
    ))
}
