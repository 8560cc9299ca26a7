//! Synthetic ground truth: primitive scenes, a ray-cast depth renderer,
//! scripted demonstrations and Chamfer comparison against renders.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::dataset::{Action, DemoFrame, Demonstration, ObjectConfiguration, ObservationMode};
use crate::error::{Error, Result};
use crate::se3::{Frame, Point3, PointCloud, Pose, Rgb};
use crate::segment::{object_tracks, track_objects, GraspEvent, Segment, SegmentKind, SegmentedTrajectory, SegmenterParams};

const DEFAULT_COLOR: Rgb = [160, 160, 160];
const GROUND_COLOR: Rgb = [90, 70, 50];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Box { half_extents: [f64; 3] },
    /// Axis along local z.
    Cylinder { radius: f64, half_height: f64 },
    Sphere { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Primitive {
    pub shape: Shape,
    pub pose: Pose,
    /// Object the primitive belongs to; it moves with that object.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<Rgb>,
}

/// Camera used when a scene file drives rendering on its own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSetup {
    pub intrinsics: CameraIntrinsics,
    /// Camera pose relative to the end-effector.
    #[serde(default)]
    pub hand_eye: Pose,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimitiveScene {
    pub primitives: Vec<Primitive>,
    /// Infinite plane `z = 0` in the base frame.
    #[serde(default)]
    pub ground_plane: bool,
    /// Poses of the objects the primitives are bound to.
    #[serde(default)]
    pub objects: ObjectConfiguration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraSetup>,
}

impl PrimitiveScene {
    pub fn validate(&self) -> Result<()> {
        self.objects.validate()?;
        for (i, p) in self.primitives.iter().enumerate() {
            let dims: Vec<f64> = match p.shape {
                Shape::Box { half_extents } => half_extents.to_vec(),
                Shape::Cylinder { radius, half_height } => vec![radius, half_height],
                Shape::Sphere { radius } => vec![radius],
            };
            if !dims.iter().all(|d| *d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidScene(format!("primitive {i} has non-positive dimensions")));
            }
            if !p.pose.is_finite() {
                return Err(Error::InvalidScene(format!("primitive {i} has a non-finite pose")));
            }
            if let Some(name) = &p.object {
                if self.objects.get(name).is_none() {
                    return Err(Error::InvalidScene(format!("primitive {i} binds unknown object '{name}'")));
                }
            }
        }
        Ok(())
    }

    /// Scene with every object at `poses` (configuration order); bound
    /// primitives follow their object rigidly.
    pub fn at_poses(&self, poses: &[Pose]) -> Result<PrimitiveScene> {
        if poses.len() != self.objects.len() {
            return Err(Error::InvalidScene(format!(
                "{} poses for {} objects",
                poses.len(),
                self.objects.len()
            )));
        }
        let moves: Vec<Pose> = self
            .objects
            .entries()
            .iter()
            .zip(poses)
            .map(|(e, p)| p.compose(&e.pose.inverse()))
            .collect();
        let primitives = self
            .primitives
            .iter()
            .map(|p| {
                let mut q = p.clone();
                if let Some(i) = p.object.as_deref().and_then(|n| self.objects.index_of(n)) {
                    if poses[i] != self.objects.entries()[i].pose {
                        q.pose = moves[i].compose(&p.pose);
                    }
                }
                q
            })
            .collect();
        let mut objects = self.objects.clone();
        for (e, p) in self.objects.entries().iter().zip(poses) {
            if *p != e.pose {
                objects = objects.with_pose(&e.name, *p)?;
            }
        }
        Ok(PrimitiveScene {
            primitives,
            ground_plane: self.ground_plane,
            objects,
            camera: self.camera,
        })
    }

    /// Scene rearranged to `target`, matched by object name.
    pub fn with_configuration(&self, target: &ObjectConfiguration) -> Result<PrimitiveScene> {
        let poses = self
            .objects
            .entries()
            .iter()
            .map(|e| {
                target
                    .get(&e.name)
                    .map(|t| t.pose)
                    .ok_or_else(|| Error::InvalidScene(format!("target lacks object '{}'", e.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        self.at_poses(&poses)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RenderOptions {
    /// Standard deviation of depth noise along each ray, meters; 0 disables it.
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Ray `o + t d` in some frame; `t` equals camera-frame depth.
#[derive(Clone, Copy)]
struct Ray {
    o: [f64; 3],
    d: [f64; 3],
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Roots of `a t^2 + 2 b t + c`, ascending.
fn quadratic(a: f64, b: f64, c: f64) -> Option<(f64, f64)> {
    let disc = b * b - a * c;
    if disc < 0.0 || a == 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some(((-b - s) / a, (-b + s) / a))
}

/// Nearest intersection parameter in `[lo, hi]`.
fn intersect(shape: &Shape, r: &Ray, lo: f64, hi: f64) -> Option<f64> {
    let ok = |t: f64| t >= lo && t <= hi;
    let pick = |ts: &[f64]| ts.iter().copied().filter(|t| ok(*t)).min_by(f64::total_cmp);
    match *shape {
        Shape::Sphere { radius } => {
            let (t0, t1) = quadratic(dot(&r.d, &r.d), dot(&r.o, &r.d), dot(&r.o, &r.o) - radius * radius)?;
            pick(&[t0, t1])
        }
        Shape::Box { half_extents: h } => {
            let (mut tmin, mut tmax) = (f64::NEG_INFINITY, f64::INFINITY);
            for i in 0..3 {
                if r.d[i] == 0.0 {
                    if r.o[i].abs() > h[i] {
                        return None;
                    }
                } else {
                    let a = (-h[i] - r.o[i]) / r.d[i];
                    let b = (h[i] - r.o[i]) / r.d[i];
                    tmin = tmin.max(a.min(b));
                    tmax = tmax.min(a.max(b));
                }
            }
            if tmin > tmax {
                return None;
            }
            pick(&[tmin, tmax])
        }
        Shape::Cylinder { radius, half_height } => {
            let mut ts = Vec::with_capacity(4);
            let a = r.d[0] * r.d[0] + r.d[1] * r.d[1];
            let b = r.o[0] * r.d[0] + r.o[1] * r.d[1];
            let c = r.o[0] * r.o[0] + r.o[1] * r.o[1] - radius * radius;
            if let Some((t0, t1)) = quadratic(a, b, c) {
                for t in [t0, t1] {
                    if (r.o[2] + t * r.d[2]).abs() <= half_height {
                        ts.push(t);
                    }
                }
            }
            if r.d[2] != 0.0 {
                for z in [-half_height, half_height] {
                    let t = (z - r.o[2]) / r.d[2];
                    let (x, y) = (r.o[0] + t * r.d[0], r.o[1] + t * r.d[1]);
                    if x * x + y * y <= radius * radius {
                        ts.push(t);
                    }
                }
            }
            pick(&ts)
        }
    }
}

struct Prepared {
    shape: Shape,
    to_local: Pose,
    color: Rgb,
}

/// One ray per pixel through `(u + 0.5, v + 0.5)`, row-major. The nearest
/// surface with camera depth in `[near_z, far_z]` yields a base-frame point.
pub fn render_depth(
    scene: &PrimitiveScene,
    k: &CameraIntrinsics,
    cam_pose: &Pose,
    opts: &RenderOptions,
) -> Result<PointCloud> {
    let prepared: Vec<Prepared> = scene
        .primitives
        .iter()
        .map(|p| Prepared {
            shape: p.shape,
            to_local: p.pose.inverse(),
            color: p.color.unwrap_or(DEFAULT_COLOR),
        })
        .collect();
    let origin = cam_pose.position();
    let (w, h) = (k.width as usize, k.height as usize);
    let rows: Vec<Vec<(f64, [f64; 3], Rgb)>> = (0..h)
        .into_par_iter()
        .map(|v| {
            let mut row = Vec::new();
            for u in 0..w {
                let dc = nalgebra::Vector3::new(
                    (u as f64 + 0.5 - k.cx) / k.fx,
                    (v as f64 + 0.5 - k.cy) / k.fy,
                    1.0,
                );
                let dw = cam_pose.transform_vector(&dc);
                let ray = Ray {
                    o: [origin.x, origin.y, origin.z],
                    d: [dw.x, dw.y, dw.z],
                };
                let mut best: Option<(f64, Rgb)> = None;
                for p in &prepared {
                    let lo = p.to_local.transform_point(&origin);
                    let ld = p.to_local.transform_vector(&dw);
                    let local = Ray {
                        o: [lo.x, lo.y, lo.z],
                        d: [ld.x, ld.y, ld.z],
                    };
                    if let Some(t) = intersect(&p.shape, &local, k.near_z, k.far_z) {
                        if best.is_none_or(|(bt, _)| t < bt) {
                            best = Some((t, p.color));
                        }
                    }
                }
                if scene.ground_plane && ray.d[2] != 0.0 {
                    let t = -ray.o[2] / ray.d[2];
                    if t >= k.near_z && t <= k.far_z && best.is_none_or(|(bt, _)| t < bt) {
                        best = Some((t, GROUND_COLOR));
                    }
                }
                if let Some((t, c)) = best {
                    row.push((t, ray.d, c));
                }
            }
            row
        })
        .collect();

    let mut noise = (opts.noise_sigma > 0.0)
        .then(|| {
            Normal::new(0.0, opts.noise_sigma)
                .map(|n| (n, ChaCha8Rng::seed_from_u64(opts.seed)))
                .map_err(|e| Error::InvalidScene(e.to_string()))
        })
        .transpose()?;
    let mut points = Vec::new();
    let mut colors = Vec::new();
    for (t, d, c) in rows.into_iter().flatten() {
        let t = match noise.as_mut() {
            Some((n, rng)) => t + n.sample(rng),
            None => t,
        };
        points.push(Point3::new(origin.x + t * d[0], origin.y + t * d[1], origin.z + t * d[2]));
        colors.push(c);
    }
    PointCloud::with_colors(points, colors, Frame::Robot)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Motion,
    Skill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub pose: Pose,
    /// Frames added while moving from the previous pose to this one.
    pub steps: usize,
    /// Gripper value for all of this waypoint's frames.
    pub hand: f64,
    /// Object attached at this waypoint's first frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grasp: Option<String>,
    /// Release the held object at this waypoint's first frame.
    #[serde(default)]
    pub release: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub kind: StageKind,
    /// Bound object of a skill stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
    pub waypoints: Vec<Waypoint>,
}

/// A demonstration script. Frame 0 sits at `start` and belongs to the
/// first stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    pub frame_rate: f64,
    pub start: Pose,
    pub start_hand: f64,
    pub stages: Vec<Stage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedDemo {
    pub demo: Demonstration,
    pub segmentation: SegmentedTrajectory,
    pub grasps: Vec<GraspEvent>,
}

/// Interpolated trajectory of a script: arm poses, hands, and the
/// ground-truth segments and grasp events.
fn expand_script(script: &Script, objects: &ObjectConfiguration) -> Result<(Vec<Pose>, Vec<f64>, Vec<Segment>, Vec<GraspEvent>)> {
    if !(script.frame_rate > 0.0 && script.frame_rate.is_finite()) {
        return Err(Error::InvalidScene(format!("frame rate {} is not positive", script.frame_rate)));
    }
    let mut arms = vec![script.start];
    let mut hands = vec![script.start_hand];
    let mut segments: Vec<Segment> = Vec::new();
    let mut grasps: Vec<GraspEvent> = Vec::new();
    let mut stage_start = 0;
    for (si, stage) in script.stages.iter().enumerate() {
        for wp in &stage.waypoints {
            if !wp.pose.is_finite() {
                return Err(Error::InvalidScene(format!("stage {si}: non-finite waypoint")));
            }
            let first = arms.len();
            if wp.release {
                match grasps.last_mut() {
                    Some(g) if g.release.is_none() => g.release = Some(first),
                    _ => return Err(Error::InvalidScene(format!("stage {si}: release without a held object"))),
                }
            }
            if let Some(name) = &wp.grasp {
                let object = objects
                    .index_of(name)
                    .ok_or_else(|| Error::InvalidScene(format!("stage {si}: grasp of unknown object '{name}'")))?;
                if grasps.last().is_some_and(|g| g.release.is_none()) {
                    return Err(Error::InvalidScene(format!("stage {si}: grasp while holding an object")));
                }
                grasps.push(GraspEvent {
                    object,
                    grasp: first,
                    release: None,
                });
            }
            let prev = *arms.last().expect("start pose");
            for i in 1..=wp.steps {
                let s = i as f64 / wp.steps as f64;
                arms.push(if i == wp.steps { wp.pose } else { prev.interpolate(&wp.pose, s) });
                hands.push(wp.hand);
            }
        }
        let end = arms.len();
        if end == stage_start {
            return Err(Error::InvalidScene(format!("stage {si} adds no frames")));
        }
        let object = match (stage.kind, &stage.object) {
            (StageKind::Skill, Some(o)) => Some(o.clone()),
            (StageKind::Skill, None) => return Err(Error::InvalidScene(format!("skill stage {si} names no object"))),
            (StageKind::Motion, _) => None,
        };
        let kind = match stage.kind {
            StageKind::Skill => SegmentKind::Skill,
            StageKind::Motion => SegmentKind::Motion,
        };
        segments.push(Segment {
            kind,
            start: stage_start,
            end,
            object,
        });
        stage_start = end;
    }
    if let Some(t) = hands.iter().position(|h| !(0.0..=1.0).contains(h)) {
        return Err(Error::InvalidScene(format!("frame {t}: hand value outside [0, 1]")));
    }
    Ok((arms, hands, segments, grasps))
}

/// Renders a scripted demonstration of `scene`; grasped objects travel
/// with the end-effector.
pub fn script_demo(
    scene: &PrimitiveScene,
    script: &Script,
    k: &CameraIntrinsics,
    hand_eye: &Pose,
    opts: &RenderOptions,
) -> Result<ScriptedDemo> {
    scene.validate()?;
    k.validate()?;
    let (arms, hands, segments, grasps) = expand_script(script, &scene.objects)?;
    if arms.len() < 2 {
        return Err(Error::InvalidScene(format!("script yields {} frame(s), need at least 2", arms.len())));
    }
    let segmentation = SegmentedTrajectory::new(segments, arms.len(), &scene.objects)
        .map_err(|e| Error::InvalidScene(e.to_string()))?;
    let tracks = track_objects(&arms, &scene.objects.poses(), &grasps);
    let frames = arms
        .par_iter()
        .zip(hands.par_iter())
        .zip(tracks.par_iter())
        .enumerate()
        .map(|(t, ((arm, hand), poses))| {
            let cam = arm.compose(hand_eye);
            let frame_opts = RenderOptions {
                seed: opts.seed.wrapping_add(t as u64),
                ..*opts
            };
            let observation = render_depth(&scene.at_poses(poses)?, k, &cam, &frame_opts)?;
            Ok(DemoFrame {
                timestamp: t as f64 / script.frame_rate,
                observation,
                action: Action { arm: *arm, hand: *hand },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let demo = Demonstration {
        frames,
        objects: scene.objects.clone(),
        intrinsics: *k,
        mode: ObservationMode::RobotBaseFrame,
        hand_eye: *hand_eye,
        frame_rate: script.frame_rate,
        segments: None,
        generation: None,
        vao: None,
    };
    Ok(ScriptedDemo {
        demo,
        segmentation,
        grasps,
    })
}

/// Fresh renders along a demonstration's own trajectory, with the scene
/// arranged in the demonstration's configuration and grasped objects
/// following the gripper signal.
pub fn oracle_renders(
    scene: &PrimitiveScene,
    d: &Demonstration,
    params: &SegmenterParams,
    opts: &RenderOptions,
) -> Result<Vec<PointCloud>> {
    let base = scene.with_configuration(&d.objects)?;
    let tracks = object_tracks(d, params)?;
    (0..d.len())
        .into_par_iter()
        .map(|t| render_depth(&base.at_poses(&tracks[t])?, &d.intrinsics, &d.camera_pose(t), opts))
        .collect()
}

/// Per-frame symmetric Chamfer distance between a demonstration's
/// observations and oracle renders along its trajectory.
pub fn oracle_compare(
    generated: &Demonstration,
    scene_at_target: &PrimitiveScene,
    params: &SegmenterParams,
) -> Result<Vec<f64>> {
    generated.require_mode(ObservationMode::RobotBaseFrame)?;
    let renders = oracle_renders(scene_at_target, generated, params, &RenderOptions::default())?;
    let clouds: Vec<PointCloud> = generated.frames.iter().map(|f| f.observation.clone()).collect();
    chamfer_per_frame(&clouds, &renders)
}

pub fn chamfer_per_frame(a: &[PointCloud], b: &[PointCloud]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::InvalidDemo(format!("{} frames against {} renders", a.len(), b.len())));
    }
    Ok(a.par_iter()
        .zip(b.par_iter())
        .map(|(x, y)| chamfer(x.points(), y.points()))
        .collect())
}

/// `0.5 * (mean NN distance a->b + mean NN distance b->a)`; zero for two
/// empty sets and infinite when exactly one is empty.
pub fn chamfer(a: &[Point3], b: &[Point3]) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return f64::INFINITY,
        _ => {}
    }
    let ga = NearestGrid::new(a);
    let gb = NearestGrid::new(b);
    let ab: f64 = a.iter().map(|p| gb.nearest(p)).sum::<f64>() / a.len() as f64;
    let ba: f64 = b.iter().map(|p| ga.nearest(p)).sum::<f64>() / b.len() as f64;
    0.5 * (ab + ba)
}

/// Uniform hash grid for nearest-neighbor distance queries.
pub struct NearestGrid<'a> {
    points: &'a [Point3],
    cell: f64,
    cells: HashMap<[i64; 3], Vec<u32>>,
    lo: [i64; 3],
    hi: [i64; 3],
}

impl<'a> NearestGrid<'a> {
    pub fn new(points: &'a [Point3]) -> Self {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        for p in points {
            for i in 0..3 {
                min[i] = min[i].min(p[i]);
                max[i] = max[i].max(p[i]);
            }
        }
        let extent = (0..3).map(|i| max[i] - min[i]).fold(0.0, f64::max);
        // depth clouds are surfaces: cell count grows with sqrt(n)
        let cell = if extent > 0.0 {
            2.0 * extent / (points.len() as f64).sqrt()
        } else {
            1.0
        };
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for (i, p) in points.iter().enumerate() {
            let key = Self::key_of(cell, p);
            for a in 0..3 {
                lo[a] = lo[a].min(key[a]);
                hi[a] = hi[a].max(key[a]);
            }
            cells.entry(key).or_default().push(i as u32);
        }
        Self {
            points,
            cell,
            cells,
            lo,
            hi,
        }
    }

    fn key_of(cell: f64, p: &Point3) -> [i64; 3] {
        [
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        ]
    }

    /// Distance from `q` to the nearest stored point.
    pub fn nearest(&self, q: &Point3) -> f64 {
        let c = Self::key_of(self.cell, q);
        let max_r = (0..3)
            .map(|a| (c[a] - self.lo[a]).abs().max((self.hi[a] - c[a]).abs()))
            .max()
            .unwrap_or(0);
        let mut best = f64::INFINITY;
        let mut r = 0i64;
        loop {
            for dx in -r..=r {
                for dy in -r..=r {
                    for dz in -r..=r {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                            continue;
                        }
                        if let Some(ids) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                            for &i in ids {
                                let d = (self.points[i as usize] - q).norm_squared();
                                if d < best {
                                    best = d;
                                }
                            }
                        }
                    }
                }
            }
            // cells beyond ring r are at least r cells away
            let reach = r as f64 * self.cell;
            if (best.is_finite() && best <= reach * reach) || r >= max_r {
                break;
            }
            r += 1;
        }
        best.sqrt()
    }
}
