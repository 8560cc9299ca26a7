//! Demonstration synthesis for new object configurations.
//!
//! Skill segments are carried rigidly by the base-frame transform of their
//! bound object; motion segments are replaced by straight-line,
//! shortest-arc paths between the transformed skill endpoints. Observations
//! reuse source frames with every labeled object moved to where the
//! generated trajectory puts it.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{make_delta, Action, DemoFrame, Demonstration, ObjectConfiguration, ObservationMode};
use crate::error::{Error, Result};
use crate::se3::{Point3, Pose};
use crate::segment::{
    detect_grasps, track_objects, GraspEvent, Label, PointLabels, Segment, SegmentKind,
    SegmentedTrajectory, SegmenterParams,
};

pub const DEFAULT_STEP_CAP: f64 = 0.01;
pub const DEFAULT_ANGLE_CAP: f64 = 0.05;
/// Non-movable objects may not move further than this between configurations.
pub const FIXED_OBJECT_TOLERANCE: f64 = 1e-9;
/// Weight of rotation (per radian) against translation (per meter) when
/// picking the source view for a replanned frame.
const VIEW_ANGLE_WEIGHT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionCaps {
    pub step_cap: f64,
    pub angle_cap: f64,
}

impl Default for MotionCaps {
    fn default() -> Self {
        Self {
            step_cap: DEFAULT_STEP_CAP,
            angle_cap: DEFAULT_ANGLE_CAP,
        }
    }
}

impl MotionCaps {
    pub fn validate(&self) -> Result<()> {
        if self.step_cap > 0.0 && self.step_cap.is_finite() && self.angle_cap > 0.0 && self.angle_cap.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "step caps must be positive, got {} m and {} rad",
                self.step_cap, self.angle_cap
            )))
        }
    }
}

/// Everything needed to synthesize one demonstration.
#[derive(Debug, Clone, Copy)]
pub struct GenerationSpec<'a> {
    /// Robot-base-frame source demonstration.
    pub source: &'a Demonstration,
    pub segmentation: &'a SegmentedTrajectory,
    pub labels: &'a PointLabels,
    pub target: &'a ObjectConfiguration,
    pub caps: MotionCaps,
    /// Used to recover grasp events from the gripper signal.
    pub params: SegmenterParams,
}

/// Skill frames moved by `world`: arm poses left-multiplied, hand values
/// copied, points labeled `object` mapped by `world`, everything else copied.
pub fn transform_skill_segment(
    frames: &[DemoFrame],
    labels: &[Vec<Label>],
    object: u16,
    world: &Pose,
) -> Vec<DemoFrame> {
    frames
        .iter()
        .zip(labels)
        .map(|(f, l)| DemoFrame {
            timestamp: f.timestamp,
            observation: f.observation.map_points(|i, p| {
                if l[i] == Label::Object(object) {
                    world.transform_point(p)
                } else {
                    *p
                }
            }),
            action: Action {
                arm: world.compose(&f.action.arm),
                hand: f.action.hand,
            },
        })
        .collect()
}

fn step_count(start: &Pose, end: &Pose, step_cap: f64, angle_cap: f64) -> usize {
    let by_distance = (start.distance_to(end) / step_cap).ceil();
    let by_angle = (start.angle_to(end) / angle_cap).ceil();
    by_distance.max(by_angle).max(1.0) as usize
}

fn interpolate_path(start: &Pose, end: &Pose, n: usize) -> Vec<Pose> {
    (0..=n)
        .map(|i| match i {
            0 => *start,
            i if i == n => *end,
            i => start.interpolate(end, i as f64 / n as f64),
        })
        .collect()
}

/// Straight-line, shortest-arc path from `start` to `end` with both
/// endpoints included and uniform steps no larger than the caps.
/// Identical endpoints give `[end]`.
pub fn replan_motion_segment(start: &Pose, end: &Pose, step_cap: f64, angle_cap: f64) -> Result<Vec<Pose>> {
    if !start.is_finite() || !end.is_finite() {
        return Err(Error::NonFinite("motion endpoints".into()));
    }
    MotionCaps { step_cap, angle_cap }.validate()?;
    if start == end {
        return Ok(vec![*end]);
    }
    Ok(interpolate_path(start, end, step_count(start, end, step_cap, angle_cap)))
}

/// Frame-to-frame tracked object poses do not change for non-movable
/// objects, so their base-frame transform must be the identity.
fn object_transforms(source: &ObjectConfiguration, target: &ObjectConfiguration) -> Result<Vec<Pose>> {
    let delta = make_delta(source, target)?;
    source
        .entries()
        .iter()
        .zip(&delta.entries)
        .map(|(e, d)| {
            if e.movable {
                return Ok(d.world);
            }
            let moved = d.world.translation().norm() > FIXED_OBJECT_TOLERANCE
                || d.world.rotation_angle() > FIXED_OBJECT_TOLERANCE;
            if moved {
                Err(Error::Generation(format!(
                    "target configuration moves fixed object '{}'",
                    e.name
                )))
            } else {
                Ok(Pose::identity())
            }
        })
        .collect()
}

/// Where each generated frame came from.
#[derive(Debug, Clone, Copy)]
struct Origin {
    /// Source frame supplying the observation.
    source: usize,
    /// Index of the generated segment.
    segment: usize,
}

struct Plan {
    arms: Vec<Pose>,
    hands: Vec<f64>,
    origins: Vec<Origin>,
    segments: Vec<Segment>,
    /// Generated index of every source skill frame.
    skill_map: Vec<Option<usize>>,
    /// `(source range, generated range)` per source segment.
    ranges: Vec<((usize, usize), (usize, usize))>,
}

fn plan(spec: &GenerationSpec<'_>, transforms: &[Pose]) -> Result<Plan> {
    let src = spec.source;
    let segs = &spec.segmentation.segments;
    let arms = src.arm_poses();
    let hands = src.hands();
    let bound = |s: &Segment| -> usize {
        // validated: skill objects exist in the configuration
        src.objects.index_of(s.object.as_deref().unwrap_or_default()).unwrap_or(0)
    };
    let skill_pose = |i: usize, t: usize| transforms[bound(&segs[i])].compose(&arms[t]);
    let camera = |p: &Pose| p.compose(&src.hand_eye);

    let mut p = Plan {
        arms: Vec::new(),
        hands: Vec::new(),
        origins: Vec::new(),
        segments: Vec::new(),
        skill_map: vec![None; src.len()],
        ranges: Vec::new(),
    };
    let last = segs.len() - 1;
    for (i, s) in segs.iter().enumerate() {
        let gen_start = p.arms.len();
        let seg_index = p.segments.len();
        match s.kind {
            SegmentKind::Skill => {
                for t in s.start..s.end {
                    p.skill_map[t] = Some(p.arms.len());
                    p.arms.push(skill_pose(i, t));
                    p.hands.push(hands[t]);
                    p.origins.push(Origin {
                        source: t,
                        segment: seg_index,
                    });
                }
            }
            SegmentKind::Motion => {
                let caps = spec.caps;
                let path: Vec<Pose> = if i == 0 {
                    let end = skill_pose(i + 1, segs[i + 1].start);
                    let mut path = replan_motion_segment(&arms[0], &end, caps.step_cap, caps.angle_cap)?;
                    path.pop();
                    path
                } else if i == last {
                    let start = skill_pose(i - 1, s.start - 1);
                    let path = replan_motion_segment(&start, &arms[src.len() - 1], caps.step_cap, caps.angle_cap)?;
                    path[1..].to_vec()
                } else {
                    let start = skill_pose(i - 1, s.start - 1);
                    let end = skill_pose(i + 1, segs[i + 1].start);
                    let n = step_count(&start, &end, caps.step_cap, caps.angle_cap).max(2);
                    let path = interpolate_path(&start, &end, n);
                    path[1..n].to_vec()
                };
                // the gripper follows the source signal, resampled to the new length
                let m = path.len();
                let hand_at = |j: usize| hands[s.start + j * s.len() / m];
                let views: Vec<Pose> = (s.start..s.end).map(|t| camera(&arms[t])).collect();
                for (j, pose) in path.into_iter().enumerate() {
                    let cam = camera(&pose);
                    let mut best = (f64::INFINITY, s.start);
                    for (j, v) in views.iter().enumerate() {
                        let cost = v.distance_to(&cam) + VIEW_ANGLE_WEIGHT * v.angle_to(&cam);
                        if cost < best.0 {
                            best = (cost, s.start + j);
                        }
                    }
                    p.arms.push(pose);
                    p.hands.push(hand_at(j));
                    p.origins.push(Origin {
                        source: best.1,
                        segment: seg_index,
                    });
                }
            }
        }
        let gen_end = p.arms.len();
        p.ranges.push(((s.start, s.end), (gen_start, gen_end)));
        if gen_end > gen_start {
            p.segments.push(Segment {
                kind: s.kind,
                start: gen_start,
                end: gen_end,
                object: s.object.clone(),
            });
        }
    }
    Ok(p)
}

/// Generated frame index corresponding to source frame `f`.
fn map_frame(p: &Plan, f: usize) -> usize {
    if let Some(k) = p.skill_map.get(f).copied().flatten() {
        return k;
    }
    if let Some(k) = f.checked_sub(1).and_then(|g| p.skill_map[g]) {
        return (k + 1).min(p.arms.len() - 1);
    }
    let ((s0, s1), (g0, g1)) = p
        .ranges
        .iter()
        .copied()
        .find(|((s0, s1), _)| (*s0..*s1).contains(&f))
        .expect("segments tile the source");
    if g1 == g0 {
        return g0.min(p.arms.len() - 1);
    }
    g0 + (f - s0) * (g1 - g0) / (s1 - s0)
}

fn check_inputs(spec: &GenerationSpec<'_>) -> Result<()> {
    let src = spec.source;
    src.check_structure()?;
    src.require_mode(ObservationMode::RobotBaseFrame)?;
    if src.len() < 2 {
        return Err(Error::Generation(format!("source has {} frame(s), need at least 2", src.len())));
    }
    spec.caps.validate()?;
    spec.target.validate()?;
    spec.target.require_nonempty()?;
    spec.segmentation.validate(src.len(), &src.objects)?;
    if spec.segmentation.skills().next().is_none() {
        return Err(Error::Generation("source segmentation has no skill segment".into()));
    }
    if spec.labels.frames.len() != src.len() {
        return Err(Error::Generation(format!(
            "labels cover {} frames, source has {}",
            spec.labels.frames.len(),
            src.len()
        )));
    }
    for (t, (l, f)) in spec.labels.frames.iter().zip(&src.frames).enumerate() {
        if l.len() != f.observation.len() {
            return Err(Error::Generation(format!(
                "frame {t}: {} labels for {} points",
                l.len(),
                f.observation.len()
            )));
        }
    }
    Ok(())
}

/// Synthesizes a demonstration of the source task in the target configuration.
pub fn generate(spec: &GenerationSpec<'_>) -> Result<Demonstration> {
    check_inputs(spec)?;
    let src = spec.source;
    let transforms = object_transforms(&src.objects, spec.target)?;
    let p = plan(spec, &transforms)?;

    let src_arms = src.arm_poses();
    let src_events = detect_grasps(&src_arms, &src.hands(), &src.objects, &spec.params)?;
    let src_tracks = track_objects(&src_arms, &src.objects.poses(), &src_events);
    let gen_events: Vec<GraspEvent> = src_events
        .iter()
        .map(|e| GraspEvent {
            object: e.object,
            grasp: map_frame(&p, e.grasp),
            release: e.release.map(|r| map_frame(&p, r)),
        })
        .collect();
    let target_poses: Vec<Pose> = src
        .objects
        .entries()
        .iter()
        .map(|e| spec.target.get(&e.name).map(|t| t.pose).unwrap_or(e.pose))
        .collect();
    let gen_tracks = track_objects(&p.arms, &target_poses, &gen_events);

    warn_on_box_crossings(&p, spec.target);

    let frames: Vec<DemoFrame> = (0..p.arms.len())
        .map(|k| {
            let o = p.origins[k];
            let s = o.source;
            let seg = &p.segments[o.segment];
            let bound = seg.object.as_deref().and_then(|n| src.objects.index_of(n));
            let movers: Vec<Pose> = (0..src.objects.len())
                .map(|j| {
                    if seg.is_skill() && bound == Some(j) {
                        transforms[j]
                    } else {
                        gen_tracks[k][j].compose(&src_tracks[s][j].inverse())
                    }
                })
                .collect();
            let labels = &spec.labels.frames[s];
            let observation = src.frames[s].observation.map_points(|i, pt| match labels[i] {
                Label::Background => *pt,
                Label::Object(j) => movers[j as usize].transform_point(pt),
            });
            DemoFrame {
                timestamp: k as f64 / src.frame_rate,
                observation,
                action: Action {
                    arm: p.arms[k],
                    hand: p.hands[k],
                },
            }
        })
        .collect();

    let out = Demonstration {
        frames,
        objects: spec.target.clone(),
        intrinsics: src.intrinsics,
        mode: src.mode,
        hand_eye: src.hand_eye,
        frame_rate: src.frame_rate,
        segments: Some(p.segments),
        generation: None,
        vao: None,
    };
    out.check_structure()?;
    Ok(out)
}

fn warn_on_box_crossings(p: &Plan, target: &ObjectConfiguration) {
    for s in p.segments.iter().filter(|s| !s.is_skill()) {
        for e in target.entries() {
            if (s.start..s.end).any(|k| e.crop_box.contains(&p.arms[k].position())) {
                log::warn!(
                    "replanned motion over frames [{}, {}) passes through the crop box of '{}'",
                    s.start,
                    s.end,
                    e.name
                );
            }
        }
    }
}

/// Half-ranges of the uniform planar jitter applied to movable objects.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Perturbation {
    pub dx: f64,
    pub dy: f64,
}

impl Perturbation {
    pub fn square(half_range: f64) -> Self {
        Self {
            dx: half_range,
            dy: half_range,
        }
    }
}

/// `n_perturb` jittered copies of every evaluation configuration, grouped
/// by evaluation point. Point `j` draws from its own stream of the seeded
/// generator, so the result does not depend on evaluation order.
pub fn sample_targets(
    base: &[ObjectConfiguration],
    perturbation: Perturbation,
    n_perturb: usize,
    seed: u64,
) -> Result<Vec<ObjectConfiguration>> {
    if n_perturb == 0 {
        return Err(Error::InvalidConfig("need at least one perturbation per evaluation point".into()));
    }
    let Perturbation { dx, dy } = perturbation;
    if !(dx >= 0.0 && dy >= 0.0 && dx.is_finite() && dy.is_finite()) {
        return Err(Error::InvalidConfig(format!("perturbation half-ranges must be >= 0, got {dx} {dy}")));
    }
    let ux = Uniform::new_inclusive(-dx, dx).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let uy = Uniform::new_inclusive(-dy, dy).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut out = Vec::with_capacity(base.len() * n_perturb);
    for (j, cfg) in base.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        for _ in 0..n_perturb {
            out.push(cfg.map_entries(|e| {
                if e.movable {
                    let (ox, oy) = (ux.sample(&mut rng), uy.sample(&mut rng));
                    e.translated(ox, oy, 0.0)
                } else {
                    e.clone()
                }
            }));
        }
    }
    Ok(out)
}

/// Largest planar offset of any object between two configurations.
pub fn max_planar_offset(a: &ObjectConfiguration, b: &ObjectConfiguration) -> (f64, f64) {
    a.entries()
        .iter()
        .filter_map(|e| b.get(&e.name).map(|f| (e.pose.position(), f.pose.position())))
        .map(|(p, q): (Point3, Point3)| ((q.x - p.x).abs(), (q.y - p.y).abs()))
        .fold((0.0, 0.0), |acc, d| (acc.0.max(d.0), acc.1.max(d.1)))
}
