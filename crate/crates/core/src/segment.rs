//! Skill/motion segmentation and per-point object labels.
//!
//! Contact detection works on the action stream only:
//!
//! * the gripper signal is debounced: a change of state counts once it
//!   persists for `hysteresis` frames (or until the end of the recording);
//! * the `hysteresis` frames after a closing and before an opening are
//!   contact frames;
//! * a frame whose end-effector lies within `proximity_radius` of a movable
//!   object's crop box, taken at the object's initial pose, is a contact frame.
//!
//! Maximal runs of contact frames are skill segments. Each is bound to the
//! movable object nearest to the end-effector at the run's first frame,
//! where grasped objects travel rigidly with the end-effector from the
//! closing frame until the opening frame.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{CropBox, Demonstration, ObjectConfiguration, ObservationMode};
use crate::error::{Error, Result};
use crate::se3::{Point3, Pose};

/// Two candidate objects closer than this in distance are ambiguous.
pub const BINDING_TIE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Skill,
    Motion,
}

/// Frames `[start, end)`; skill segments name their object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    pub start: usize,
    pub end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
}

impl Segment {
    pub fn motion(start: usize, end: usize) -> Self {
        Self {
            kind: SegmentKind::Motion,
            start,
            end,
            object: None,
        }
    }

    pub fn skill(start: usize, end: usize, object: impl Into<String>) -> Self {
        Self {
            kind: SegmentKind::Skill,
            start,
            end,
            object: Some(object.into()),
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn is_skill(&self) -> bool {
        self.kind == SegmentKind::Skill
    }

    pub fn contains(&self, frame: usize) -> bool {
        (self.start..self.end).contains(&frame)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SegmentedTrajectory {
    pub segments: Vec<Segment>,
}

impl SegmentedTrajectory {
    pub fn new(segments: Vec<Segment>, len: usize, objects: &ObjectConfiguration) -> Result<Self> {
        let s = Self { segments };
        s.validate(len, objects)?;
        Ok(s)
    }

    /// Alternating segmentation from sorted, disjoint skill runs. Empty
    /// motion segments are dropped.
    pub fn from_skill_runs(len: usize, runs: &[(usize, usize, String)]) -> Self {
        let mut segments = Vec::with_capacity(2 * runs.len() + 1);
        let mut cursor = 0;
        for (start, end, object) in runs {
            if *start > cursor {
                segments.push(Segment::motion(cursor, *start));
            }
            segments.push(Segment::skill(*start, *end, object.clone()));
            cursor = *end;
        }
        if cursor < len {
            segments.push(Segment::motion(cursor, len));
        }
        Self { segments }
    }

    pub fn validate(&self, len: usize, objects: &ObjectConfiguration) -> Result<()> {
        let bad = |msg: String| Err(Error::Segmentation(msg));
        let mut cursor = 0;
        for (i, s) in self.segments.iter().enumerate() {
            if s.start != cursor {
                return bad(format!("segment {i} starts at {}, expected {cursor}", s.start));
            }
            if s.is_empty() {
                return bad(format!("segment {i} [{}, {}) is empty", s.start, s.end));
            }
            if i > 0 && self.segments[i - 1].kind == s.kind {
                return bad(format!("segments {} and {i} are both {:?}", i - 1, s.kind));
            }
            match (&s.kind, &s.object) {
                (SegmentKind::Skill, Some(name)) => {
                    if objects.get(name).is_none() {
                        return bad(format!("segment {i} binds unknown object '{name}'"));
                    }
                }
                (SegmentKind::Skill, None) => return bad(format!("skill segment {i} has no object")),
                (SegmentKind::Motion, Some(_)) => {
                    return bad(format!("motion segment {i} must not bind an object"))
                }
                (SegmentKind::Motion, None) => {}
            }
            cursor = s.end;
        }
        if cursor != len {
            return bad(format!("segments cover [0, {cursor}), demonstration has {len} frames"));
        }
        Ok(())
    }

    pub fn skills(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(|s| s.is_skill())
    }

    pub fn bound_objects(&self) -> Vec<&str> {
        self.skills().filter_map(|s| s.object.as_deref()).collect()
    }

    pub fn segment_of(&self, frame: usize) -> Option<usize> {
        self.segments.iter().position(|s| s.contains(frame))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmenterParams {
    pub proximity_radius: f64,
    /// Hand values below this count as closed.
    pub close_threshold: f64,
    pub hysteresis: usize,
}

impl Default for SegmenterParams {
    fn default() -> Self {
        Self {
            proximity_radius: 0.05,
            close_threshold: 0.5,
            hysteresis: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HandEvent {
    pub frame: usize,
    pub closed: bool,
}

/// Debounced gripper transitions. The initial state is taken from frame 0.
pub fn hand_events(hands: &[f64], params: &SegmenterParams) -> Vec<HandEvent> {
    let closed: Vec<bool> = hands.iter().map(|h| *h < params.close_threshold).collect();
    let mut events = Vec::new();
    let Some(&first) = closed.first() else {
        return events;
    };
    let mut state = first;
    let mut t = 1;
    while t < closed.len() {
        if closed[t] == state {
            t += 1;
            continue;
        }
        let run = closed[t..].iter().take_while(|c| **c != state).count();
        if run >= params.hysteresis.max(1) || t + run == closed.len() {
            state = !state;
            events.push(HandEvent {
                frame: t,
                closed: state,
            });
        }
        t += run;
    }
    events
}

/// An object attached to the end-effector over `[grasp, release)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraspEvent {
    pub object: usize,
    pub grasp: usize,
    pub release: Option<usize>,
}

/// Object poses per frame (`[frame][object]`). A grasped object keeps its
/// pose relative to the end-effector; after release it stays where it was
/// at the last carried frame.
pub fn track_objects(arms: &[Pose], initial: &[Pose], events: &[GraspEvent]) -> Vec<Vec<Pose>> {
    let mut current = initial.to_vec();
    let mut carry: Option<(usize, Pose, Option<usize>)> = None;
    let mut out = Vec::with_capacity(arms.len());
    for (t, arm) in arms.iter().enumerate() {
        if let Some((_, _, Some(release))) = carry {
            if t >= release {
                carry = None;
            }
        }
        if let Some(e) = events.iter().find(|e| e.grasp == t) {
            let rel = arm.inverse().compose(&current[e.object]);
            carry = Some((e.object, rel, e.release));
        }
        if let Some((o, rel, _)) = carry {
            current[o] = arm.compose(&rel);
        }
        out.push(current.clone());
    }
    out
}

fn moved_box(b: &CropBox, initial: &Pose, now: &Pose) -> CropBox {
    b.moved(&now.compose(&initial.inverse()))
}

/// Nearest movable object to `p` by (crop box distance, center distance).
fn nearest_movable(
    p: &Point3,
    objects: &ObjectConfiguration,
    poses: &[Pose],
    frame: usize,
) -> Result<Option<(usize, f64)>> {
    let mut keyed: Vec<(f64, f64, usize)> = objects
        .entries()
        .iter()
        .enumerate()
        .filter(|(_, e)| e.movable)
        .map(|(i, e)| {
            let b = moved_box(&e.crop_box, &e.pose, &poses[i]);
            (b.distance(p), (b.center.position() - p).norm(), i)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    match keyed.as_slice() {
        [] => Ok(None),
        [(d, _, i)] => Ok(Some((*i, *d))),
        [a, b, ..] => {
            if (a.0 - b.0).abs() <= BINDING_TIE_TOLERANCE && (a.1 - b.1).abs() <= BINDING_TIE_TOLERANCE {
                Err(Error::Segmentation(format!(
                    "frame {frame}: objects '{}' and '{}' are equally near the end-effector",
                    objects.entries()[a.2].name,
                    objects.entries()[b.2].name
                )))
            } else {
                Ok(Some((a.2, a.0)))
            }
        }
    }
}

/// Grasps implied by the gripper signal: at each debounced closing the
/// nearest movable object within `proximity_radius` is attached, and it is
/// released at the next debounced opening.
pub fn detect_grasps(
    arms: &[Pose],
    hands: &[f64],
    objects: &ObjectConfiguration,
    params: &SegmenterParams,
) -> Result<Vec<GraspEvent>> {
    let initial = objects.poses();
    let mut current = initial.clone();
    let mut grasps: Vec<GraspEvent> = Vec::new();
    let mut active: Option<(usize, Pose)> = None;
    for ev in hand_events(hands, params) {
        if ev.closed {
            let ee = arms[ev.frame].position();
            if let Some((o, d)) = nearest_movable(&ee, objects, &current, ev.frame)? {
                if d <= params.proximity_radius {
                    let rel = arms[ev.frame].inverse().compose(&current[o]);
                    active = Some((o, rel));
                    grasps.push(GraspEvent {
                        object: o,
                        grasp: ev.frame,
                        release: None,
                    });
                }
            }
        } else if let Some((o, rel)) = active.take() {
            current[o] = arms[ev.frame - 1].compose(&rel);
            if let Some(g) = grasps.last_mut() {
                g.release = Some(ev.frame);
            }
        }
    }
    Ok(grasps)
}

/// Per-frame object poses of a demonstration under its own grasp events.
pub fn object_tracks(d: &Demonstration, params: &SegmenterParams) -> Result<Vec<Vec<Pose>>> {
    let arms = d.arm_poses();
    let events = detect_grasps(&arms, &d.hands(), &d.objects, params)?;
    Ok(track_objects(&arms, &d.objects.poses(), &events))
}

pub fn segment_by_gripper(d: &Demonstration, params: &SegmenterParams) -> Result<SegmentedTrajectory> {
    let len = d.len();
    if len < 2 {
        return Err(Error::Segmentation(format!("demonstration has {len} frames, need at least 2")));
    }
    d.require_mode(ObservationMode::RobotBaseFrame)?;
    if !d.objects.entries().iter().any(|e| e.movable) {
        return Err(Error::Segmentation("demonstration has no movable objects".into()));
    }
    let arms = d.arm_poses();
    let hands = d.hands();
    let h = params.hysteresis.max(1);

    let mut contact = vec![false; len];
    for ev in hand_events(&hands, params) {
        let range = if ev.closed {
            ev.frame..(ev.frame + h).min(len)
        } else {
            ev.frame.saturating_sub(h)..ev.frame
        };
        contact[range].iter_mut().for_each(|c| *c = true);
    }
    for (t, arm) in arms.iter().enumerate() {
        let ee = arm.position();
        if d.objects
            .entries()
            .iter()
            .any(|e| e.movable && e.crop_box.distance(&ee) <= params.proximity_radius)
        {
            contact[t] = true;
        }
    }

    let events = detect_grasps(&arms, &hands, &d.objects, params)?;
    let tracks = track_objects(&arms, &d.objects.poses(), &events);

    let mut runs = Vec::new();
    let mut t = 0;
    while t < len {
        if !contact[t] {
            t += 1;
            continue;
        }
        let start = t;
        while t < len && contact[t] {
            t += 1;
        }
        let (o, _) = nearest_movable(&arms[start].position(), &d.objects, &tracks[start], start)?
            .expect("movable object present");
        runs.push((start, t, d.objects.entries()[o].name.clone()));
    }
    Ok(SegmentedTrajectory::from_skill_runs(len, &runs))
}

/// Manifest annotations when present, otherwise the gripper heuristic.
pub fn segmentation_for(d: &Demonstration, params: &SegmenterParams) -> Result<SegmentedTrajectory> {
    match &d.segments {
        Some(segments) => SegmentedTrajectory::new(segments.clone(), d.len(), &d.objects),
        None => segment_by_gripper(d, params),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Background,
    /// Index into the object configuration.
    Object(u16),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointLabels {
    pub frames: Vec<Vec<Label>>,
}

impl PointLabels {
    pub fn count(&self, frame: usize, label: Label) -> usize {
        self.frames[frame].iter().filter(|l| **l == label).count()
    }
}

/// Labels every observed point with the crop box containing it, boxes
/// following their objects' tracked poses. Overlaps go to the nearest box
/// center.
pub fn label_points(
    d: &Demonstration,
    cfg: &ObjectConfiguration,
    params: &SegmenterParams,
) -> Result<PointLabels> {
    d.require_mode(ObservationMode::RobotBaseFrame)?;
    let arms = d.arm_poses();
    let events = detect_grasps(&arms, &d.hands(), cfg, params)?;
    let tracks = track_objects(&arms, &cfg.poses(), &events);
    let frames = d
        .frames
        .par_iter()
        .zip(tracks.par_iter())
        .map(|(f, poses)| {
            let boxes: Vec<(Pose, [f64; 3], Point3)> = cfg
                .entries()
                .iter()
                .zip(poses)
                .map(|(e, now)| {
                    let b = moved_box(&e.crop_box, &e.pose, now);
                    (b.center.inverse(), b.half_extents, b.center.position())
                })
                .collect();
            f.observation
                .points()
                .iter()
                .map(|p| label_one(p, &boxes))
                .collect()
        })
        .collect();
    Ok(PointLabels { frames })
}

fn label_one(p: &Point3, boxes: &[(Pose, [f64; 3], Point3)]) -> Label {
    let mut best: Option<(f64, usize)> = None;
    for (i, (to_local, h, center)) in boxes.iter().enumerate() {
        let l = to_local.transform_point(p);
        if l.x.abs() <= h[0] && l.y.abs() <= h[1] && l.z.abs() <= h[2] {
            let d = (center - p).norm_squared();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
    }
    best.map_or(Label::Background, |(_, i)| Label::Object(i as u16))
}
