//! Demonstration data model, configuration deltas and the on-disk format.

pub(crate) mod io;
pub mod umpc;
mod validate;

use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::se3::{Frame, Point3, PointCloud, Pose};
use crate::segment::Segment;

pub use io::{read_demo, write_demo, FORMAT_VERSION};
pub use validate::{check_continuity, validate_demo, ValidationOptions, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    CameraFrame,
    RobotBaseFrame,
}

impl ObservationMode {
    pub fn frame(self) -> Frame {
        match self {
            ObservationMode::CameraFrame => Frame::Camera,
            ObservationMode::RobotBaseFrame => Frame::Robot,
        }
    }
}

/// End-effector pose plus normalized gripper opening (`0` closed, `1` open).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub arm: Pose,
    pub hand: f64,
}

impl Action {
    pub fn new(arm: Pose, hand: f64) -> Result<Self> {
        check_hand(hand)?;
        Ok(Self { arm, hand })
    }
}

pub(crate) fn check_hand(hand: f64) -> Result<()> {
    if (0.0..=1.0).contains(&hand) {
        Ok(())
    } else {
        Err(Error::InvalidDemo(format!("hand value {hand} outside [0, 1]")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoFrame {
    pub timestamp: f64,
    pub observation: PointCloud,
    pub action: Action,
}

/// Oriented box in the base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropBox {
    pub center: Pose,
    pub half_extents: [f64; 3],
}

impl CropBox {
    fn local(&self, p: &Point3) -> Point3 {
        self.center.inverse().transform_point(p)
    }

    pub fn contains(&self, p: &Point3) -> bool {
        let l = self.local(p);
        let h = &self.half_extents;
        l.x.abs() <= h[0] && l.y.abs() <= h[1] && l.z.abs() <= h[2]
    }

    /// Euclidean distance from `p` to the box; zero inside.
    pub fn distance(&self, p: &Point3) -> f64 {
        let l = self.local(p);
        let h = &self.half_extents;
        let dx = (l.x.abs() - h[0]).max(0.0);
        let dy = (l.y.abs() - h[1]).max(0.0);
        let dz = (l.z.abs() - h[2]).max(0.0);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// The box carried by a world-frame transform.
    pub fn moved(&self, world: &Pose) -> CropBox {
        CropBox {
            center: world.compose(&self.center),
            half_extents: self.half_extents,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub name: String,
    pub pose: Pose,
    pub crop_box: CropBox,
    pub movable: bool,
}

impl ObjectEntry {
    /// Same object placed at `pose`; the crop box follows rigidly.
    pub fn moved_to(&self, pose: Pose) -> ObjectEntry {
        let world = pose.compose(&self.pose.inverse());
        ObjectEntry {
            name: self.name.clone(),
            pose,
            crop_box: self.crop_box.moved(&world),
            movable: self.movable,
        }
    }
}

impl ObjectEntry {
    /// Shifted by a base-frame offset; rotation bits are untouched.
    pub fn translated(&self, dx: f64, dy: f64, dz: f64) -> ObjectEntry {
        ObjectEntry {
            name: self.name.clone(),
            pose: self.pose.translated(dx, dy, dz),
            crop_box: CropBox {
                center: self.crop_box.center.translated(dx, dy, dz),
                half_extents: self.crop_box.half_extents,
            },
            movable: self.movable,
        }
    }
}

/// The K object poses defining a task instance.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectConfiguration {
    entries: Vec<ObjectEntry>,
}

impl ObjectConfiguration {
    pub fn new(entries: Vec<ObjectEntry>) -> Result<Self> {
        let c = Self { entries };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            if self.entries[..i].iter().any(|o| o.name == e.name) {
                return Err(Error::InvalidConfig(format!("duplicate object name '{}'", e.name)));
            }
            if !e.crop_box.half_extents.iter().all(|h| *h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "object '{}' has non-positive crop box half-extents {:?}",
                    e.name, e.crop_box.half_extents
                )));
            }
        }
        Ok(())
    }

    pub fn require_nonempty(&self) -> Result<()> {
        if self.entries.is_empty() {
            Err(Error::InvalidConfig("configuration has no objects".into()))
        } else {
            Ok(())
        }
    }

    pub fn entries(&self) -> &[ObjectEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&ObjectEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn poses(&self) -> Vec<Pose> {
        self.entries.iter().map(|e| e.pose).collect()
    }

    /// Copy with every entry passed through `f`.
    pub fn map_entries(&self, f: impl FnMut(&ObjectEntry) -> ObjectEntry) -> Self {
        Self {
            entries: self.entries.iter().map(f).collect(),
        }
    }

    /// Copy with `name` placed at `pose`.
    pub fn with_pose(&self, name: &str, pose: Pose) -> Result<Self> {
        let i = self
            .index_of(name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown object '{name}'")))?;
        let mut out = self.clone();
        out.entries[i] = self.entries[i].moved_to(pose);
        Ok(out)
    }
}

/// Per-object transform between a source and a target configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectDelta {
    pub name: String,
    /// Object-frame delta `inv(T) * T'`.
    pub delta: Pose,
    /// Base-frame transform `T' * inv(T)`; carries the source object onto the target.
    pub world: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigDelta {
    pub entries: Vec<ObjectDelta>,
}

impl ConfigDelta {
    pub fn get(&self, name: &str) -> Option<&ObjectDelta> {
        self.entries.iter().find(|d| d.name == name)
    }
}

/// Deltas in the order of `source`'s objects.
pub fn make_delta(source: &ObjectConfiguration, target: &ObjectConfiguration) -> Result<ConfigDelta> {
    if source.len() != target.len() {
        return Err(Error::InvalidConfig(format!(
            "object count mismatch: source has {}, target has {}",
            source.len(),
            target.len()
        )));
    }
    let entries = source
        .entries()
        .iter()
        .map(|s| {
            let t = target.get(&s.name).ok_or_else(|| {
                Error::InvalidConfig(format!("target configuration lacks object '{}'", s.name))
            })?;
            let inv = s.pose.inverse();
            Ok(ObjectDelta {
                name: s.name.clone(),
                delta: inv.compose(&t.pose),
                world: t.pose.compose(&inv),
            })
        })
        .collect::<Result<_>>()?;
    Ok(ConfigDelta { entries })
}

/// Size of a generated dataset: sources x evaluated configurations x perturbations.
pub fn count_generated(n_source: usize, n_eval: usize, n_perturb: usize) -> usize {
    n_source * n_eval * n_perturb
}

/// Per-frame point counts recorded when the visibility filter ran.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaoRecord {
    pub n_points: usize,
    pub pre_filter: Vec<usize>,
    pub visible: Vec<usize>,
}

/// Provenance of a synthesized demonstration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub source: String,
    pub eval_index: usize,
    pub perturb_index: usize,
    pub step_cap: f64,
    pub angle_cap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub frames: Vec<DemoFrame>,
    pub objects: ObjectConfiguration,
    pub intrinsics: CameraIntrinsics,
    pub mode: ObservationMode,
    /// Camera pose relative to the action (end-effector) frame.
    pub hand_eye: Pose,
    pub frame_rate: f64,
    /// Explicit segment annotations; these override the gripper heuristic.
    pub segments: Option<Vec<Segment>>,
    pub generation: Option<GenerationRecord>,
    /// Present once observations went through the visibility filter.
    pub vao: Option<VaoRecord>,
}

impl Demonstration {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn arm_poses(&self) -> Vec<Pose> {
        self.frames.iter().map(|f| f.action.arm).collect()
    }

    pub fn hands(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.action.hand).collect()
    }

    /// Camera pose in the base frame at frame `t`.
    pub fn camera_pose(&self, t: usize) -> Pose {
        self.frames[t].action.arm.compose(&self.hand_eye)
    }

    /// Structural checks every stored demonstration must pass.
    pub fn check_structure(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::InvalidDemo("demonstration has no frames".into()));
        }
        self.objects.validate()?;
        self.intrinsics.validate()?;
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(Error::InvalidDemo(format!("frame rate {} is not positive", self.frame_rate)));
        }
        let expected = self.mode.frame();
        for (t, f) in self.frames.iter().enumerate() {
            if f.observation.frame() != expected {
                return Err(Error::InvalidDemo(format!(
                    "frame {t}: observation in {} frame, mode requires {expected}",
                    f.observation.frame()
                )));
            }
            check_hand(f.action.hand).map_err(|e| Error::InvalidDemo(format!("frame {t}: {e}")))?;
        }
        Ok(())
    }

    pub fn require_mode(&self, mode: ObservationMode) -> Result<()> {
        if self.mode == mode {
            Ok(())
        } else {
            Err(Error::FrameMismatch {
                expected: mode.frame(),
                found: self.mode.frame(),
            })
        }
    }
}
