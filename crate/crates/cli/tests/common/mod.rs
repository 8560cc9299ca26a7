//! Primitive scenes and scripts shared by the CLI tests and the acceptance
//! suite.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use egogen_core::scene::{CameraSetup, Primitive, Shape, Stage, StageKind, Waypoint};
use egogen_core::{
    script_demo, write_demo, CameraIntrinsics, CropBox, Demonstration, ObjectConfiguration, ObjectEntry, Pose,
    PrimitiveScene, RenderOptions, Script,
};

/// End-effector pose at `(x, y, z)` pointing straight down, turned by `yaw`.
pub fn down(x: f64, y: f64, z: f64, yaw: f64) -> Pose {
    Pose::from_translation(x, y, z) * Pose::rot_z(yaw) * Pose::rot_x(PI)
}

/// Wrist camera 0.14 m behind the gripper along its approach axis.
pub fn hand_eye() -> Pose {
    Pose::from_translation(0.0, 0.02, -0.14)
}

pub fn camera(width: u32, height: u32) -> CameraSetup {
    let f = 120.0 * f64::from(width) / 128.0;
    CameraSetup {
        intrinsics: CameraIntrinsics::new(f, f, f64::from(width) / 2.0, f64::from(height) / 2.0, width, height)
            .unwrap(),
        hand_eye: hand_eye(),
    }
}

pub fn entry(name: &str, pose: Pose, half: [f64; 3], movable: bool) -> ObjectEntry {
    ObjectEntry {
        name: name.into(),
        pose,
        crop_box: CropBox { center: pose, half_extents: half },
        movable,
    }
}

fn prim(shape: Shape, pose: Pose, object: &str, color: [u8; 3]) -> Primitive {
    Primitive {
        shape,
        pose,
        object: Some(object.into()),
        color: Some(color),
    }
}

pub const KIWI_RADIUS: f64 = 0.02;

/// A single kiwi (sphere) at `(x, y)`, optionally on a table plane.
pub fn kiwi_scene(x: f64, y: f64, ground: bool, width: u32, height: u32) -> PrimitiveScene {
    let pose = Pose::from_translation(x, y, KIWI_RADIUS);
    PrimitiveScene {
        primitives: vec![prim(Shape::Sphere { radius: KIWI_RADIUS }, pose, "kiwi", [120, 160, 40])],
        ground_plane: ground,
        objects: ObjectConfiguration::new(vec![entry("kiwi", pose, [0.03; 3], true)]).unwrap(),
        camera: Some(camera(width, height)),
    }
}

fn wp(pose: Pose, steps: usize, hand: f64) -> Waypoint {
    Waypoint {
        pose,
        steps,
        hand,
        grasp: None,
        release: false,
    }
}

fn grasp(pose: Pose, steps: usize, object: &str) -> Waypoint {
    Waypoint {
        grasp: Some(object.into()),
        ..wp(pose, steps, 0.0)
    }
}

fn release(pose: Pose, steps: usize) -> Waypoint {
    Waypoint {
        release: true,
        ..wp(pose, steps, 1.0)
    }
}

fn motion(waypoints: Vec<Waypoint>) -> Stage {
    Stage {
        kind: StageKind::Motion,
        object: None,
        waypoints,
    }
}

fn skill(object: &str, waypoints: Vec<Waypoint>) -> Stage {
    Stage {
        kind: StageKind::Skill,
        object: Some(object.into()),
        waypoints,
    }
}

/// Pick `object` at `pick` (grasp height `grasp_z`), carry it to `place`
/// and release it there. Starts and ends above `home`.
pub fn pick_place_script(
    object: &str,
    home: [f64; 3],
    pick: [f64; 2],
    place: [f64; 2],
    grasp_z: f64,
    place_z: f64,
    scale: usize,
) -> Script {
    let start = down(home[0], home[1], home[2], 0.0);
    let above_pick = down(pick[0], pick[1], grasp_z + 0.1, 0.0);
    let at_pick = down(pick[0], pick[1], grasp_z, 0.0);
    let above_place = down(place[0], place[1], place_z + 0.1, 0.0);
    let at_place = down(place[0], place[1], place_z, 0.0);
    Script {
        frame_rate: 10.0,
        start,
        start_hand: 1.0,
        stages: vec![
            motion(vec![wp(above_pick, 5 * scale, 1.0)]),
            skill(
                object,
                vec![wp(at_pick, 3 * scale, 1.0), grasp(at_pick, 4, object), wp(above_pick, 3 * scale, 0.0)],
            ),
            motion(vec![wp(above_place, 4 * scale, 0.0)]),
            skill(
                object,
                vec![wp(at_place, 3 * scale, 0.0), release(at_place, 4), wp(above_place, 3 * scale, 1.0)],
            ),
            motion(vec![wp(start, 5 * scale, 1.0)]),
        ],
    }
}

/// Grasp a handle at `handle` and pull it back by `pull` along -x.
pub fn pull_script(object: &str, home: [f64; 3], handle: [f64; 3], pull: f64, scale: usize) -> Script {
    let start = down(home[0], home[1], home[2], 0.0);
    let above = down(handle[0], handle[1], handle[2] + 0.1, 0.0);
    let at = down(handle[0], handle[1], handle[2], 0.0);
    let pulled = down(handle[0] - pull, handle[1], handle[2], 0.0);
    let lifted = down(handle[0] - pull, handle[1], handle[2] + 0.1, 0.0);
    Script {
        frame_rate: 10.0,
        start,
        start_hand: 1.0,
        stages: vec![
            motion(vec![wp(above, 5 * scale, 1.0)]),
            skill(
                object,
                vec![
                    wp(at, 3 * scale, 1.0),
                    grasp(at, 4, object),
                    wp(pulled, 3 * scale, 0.0),
                    release(pulled, 4),
                    wp(lifted, 3 * scale, 1.0),
                ],
            ),
            motion(vec![wp(start, 5 * scale, 1.0)]),
        ],
    }
}

/// The four real-world task layouts as primitive scenes on a table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Kiwi,
    OpenDrawer,
    MugRack,
    PickPlace,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Kiwi, Task::OpenDrawer, Task::MugRack, Task::PickPlace];

    pub fn name(self) -> &'static str {
        match self {
            Task::Kiwi => "kiwi",
            Task::OpenDrawer => "open-drawer",
            Task::MugRack => "mug-rack",
            Task::PickPlace => "pick-place",
        }
    }

    /// (#source demos, #evaluation points) of the task.
    pub fn protocol(self) -> (usize, usize) {
        match self {
            Task::Kiwi => (3, 8),
            Task::OpenDrawer => (3, 5),
            Task::MugRack | Task::PickPlace => (6, 5),
        }
    }

    /// The object that is moved between evaluation points.
    pub fn movable(self) -> &'static str {
        match self {
            Task::Kiwi => "kiwi",
            Task::OpenDrawer => "drawer",
            Task::MugRack => "mug",
            Task::PickPlace => "cube",
        }
    }

    pub fn scene(self, width: u32, height: u32) -> PrimitiveScene {
        let cam = Some(camera(width, height));
        match self {
            Task::Kiwi => kiwi_scene(0.45, -0.06, true, width, height),
            Task::OpenDrawer => {
                let body = Pose::from_translation(0.55, 0.0, 0.05);
                let handle = Pose::from_translation(0.47, 0.0, 0.05);
                PrimitiveScene {
                    primitives: vec![
                        prim(Shape::Box { half_extents: [0.08, 0.1, 0.05] }, body, "drawer", [150, 110, 70]),
                        prim(Shape::Box { half_extents: [0.01, 0.03, 0.01] }, handle, "drawer", [40, 40, 40]),
                    ],
                    ground_plane: true,
                    objects: ObjectConfiguration::new(vec![entry("drawer", handle, [0.02, 0.04, 0.02], true)])
                        .unwrap(),
                    camera: cam,
                }
            }
            Task::MugRack => {
                let mug = Pose::from_translation(0.45, -0.08, 0.04);
                let rack = Pose::from_translation(0.55, 0.1, 0.03);
                PrimitiveScene {
                    primitives: vec![
                        prim(Shape::Cylinder { radius: 0.03, half_height: 0.04 }, mug, "mug", [220, 220, 230]),
                        prim(Shape::Box { half_extents: [0.05, 0.05, 0.03] }, rack, "rack", [90, 60, 30]),
                    ],
                    ground_plane: true,
                    objects: ObjectConfiguration::new(vec![
                        entry("mug", mug, [0.035, 0.035, 0.045], true),
                        entry("rack", rack, [0.055, 0.055, 0.035], false),
                    ])
                    .unwrap(),
                    camera: cam,
                }
            }
            Task::PickPlace => {
                let cube = Pose::from_translation(0.45, -0.08, 0.02);
                let basket = Pose::from_translation(0.55, 0.1, 0.02);
                PrimitiveScene {
                    primitives: vec![
                        prim(Shape::Box { half_extents: [0.02; 3] }, cube, "cube", [200, 30, 30]),
                        prim(Shape::Box { half_extents: [0.07, 0.07, 0.02] }, basket, "basket", [60, 60, 160]),
                    ],
                    ground_plane: true,
                    objects: ObjectConfiguration::new(vec![
                        entry("cube", cube, [0.025; 3], true),
                        entry("basket", basket, [0.075, 0.075, 0.025], false),
                    ])
                    .unwrap(),
                    camera: cam,
                }
            }
        }
    }

    /// Script for source demonstration `i`; sources differ in their home pose.
    pub fn script(self, i: usize, scale: usize) -> Script {
        let home = [0.45 + 0.02 * i as f64, -0.02 * i as f64, 0.4];
        match self {
            Task::Kiwi => pick_place_script("kiwi", home, [0.45, -0.06], [0.55, 0.06], 0.02, 0.025, scale),
            Task::OpenDrawer => pull_script("drawer", home, [0.47, 0.0, 0.05], 0.08, scale),
            Task::MugRack => pick_place_script("mug", home, [0.45, -0.08], [0.55, 0.1], 0.05, 0.11, scale),
            Task::PickPlace => pick_place_script("cube", home, [0.45, -0.08], [0.55, 0.1], 0.02, 0.07, scale),
        }
    }

    /// Evaluation points: the movable object on a small grid around its
    /// source position.
    pub fn eval_points(self) -> serde_json::Value {
        let (_, n_eval) = self.protocol();
        let scene = self.scene(8, 8);
        let base = scene.objects.get(self.movable()).unwrap().pose.position();
        let points: Vec<serde_json::Value> = (0..n_eval)
            .map(|j| {
                let dx = 0.03 * ((j % 3) as f64 - 1.0);
                let dy = 0.03 * ((j / 3) as f64 - 1.0);
                let p = Pose::from_translation(base.x + dx, base.y + dy, base.z);
                serde_json::json!({ self.movable(): p })
            })
            .collect();
        serde_json::Value::Array(points)
    }
}

pub fn render_source(scene: &PrimitiveScene, script: &Script) -> Demonstration {
    let cam = scene.camera.unwrap();
    script_demo(scene, script, &cam.intrinsics, &cam.hand_eye, &RenderOptions::default())
        .unwrap()
        .demo
}

/// Renders `n` source demonstrations of `task` into `dir/src{i}`.
pub fn write_task_sources(task: Task, dir: &Path, n: usize, width: u32, height: u32, scale: usize) -> Vec<PathBuf> {
    let scene = task.scene(width, height);
    (0..n)
        .map(|i| {
            let path = dir.join(format!("src{i}"));
            write_demo(&render_source(&scene, &task.script(i, scale)), &path).unwrap();
            path
        })
        .collect()
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) {
    fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

/// Every file under `root` with its bytes, sorted by relative path.
pub fn tree_bytes(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

pub fn egogen(args: &[&str]) -> i32 {
    let mut v = vec!["egogen"];
    v.extend_from_slice(args);
    egogen_cli::run_from(v)
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}
