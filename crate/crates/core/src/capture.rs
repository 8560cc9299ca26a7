//! Raw capture logs to base-frame demonstrations.
//!
//! A capture rig carries a depth camera and a tracking device. Per frame:
//!
//! ```text
//! P_pose  = T_pose(t) * T_pose<-cam * P_cam          (tracking-origin frame)
//! P_robot = T_robot<-pose0 * P_pose                   (robot base frame)
//! arm(t)  = T_robot<-pose0 * T_pose(t)                (end-effector action)
//! ```
//!
//! Raw log layout:
//!
//! ```text
//! <log>/calib.json          {"pose_from_cam": [7], "robot_from_pose_initial": [7], "intrinsics": {..}}
//! <log>/track.csv           t,qw,qx,qy,qz,tx,ty,tz,gripper   (one line per frame, optional header)
//! <log>/clouds/000000.umpc  camera-frame clouds
//! <log>/objects.json        optional object configuration
//! ```

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::dataset::io::cloud_file_name;
use crate::dataset::{
    check_hand, umpc, Action, DemoFrame, Demonstration, ObjectConfiguration, ObservationMode,
};
use crate::error::{Error, Result};
use crate::se3::{transform_cloud, Frame, PointCloud, Pose};

/// Logs longer than this are flagged: tracking drift is not corrected.
pub const DRIFT_WARNING_SECONDS: f64 = 120.0;
/// Frame rate assumed for single-frame logs.
pub const FALLBACK_FRAME_RATE: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtrinsicCalibration {
    /// Depth camera to tracking device.
    pub pose_from_cam: Pose,
    /// Tracking origin to robot base.
    pub robot_from_pose_initial: Pose,
}

impl ExtrinsicCalibration {
    pub fn identity() -> Self {
        Self {
            pose_from_cam: Pose::identity(),
            robot_from_pose_initial: Pose::identity(),
        }
    }
}

/// Contents of `calib.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub pose_from_cam: Pose,
    pub robot_from_pose_initial: Pose,
    pub intrinsics: CameraIntrinsics,
}

impl Calibration {
    pub fn extrinsics(&self) -> ExtrinsicCalibration {
        ExtrinsicCalibration {
            pose_from_cam: self.pose_from_cam,
            robot_from_pose_initial: self.robot_from_pose_initial,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawFrame {
    pub timestamp: f64,
    /// Device pose in its own initial frame.
    pub tracking_pose: Pose,
    pub cloud_cam: PointCloud,
    /// Normalized gripper opening in `[0, 1]`.
    pub gripper: f64,
}

/// Cloud in the tracking-origin frame.
pub fn to_pose_frame(cal: &ExtrinsicCalibration, f: &RawFrame) -> Result<PointCloud> {
    f.cloud_cam.require_frame(Frame::Camera)?;
    let chain = f.tracking_pose.compose(&cal.pose_from_cam);
    Ok(transform_cloud(&chain, &f.cloud_cam, Frame::PoseInitial))
}

/// Cloud in the robot base frame.
pub fn to_robot_frame(cal: &ExtrinsicCalibration, f: &RawFrame) -> Result<PointCloud> {
    f.cloud_cam.require_frame(Frame::Camera)?;
    let chain = cal
        .robot_from_pose_initial
        .compose(&f.tracking_pose)
        .compose(&cal.pose_from_cam);
    Ok(transform_cloud(&chain, &f.cloud_cam, Frame::Robot))
}

/// Tracking-device pose in the robot base frame; also the arm action.
pub fn camera_pose_in_robot(cal: &ExtrinsicCalibration, f: &RawFrame) -> Pose {
    cal.robot_from_pose_initial.compose(&f.tracking_pose)
}

/// Keeps points whose optical-axis depth lies in `[near_z, far_z]`.
pub fn depth_filter(k: &CameraIntrinsics, cloud_cam: &PointCloud) -> Result<PointCloud> {
    cloud_cam.require_frame(Frame::Camera)?;
    let keep: Vec<usize> = cloud_cam
        .points()
        .iter()
        .enumerate()
        .filter(|(_, p)| k.depth_in_range(p.z))
        .map(|(i, _)| i)
        .collect();
    Ok(cloud_cam.select(&keep))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Assembles a demonstration. The hand-eye pose of the result is the
/// camera-to-device calibration, so `arm * hand_eye` is the camera pose.
pub fn ingest(
    frames: &[RawFrame],
    cal: &ExtrinsicCalibration,
    k: &CameraIntrinsics,
    mode: ObservationMode,
    objects: ObjectConfiguration,
) -> Result<Demonstration> {
    if frames.is_empty() {
        return Err(Error::InvalidLog("capture log has no frames".into()));
    }
    k.validate()?;
    objects.validate()?;
    for (t, w) in frames.windows(2).enumerate() {
        if !(w[1].timestamp > w[0].timestamp) {
            return Err(Error::InvalidLog(format!(
                "timestamps not strictly increasing at frame {}: {} after {}",
                t + 1,
                w[1].timestamp,
                w[0].timestamp
            )));
        }
    }
    if let Some(t) = frames.iter().position(|f| !f.timestamp.is_finite()) {
        return Err(Error::InvalidLog(format!("frame {t}: non-finite timestamp")));
    }
    let duration = frames[frames.len() - 1].timestamp - frames[0].timestamp;
    if duration > DRIFT_WARNING_SECONDS {
        log::warn!(
            "capture lasts {duration:.1} s (> {DRIFT_WARNING_SECONDS} s); tracking drift is not corrected"
        );
    }
    let frame_rate = if frames.len() < 2 {
        FALLBACK_FRAME_RATE
    } else {
        1.0 / median(frames.windows(2).map(|w| w[1].timestamp - w[0].timestamp).collect())
    };

    let out: Vec<DemoFrame> = frames
        .par_iter()
        .enumerate()
        .map(|(t, f)| {
            check_hand(f.gripper).map_err(|e| Error::InvalidLog(format!("frame {t}: {e}")))?;
            let filtered = RawFrame {
                cloud_cam: depth_filter(k, &f.cloud_cam)?,
                ..f.clone()
            };
            let observation = match mode {
                ObservationMode::CameraFrame => filtered.cloud_cam.clone(),
                ObservationMode::RobotBaseFrame => to_robot_frame(cal, &filtered)?,
            };
            Ok(DemoFrame {
                timestamp: f.timestamp,
                observation,
                action: Action {
                    arm: camera_pose_in_robot(cal, f),
                    hand: f.gripper,
                },
            })
        })
        .collect::<Result<_>>()?;

    Ok(Demonstration {
        frames: out,
        objects,
        intrinsics: *k,
        mode,
        hand_eye: cal.pose_from_cam,
        frame_rate,
        segments: None,
        generation: None,
        vao: None,
    })
}

/// Camera-frame demonstration re-expressed in the robot base frame.
pub fn rebase_to_robot(d: &Demonstration) -> Result<Demonstration> {
    if d.mode == ObservationMode::RobotBaseFrame {
        return Ok(d.clone());
    }
    let frames = d
        .frames
        .par_iter()
        .enumerate()
        .map(|(t, f)| {
            f.observation.require_frame(Frame::Camera)?;
            Ok(DemoFrame {
                observation: transform_cloud(&d.camera_pose(t), &f.observation, Frame::Robot),
                ..f.clone()
            })
        })
        .collect::<Result<_>>()?;
    Ok(Demonstration {
        frames,
        mode: ObservationMode::RobotBaseFrame,
        ..d.clone()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawLog {
    pub calibration: Calibration,
    pub frames: Vec<RawFrame>,
    pub objects: ObjectConfiguration,
}

const CALIB: &str = "calib.json";
const TRACK: &str = "track.csv";
const OBJECTS: &str = "objects.json";

pub fn read_calibration(path: &Path) -> Result<Calibration> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, format!("invalid calibration: {e}")))
}

fn read_track(path: &Path) -> Result<Vec<(f64, Pose, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::format(path, format!("{other:?}")),
        })?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        if rec.len() != 9 {
            return Err(Error::format(path, format!("line {}: expected 9 fields, got {}", i + 1, rec.len())));
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let v = match parsed {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::format(path, format!("line {}: {e}", i + 1))),
        };
        let pose = Pose::from_array([v[1], v[2], v[3], v[4], v[5], v[6], v[7]])
            .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        rows.push((v[0], pose, v[8]));
    }
    Ok(rows)
}

/// Reads a raw capture log directory.
pub fn read_raw_log(dir: &Path) -> Result<RawLog> {
    read_raw_log_with_calibration(dir, &dir.join(CALIB))
}

/// Reads a raw capture log whose calibration file lives at `calib`.
pub fn read_raw_log_with_calibration(dir: &Path, calib: &Path) -> Result<RawLog> {
    let calibration = read_calibration(calib)?;
    let tpath = dir.join(TRACK);
    let track = read_track(&tpath)?;
    let clouds = dir.join("clouds");
    let n_clouds = fs::read_dir(&clouds)
        .map_err(|e| Error::io(&clouds, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "umpc"))
        .count();
    if n_clouds != track.len() {
        return Err(Error::format(
            &tpath,
            format!("{} tracking rows but {n_clouds} cloud files", track.len()),
        ));
    }
    let frames = track
        .into_iter()
        .enumerate()
        .map(|(i, (timestamp, tracking_pose, gripper))| {
            Ok(RawFrame {
                timestamp,
                tracking_pose,
                cloud_cam: umpc::read_cloud(&clouds.join(cloud_file_name(i)), Frame::Camera)?,
                gripper,
            })
        })
        .collect::<Result<_>>()?;
    let opath = dir.join(OBJECTS);
    let objects = if opath.exists() {
        let text = fs::read_to_string(&opath).map_err(|e| Error::io(&opath, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(&opath, e.to_string()))?
    } else {
        ObjectConfiguration::default()
    };
    Ok(RawLog {
        calibration,
        frames,
        objects,
    })
}

/// Writes a raw capture log; used to build fixtures.
pub fn write_raw_log(dir: &Path, log: &RawLog) -> Result<()> {
    let clouds = dir.join("clouds");
    fs::create_dir_all(&clouds).map_err(|e| Error::io(&clouds, e))?;
    let cpath = dir.join(CALIB);
    let json = serde_json::to_string_pretty(&log.calibration)
        .map_err(|e| Error::format(&cpath, e.to_string()))?;
    fs::write(&cpath, json + "\n").map_err(|e| Error::io(&cpath, e))?;
    let mut track = String::new();
    for f in &log.frames {
        let fields: Vec<String> = std::iter::once(f.timestamp)
            .chain(f.tracking_pose.to_array())
            .chain(std::iter::once(f.gripper))
            .map(|v| v.to_string())
            .collect();
        track.push_str(&fields.join(","));
        track.push('\n');
    }
    let tpath = dir.join(TRACK);
    fs::write(&tpath, track).map_err(|e| Error::io(&tpath, e))?;
    for (i, f) in log.frames.iter().enumerate() {
        umpc::write_cloud(&clouds.join(cloud_file_name(i)), &f.cloud_cam)?;
    }
    if !log.objects.is_empty() {
        let opath = dir.join(OBJECTS);
        let json = serde_json::to_string_pretty(&log.objects)
            .map_err(|e| Error::format(&opath, e.to_string()))?;
        fs::write(&opath, json + "\n").map_err(|e| Error::io(&opath, e))?;
    }
    Ok(())
}
