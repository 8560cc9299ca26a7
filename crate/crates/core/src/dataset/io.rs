//! Demonstration directories.
//!
//! ```text
//! <demo>/manifest.json        metadata, see `Manifest`
//! <demo>/actions.csv          t,qw,qx,qy,qz,tx,ty,tz,hand   (one line per frame)
//! <demo>/clouds/000000.umpc   one cloud per frame
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{umpc, Action, DemoFrame, Demonstration, GenerationRecord, ObjectConfiguration, ObservationMode, VaoRecord};
use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::se3::Pose;
use crate::segment::Segment;

pub const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const ACTIONS: &str = "actions.csv";
const CLOUDS: &str = "clouds";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    frame_count: usize,
    frame_rate: f64,
    mode: ObservationMode,
    intrinsics: CameraIntrinsics,
    hand_eye: Pose,
    objects: ObjectConfiguration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    segments: Option<Vec<Segment>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generation: Option<GenerationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vao: Option<VaoRecord>,
}

pub(crate) fn cloud_file_name(i: usize) -> String {
    format!("{i:06}.umpc")
}

/// Writes `demo` to `path`, replacing any existing directory. The tree is
/// assembled in a sibling temporary directory and renamed into place.
pub fn write_demo(demo: &Demonstration, path: &Path) -> Result<()> {
    demo.check_structure()?;
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::format(path, "demo path has no final component"))?;
    let tmp = parent.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    let result = write_tree(demo, &tmp).and_then(|()| {
        if path.exists() {
            fs::remove_dir_all(path).map_err(|e| Error::io(path, e))?;
        }
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    });
    if result.is_err() {
        let _ = fs::remove_dir_all(&tmp);
    }
    result
}

fn write_tree(demo: &Demonstration, dir: &Path) -> Result<()> {
    let clouds = dir.join(CLOUDS);
    fs::create_dir_all(&clouds).map_err(|e| Error::io(&clouds, e))?;

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        frame_count: demo.len(),
        frame_rate: demo.frame_rate,
        mode: demo.mode,
        intrinsics: demo.intrinsics,
        hand_eye: demo.hand_eye,
        objects: demo.objects.clone(),
        segments: demo.segments.clone(),
        generation: demo.generation.clone(),
        vao: demo.vao.clone(),
    };
    let mpath = dir.join(MANIFEST);
    let mut json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::format(&mpath, e.to_string()))?;
    json.push('\n');
    fs::write(&mpath, json).map_err(|e| Error::io(&mpath, e))?;

    let apath = dir.join(ACTIONS);
    let file = fs::File::create(&apath).map_err(|e| Error::io(&apath, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    for f in &demo.frames {
        let [qw, qx, qy, qz, tx, ty, tz] = f.action.arm.to_array();
        let row = [f.timestamp, qw, qx, qy, qz, tx, ty, tz, f.action.hand];
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| Error::format(&apath, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&apath, e))?;

    for (i, f) in demo.frames.iter().enumerate() {
        umpc::write_cloud(&clouds.join(cloud_file_name(i)), &f.observation)?;
    }
    Ok(())
}

pub fn read_demo(path: &Path) -> Result<Demonstration> {
    let mpath = path.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let m: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::format(&mpath, e.to_string()))?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::format(
            &mpath,
            format!("unsupported format version {}", m.format_version),
        ));
    }

    let apath = path.join(ACTIONS);
    let rows = read_action_rows(&apath)?;
    if rows.len() != m.frame_count {
        return Err(Error::format(
            &apath,
            format!("manifest declares {} frames, actions.csv has {}", m.frame_count, rows.len()),
        ));
    }

    let clouds = path.join(CLOUDS);
    let n_files = fs::read_dir(&clouds)
        .map_err(|e| Error::io(&clouds, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "umpc"))
        .count();
    if n_files != m.frame_count {
        return Err(Error::format(
            &clouds,
            format!("manifest declares {} frames, found {n_files} cloud files", m.frame_count),
        ));
    }

    let frame = m.mode.frame();
    let frames = rows
        .into_iter()
        .enumerate()
        .map(|(i, (t, action))| {
            let cpath = clouds.join(cloud_file_name(i));
            if !cpath.exists() {
                return Err(Error::format(&cpath, "missing cloud file"));
            }
            Ok(DemoFrame {
                timestamp: t,
                observation: umpc::read_cloud(&cpath, frame)?,
                action,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let demo = Demonstration {
        frames,
        objects: m.objects,
        intrinsics: m.intrinsics,
        mode: m.mode,
        hand_eye: m.hand_eye,
        frame_rate: m.frame_rate,
        segments: m.segments,
        generation: m.generation,
        vao: m.vao,
    };
    demo.check_structure()
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok(demo)
}

fn read_action_rows(path: &Path) -> Result<Vec<(f64, Action)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        if line == 0 && rec.get(0).is_some_and(|s| s.parse::<f64>().is_err()) {
            continue; // header row
        }
        let bad = |msg: String| Error::format(path, format!("line {}: {msg}", line + 1));
        if rec.len() != 9 {
            return Err(bad(format!("expected 9 fields, found {}", rec.len())));
        }
        let mut v = [0.0; 9];
        for (slot, field) in v.iter_mut().zip(rec.iter()) {
            *slot = field.parse().map_err(|_| bad(format!("not a number: '{field}'")))?;
        }
        let arm = Pose::from_array([v[1], v[2], v[3], v[4], v[5], v[6], v[7]])
            .map_err(|e| bad(e.to_string()))?;
        let action = Action::new(arm, v[8]).map_err(|e| bad(e.to_string()))?;
        rows.push((v[0], action));
    }
    Ok(rows)
}
