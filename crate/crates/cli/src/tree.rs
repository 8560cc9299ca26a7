//! Locating demonstrations inside a dataset tree.

use std::path::{Path, PathBuf};

use egogen_core::capture::rebase_to_robot;
use egogen_core::{read_demo, Demonstration, ObservationMode};
use walkdir::WalkDir;

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";
pub const SUMMARY: &str = "summary.json";

pub fn is_demo_dir(path: &Path) -> bool {
    path.join(MANIFEST).is_file()
}

/// Demonstration directories at or below `root`, sorted by path. A
/// demonstration's own subdirectories are not searched.
pub fn find_demos(root: &Path) -> CliResult<Vec<PathBuf>> {
    if !root.exists() {
        return Err(CliError::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        ));
    }
    if is_demo_dir(root) {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut out = Vec::new();
    let mut walk = WalkDir::new(root).sort_by_file_name().into_iter();
    while let Some(entry) = walk.next() {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            CliError::io(&path, e.into_io_error().unwrap_or_else(|| std::io::Error::other("walk failed")))
        })?;
        if entry.file_type().is_dir() && is_demo_dir(entry.path()) {
            out.push(entry.path().to_path_buf());
            walk.skip_current_dir();
        }
    }
    Ok(out)
}

/// Path of `demo` relative to `root`, or its file name when `root` is the
/// demonstration itself.
pub fn relative_name(root: &Path, demo: &Path) -> PathBuf {
    match demo.strip_prefix(root) {
        Ok(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => demo.file_name().map(PathBuf::from).unwrap_or_default(),
    }
}

/// Reads a demonstration and re-expresses camera-frame data in the robot
/// base frame.
pub fn read_robot_demo(path: &Path) -> CliResult<Demonstration> {
    let d = read_demo(path)?;
    if d.mode == ObservationMode::CameraFrame {
        log::info!("{}: converting camera-frame observations to the robot base frame", path.display());
        return Ok(rebase_to_robot(&d)?);
    }
    Ok(d)
}

/// Accepts a missing or empty directory as an output location.
pub fn require_empty_output(out: &Path) -> CliResult<()> {
    if !out.exists() {
        return Ok(());
    }
    let mut entries = std::fs::read_dir(out).map_err(|e| CliError::io(out, e))?;
    if entries.next().is_some() {
        return Err(CliError::validation(format!("output directory {} is not empty", out.display())));
    }
    Ok(())
}
