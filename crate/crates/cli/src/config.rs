//! Optional TOML defaults. Every value here can be overridden by a flag.
//!
//! ```toml
//! workers = 4
//!
//! [segment]
//! close_threshold = 0.5
//! hysteresis = 3
//! proximity_radius = 0.05
//!
//! [generate]
//! perturb = 0.015
//! n_perturb = 9
//! seed = 0
//! step_cap = 0.01
//! angle_cap = 0.05
//! no_vao = false
//!
//! [vao]
//! n_points = 1024
//! pad_policy = "repeat"
//! raster_occlusion = "64x48"
//! ```

use std::fs;
use std::path::Path;

use egogen_core::vao::{PadPolicy, RasterOcclusion, DEFAULT_N_POINTS};
use egogen_core::SegmenterParams;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub workers: Option<usize>,
    #[serde(default)]
    pub segment: SegmentFile,
    #[serde(default)]
    pub generate: GenerateFile,
    #[serde(default)]
    pub vao: VaoFile,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentFile {
    pub close_threshold: Option<f64>,
    pub hysteresis: Option<usize>,
    pub proximity_radius: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateFile {
    pub perturb: Option<f64>,
    pub n_perturb: Option<usize>,
    pub seed: Option<u64>,
    pub step_cap: Option<f64>,
    pub angle_cap: Option<f64>,
    pub no_vao: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaoFile {
    pub n_points: Option<usize>,
    pub pad_policy: Option<PadPolicy>,
    pub raster_occlusion: Option<String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
    }
}

/// Worker count: flag or `EGOGEN_WORKERS`, then the config file, then 1.
pub fn resolve_workers(flag: Option<usize>, file: &FileConfig) -> CliResult<usize> {
    let n = flag.or(file.workers).unwrap_or(1);
    if n == 0 {
        return Err(CliError::validation("worker count must be at least 1"));
    }
    Ok(n)
}

/// Segmenter thresholds in serializable form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentSettings {
    pub close_threshold: f64,
    pub hysteresis: usize,
    pub proximity_radius: f64,
}

impl SegmentSettings {
    pub fn resolve(
        close_threshold: Option<f64>,
        hysteresis: Option<usize>,
        proximity_radius: Option<f64>,
        file: &SegmentFile,
    ) -> CliResult<Self> {
        let d = SegmenterParams::default();
        let s = Self {
            close_threshold: close_threshold.or(file.close_threshold).unwrap_or(d.close_threshold),
            hysteresis: hysteresis.or(file.hysteresis).unwrap_or(d.hysteresis),
            proximity_radius: proximity_radius.or(file.proximity_radius).unwrap_or(d.proximity_radius),
        };
        if !(s.close_threshold > 0.0 && s.close_threshold <= 1.0) {
            return Err(CliError::validation(format!(
                "close threshold {} outside (0, 1]",
                s.close_threshold
            )));
        }
        if s.hysteresis == 0 {
            return Err(CliError::validation("hysteresis must be at least 1 frame"));
        }
        if !(s.proximity_radius >= 0.0 && s.proximity_radius.is_finite()) {
            return Err(CliError::validation(format!(
                "proximity radius {} must be >= 0",
                s.proximity_radius
            )));
        }
        Ok(s)
    }

    pub fn params(&self) -> SegmenterParams {
        SegmenterParams {
            proximity_radius: self.proximity_radius,
            close_threshold: self.close_threshold,
            hysteresis: self.hysteresis,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VaoSettings {
    pub n_points: usize,
    pub pad_policy: PadPolicy,
    pub raster_occlusion: Option<RasterOcclusion>,
}

impl VaoSettings {
    pub fn resolve(
        n_points: Option<usize>,
        pad_policy: Option<PadPolicy>,
        raster: Option<RasterOcclusion>,
        file: &VaoFile,
    ) -> CliResult<Self> {
        let raster = match raster {
            Some(r) => Some(r),
            None => file.raster_occlusion.as_deref().map(parse_raster).transpose().map_err(CliError::Validation)?,
        };
        let s = Self {
            n_points: n_points.or(file.n_points).unwrap_or(DEFAULT_N_POINTS),
            pad_policy: pad_policy.or(file.pad_policy).unwrap_or_default(),
            raster_occlusion: raster,
        };
        if s.n_points == 0 {
            return Err(CliError::validation("point budget must be at least 1"));
        }
        Ok(s)
    }

    pub fn config(&self, d: &egogen_core::Demonstration) -> egogen_core::VaoConfig {
        egogen_core::VaoConfig {
            n_points: self.n_points,
            pad_policy: self.pad_policy,
            occlusion: self.raster_occlusion,
            ..egogen_core::VaoConfig::for_demo(d)
        }
    }
}

/// Parses `WxH`, e.g. `64x48`.
pub fn parse_raster(s: &str) -> Result<RasterOcclusion, String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got '{s}'"))?;
    let parse = |v: &str| v.trim().parse::<u32>().map_err(|e| format!("'{s}': {e}"));
    let (width, height) = (parse(w)?, parse(h)?);
    if width == 0 || height == 0 {
        return Err(format!("'{s}': grid dimensions must be positive"));
    }
    Ok(RasterOcclusion { width, height })
}
