//! `.umpc` point-cloud files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "UMPC" | u16 version (1) | u8 flags (bit0 = has color) | u32 count
//! count * (f32 x, f32 y, f32 z)
//! count * (u8 r, u8 g, u8 b)        only when bit0 is set
//! ```
//!
//! Coordinates are stored as `f32`; a cloud read from disk round-trips
//! bit-exactly, a cloud computed in `f64` is rounded to nearest on write.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::se3::{Frame, Point3, PointCloud, Rgb};

pub const MAGIC: &[u8; 4] = b"UMPC";
pub const VERSION: u16 = 1;
const FLAG_COLOR: u8 = 0b1;
const HEADER_LEN: usize = 4 + 2 + 1 + 4;

pub fn encode(cloud: &PointCloud) -> Vec<u8> {
    let colors = cloud.colors();
    let n = cloud.len();
    let mut buf = Vec::with_capacity(HEADER_LEN + n * 12 + colors.map_or(0, |_| n * 3));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(if colors.is_some() { FLAG_COLOR } else { 0 });
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    for p in cloud.points() {
        for c in [p.x, p.y, p.z] {
            buf.extend_from_slice(&(c as f32).to_le_bytes());
        }
    }
    if let Some(colors) = colors {
        for c in colors {
            buf.extend_from_slice(c);
        }
    }
    buf
}

/// Decodes a cloud; `path` is only used for error messages.
pub fn decode(bytes: &[u8], frame: Frame, path: &Path) -> Result<PointCloud> {
    let err = |msg: String| Error::format(path, msg);
    if bytes.len() < HEADER_LEN {
        return Err(err(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(err("bad magic, not a UMPC file".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(err(format!("unsupported version {version}")));
    }
    let flags = bytes[6];
    if flags & !FLAG_COLOR != 0 {
        return Err(err(format!("unknown flag bits {flags:#04x}")));
    }
    let n = u32::from_le_bytes([bytes[7], bytes[8], bytes[9], bytes[10]]) as usize;
    let has_color = flags & FLAG_COLOR != 0;
    let expected = HEADER_LEN + n * 12 + if has_color { n * 3 } else { 0 };
    if bytes.len() < expected {
        return Err(err(format!(
            "truncated body: {} points need {expected} bytes, file has {}",
            n,
            bytes.len()
        )));
    }
    if bytes.len() > expected {
        return Err(err(format!("{} trailing bytes after {n} points", bytes.len() - expected)));
    }
    let body = &bytes[HEADER_LEN..];
    let f = |i: usize| f64::from(f32::from_le_bytes(body[i..i + 4].try_into().unwrap()));
    let points: Vec<Point3> = (0..n)
        .map(|k| Point3::new(f(k * 12), f(k * 12 + 4), f(k * 12 + 8)))
        .collect();
    let cloud = if has_color {
        let rgb = &body[n * 12..];
        let colors: Vec<Rgb> = rgb.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        PointCloud::with_colors(points, colors, frame)
    } else {
        PointCloud::new(points, frame)
    };
    cloud.map_err(|e| err(e.to_string()))
}

pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    fs::write(path, encode(cloud)).map_err(|e| Error::io(path, e))
}

pub fn read_cloud(path: &Path, frame: Frame) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, frame, path)
}
