//! Read-only dataset reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use egogen_core::{read_demo, Demonstration, SegmentKind};

use crate::error::CliResult;
use crate::tree::{find_demos, relative_name};

pub struct DemoStats {
    pub name: String,
    pub frames: usize,
    pub points: Vec<usize>,
    /// `(pre_filter, visible)` per frame when the visibility filter ran.
    pub visibility: Option<Vec<(usize, usize)>>,
    /// `(kind, start, end, object)`, empty when unannotated.
    pub segments: Vec<(SegmentKind, usize, usize, Option<String>)>,
    pub eval_index: Option<usize>,
    /// Planar position of the first movable object.
    pub anchor: Option<(String, f64, f64)>,
}

impl DemoStats {
    pub fn from_demo(name: String, d: &Demonstration) -> Self {
        Self {
            name,
            frames: d.len(),
            points: d.frames.iter().map(|f| f.observation.len()).collect(),
            visibility: d
                .vao
                .as_ref()
                .map(|v| v.pre_filter.iter().copied().zip(v.visible.iter().copied()).collect()),
            segments: d
                .segments
                .iter()
                .flatten()
                .map(|s| (s.kind, s.start, s.end, s.object.clone()))
                .collect(),
            eval_index: d.generation.as_ref().map(|g| g.eval_index),
            anchor: d.objects.entries().iter().find(|e| e.movable).map(|e| {
                let p = e.pose.position();
                (e.name.clone(), p.x, p.y)
            }),
        }
    }

    /// Visible share of the pre-filter cloud; `None` without a record or
    /// when nothing was there to begin with.
    pub fn visible_fraction(&self, t: usize) -> Option<f64> {
        let (pre, vis) = *self.visibility.as_ref()?.get(t)?;
        (pre > 0).then(|| vis as f64 / pre as f64)
    }

    fn segment_at(&self, t: usize) -> String {
        self.segments
            .iter()
            .position(|s| s.1 <= t && t < s.2)
            .map(|i| i.to_string())
            .unwrap_or_default()
    }
}

pub struct Report {
    pub demos: Vec<DemoStats>,
    /// Directories that could not be read, with the reason.
    pub malformed: Vec<(PathBuf, String)>,
}

pub fn collect(root: &Path) -> CliResult<Report> {
    let mut demos = Vec::new();
    let mut malformed = Vec::new();
    for dir in find_demos(root)? {
        let name = relative_name(root, &dir).display().to_string();
        match read_demo(&dir) {
            Ok(d) => demos.push(DemoStats::from_demo(name, &d)),
            Err(e) => malformed.push((dir, e.to_string())),
        }
    }
    Ok(Report { demos, malformed })
}

fn quantiles(v: &[usize]) -> (usize, usize, usize) {
    if v.is_empty() {
        return (0, 0, 0);
    }
    let mut s = v.to_vec();
    s.sort_unstable();
    (s[0], s[s.len() / 2], s[s.len() - 1])
}

pub fn render_text(r: &Report) -> String {
    let mut out = String::new();
    for d in &r.demos {
        let (lo, med, hi) = quantiles(&d.points);
        let _ = writeln!(out, "{}: {} frames, points min/median/max {lo}/{med}/{hi}", d.name, d.frames);
        let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
        for p in &d.points {
            *hist.entry(*p).or_default() += 1;
        }
        let bins: Vec<String> = hist.iter().map(|(k, n)| format!("{k}x{n}")).collect();
        let _ = writeln!(out, "  point counts: {}", bins.join(" "));
        let fractions: Vec<f64> = (0..d.frames).filter_map(|t| d.visible_fraction(t)).collect();
        if !fractions.is_empty() {
            let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
            let min = fractions.iter().copied().fold(f64::INFINITY, f64::min);
            let _ = writeln!(out, "  visible fraction mean {mean:.4} min {min:.4}");
        }
        for (kind, start, end, object) in &d.segments {
            let kind = match kind {
                SegmentKind::Motion => "motion",
                SegmentKind::Skill => "skill",
            };
            let _ = writeln!(out, "  {kind:<6} [{start}, {end}) {}", object.as_deref().unwrap_or("-"));
        }
    }
    for (dir, why) in &r.malformed {
        let _ = writeln!(out, "MALFORMED {}: {why}", dir.display());
    }
    let _ = writeln!(out, "{} demonstration(s), {} malformed", r.demos.len(), r.malformed.len());
    out
}

/// One row per frame.
pub fn render_csv(r: &Report) -> String {
    let mut out = String::from("demo,frame,points,pre_filter,visible,visible_fraction,segment\n");
    for d in &r.demos {
        for t in 0..d.frames {
            let (pre, vis) = match d.visibility.as_ref().and_then(|v| v.get(t)) {
                Some((p, v)) => (p.to_string(), v.to_string()),
                None => (String::new(), String::new()),
            };
            let frac = d.visible_fraction(t).map(|f| f.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{t},{},{pre},{vis},{frac},{}", d.name, d.points[t], d.segment_at(t));
        }
    }
    out
}

/// One row per evaluation point: where the first movable object sits on
/// average and how the generated observations look there.
pub fn render_heatmap(r: &Report) -> String {
    #[derive(Default)]
    struct Cell {
        object: String,
        x: f64,
        y: f64,
        demos: usize,
        fraction_sum: f64,
        fraction_n: usize,
        min_points: Option<usize>,
        max_points: usize,
    }
    let mut cells: BTreeMap<usize, Cell> = BTreeMap::new();
    for d in &r.demos {
        let (Some(j), Some((object, x, y))) = (d.eval_index, d.anchor.as_ref()) else {
            continue;
        };
        let c = cells.entry(j).or_default();
        c.object.clone_from(object);
        c.x += x;
        c.y += y;
        c.demos += 1;
        for t in 0..d.frames {
            if let Some(f) = d.visible_fraction(t) {
                c.fraction_sum += f;
                c.fraction_n += 1;
            }
        }
        let (lo, _, hi) = quantiles(&d.points);
        c.min_points = Some(c.min_points.map_or(lo, |m| m.min(lo)));
        c.max_points = c.max_points.max(hi);
    }
    let mut out = String::from("eval_index,object,x,y,demos,mean_visible_fraction,min_points,max_points\n");
    for (j, c) in &cells {
        let n = c.demos as f64;
        let frac = if c.fraction_n > 0 {
            (c.fraction_sum / c.fraction_n as f64).to_string()
        } else {
            String::new()
        };
        let _ = writeln!(
            out,
            "{j},{},{},{},{},{frac},{},{}",
            c.object,
            c.x / n,
            c.y / n,
            c.demos,
            c.min_points.unwrap_or(0),
            c.max_points
        );
    }
    out
}
