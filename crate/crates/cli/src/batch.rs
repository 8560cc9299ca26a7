//! Batch generation: sources x evaluation points x perturbations.
//!
//! Output tree:
//!
//! ```text
//! <out>/summary.json
//! <out>/s{i}_e{j}_p{k}/      one demonstration per (source, eval point, perturbation)
//! ```
//!
//! Targets depend only on the seed and the evaluation index, never on the
//! worker count or scheduling, so repeated runs produce identical trees.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use egogen_core::generate::max_planar_offset;
use egogen_core::segment::segmentation_for;
use egogen_core::{
    apply_vao, count_generated, generate, label_points, sample_targets, write_demo, Demonstration,
    GenerationRecord, GenerationSpec, MotionCaps, ObjectConfiguration, Perturbation, PointLabels, Pose,
    SegmentedTrajectory,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{SegmentSettings, VaoSettings};
use crate::error::{CliError, CliResult};
use crate::tree::{read_robot_demo, require_empty_output, SUMMARY};

/// One entry of the evaluation-points file: either new poses for some
/// objects (the rest keep the source configuration) or a full configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EvalPoint {
    Overrides(BTreeMap<String, Pose>),
    Full(ObjectConfiguration),
}

impl EvalPoint {
    /// The evaluation configuration for a source with `objects`.
    pub fn resolve(&self, objects: &ObjectConfiguration) -> CliResult<ObjectConfiguration> {
        match self {
            EvalPoint::Full(cfg) => {
                cfg.validate()?;
                Ok(cfg.clone())
            }
            EvalPoint::Overrides(poses) => {
                for name in poses.keys() {
                    if objects.get(name).is_none() {
                        return Err(CliError::validation(format!("evaluation point names unknown object '{name}'")));
                    }
                }
                Ok(objects.map_entries(|e| match poses.get(&e.name) {
                    Some(p) if *p != e.pose => e.moved_to(*p),
                    _ => e.clone(),
                }))
            }
        }
    }
}

pub fn read_eval_points(path: &Path) -> CliResult<Vec<EvalPoint>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone)]
pub struct BatchConfig {
    pub sources: Vec<PathBuf>,
    pub eval_points: Vec<EvalPoint>,
    /// Evaluation indices to generate; all when `None`.
    pub eval_allow: Option<Vec<usize>>,
    pub perturbation: Perturbation,
    pub n_perturb: usize,
    pub seed: u64,
    pub caps: MotionCaps,
    pub segment: SegmentSettings,
    /// `None` skips the visibility filter.
    pub vao: Option<VaoSettings>,
    pub out: PathBuf,
}

/// Everything that determines the output, hashed into the summary.
#[derive(Debug, Clone, Serialize)]
pub struct HashedConfig<'a> {
    pub sources: &'a [String],
    pub eval_points: &'a [EvalPoint],
    pub eval_indices: &'a [usize],
    pub perturbation: Perturbation,
    pub n_perturb: usize,
    pub seed: u64,
    pub caps: MotionCaps,
    pub segment: SegmentSettings,
    pub vao: Option<VaoSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoSummary {
    pub dir: String,
    pub source: usize,
    pub eval_index: usize,
    pub perturb_index: usize,
    pub frames: usize,
    /// Largest |dx|, |dy| of any object relative to the evaluation point.
    pub offset: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub n_source: usize,
    pub n_eval: usize,
    pub n_perturb: usize,
    pub seed: u64,
    pub perturbation: Perturbation,
    pub vao: bool,
    pub config_hash: String,
    pub sources: Vec<String>,
    pub eval_indices: Vec<usize>,
    pub demos: Vec<DemoSummary>,
}

impl Summary {
    pub fn read(path: &Path) -> CliResult<Summary> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
    }
}

pub fn demo_dir_name(source: usize, eval: usize, perturb: usize) -> String {
    format!("s{source}_e{eval}_p{perturb}")
}

struct Prepared {
    name: String,
    demo: Demonstration,
    segmentation: SegmentedTrajectory,
    labels: PointLabels,
}

fn prepare(path: &Path, segment: &SegmentSettings) -> CliResult<Prepared> {
    let demo = read_robot_demo(path)?;
    let params = segment.params();
    let segmentation = segmentation_for(&demo, &params)?;
    let labels = label_points(&demo, &demo.objects, &params)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    Ok(Prepared {
        name,
        demo,
        segmentation,
        labels,
    })
}

struct Job {
    source: usize,
    eval: usize,
    perturb: usize,
    target: ObjectConfiguration,
    offset: [f64; 2],
}

fn source_error(path: &Path, e: CliError) -> CliError {
    match e {
        CliError::Core(inner) if !inner.is_io() => {
            CliError::validation(format!("source {}: {inner}", path.display()))
        }
        other => other,
    }
}

fn job_error(name: &str, e: egogen_core::Error) -> CliError {
    if e.is_io() {
        CliError::Core(e)
    } else {
        CliError::validation(format!("{name}: {e}"))
    }
}

/// Runs the batch on the current rayon pool and writes the tree. On
/// failure nothing of this run is left behind.
pub fn run_batch(cfg: &BatchConfig) -> CliResult<Summary> {
    if cfg.sources.is_empty() {
        return Err(CliError::validation("no source demonstrations given"));
    }
    let eval_indices: Vec<usize> = match &cfg.eval_allow {
        Some(allow) => {
            let mut v = allow.clone();
            v.sort_unstable();
            v.dedup();
            if let Some(bad) = v.iter().find(|j| **j >= cfg.eval_points.len()) {
                return Err(CliError::validation(format!(
                    "allowlisted evaluation point {bad} does not exist ({} given)",
                    cfg.eval_points.len()
                )));
            }
            v
        }
        None => (0..cfg.eval_points.len()).collect(),
    };
    if eval_indices.is_empty() {
        return Err(CliError::validation("no evaluation points to generate"));
    }
    if cfg.n_perturb == 0 {
        return Err(CliError::validation("need at least one perturbation per evaluation point"));
    }
    cfg.caps.validate()?;
    require_empty_output(&cfg.out)?;

    let prepared: Vec<Prepared> = cfg
        .sources
        .iter()
        .map(|p| prepare(p, &cfg.segment).map_err(|e| source_error(p, e)))
        .collect::<CliResult<_>>()?;

    let mut jobs = Vec::new();
    for (i, src) in prepared.iter().enumerate() {
        let bases: Vec<ObjectConfiguration> = eval_indices
            .iter()
            .map(|j| cfg.eval_points[*j].resolve(&src.demo.objects))
            .collect::<CliResult<_>>()?;
        let targets = sample_targets(&bases, cfg.perturbation, cfg.n_perturb, cfg.seed)?;
        for (jj, j) in eval_indices.iter().enumerate() {
            for k in 0..cfg.n_perturb {
                let target = targets[jj * cfg.n_perturb + k].clone();
                let (dx, dy) = max_planar_offset(&bases[jj], &target);
                jobs.push(Job {
                    source: i,
                    eval: *j,
                    perturb: k,
                    target,
                    offset: [dx, dy],
                });
            }
        }
    }
    debug_assert_eq!(jobs.len(), count_generated(prepared.len(), eval_indices.len(), cfg.n_perturb));

    let created_out = !cfg.out.exists();
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    let result = write_jobs(cfg, &prepared, &jobs, &eval_indices);
    if result.is_err() {
        cleanup(&cfg.out, &jobs, created_out);
    }
    result
}

fn write_jobs(cfg: &BatchConfig, prepared: &[Prepared], jobs: &[Job], eval_indices: &[usize]) -> CliResult<Summary> {
    let params = cfg.segment.params();
    let demos: Vec<DemoSummary> = jobs
        .par_iter()
        .map(|job| {
            let src = &prepared[job.source];
            let dir = demo_dir_name(job.source, job.eval, job.perturb);
            let mut d = generate(&GenerationSpec {
                source: &src.demo,
                segmentation: &src.segmentation,
                labels: &src.labels,
                target: &job.target,
                caps: cfg.caps,
                params,
            })
            .map_err(|e| job_error(&dir, e))?;
            d.generation = Some(GenerationRecord {
                source: src.name.clone(),
                eval_index: job.eval,
                perturb_index: job.perturb,
                step_cap: cfg.caps.step_cap,
                angle_cap: cfg.caps.angle_cap,
            });
            if let Some(v) = &cfg.vao {
                d = apply_vao(&v.config(&d), &d).map_err(|e| job_error(&dir, e))?.0;
            }
            write_demo(&d, &cfg.out.join(&dir))?;
            Ok(DemoSummary {
                dir,
                source: job.source,
                eval_index: job.eval,
                perturb_index: job.perturb,
                frames: d.len(),
                offset: job.offset,
            })
        })
        .collect::<CliResult<_>>()?;

    let sources: Vec<String> = prepared.iter().map(|p| p.name.clone()).collect();
    let hashed = HashedConfig {
        sources: &sources,
        eval_points: &cfg.eval_points,
        eval_indices,
        perturbation: cfg.perturbation,
        n_perturb: cfg.n_perturb,
        seed: cfg.seed,
        caps: cfg.caps,
        segment: cfg.segment,
        vao: cfg.vao,
    };
    let summary = Summary {
        count: demos.len(),
        n_source: prepared.len(),
        n_eval: eval_indices.len(),
        n_perturb: cfg.n_perturb,
        seed: cfg.seed,
        perturbation: cfg.perturbation,
        vao: cfg.vao.is_some(),
        config_hash: config_hash(&hashed),
        sources,
        eval_indices: eval_indices.to_vec(),
        demos,
    };
    let path = cfg.out.join(SUMMARY);
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(summary)
}

pub fn config_hash(cfg: &HashedConfig<'_>) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

fn cleanup(out: &Path, jobs: &[Job], created_out: bool) {
    if created_out {
        let _ = fs::remove_dir_all(out);
        return;
    }
    for job in jobs {
        let _ = fs::remove_dir_all(out.join(demo_dir_name(job.source, job.eval, job.perturb)));
    }
    let _ = fs::remove_file(out.join(SUMMARY));
}
