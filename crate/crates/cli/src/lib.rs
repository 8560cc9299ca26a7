//! The `egogen` command-line tool.
//!
//! Exit codes: 0 success, 2 invalid input or failed validation, 3 I/O
//! failure.

pub mod batch;
pub mod config;
pub mod error;
pub mod stats;
pub mod tree;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use egogen_core::capture::{ingest, read_raw_log, read_raw_log_with_calibration};
use egogen_core::generate::{DEFAULT_ANGLE_CAP, DEFAULT_STEP_CAP};
use egogen_core::scene::{chamfer_per_frame, oracle_renders};
use egogen_core::segment::segment_by_gripper;
use egogen_core::vao::{PadPolicy, RasterOcclusion};
use egogen_core::{
    apply_vao, read_demo, script_demo, validate_demo, write_demo, MotionCaps, ObjectConfiguration,
    ObservationMode, Perturbation, PrimitiveScene, RenderOptions, Script, SegmentKind, ValidationOptions,
};

use crate::batch::{read_eval_points, BatchConfig, Summary};
use crate::config::{parse_raster, resolve_workers, FileConfig, SegmentSettings, VaoSettings};
use crate::error::{CliError, CliResult, EXIT_OK, EXIT_VALIDATION};
use crate::tree::{find_demos, read_robot_demo, relative_name, require_empty_output, SUMMARY};

#[derive(Debug, Parser)]
#[command(name = "egogen", version, about = "Synthesize visibility-consistent egocentric point-cloud demonstrations")]
pub struct Cli {
    /// Worker threads.
    #[arg(long, global = true, env = "EGOGEN_WORKERS")]
    pub workers: Option<usize>,
    /// TOML file with defaults; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a raw capture log into a demonstration.
    Convert(ConvertArgs),
    /// Split a demonstration into skill and motion segments.
    Segment(SegmentArgs),
    /// Generate demonstrations for new object configurations.
    Generate(GenerateArgs),
    /// Crop observations to the camera frustum and resample to N points.
    VaoFilter(VaoFilterArgs),
    /// Re-render a demonstration's trajectory in a primitive scene and compare.
    RenderOracle(RenderOracleArgs),
    /// Render a scripted demonstration of a primitive scene.
    ScriptDemo(ScriptDemoArgs),
    /// Check every demonstration under a directory.
    Validate(ValidateArgs),
    /// Report point counts, visibility and segments.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Camera,
    Robot,
}

impl From<ModeArg> for ObservationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Camera => ObservationMode::CameraFrame,
            ModeArg::Robot => ObservationMode::RobotBaseFrame,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PadArg {
    Repeat,
    Error,
}

impl From<PadArg> for PadPolicy {
    fn from(p: PadArg) -> Self {
        match p {
            PadArg::Repeat => PadPolicy::Repeat,
            PadArg::Error => PadPolicy::Error,
        }
    }
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Raw log directory (track.csv, clouds/, calib.json).
    #[arg(long)]
    pub log: PathBuf,
    /// Calibration file; defaults to <log>/calib.json.
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// Object configuration JSON; defaults to <log>/objects.json when present.
    #[arg(long)]
    pub objects: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "robot")]
    pub mode: ModeArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct SegmenterFlags {
    /// Hand values below this count as closed.
    #[arg(long)]
    pub close_threshold: Option<f64>,
    /// Frames a hand state must persist.
    #[arg(long)]
    pub hysteresis: Option<usize>,
    /// End-effector distance to a crop box that counts as contact, meters.
    #[arg(long)]
    pub proximity_radius: Option<f64>,
}

impl SegmenterFlags {
    fn resolve(&self, file: &FileConfig) -> CliResult<SegmentSettings> {
        SegmentSettings::resolve(self.close_threshold, self.hysteresis, self.proximity_radius, &file.segment)
    }
}

#[derive(Debug, Args, Default)]
pub struct VaoFlags {
    /// Points per frame after sampling.
    #[arg(long)]
    pub n_points: Option<usize>,
    #[arg(long, value_enum)]
    pub pad_policy: Option<PadArg>,
    /// Keep only the nearest point per cell of a WxH grid.
    #[arg(long, value_parser = parse_raster)]
    pub raster_occlusion: Option<RasterOcclusion>,
}

impl VaoFlags {
    fn resolve(&self, file: &FileConfig) -> CliResult<VaoSettings> {
        VaoSettings::resolve(self.n_points, self.pad_policy.map(Into::into), self.raster_occlusion, &file.vao)
    }
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Write a copy annotated with the segments.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub segmenter: SegmenterFlags,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Source demonstration directories.
    #[arg(long, num_args = 1.., required = true)]
    pub source: Vec<PathBuf>,
    /// JSON list of evaluation configurations.
    #[arg(long)]
    pub eval_points: PathBuf,
    /// Generate only these evaluation indices.
    #[arg(long, value_delimiter = ',')]
    pub eval_allow: Option<Vec<usize>>,
    /// Half-range of the planar jitter around each evaluation point, meters.
    #[arg(long)]
    pub perturb: Option<f64>,
    #[arg(long)]
    pub n_perturb: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Largest translation per replanned step, meters.
    #[arg(long)]
    pub step_cap: Option<f64>,
    /// Largest rotation per replanned step, radians.
    #[arg(long)]
    pub angle_cap: Option<f64>,
    /// Skip the visibility filter.
    #[arg(long)]
    pub no_vao: bool,
    #[command(flatten)]
    pub vao: VaoFlags,
    #[command(flatten)]
    pub segmenter: SegmenterFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VaoFilterArgs {
    /// A demonstration or a directory of demonstrations.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub vao: VaoFlags,
}

#[derive(Debug, Args)]
pub struct RenderOracleArgs {
    /// Scene description JSON.
    #[arg(long)]
    pub scene: PathBuf,
    /// Demonstration whose trajectory and configuration are rendered.
    #[arg(long)]
    pub demo: PathBuf,
    /// Write the rendered demonstration here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write per-frame Chamfer distances as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub segmenter: SegmenterFlags,
}

#[derive(Debug, Args)]
pub struct ScriptDemoArgs {
    /// Scene description JSON; must include a camera.
    #[arg(long)]
    pub scene: PathBuf,
    /// Script JSON: start pose, stages and waypoints.
    #[arg(long)]
    pub script: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Depth noise standard deviation, meters.
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Leave the ground-truth segments out of the manifest.
    #[arg(long)]
    pub no_annotate: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub path: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub path: PathBuf,
    /// Per-frame CSV instead of text.
    #[arg(long)]
    pub csv: bool,
    /// Write a per-evaluation-point CSV grid here.
    #[arg(long)]
    pub heatmap: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose);
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let workers = resolve_workers(cli.workers, &file)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::validation(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Convert(a) => cmd_convert(a),
        Command::Segment(a) => cmd_segment(a, &file),
        Command::Generate(a) => cmd_generate(a, &file).map(|_| ()),
        Command::VaoFilter(a) => cmd_vao_filter(a, &file),
        Command::RenderOracle(a) => cmd_render_oracle(a, &file),
        Command::ScriptDemo(a) => cmd_script_demo(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Stats(a) => cmd_stats(a),
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

pub fn cmd_convert(a: &ConvertArgs) -> CliResult<()> {
    let mut log = match &a.calib {
        Some(c) => read_raw_log_with_calibration(&a.log, c)?,
        None => read_raw_log(&a.log)?,
    };
    if let Some(p) = &a.objects {
        log.objects = read_json::<ObjectConfiguration>(p)?;
    }
    if log.objects.is_empty() {
        log::warn!("no object configuration; segmentation and generation will need one");
    }
    let d = ingest(
        &log.frames,
        &log.calibration.extrinsics(),
        &log.calibration.intrinsics,
        a.mode.into(),
        log.objects,
    )?;
    write_demo(&d, &a.out)?;
    println!("wrote {} frames to {}", d.len(), a.out.display());
    Ok(())
}

pub fn cmd_segment(a: &SegmentArgs, file: &FileConfig) -> CliResult<()> {
    let settings = a.segmenter.resolve(file)?;
    let mut d = read_robot_demo(&a.input)?;
    let seg = segment_by_gripper(&d, &settings.params())?;
    println!("kind,start,end,object");
    for s in &seg.segments {
        let kind = match s.kind {
            SegmentKind::Motion => "motion",
            SegmentKind::Skill => "skill",
        };
        println!("{kind},{},{},{}", s.start, s.end, s.object.as_deref().unwrap_or(""));
    }
    if let Some(out) = &a.out {
        d.segments = Some(seg.segments);
        write_demo(&d, out)?;
    }
    Ok(())
}

/// Resolves flags against the config file into a batch description.
pub fn batch_config(a: &GenerateArgs, file: &FileConfig) -> CliResult<BatchConfig> {
    let g = &file.generate;
    let perturb = a.perturb.or(g.perturb).unwrap_or(0.015);
    let no_vao = a.no_vao || g.no_vao.unwrap_or(false);
    Ok(BatchConfig {
        sources: a.source.clone(),
        eval_points: read_eval_points(&a.eval_points)?,
        eval_allow: a.eval_allow.clone(),
        perturbation: Perturbation::square(perturb),
        n_perturb: a.n_perturb.or(g.n_perturb).unwrap_or(9),
        seed: a.seed.or(g.seed).unwrap_or(0),
        caps: MotionCaps {
            step_cap: a.step_cap.or(g.step_cap).unwrap_or(DEFAULT_STEP_CAP),
            angle_cap: a.angle_cap.or(g.angle_cap).unwrap_or(DEFAULT_ANGLE_CAP),
        },
        segment: a.segmenter.resolve(file)?,
        vao: if no_vao { None } else { Some(a.vao.resolve(file)?) },
        out: a.out.clone(),
    })
}

pub fn cmd_generate(a: &GenerateArgs, file: &FileConfig) -> CliResult<Summary> {
    let cfg = batch_config(a, file)?;
    let summary = batch::run_batch(&cfg)?;
    println!(
        "generated {} demonstrations ({} sources x {} evaluation points x {} perturbations) in {}",
        summary.count,
        summary.n_source,
        summary.n_eval,
        summary.n_perturb,
        a.out.display()
    );
    Ok(summary)
}

pub fn cmd_vao_filter(a: &VaoFilterArgs, file: &FileConfig) -> CliResult<()> {
    let settings = a.vao.resolve(file)?;
    let demos = find_demos(&a.input)?;
    if demos.is_empty() {
        return Err(CliError::validation(format!("no demonstrations under {}", a.input.display())));
    }
    let single = demos.len() == 1 && demos[0] == a.input;
    if !single {
        require_empty_output(&a.out)?;
    }
    for dir in &demos {
        let d = read_robot_demo(dir)?;
        let (filtered, record) = apply_vao(&settings.config(&d), &d)
            .map_err(|e| CliError::validation(format!("{}: {e}", dir.display())))?;
        let dest = if single { a.out.clone() } else { a.out.join(relative_name(&a.input, dir)) };
        write_demo(&filtered, &dest)?;
        let kept: usize = record.visible.iter().sum();
        let pre: usize = record.pre_filter.iter().sum();
        println!("{}: {kept}/{pre} points inside the frustum", dest.display());
    }
    Ok(())
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let i = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[i]
}

pub fn cmd_render_oracle(a: &RenderOracleArgs, file: &FileConfig) -> CliResult<()> {
    let settings = a.segmenter.resolve(file)?;
    let scene: PrimitiveScene = read_json(&a.scene)?;
    scene.validate()?;
    let d = read_robot_demo(&a.demo)?;
    let renders = oracle_renders(&scene, &d, &settings.params(), &RenderOptions::default())?;
    let observed: Vec<_> = d.frames.iter().map(|f| f.observation.clone()).collect();
    let dists = chamfer_per_frame(&observed, &renders)?;
    let mut csv = String::from("frame,chamfer\n");
    for (t, c) in dists.iter().enumerate() {
        csv.push_str(&format!("{t},{c}\n"));
    }
    if let Some(p) = &a.csv {
        fs::write(p, &csv).map_err(|e| CliError::io(p, e))?;
    }
    let mut sorted = dists.clone();
    sorted.sort_by(f64::total_cmp);
    println!(
        "chamfer over {} frames: median {:.6} m, p95 {:.6} m, max {:.6} m",
        sorted.len(),
        percentile(&sorted, 0.5),
        percentile(&sorted, 0.95),
        sorted.last().copied().unwrap_or(f64::NAN)
    );
    if let Some(out) = &a.out {
        let mut rendered = d.clone();
        for (f, r) in rendered.frames.iter_mut().zip(renders) {
            f.observation = r;
        }
        rendered.vao = None;
        write_demo(&rendered, out)?;
    }
    Ok(())
}

pub fn cmd_script_demo(a: &ScriptDemoArgs) -> CliResult<()> {
    let scene: PrimitiveScene = read_json(&a.scene)?;
    let script: Script = read_json(&a.script)?;
    let camera = scene
        .camera
        .ok_or_else(|| CliError::validation(format!("{}: scene has no camera", a.scene.display())))?;
    let opts = RenderOptions {
        noise_sigma: a.noise_sigma,
        seed: a.seed,
    };
    let mut s = script_demo(&scene, &script, &camera.intrinsics, &camera.hand_eye, &opts)?;
    if !a.no_annotate {
        s.demo.segments = Some(s.segmentation.segments.clone());
    }
    write_demo(&s.demo, &a.out)?;
    println!(
        "wrote {} frames, {} skill segment(s) to {}",
        s.demo.len(),
        s.segmentation.skills().count(),
        a.out.display()
    );
    Ok(())
}

pub fn cmd_validate(a: &ValidateArgs) -> CliResult<()> {
    let demos = find_demos(&a.path)?;
    let opts = ValidationOptions::default();
    let mut problems = 0usize;
    for dir in &demos {
        let name = relative_name(&a.path, dir);
        match read_demo(dir) {
            Ok(d) => {
                for v in validate_demo(&d, &opts) {
                    println!("{}: {v}", name.display());
                    problems += 1;
                }
            }
            Err(e) => {
                println!("{}: {e}", name.display());
                problems += 1;
            }
        }
    }
    let summary_path = a.path.join(SUMMARY);
    if summary_path.is_file() {
        let summary = Summary::read(&summary_path)?;
        if summary.count != summary.demos.len() {
            println!("{SUMMARY}: count {} but {} entries", summary.count, summary.demos.len());
            problems += 1;
        }
        for entry in &summary.demos {
            if !tree::is_demo_dir(&a.path.join(&entry.dir)) {
                println!("{SUMMARY}: listed demonstration {} is missing", entry.dir);
                problems += 1;
            }
        }
    }
    if demos.is_empty() {
        return Err(CliError::validation(format!("no demonstrations under {}", a.path.display())));
    }
    if problems > 0 {
        return Err(CliError::validation(format!("{problems} violation(s) in {} demonstration(s)", demos.len())));
    }
    println!("{} demonstration(s) valid", demos.len());
    Ok(())
}

pub fn cmd_stats(a: &StatsArgs) -> CliResult<()> {
    let report = stats::collect(&a.path)?;
    if a.csv {
        print!("{}", stats::render_csv(&report));
        for (dir, why) in &report.malformed {
            eprintln!("MALFORMED {}: {why}", dir.display());
        }
    } else {
        print!("{}", stats::render_text(&report));
    }
    if let Some(p) = &a.heatmap {
        fs::write(p, stats::render_heatmap(&report)).map_err(|e| CliError::io(p, e))?;
    }
    if !report.malformed.is_empty() {
        return Err(CliError::validation(format!("{} malformed demonstration(s)", report.malformed.len())));
    }
    Ok(())
}
