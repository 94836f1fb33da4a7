//! The `tcr` command-line tool. Lives in the library so tests can drive it
//! in-process.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0    | success |
//! | 1    | I/O error or malformed cloud/pose file |
//! | 2    | degenerate convex hull |
//! | 3    | sessions share no spatial domain |
//! | 4    | no query has a true match in the database |
//! | 5    | config or descriptor file error |
//! | 6    | invalid parameter or stage |
//! | 7    | a session is empty after cropping |
//! | 64   | command-line usage error |
//!
//! Failures print a JSON object `{"error", "exit_code", "message"}` on stderr.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bench::{
    auc_vs_tcr_csv, read_descriptor_csv, run_bench, BenchError, BenchParams, BenchReport, BevParams,
    DescriptorMethod, Similarity,
};
use crate::cloud::{save_cloud, CloudError, CloudFormat, PointCloud};
use crate::dataset::{load_session, write_sequence, DiskSequence};
use crate::synth::{gen_sequence, load_scene, load_trajectory, LidarSpec, SynthError, TrajectorySpec};
use crate::tcr::{
    change_sets, tcr_stage_matrix, CropShape, MatrixError, NumeratorMode, PreparedSession, TcrError, TcrParams,
    TcrReport, CSV_HEADER,
};

pub const EXIT_IO: i32 = 1;
pub const EXIT_DEGENERATE: i32 = 2;
pub const EXIT_EMPTY_DOMAIN: i32 = 3;
pub const EXIT_NO_TRUE_MATCH: i32 = 4;
pub const EXIT_CONFIG: i32 = 5;
pub const EXIT_INVALID: i32 = 6;
pub const EXIT_EMPTY_SESSION: i32 = 7;
pub const EXIT_USAGE: i32 = 64;

#[derive(Parser, Debug)]
#[command(name = "tcr", version, about = "Temporal change ratio between map sessions and place-recognition benchmarking")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, env = "CNS_THREADS", global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// TCR between two sessions (cloud files or sequence directories).
    Tcr(TcrArgs),
    /// Pairwise TCR over several sessions.
    TcrMatrix(MatrixArgs),
    /// Place-recognition benchmark of query sequences against a database sequence.
    Bench(BenchArgs),
    /// Generate a synthetic staged dataset.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone)]
struct TcrOpts {
    /// Distance threshold for unchanged points, meters.
    #[arg(long, default_value_t = 4.5)]
    tau: f64,
    /// Voxel edge length, meters.
    #[arg(long, default_value_t = 5.0)]
    voxel: f64,
    /// Keep only points within this range of the origin before voxelizing.
    #[arg(long)]
    crop: Option<f64>,
    /// Ball of radius --crop, or cube of half-width --crop.
    #[arg(long, value_enum, default_value_t = CropArg::Radial)]
    crop_shape: CropArg,
    /// Same as --crop-shape box.
    #[arg(long, conflicts_with = "crop_shape")]
    crop_box: bool,
    /// Count unchanged points over the hull-restricted set or the whole session.
    #[arg(long, value_enum, default_value_t = NumeratorArg::HullRestricted)]
    numerator: NumeratorArg,
}

impl TcrOpts {
    fn params(&self) -> TcrParams {
        TcrParams {
            tau: self.tau,
            voxel_resolution: self.voxel,
            crop_range: self.crop,
            crop_shape: crop_shape(self.crop_shape, self.crop_box),
            numerator_mode: match self.numerator {
                NumeratorArg::HullRestricted => NumeratorMode::HullRestricted,
                NumeratorArg::Literal => NumeratorMode::Literal,
            },
            ..TcrParams::default()
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum CropArg {
    Radial,
    Box,
}

fn crop_shape(shape: CropArg, crop_box: bool) -> CropShape {
    if crop_box {
        CropShape::Box
    } else {
        shape.into()
    }
}

impl From<CropArg> for CropShape {
    fn from(c: CropArg) -> CropShape {
        match c {
            CropArg::Radial => CropShape::Radial,
            CropArg::Box => CropShape::Box,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum NumeratorArg {
    HullRestricted,
    Literal,
}

#[derive(Args, Debug)]
struct TcrArgs {
    /// Source session: a cloud file (.bin or text) or a sequence directory.
    source: PathBuf,
    /// Target session, same forms as the source.
    target: PathBuf,
    #[command(flatten)]
    opts: TcrOpts,
    /// Output directory for tcr_report.json and tcr_report.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Also write source_labels.txt / target_labels.txt: "x y z label" with
    /// 0 = outside the other hull, 1 = unchanged, 2 = changed.
    #[arg(long)]
    labels: bool,
}

#[derive(Args, Debug)]
struct MatrixArgs {
    /// Sessions: cloud files or sequence directories.
    #[arg(required = true, num_args = 2..)]
    sessions: Vec<PathBuf>,
    #[command(flatten)]
    opts: TcrOpts,
    /// Output directory for tcr_matrix.csv and tcr_matrix.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum DescriptorArg {
    Bev,
    ExternalCsv,
    OraclePosition,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum SimilarityArg {
    Cosine,
    NegEuclidean,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Database sequence directory.
    #[arg(long)]
    db: PathBuf,
    /// Query sequence directory; repeat for several pairs.
    #[arg(long, required = true)]
    query: Vec<PathBuf>,
    /// Global descriptor used for retrieval.
    #[arg(long, value_enum, default_value_t = DescriptorArg::Bev)]
    descriptor: DescriptorArg,
    /// Database descriptors (external-csv), rows keyed by pose index.
    #[arg(long)]
    db_descriptors: Option<PathBuf>,
    /// Query descriptors (external-csv), one file per --query, same order.
    #[arg(long)]
    query_descriptors: Vec<PathBuf>,
    /// Similarity for external descriptors.
    #[arg(long, value_enum, default_value_t = SimilarityArg::Cosine)]
    similarity: SimilarityArg,
    /// Max distance between query and retrieved pose for a correct match, meters.
    #[arg(long, default_value_t = 7.5)]
    tp_radius: f64,
    /// Query sampling interval along the trajectory, meters.
    #[arg(long, default_value_t = 10.0)]
    query_interval: f64,
    /// Database sampling interval along the trajectory, meters.
    #[arg(long, default_value_t = 5.0)]
    db_interval: f64,
    /// Scan crop range before describing, meters.
    #[arg(long, default_value_t = 100.0)]
    crop: f64,
    /// Ball of radius --crop, or cube of half-width --crop.
    #[arg(long, value_enum, default_value_t = CropArg::Radial)]
    crop_shape: CropArg,
    /// Same as --crop-shape box.
    #[arg(long, conflicts_with = "crop_shape")]
    crop_box: bool,
    /// Candidates retrieved per query.
    #[arg(long, default_value_t = 25)]
    top_n: usize,
    /// Aggregate this many consecutive scans per descriptor.
    #[arg(long)]
    submap_window: Option<usize>,
    /// Radial bins of the bev descriptor.
    #[arg(long, default_value_t = 20)]
    rings: usize,
    /// Angular bins of the bev descriptor.
    #[arg(long, default_value_t = 60)]
    sectors: usize,
    /// TCR distance threshold for auc_vs_tcr.csv, meters.
    #[arg(long, default_value_t = 4.5)]
    tau: f64,
    /// TCR voxel size for auc_vs_tcr.csv, meters.
    #[arg(long, default_value_t = 5.0)]
    voxel: f64,
    /// Output directory; several queries get one subdirectory per pair.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Scene config (TOML).
    #[arg(long)]
    scene: PathBuf,
    /// Trajectory config (TOML).
    #[arg(long)]
    trajectory: PathBuf,
    /// Stages to generate, comma separated (default: every stage of the scene).
    #[arg(long, value_delimiter = ',')]
    stages: Vec<u32>,
    /// Overrides the scene seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; sequences go to <out>/<map>/<stage>/.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct CliError {
    pub error: &'static str,
    pub exit_code: i32,
    pub message: String,
}

impl CliError {
    fn new(error: &'static str, exit_code: i32, message: impl Into<String>) -> Self {
        CliError { error, exit_code, message: message.into() }
    }
}

impl From<CloudError> for CliError {
    fn from(e: CloudError) -> Self {
        match e {
            CloudError::Io { .. } => CliError::new("io", EXIT_IO, e.to_string()),
            _ => CliError::new("malformed_input", EXIT_IO, e.to_string()),
        }
    }
}

impl From<TcrError> for CliError {
    fn from(e: TcrError) -> Self {
        let (kind, code) = match e {
            TcrError::DegenerateHull { .. } => ("degenerate_hull", EXIT_DEGENERATE),
            TcrError::EmptyDomain => ("empty_domain", EXIT_EMPTY_DOMAIN),
            TcrError::EmptyTarget { .. } => ("empty_session", EXIT_EMPTY_SESSION),
            TcrError::InvalidParams(_) => ("invalid_params", EXIT_INVALID),
        };
        CliError::new(kind, code, e.to_string())
    }
}

impl From<MatrixError> for CliError {
    fn from(e: MatrixError) -> Self {
        match e {
            MatrixError::Tcr(t) => t.into(),
            MatrixError::TooFewSessions(_) => CliError::new("invalid_params", EXIT_INVALID, e.to_string()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Cloud(c) => c.into(),
            BenchError::NoTrueMatch => CliError::new("no_true_match", EXIT_NO_TRUE_MATCH, e.to_string()),
            BenchError::DescriptorFile { .. } | BenchError::MissingDescriptor { .. } | BenchError::LengthMismatch { .. } => {
                CliError::new("descriptor_file", EXIT_CONFIG, e.to_string())
            }
            _ => CliError::new("invalid_params", EXIT_INVALID, e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Cloud(c) => c.into(),
            SynthError::Config { .. } => CliError::new("config", EXIT_CONFIG, e.to_string()),
            SynthError::InvalidStage { .. } | SynthError::InvalidSpec(_) => {
                CliError::new("invalid_params", EXIT_INVALID, e.to_string())
            }
        }
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| CloudError::Io { path: parent.display().to_string(), source })?;
    }
    std::fs::write(path, contents).map_err(|source| CloudError::Io { path: path.display().to_string(), source })?;
    Ok(())
}

fn session_id(path: &Path) -> String {
    let name = if path.is_dir() { path.file_name() } else { path.file_stem() };
    name.map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    return 0;
                }
                _ => EXIT_USAGE,
            };
            let err = CliError::new("usage", code, e.render().to_string());
            let _ = writeln!(stderr, "{}", serde_json::to_string(&err).expect("serializes"));
            return code;
        }
    };
    let mut out = Vec::new();
    let result = match cli.threads {
        Some(0) => Err(CliError::new("invalid_params", EXIT_INVALID, "--threads must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command, &mut out)),
            Err(e) => Err(CliError::new("invalid_params", EXIT_INVALID, e.to_string())),
        },
        None => dispatch(cli.command, &mut out),
    };
    let _ = stdout.write_all(&out);
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "{}", serde_json::to_string(&e).expect("serializes"));
            e.exit_code
        }
    }
}

fn dispatch(cmd: Command, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Tcr(a) => cmd_tcr(a, stdout),
        Command::TcrMatrix(a) => cmd_matrix(a, stdout),
        Command::Bench(a) => cmd_bench(a, stdout),
        Command::Synth(a) => cmd_synth(a, stdout),
    }
}

fn cmd_tcr(a: TcrArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let params = a.opts.params();
    params.validate()?;
    let (sid, tid) = (session_id(&a.source), session_id(&a.target));
    let s = load_session(&a.source)?;
    let t = load_session(&a.target)?;
    let ps = PreparedSession::new(sid.clone(), &s, &params)?;
    let pt = PreparedSession::new(tid.clone(), &t, &params)?;
    let sets = change_sets(&ps, &pt, &params)?;
    let report = TcrReport::from_counts(&sid, &tid, ps.voxels.len(), pt.voxels.len(), sets.counts(), params)?;

    write_file(&a.out.join("tcr_report.json"), report.to_json().as_bytes())?;
    write_file(&a.out.join("tcr_report.csv"), format!("{CSV_HEADER}\n{}\n", report.csv_row()).as_bytes())?;
    if a.labels {
        for (name, cloud, source) in
            [("source_labels.txt", &sets.source_voxels, true), ("target_labels.txt", &sets.target_voxels, false)]
        {
            let labels: Vec<f32> = sets.labels(source).into_iter().map(f32::from).collect();
            let labeled = PointCloud::with_intensity(cloud.points().to_vec(), Some(labels))?;
            save_cloud(&labeled, &a.out.join(name), CloudFormat::XyzAscii)?;
        }
    }
    let _ = writeln!(stdout, "{}", report.to_json());
    Ok(())
}

fn cmd_matrix(a: MatrixArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let params = a.opts.params();
    params.validate()?;
    let sessions = a
        .sessions
        .iter()
        .map(|p| Ok((session_id(p), load_session(p)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let m = tcr_stage_matrix(&sessions, &params)?;
    let mut reports = Vec::new();
    let mut first_err = None;
    for i in 0..m.len() {
        for j in i + 1..m.len() {
            match m.get(i, j) {
                Ok(r) => reports.push(r.clone()),
                Err(e) => {
                    first_err.get_or_insert_with(|| e.clone());
                }
            }
        }
    }
    write_file(&a.out.join("tcr_matrix.csv"), m.to_csv().as_bytes())?;
    let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
    write_file(&a.out.join("tcr_matrix.json"), json.as_bytes())?;
    let _ = write!(stdout, "{}", m.to_csv());
    match first_err {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn cmd_bench(a: BenchArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let params = BenchParams {
        query_interval: a.query_interval,
        db_interval: a.db_interval,
        tp_radius: a.tp_radius,
        crop_range: a.crop,
        crop_shape: crop_shape(a.crop_shape, a.crop_box),
        top_n: a.top_n,
        submap_window: a.submap_window,
    };
    params.validate()?;
    let external = a.descriptor == DescriptorArg::ExternalCsv;
    if external && (a.db_descriptors.is_none() || a.query_descriptors.len() != a.query.len()) {
        return Err(CliError::new(
            "usage",
            EXIT_USAGE,
            "external-csv needs --db-descriptors and one --query-descriptors per --query",
        ));
    }
    let db = DiskSequence::open(&a.db)?;
    let db_desc = match &a.db_descriptors {
        Some(p) if external => read_descriptor_csv(p, "external")?,
        _ => HashMap::new(),
    };
    let db_name = session_id(&a.db);
    let multi = a.query.len() > 1;
    let mut rows = Vec::new();
    let mut used_ids: BTreeMap<String, usize> = BTreeMap::new();
    for (k, qdir) in a.query.iter().enumerate() {
        let query = DiskSequence::open(qdir)?;
        let method = match a.descriptor {
            DescriptorArg::Bev => DescriptorMethod::Bev(BevParams { rings: a.rings, sectors: a.sectors, max_range: a.crop }),
            DescriptorArg::OraclePosition => DescriptorMethod::OraclePosition,
            DescriptorArg::ExternalCsv => DescriptorMethod::External {
                query: read_descriptor_csv(&a.query_descriptors[k], "external")?,
                db: db_desc.clone(),
                similarity: match a.similarity {
                    SimilarityArg::Cosine => Similarity::Cosine,
                    SimilarityArg::NegEuclidean => Similarity::NegEuclidean,
                },
            },
        };
        let report = run_bench(&query, &db, &params, &method)?;
        let mut pair_id = format!("{db_name}-{}", session_id(qdir));
        let seen = used_ids.entry(pair_id.clone()).or_insert(0);
        *seen += 1;
        if *seen > 1 {
            pair_id = format!("{pair_id}_{}", *seen - 1);
        }
        let dir = if multi { a.out.join(&pair_id) } else { a.out.clone() };
        write_bench_report(&dir, &report)?;
        let _ = writeln!(
            stdout,
            "{pair_id}: auc={} recall@1={} max_f1={}",
            report.auc,
            report.recall_at_1(),
            report.max_f1
        );
        if multi {
            let tcr_params = TcrParams { tau: a.tau, voxel_resolution: a.voxel, ..TcrParams::default() };
            let (sm, qm) = (db.session_map()?, query.session_map()?);
            let tcr = crate::tcr::tcr_pair(&sm, &qm, &tcr_params)?;
            rows.push((pair_id, tcr.tcr_sym, report.auc));
        }
    }
    if multi {
        write_file(&a.out.join("auc_vs_tcr.csv"), auc_vs_tcr_csv(&rows).as_bytes())?;
    }
    Ok(())
}

fn write_bench_report(dir: &Path, report: &BenchReport) -> Result<(), CliError> {
    write_file(&dir.join("bench_report.json"), report.to_json().as_bytes())?;
    write_file(&dir.join("pr_curve.csv"), report.pr_curve_csv().as_bytes())
}

#[derive(Serialize)]
struct Manifest<'a> {
    map: &'a str,
    sequence: String,
    stage: u32,
    seed: u64,
    num_scans: usize,
    density: f64,
    lidar: &'a LidarSpec,
    trajectory: &'a TrajectorySpec,
}

fn cmd_synth(a: SynthArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut scene = load_scene(&a.scene)?;
    if let Some(seed) = a.seed {
        scene.seed = seed;
    }
    let (traj_spec, lidar) = load_trajectory(&a.trajectory)?;
    let traj = traj_spec.poses()?;
    let stages: Vec<u32> =
        if a.stages.is_empty() { (scene.stage_range[0]..=scene.stage_range[1]).collect() } else { a.stages.clone() };
    for &stage in &stages {
        scene.check_stage(stage)?;
    }
    for &stage in &stages {
        let (scans, poses) = gen_sequence(&scene, stage, &traj, &lidar)?;
        let sequence = format!("{stage:02}");
        let dir = a.out.join(&scene.name).join(&sequence);
        write_sequence(&dir, &scans, &poses)?;
        let manifest = Manifest {
            map: &scene.name,
            sequence: sequence.clone(),
            stage,
            seed: scene.seed,
            num_scans: scans.len(),
            density: scene.density,
            lidar: &lidar,
            trajectory: &traj_spec,
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_file(&dir.join("manifest.json"), json.as_bytes())?;
        let _ = writeln!(stdout, "{}", dir.display());
    }
    Ok(())
}
