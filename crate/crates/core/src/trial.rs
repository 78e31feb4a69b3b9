//! Benchmark trials: simulate a trajectory, track every frame pair, score the
//! estimates against simulator ground truth, and tabulate whole matrices.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::DetectParams;
use crate::geometry::{CameraModel, Pose, StereoRig, Vector3};
use crate::metrics::{metric_report, position_rmse, synchronize, MetricReport, PoseSample, SyncedPair};
use crate::rigid::DEFAULT_AMBIGUITY_MARGIN;
use crate::sim::{
    render_frame, rig_frame_from_center, Frame, MarkerGeometry, NoiseSpec, RenderSettings, TrajectoryKind,
    TrialTrajectory, DEFAULT_EXPOSURE,
};
use crate::track::{track_frame_pair, Stage, TrackParams};
use crate::triangulate::TriangulationParams;

/// Pixel noise used by the builtin matrices.
pub const DEFAULT_BENCH_NOISE_SIGMA: f64 = 0.2;
pub const DEFAULT_BASELINE: f64 = 0.10;
pub const DEFAULT_HFOV_DEG: f64 = 100.0;
pub const DEFAULT_FRAME_RATE: f64 = 30.0;
pub const DEFAULT_GROUND_TRUTH_RATE: f64 = 120.0;
pub const STATIC_DURATION: f64 = 2.0;

pub const STATIC_DISTANCES: [f64; 4] = [0.9, 1.34, 1.78, 2.23];
/// Plate deflections of the static grid, rad (roughly 0, 10 and -20 degrees).
pub const STATIC_YAWS: [f64; 3] = [0.0, 0.17, -0.34];
pub const ANGULAR_VELOCITIES: [f64; 4] = [0.05, 0.1, 0.2, 0.4];
pub const ANGULAR_DISTANCE: f64 = 1.0;
pub const ANGULAR_RANGE_DEG: f64 = 40.0;
pub const LINEAR_VELOCITIES: [f64; 4] = [0.10, 0.20, 0.25, 0.30];
pub const LINEAR_START: f64 = 0.9;
pub const LINEAR_END: f64 = 2.2;

pub const BUILTIN_MATRICES: [&str; 3] = ["static", "angular", "linear"];

#[derive(Debug, Error)]
pub enum TrialError {
    #[error("invalid trial config `{label}`: {reason}")]
    InvalidConfig { label: String, reason: String },
    #[error("matrix has no trials")]
    EmptyMatrix,
    #[error("unknown matrix `{0}` (expected one of static, angular, linear)")]
    UnknownMatrix(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> TrialError + '_ {
    move |source| TrialError::Io {
        path: path.to_owned(),
        source,
    }
}

pub fn default_rig() -> StereoRig {
    let cam = CameraModel::from_horizontal_fov(640, 480, DEFAULT_HFOV_DEG.to_radians(), Pose::identity())
        .expect("default camera is valid");
    StereoRig::parallel(cam, DEFAULT_BASELINE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialConfig {
    pub label: String,
    pub trajectory: TrialTrajectory,
    pub noise: NoiseSpec,
    pub detect: DetectParams,
    pub triangulation: TriangulationParams,
    pub geometry: MarkerGeometry,
    /// Nominal calibration used by the tracker.
    pub rig: StereoRig,
    /// Error in the right camera's calibrated extrinsics: the simulated
    /// right camera sits at `rig.right.extrinsics ∘ right_extrinsic_error`.
    pub right_extrinsic_error: Pose,
    pub repetitions: usize,
    pub exposure: f64,
    pub render: RenderSettings,
    pub ground_truth_rate: f64,
    /// Standard deviation of Gaussian noise added to each ground-truth
    /// translation axis, m.
    pub ground_truth_jitter: f64,
    pub ambiguity_margin: f64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            label: String::new(),
            trajectory: TrialTrajectory {
                kind: TrajectoryKind::Static {
                    distance: STATIC_DISTANCES[0],
                    yaw: 0.0,
                    duration: STATIC_DURATION,
                },
                frame_rate: DEFAULT_FRAME_RATE,
            },
            noise: NoiseSpec {
                pixel_noise_sigma: DEFAULT_BENCH_NOISE_SIGMA,
                ..NoiseSpec::default()
            },
            detect: DetectParams::default(),
            triangulation: TriangulationParams::default(),
            geometry: MarkerGeometry::default_plate(),
            rig: default_rig(),
            right_extrinsic_error: Pose::identity(),
            repetitions: 1,
            exposure: DEFAULT_EXPOSURE,
            render: RenderSettings::default(),
            ground_truth_rate: DEFAULT_GROUND_TRUTH_RATE,
            ground_truth_jitter: 0.0,
            ambiguity_margin: DEFAULT_AMBIGUITY_MARGIN,
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<(), TrialError> {
        let fail = |reason: String| {
            Err(TrialError::InvalidConfig {
                label: self.label.clone(),
                reason,
            })
        };
        if self.repetitions == 0 {
            return fail("repetitions must be at least 1".into());
        }
        if let Err(e) = self.trajectory.validate() {
            return fail(e.to_string());
        }
        if let Err(e) = self.noise.validate() {
            return fail(e);
        }
        if let Err(e) = self.detect.validate() {
            return fail(e.to_string());
        }
        if let Err(e) = self.triangulation.validate() {
            return fail(e.to_string());
        }
        if !(self.exposure > 0.0 && self.exposure.is_finite()) {
            return fail(format!("exposure must be positive, got {}", self.exposure));
        }
        if self.render.sub_exposures == 0 {
            return fail("sub_exposures must be at least 1".into());
        }
        if !(self.ground_truth_rate > 0.0 && self.ground_truth_rate.is_finite()) {
            return fail(format!(
                "ground truth rate must be positive, got {}",
                self.ground_truth_rate
            ));
        }
        if !(self.ground_truth_jitter >= 0.0 && self.ground_truth_jitter.is_finite()) {
            return fail(format!(
                "ground truth jitter must be nonnegative, got {}",
                self.ground_truth_jitter
            ));
        }
        if !(self.ambiguity_margin >= 0.0) {
            return fail(format!(
                "ambiguity margin must be nonnegative, got {}",
                self.ambiguity_margin
            ));
        }
        if self.rig.baseline() == 0.0 {
            return fail("stereo cameras coincide".into());
        }
        Ok(())
    }

    fn track_params(&self) -> TrackParams {
        TrackParams {
            detect: self.detect,
            triangulation: self.triangulation,
            ambiguity_margin: self.ambiguity_margin,
        }
    }

    /// The rig the frames are rendered with, including calibration error.
    pub fn true_rig(&self) -> StereoRig {
        let right = self
            .rig
            .right
            .with_extrinsics(self.rig.right.extrinsics().compose(&self.right_extrinsic_error));
        StereoRig {
            left: self.rig.left,
            right,
        }
    }

    /// Target pose in the rig frame at time `t`.
    pub fn ground_truth_at(&self, t: f64) -> Pose {
        let rig_pose = rig_frame_from_center(&self.rig, &self.trajectory.rig_center_at(t));
        rig_pose.inverse().compose(&self.trajectory.plate_pose())
    }
}

/// Seed of repetition `r` derived from the trial's base seed.
pub fn repetition_seed(base: u64, r: usize) -> u64 {
    base.wrapping_add((r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureCounts {
    pub detection: usize,
    pub correspondence: usize,
    pub triangulation: usize,
    pub geometry: usize,
    pub registration: usize,
}

impl FailureCounts {
    pub fn record(&mut self, stage: Stage) {
        match stage {
            Stage::Detection => self.detection += 1,
            Stage::Correspondence => self.correspondence += 1,
            Stage::Triangulation => self.triangulation += 1,
            Stage::Geometry => self.geometry += 1,
            Stage::Registration => self.registration += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.detection + self.correspondence + self.triangulation + self.geometry + self.registration
    }

    fn add(&mut self, o: &FailureCounts) {
        self.detection += o.detection;
        self.correspondence += o.correspondence;
        self.triangulation += o.triangulation;
        self.geometry += o.geometry;
        self.registration += o.registration;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionReport {
    pub seed: u64,
    pub frames_processed: usize,
    pub successes: usize,
    pub failures: FailureCounts,
    /// None when no frame was tracked.
    pub p_rmse: Option<f64>,
    pub q_err_mean: Option<f64>,
}

/// Outcome of one trial. Wall-clock figures are kept out of the serialized
/// report so that reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub config: TrialConfig,
    /// p_rmse is the mean of the per-repetition values; per-axis and q_err
    /// statistics pool every synchronized sample.
    pub metrics: Option<MetricReport>,
    pub failures: FailureCounts,
    pub frames_processed: usize,
    pub successes: usize,
    pub repetitions: Vec<RepetitionReport>,
    #[serde(skip)]
    pub timing: TrialTiming,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialTiming {
    pub wall_clock_s: f64,
    pub mean_track_ms: f64,
    pub max_track_ms: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub jobs: usize,
    /// Write the first repetition's frames as PGM files here.
    pub dump_frames: Option<PathBuf>,
}

struct RepetitionOutcome {
    report: RepetitionReport,
    pairs: Vec<SyncedPair>,
    track_times: Vec<Duration>,
}

fn render_pair(cfg: &TrialConfig, rig: &StereoRig, noise: &NoiseSpec, k: usize) -> (Frame, Frame) {
    let t = cfg.trajectory.timestamp(k);
    let plate = cfg.trajectory.plate_pose();
    let rig_pose_at = |s: f64| rig_frame_from_center(&cfg.rig, &cfg.trajectory.rig_center_at(s));
    let render = |cam: &CameraModel, stream| {
        render_frame(
            &cfg.geometry,
            |_| plate,
            rig_pose_at,
            cam,
            t,
            cfg.exposure,
            noise,
            stream,
            &cfg.render,
        )
    };
    let k = k as u64;
    (render(&rig.left, 2 * k), render(&rig.right, 2 * k + 1))
}

fn ground_truth_sequence(cfg: &TrialConfig, seed: u64) -> Vec<PoseSample> {
    let n = (cfg.trajectory.duration() * cfg.ground_truth_rate).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let jitter = Normal::new(0.0, cfg.ground_truth_jitter).expect("validated jitter");
    (0..n.max(1))
        .map(|k| {
            let t = k as f64 / cfg.ground_truth_rate;
            let mut pose = cfg.ground_truth_at(t);
            if cfg.ground_truth_jitter > 0.0 {
                pose.translation += Vector3::from_fn(|_, _| jitter.sample(&mut rng));
            }
            PoseSample::new(t, pose)
        })
        .collect()
}

fn dump_pair(dir: &Path, cfg: &TrialConfig, k: usize, l: &Frame, r: &Frame) -> Result<(), TrialError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (side, f) in [("l", l), ("r", r)] {
        let path = dir.join(format!("{}_{k:05}_{side}.pgm", file_stem(&cfg.label)));
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(file);
        f.write_pgm(&mut w).map_err(io_err(&path))?;
        w.flush().map_err(io_err(&path))?;
    }
    Ok(())
}

fn file_stem(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() {
        "trial".into()
    } else {
        s
    }
}

fn run_repetition(cfg: &TrialConfig, r: usize, dump: Option<&Path>) -> Result<RepetitionOutcome, TrialError> {
    let seed = repetition_seed(cfg.noise.rng_seed, r);
    let noise = NoiseSpec {
        rng_seed: seed,
        ..cfg.noise
    };
    let true_rig = cfg.true_rig();
    let params = cfg.track_params();

    let mut failures = FailureCounts::default();
    let mut estimates = Vec::new();
    let mut track_times = Vec::new();
    let frames = cfg.trajectory.frame_count();
    for k in 0..frames {
        let (l, rf) = render_pair(cfg, &true_rig, &noise, k);
        if let (Some(dir), 0) = (dump, r) {
            dump_pair(dir, cfg, k, &l, &rf)?;
        }
        let start = Instant::now();
        let result = track_frame_pair(&l, &rf, &cfg.rig, &cfg.geometry, &params);
        track_times.push(start.elapsed());
        match result {
            Ok(est) => estimates.push(PoseSample::new(est.timestamp, est.pose)),
            Err(e) => failures.record(e.stage()),
        }
    }

    let pairs = if estimates.is_empty() {
        Vec::new()
    } else {
        let gt = ground_truth_sequence(cfg, seed);
        synchronize(&gt, &estimates, cfg.trajectory.frame_rate).unwrap_or_default()
    };
    let (p_rmse, q_err_mean) = if pairs.is_empty() {
        (None, None)
    } else {
        let m = metric_report(&pairs);
        (Some(m.p_rmse), Some(m.q_err_mean))
    };
    Ok(RepetitionOutcome {
        report: RepetitionReport {
            seed,
            frames_processed: frames,
            successes: estimates.len(),
            failures,
            p_rmse,
            q_err_mean,
        },
        pairs,
        track_times,
    })
}

fn assemble(config: &TrialConfig, outcomes: Vec<RepetitionOutcome>, wall: Duration) -> TrialReport {
    let mut failures = FailureCounts::default();
    let mut frames_processed = 0;
    let mut successes = 0;
    let mut pooled = Vec::new();
    let mut rep_rmse = Vec::new();
    let mut times = Vec::new();
    let mut repetitions = Vec::new();
    for o in outcomes {
        failures.add(&o.report.failures);
        frames_processed += o.report.frames_processed;
        successes += o.report.successes;
        if !o.pairs.is_empty() {
            rep_rmse.push(position_rmse(&o.pairs).p_rmse_cm);
        }
        pooled.extend(o.pairs);
        times.extend(o.track_times);
        repetitions.push(o.report);
    }
    let metrics = (!pooled.is_empty()).then(|| {
        let mut m = metric_report(&pooled);
        m.p_rmse = rep_rmse.iter().sum::<f64>() / rep_rmse.len() as f64;
        m
    });
    let ms = |d: &Duration| d.as_secs_f64() * 1e3;
    let timing = TrialTiming {
        wall_clock_s: wall.as_secs_f64(),
        mean_track_ms: if times.is_empty() {
            0.0
        } else {
            times.iter().map(ms).sum::<f64>() / times.len() as f64
        },
        max_track_ms: times.iter().map(ms).fold(0.0, f64::max),
    };
    TrialReport {
        config: config.clone(),
        metrics,
        failures,
        frames_processed,
        successes,
        repetitions,
        timing,
    }
}

/// Runs every repetition of one trial on the calling thread.
pub fn run_trial(config: &TrialConfig) -> Result<TrialReport, TrialError> {
    run_trial_with(config, &RunOptions::default())
}

pub fn run_trial_with(config: &TrialConfig, opts: &RunOptions) -> Result<TrialReport, TrialError> {
    let mut reports = run_trials(std::slice::from_ref(config), opts)?;
    Ok(reports.remove(0))
}

/// Runs all repetitions of all trials on up to `opts.jobs` threads. Reports
/// come back in input order regardless of scheduling.
pub fn run_trials(configs: &[TrialConfig], opts: &RunOptions) -> Result<Vec<TrialReport>, TrialError> {
    if configs.is_empty() {
        return Err(TrialError::EmptyMatrix);
    }
    for c in configs {
        c.validate()?;
    }
    let tasks: Vec<(usize, usize)> = configs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| (0..c.repetitions).map(move |r| (i, r)))
        .collect();
    let dump_dirs: Vec<Option<PathBuf>> = configs
        .iter()
        .map(|c| opts.dump_frames.as_ref().map(|d| d.join(file_stem(&c.label))))
        .collect();

    let slots: Vec<Mutex<Option<Result<RepetitionOutcome, TrialError>>>> =
        tasks.iter().map(|_| Mutex::new(None)).collect();
    // (first start, last finish) of each trial's repetitions
    let spans: Vec<Mutex<Option<(Instant, Instant)>>> = configs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let jobs = opts.jobs.max(1).min(tasks.len());

    let worker = || loop {
        let t = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(i, r)) = tasks.get(t) else { break };
        let start = Instant::now();
        let outcome = run_repetition(&configs[i], r, dump_dirs[i].as_deref());
        *slots[t].lock().expect("slot lock") = Some(outcome);
        let end = Instant::now();
        let mut span = spans[i].lock().expect("timing lock");
        *span = Some(span.map_or((start, end), |(a, b)| (a.min(start), b.max(end))));
    };
    if jobs == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(worker);
            }
        });
    }

    let mut outcomes = slots.into_iter().map(|m| m.into_inner().expect("slot lock"));
    let mut reports = Vec::with_capacity(configs.len());
    for (i, c) in configs.iter().enumerate() {
        let reps: Vec<RepetitionOutcome> = outcomes
            .by_ref()
            .take(c.repetitions)
            .map(|o| o.expect("every task ran"))
            .collect::<Result<_, _>>()?;
        let wall = spans[i]
            .lock()
            .expect("timing lock")
            .map_or(Duration::ZERO, |(a, b)| b.duration_since(a));
        reports.push(assemble(c, reps, wall));
    }
    Ok(reports)
}

/// Parameter columns of a matrix table, chosen from its trajectory kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Static,
    Angular,
    Linear,
    Mixed,
}

fn layout(reports: &[TrialReport]) -> Layout {
    let kind = |r: &TrialReport| match r.config.trajectory.kind {
        TrajectoryKind::Static { .. } => Layout::Static,
        TrajectoryKind::Angular { .. } => Layout::Angular,
        TrajectoryKind::Linear { .. } => Layout::Linear,
    };
    let first = kind(&reports[0]);
    if reports.iter().all(|r| kind(r) == first) {
        first
    } else {
        Layout::Mixed
    }
}

fn parameter_columns(layout: Layout) -> Vec<&'static str> {
    match layout {
        Layout::Static => vec!["d_m", "a_rad"],
        Layout::Angular => vec!["a_vel_rad_s"],
        Layout::Linear => vec!["l_vel_cm_s"],
        Layout::Mixed => vec!["label", "kind", "d_m", "a_rad", "a_vel_rad_s", "l_vel_cm_s"],
    }
}

fn parameter_values(layout: Layout, r: &TrialReport) -> Vec<String> {
    let (kind, d, a, avel, lvel) = match r.config.trajectory.kind {
        TrajectoryKind::Static { distance, yaw, .. } => ("static", Some(distance), Some(yaw), None, None),
        TrajectoryKind::Angular {
            distance,
            angular_velocity,
            ..
        } => ("angular", Some(distance), None, Some(angular_velocity), None),
        TrajectoryKind::Linear { velocity, .. } => ("linear", None, None, None, Some(velocity * 100.0)),
    };
    let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    match layout {
        Layout::Static => vec![f(d), f(a)],
        Layout::Angular => vec![f(avel)],
        Layout::Linear => vec![f(lvel)],
        Layout::Mixed => vec![r.config.label.clone(), kind.into(), f(d), f(a), f(avel), f(lvel)],
    }
}

pub const METRIC_COLUMNS: [&str; 11] = [
    "p_rmse_cm",
    "x_mean_cm",
    "x_std_cm",
    "y_mean_cm",
    "y_std_cm",
    "z_mean_cm",
    "z_std_cm",
    "q_err_rad",
    "q_err_std_rad",
    "n",
    "frames",
];

pub const FAILURE_COLUMNS: [&str; 6] = [
    "successes",
    "failed_detection",
    "failed_correspondence",
    "failed_triangulation",
    "failed_geometry",
    "failed_registration",
];

fn metric_values(r: &TrialReport) -> Vec<String> {
    let mut v = match &r.metrics {
        Some(m) => vec![
            m.p_rmse.to_string(),
            m.mean_axis_error[0].to_string(),
            m.std_axis_error[0].to_string(),
            m.mean_axis_error[1].to_string(),
            m.std_axis_error[1].to_string(),
            m.mean_axis_error[2].to_string(),
            m.std_axis_error[2].to_string(),
            m.q_err_mean.to_string(),
            m.q_err_std.to_string(),
            m.n.to_string(),
        ],
        None => {
            let mut e = vec![String::new(); 9];
            e.push("0".into());
            e
        }
    };
    v.push(r.frames_processed.to_string());
    let f = &r.failures;
    v.extend(
        [
            r.successes,
            f.detection,
            f.correspondence,
            f.triangulation,
            f.geometry,
            f.registration,
        ]
        .iter()
        .map(|x| x.to_string()),
    );
    v
}

/// Header and rows of a matrix table.
pub fn table_rows(reports: &[TrialReport]) -> (Vec<String>, Vec<Vec<String>>) {
    if reports.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let layout = layout(reports);
    let header = parameter_columns(layout)
        .into_iter()
        .chain(METRIC_COLUMNS)
        .chain(FAILURE_COLUMNS)
        .map(String::from)
        .collect();
    let rows = reports
        .iter()
        .map(|r| {
            let mut row = parameter_values(layout, r);
            row.extend(metric_values(r));
            row
        })
        .collect();
    (header, rows)
}

pub fn write_table_csv<W: io::Write>(w: W, reports: &[TrialReport]) -> Result<(), csv::Error> {
    let (header, rows) = table_rows(reports);
    let mut out = csv::Writer::from_writer(w);
    out.write_record(&header)?;
    for row in rows {
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Full per-trial detail of one matrix run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub name: String,
    pub trials: Vec<TrialReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingEntry {
    pub label: String,
    #[serde(flatten)]
    pub timing: TrialTiming,
}

/// Paths written by [`run_matrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixOutputs {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub timing: PathBuf,
}

/// Runs a matrix and writes `<name>.csv`, the `<name>.json` sidecar, and
/// `<name>_timing.json` with wall-clock figures.
pub fn run_matrix(
    name: &str,
    configs: &[TrialConfig],
    out_dir: &Path,
    opts: &RunOptions,
) -> Result<(MatrixReport, MatrixOutputs), TrialError> {
    let trials = run_trials(configs, opts)?;
    let report = MatrixReport {
        name: name.to_owned(),
        trials,
    };
    let outputs = write_matrix(&report, out_dir)?;
    Ok((report, outputs))
}

pub fn write_matrix(report: &MatrixReport, out_dir: &Path) -> Result<MatrixOutputs, TrialError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let stem = file_stem(&report.name);
    let outputs = MatrixOutputs {
        csv: out_dir.join(format!("{stem}.csv")),
        json: out_dir.join(format!("{stem}.json")),
        timing: out_dir.join(format!("{stem}_timing.json")),
    };

    let file = fs::File::create(&outputs.csv).map_err(io_err(&outputs.csv))?;
    write_table_csv(file, &report.trials).map_err(|source| TrialError::Csv {
        path: outputs.csv.clone(),
        source,
    })?;

    write_json(&outputs.json, report)?;
    let timing: Vec<TimingEntry> = report
        .trials
        .iter()
        .map(|t| TimingEntry {
            label: t.config.label.clone(),
            timing: t.timing,
        })
        .collect();
    write_json(&outputs.timing, &timing)?;
    Ok(outputs)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), TrialError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| TrialError::Json {
        path: path.to_owned(),
        source,
    })?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_matrix(path: &Path) -> Result<MatrixReport, TrialError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| TrialError::Json {
        path: path.to_owned(),
        source,
    })
}

/// Builds a builtin matrix. Everything except trajectory, label and
/// repetition count comes from `template`.
pub fn builtin_matrix(name: &str, template: &TrialConfig) -> Result<Vec<TrialConfig>, TrialError> {
    let fr = template.trajectory.frame_rate;
    let make = |label: String, kind: TrajectoryKind, repetitions: usize| TrialConfig {
        label,
        trajectory: TrialTrajectory { kind, frame_rate: fr },
        repetitions,
        ..template.clone()
    };
    let configs = match name {
        "static" => STATIC_DISTANCES
            .iter()
            .flat_map(|&d| STATIC_YAWS.iter().map(move |&a| (d, a)))
            .map(|(distance, yaw)| {
                make(
                    format!("static_d{distance}_a{yaw}"),
                    TrajectoryKind::Static {
                        distance,
                        yaw,
                        duration: STATIC_DURATION,
                    },
                    30,
                )
            })
            .collect(),
        "angular" => ANGULAR_VELOCITIES
            .iter()
            .map(|&w| {
                make(
                    format!("angular_w{w}"),
                    TrajectoryKind::Angular {
                        distance: ANGULAR_DISTANCE,
                        angular_velocity: w,
                        range: ANGULAR_RANGE_DEG.to_radians(),
                    },
                    30,
                )
            })
            .collect(),
        "linear" => LINEAR_VELOCITIES
            .iter()
            .map(|&v| {
                make(
                    format!("linear_v{}", v * 100.0),
                    TrajectoryKind::Linear {
                        start_distance: LINEAR_START,
                        end_distance: LINEAR_END,
                        velocity: v,
                    },
                    5,
                )
            })
            .collect(),
        other => return Err(TrialError::UnknownMatrix(other.to_owned())),
    };
    Ok(configs)
}

/// All builtin matrices built from the default template.
pub fn builtin_matrices() -> Vec<(&'static str, Vec<TrialConfig>)> {
    let template = TrialConfig::default();
    BUILTIN_MATRICES
        .iter()
        .map(|&n| (n, builtin_matrix(n, &template).expect("builtin name")))
        .collect()
}

/// A benchmark run file. A minimal file names only a builtin matrix and a
/// seed; explicit `trials` replace the builtin set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub name: Option<String>,
    pub matrix: Option<String>,
    pub seed: Option<u64>,
    /// Overrides the repetition count of every trial.
    pub repetitions: Option<usize>,
    pub template: TrialConfig,
    pub trials: Vec<TrialConfig>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, TrialError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|source| TrialError::Json {
            path: path.to_owned(),
            source,
        })
    }

    /// Matrix name and the fully resolved trial list.
    pub fn resolve(&self) -> Result<(String, Vec<TrialConfig>), TrialError> {
        let (name, mut configs) = match (&self.matrix, self.trials.is_empty()) {
            (Some(m), true) => (m.clone(), builtin_matrix(m, &self.template)?),
            (_, false) => (
                self.name
                    .clone()
                    .or_else(|| self.matrix.clone())
                    .unwrap_or_else(|| "custom".into()),
                self.trials.clone(),
            ),
            (None, true) => return Err(TrialError::EmptyMatrix),
        };
        let name = self.name.clone().unwrap_or(name);
        for (i, c) in configs.iter_mut().enumerate() {
            if c.label.is_empty() {
                c.label = format!("trial{i}");
            }
            if let Some(seed) = self.seed {
                c.noise.rng_seed = seed;
            }
            if let Some(r) = self.repetitions {
                c.repetitions = r;
            }
        }
        Ok((name, configs))
    }
}
