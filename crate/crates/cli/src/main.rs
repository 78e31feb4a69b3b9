use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use mocap_core::sim::TrajectoryKind;
use mocap_core::trial::{
    read_matrix, run_matrix, write_table_csv, MatrixReport, RunConfig, RunOptions, TrialReport,
};

#[derive(Parser)]
#[command(
    name = "bench",
    version,
    about = "Simulated benchmark for the stereo retroreflector tracker"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a trial matrix and write `<name>.csv`, `<name>.json` and `<name>_timing.json`.
    Run {
        /// JSON run file. Optional when --matrix names a builtin matrix.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Builtin matrix, overriding the run file's.
        #[arg(long, value_parser = ["static", "angular", "linear"])]
        matrix: Option<String>,
        /// Base seed, overriding every trial's noise seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides every trial's repetition count.
        #[arg(long)]
        repetitions: Option<usize>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Also write each trial's first repetition as PGM frames under <out>/frames.
        #[arg(long)]
        dump_frames: bool,
    },
    /// Print the tables of every matrix found in a run directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Markdown,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            matrix,
            seed,
            repetitions,
            jobs,
            dump_frames,
        } => {
            let mut rc = match &config {
                Some(path) => RunConfig::from_path(path)?,
                None => RunConfig::default(),
            };
            if let Some(m) = matrix {
                rc.matrix = Some(m);
                rc.trials.clear();
            }
            rc.seed = seed.or(rc.seed);
            rc.repetitions = repetitions.or(rc.repetitions);
            if rc.matrix.is_none() && rc.trials.is_empty() {
                bail!("nothing to run: pass --matrix or a run file with `matrix` or `trials`");
            }
            let (name, configs) = rc.resolve()?;
            let opts = RunOptions {
                jobs,
                dump_frames: dump_frames.then(|| out.join("frames")),
            };
            let (report, outputs) = run_matrix(&name, &configs, &out, &opts)?;
            let tracked: usize = report.trials.iter().map(|t| t.successes).sum();
            let frames: usize = report.trials.iter().map(|t| t.frames_processed).sum();
            eprintln!(
                "{name}: {} trials, {tracked}/{frames} frame pairs tracked",
                report.trials.len()
            );
            for p in [&outputs.csv, &outputs.json, &outputs.timing] {
                eprintln!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Report { input, format } => {
            let reports = load_reports(&input)?;
            if reports.is_empty() {
                bail!("no matrix reports in {}", input.display());
            }
            let stdout = io::stdout();
            let mut out = stdout.lock();
            for (k, r) in reports.iter().enumerate() {
                match format {
                    Format::Csv => {
                        writeln!(out, "# {}", r.name)?;
                        write_table_csv(&mut out, &r.trials)?;
                    }
                    Format::Markdown => write_markdown(&mut out, r)?,
                }
                if k + 1 < reports.len() {
                    writeln!(out)?;
                }
            }
            Ok(())
        }
    }
}

fn load_reports(dir: &Path) -> Result<Vec<MatrixReport>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<io::Result<_>>()
        .with_context(|| format!("reading {}", dir.display()))?;
    paths.retain(|p| {
        p.extension().is_some_and(|e| e == "json")
            && !p
                .file_stem()
                .is_some_and(|s| s.to_string_lossy().ends_with("_timing"))
    });
    paths.sort();
    paths.iter().map(|p| Ok(read_matrix(p)?)).collect()
}

fn params(t: &TrialReport) -> (Vec<&'static str>, Vec<String>) {
    match t.config.trajectory.kind {
        TrajectoryKind::Static { distance, yaw, .. } => (
            vec!["d (m)", "a (rad)"],
            vec![format!("{distance}"), format!("{yaw}")],
        ),
        TrajectoryKind::Angular { angular_velocity, .. } => {
            (vec!["a_vel (rad/s)"], vec![format!("{angular_velocity}")])
        }
        TrajectoryKind::Linear { velocity, .. } => {
            (vec!["l_vel (cm/s)"], vec![format!("{}", velocity * 100.0)])
        }
    }
}

fn write_markdown<W: Write>(out: &mut W, r: &MatrixReport) -> io::Result<()> {
    writeln!(out, "## {}", r.name)?;
    writeln!(out)?;
    let (names, _) = params(&r.trials[0]);
    let mixed = r.trials.iter().any(|t| params(t).0 != names);
    let mut header: Vec<&str> = if mixed { vec!["trial"] } else { names };
    header.extend([
        "p_rmse (cm)",
        "x (cm)",
        "y (cm)",
        "z (cm)",
        "q_err (rad)",
        "tracked",
    ]);
    writeln!(out, "| {} |", header.join(" | "))?;
    writeln!(out, "|{}", "---|".repeat(header.len()))?;
    for t in &r.trials {
        let mut row = if mixed {
            vec![t.config.label.clone()]
        } else {
            params(t).1
        };
        match &t.metrics {
            Some(m) => {
                row.push(format!("{:.2}", m.p_rmse));
                for a in 0..3 {
                    row.push(format!(
                        "{:.2} ± {:.2}",
                        m.mean_axis_error[a], m.std_axis_error[a]
                    ));
                }
                row.push(format!("{:.3} ± {:.3}", m.q_err_mean, m.q_err_std));
            }
            None => row.extend(std::iter::repeat_n("n/a".to_string(), 5)),
        }
        row.push(format!("{}/{}", t.successes, t.frames_processed));
        writeln!(out, "| {} |", row.join(" | "))?;
    }
    Ok(())
}
