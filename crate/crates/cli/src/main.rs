//! `gazestab` command-line tool: run stabilization experiments and compare logs.
//!
//! Exit codes: 0 success, 1 output could not be written, 2 invalid input or
//! usage, 3 the simulation failed (the partial log is still written).

use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use gazestab::config::load_run;
use gazestab::simulator::{run_experiment, summarize, Summary, TrajectoryLog};
use gazestab::stabilizer::{DofSet, Mode};

/// Environment variable naming a model file used when a run file has no `model` key.
const MODEL_PATH_ENV: &str = "GAZESTAB_MODEL_PATH";

const EXIT_OUTPUT: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_SIMULATION: u8 = 3;

#[derive(Parser)]
#[command(name = "gazestab", version, about = "Gaze stabilization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Kff,
    Ifb,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum DofArg {
    Eyes,
    NeckEyes,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its CSV log plus a JSON summary.
    Run {
        /// Run configuration file (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Override the seed of the run file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, value_enum)]
        dof: Option<DofArg>,
        /// Output CSV path (default: `output` from the run file, else `<config stem>.csv`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare logs against a baseline log of the same script.
    Compare {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(required = true)]
        logs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            mode,
            dof,
            out,
        } => run(&config, seed, mode, dof, out),
        Command::Compare { baseline, logs } => compare(&baseline, &logs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}

type CliResult = Result<(), (u8, String)>;

fn sidecar_path(csv: &Path) -> PathBuf {
    let stem = csv
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    csv.with_file_name(format!("{stem}.summary.json"))
}

fn write_log(log: &TrajectoryLog, path: &Path) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| (EXIT_OUTPUT, format!("{}: {e}", dir.display())))?;
    }
    log.write_csv(path)
        .map_err(|e| (EXIT_OUTPUT, format!("{}: {e}", path.display())))?;
    let json = serde_json::to_string_pretty(&log.stats()).expect("stats serialize");
    let side = sidecar_path(path);
    std::fs::write(&side, json + "\n")
        .map_err(|e| (EXIT_OUTPUT, format!("{}: {e}", side.display())))
}

fn run(
    config: &Path,
    seed: Option<u64>,
    mode: Option<ModeArg>,
    dof: Option<DofArg>,
    out: Option<PathBuf>,
) -> CliResult {
    let fallback = std::env::var_os(MODEL_PATH_ENV).map(PathBuf::from);
    let mut setup =
        load_run(config, fallback.as_deref()).map_err(|e| (EXIT_INPUT, e.to_string()))?;
    if let Some(s) = seed {
        setup.params.seed = s;
    }
    if let Some(m) = mode {
        setup.config.mode = match m {
            ModeArg::Kff => Mode::Kff,
            ModeArg::Ifb => Mode::Ifb,
            ModeArg::Off => Mode::Off,
        };
    }
    if let Some(d) = dof {
        setup.config.dof_set = match d {
            DofArg::Eyes => DofSet::EyesOnly,
            DofArg::NeckEyes => DofSet::NeckAndEyes,
        };
    }
    let output = out.or(setup.output.clone()).unwrap_or_else(|| {
        let stem = config
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or("run".into());
        PathBuf::from(format!("{stem}.csv"))
    });
    log::info!(
        "running {} ({} / {}) with seed {}",
        setup.script.name,
        setup.config.mode.as_str(),
        setup.config.dof_set.as_str(),
        setup.params.seed
    );
    match run_experiment(&setup.model, &setup.script, &setup.config, &setup.params) {
        Ok(log) => {
            write_log(&log, &output)?;
            println!(
                "{}: {} rows, mean optfl {:.6} px/frame",
                output.display(),
                log.rows.len(),
                log.mean_optfl()
            );
            Ok(())
        }
        Err(failure) => {
            if failure.partial.rows.is_empty() {
                return Err((EXIT_INPUT, failure.error.to_string()));
            }
            write_log(&failure.partial, &output)?;
            Err((
                EXIT_SIMULATION,
                format!("{failure}; partial log written to {}", output.display()),
            ))
        }
    }
}

fn fmt_reduction(r: Option<f64>) -> String {
    r.map_or("n/a".to_string(), |v| format!("{v:.1}%"))
}

fn compare(baseline: &Path, logs: &[PathBuf]) -> CliResult {
    let read = |p: &Path| TrajectoryLog::read_csv(p).map_err(|e| (EXIT_INPUT, e.to_string()));
    let base = read(baseline)?;
    let mut rows: Vec<(String, Summary)> = Vec::new();
    for path in logs {
        let log = read(path)?;
        let summary =
            summarize(&log, &base).map_err(|e| (EXIT_INPUT, format!("{}: {e}", path.display())))?;
        rows.push((path.display().to_string(), summary));
    }
    rows.sort_by(|a, b| a.1.mean_optfl.total_cmp(&b.1.mean_optfl));

    let labels: Vec<String> = rows[0].1.segments.iter().map(|s| s.label.clone()).collect();
    let name_width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(3);
    let mut header = format!(
        "{:<name_width$}  {:<4}  {:<9}  {:>11}  {:>9}",
        "log", "mode", "dof", "mean_optfl", "reduction"
    );
    for l in &labels {
        header.push_str(&format!("  {:>12}", l));
    }
    println!(
        "baseline: {} (mean optfl {:.6})",
        baseline.display(),
        base.mean_optfl()
    );
    println!("{header}");
    for (name, s) in &rows {
        let mut line = format!(
            "{:<name_width$}  {:<4}  {:<9}  {:>11.6}  {:>9}",
            name,
            s.mode.as_str(),
            s.dof_set.as_str(),
            s.mean_optfl,
            fmt_reduction(s.reduction_percent)
        );
        for seg in &s.segments {
            line.push_str(&format!("  {:>12}", fmt_reduction(seg.reduction_percent)));
        }
        println!("{line}");
    }
    Ok(())
}
