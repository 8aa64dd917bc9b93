use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use skelfilter::io::{read_stream, read_trajectory, write_stream, write_trajectory};
use skelfilter::metrics::{paired_distances, DEFAULT_MAX_GAP};
use skelfilter::pipeline::run_stream;
use skelfilter::sim::{generate, truth_trajectory};
use skelfilter::{Config, FilterKind, Joint, MetricReport, ScenarioSpec, Task, Trajectory};

#[derive(Debug, Parser)]
#[command(name = "skelfilter", version, about = "Multi-person 3D skeleton filtering harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scenario: truth.jsonl and measurements.jsonl.
    Sim(SimArgs),
    /// Filter a measurement stream: refined, target, ee and wrist outputs.
    Run(RunArgs),
    /// Compare predicted trajectories against ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, default_value = "t0")]
    task: Task,
    /// Seconds of motion.
    #[arg(long, default_value_t = 20.0)]
    duration: f64,
    /// Frame rate in Hz.
    #[arg(long, default_value_t = 30.0)]
    rate: f64,
    #[arg(long, default_value_t = 2)]
    persons: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    input: PathBuf,
    /// Overrides `pipeline.filter` from the config.
    #[arg(long)]
    filter: Option<FilterKind>,
    /// TOML config; defaults apply to missing keys. `SKELFILTER_*` variables
    /// override the file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `pipeline.seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Truth frame stream or trajectory file.
    #[arg(long)]
    truth: PathBuf,
    /// Predicted trajectories; labels default to the parent directory name.
    #[arg(long, num_args = 1.., required = true)]
    pred: Vec<PathBuf>,
    /// End-effector trajectories, one per `--pred` in the same order.
    #[arg(long, num_args = 1..)]
    ee: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    label: Vec<String>,
    /// Person index of the truth stream.
    #[arg(long, default_value_t = 0)]
    person: usize,
    #[arg(long, default_value = "left_wrist")]
    joint: Joint,
    /// Report JSON; a CSV of per-sample distances is written beside it.
    #[arg(long)]
    report: PathBuf,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sim(a) => cmd_sim(a),
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

fn cmd_sim(a: SimArgs) -> Result<()> {
    let mut spec = ScenarioSpec::new(a.task, a.duration, a.persons, a.seed);
    spec.rate = a.rate;
    let out = generate(&spec)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_stream(a.out.join("truth.jsonl"), &out.truth)?;
    write_stream(a.out.join("measurements.jsonl"), &out.measurements)?;
    eprintln!(
        "{} frames of {} written to {}",
        out.truth.len(),
        a.task.label(),
        a.out.display()
    );
    Ok(())
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let config = match &a.config {
        Some(path) => Config::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => Config::default(),
    };
    let mut cfg = config.with_env()?.pipeline_config();
    if let Some(filter) = a.filter {
        cfg.filter = filter;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let frames = read_stream(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let start = Instant::now();
    let result = run_stream(&frames, &cfg)?;
    let elapsed = start.elapsed().as_secs_f64();

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_stream(a.out.join("refined.jsonl"), &result.frames)?;
    write_trajectory(a.out.join("target.jsonl"), &result.target)?;
    write_trajectory(a.out.join("ee.jsonl"), &result.end_effector)?;
    write_trajectory(a.out.join("wrist.jsonl"), &result.operator_joint)?;
    eprintln!(
        "{}: {} frames in {:.3} s ({:.0} frames/s)",
        cfg.filter.label(),
        frames.len(),
        elapsed,
        frames.len() as f64 / elapsed.max(f64::EPSILON)
    );
    Ok(())
}

fn is_frame_stream(path: &Path) -> Result<bool> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.contains("\"skeletons\"")))
}

fn load_truth(a: &EvalArgs) -> Result<Trajectory> {
    if is_frame_stream(&a.truth)? {
        let frames = read_stream(&a.truth).with_context(|| format!("reading {}", a.truth.display()))?;
        Ok(truth_trajectory(&frames, a.person, a.joint))
    } else {
        Ok(read_trajectory(&a.truth, "truth").with_context(|| format!("reading {}", a.truth.display()))?)
    }
}

fn default_label(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .or_else(|| path.file_stem())
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    if !a.ee.is_empty() && a.ee.len() != a.pred.len() {
        bail!(
            "--ee needs one file per --pred ({} given, {} expected)",
            a.ee.len(),
            a.pred.len()
        );
    }
    if !a.label.is_empty() && a.label.len() != a.pred.len() {
        bail!(
            "--label needs one name per --pred ({} given, {} expected)",
            a.label.len(),
            a.pred.len()
        );
    }
    let truth = load_truth(&a)?;
    let mut reports = Vec::with_capacity(a.pred.len());
    let mut csv = String::from("label,t,distance_mm\n");
    for (i, path) in a.pred.iter().enumerate() {
        let label = a.label.get(i).cloned().unwrap_or_else(|| default_label(path));
        let pred = read_trajectory(path, &label).with_context(|| format!("reading {}", path.display()))?;
        let ee = match a.ee.get(i) {
            Some(p) => Some(read_trajectory(p, "ee").with_context(|| format!("reading {}", p.display()))?),
            None => None,
        };
        let report =
            MetricReport::compute(&truth, &pred, ee.as_ref()).with_context(|| format!("evaluating {label}"))?;
        for (t, d) in paired_distances(&pred, &truth, DEFAULT_MAX_GAP)? {
            csv.push_str(&format!("{label},{t},{}\n", d * 1e3));
        }
        reports.push(report);
    }

    if let Some(dir) = a.report.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut json = serde_json::to_string_pretty(&reports)?;
    json.push('\n');
    fs::write(&a.report, json).with_context(|| format!("writing {}", a.report.display()))?;
    fs::write(a.report.with_extension("csv"), csv)?;

    let stdout = std::io::stdout();
    let mut w = BufWriter::new(stdout.lock());
    writeln!(
        w,
        "{:<12} {:>9} {:>9} {:>10} {:>11} {:>7}",
        "method", "MAE mm", "STD mm", "ACC m/s2", "safety mm", "n"
    )?;
    for r in &reports {
        let safety = r.safety_std_mm.map_or_else(|| "-".to_owned(), |s| format!("{s:.2}"));
        writeln!(
            w,
            "{:<12} {:>9.2} {:>9.2} {:>10.3} {:>11} {:>7}",
            r.label, r.mae_mm, r.std_mm, r.acc_ms2, safety, r.sample_count
        )?;
    }
    w.flush()?;
    Ok(())
}
