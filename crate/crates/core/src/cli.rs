//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::demos::{max_replay_cycles, synthesize_expert, OdometryRecord, ReplayBuffer};
use crate::envmodel::{generate_track_with, Environment, SegmentKind, Track};
use crate::error::{Error, Result};
use crate::irl::{train_with, TrainingReport};
use crate::pipeline::{build_and_train, evaluate_driving_style, expert_cycles_for};
use crate::reward::WeightsSource;
use crate::svg;

#[derive(Debug, Parser)]
#[command(name = "driveirl", version, about = "Sampling-based driving planner with maximum-entropy IRL")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Config file and the most common overrides; flags win over the file.
#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    #[arg(long, global = true)]
    pub prune_cap: Option<usize>,
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    #[arg(long, global = true)]
    pub alpha0: Option<f64>,
    #[arg(long, global = true)]
    pub demo_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub augment_k: Option<usize>,
    #[arg(long, global = true)]
    pub resolution: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic track.
    Track(TrackArgs),
    /// Drive a synthetic expert over a track and record its odometry.
    Demo(DemoArgs),
    /// Build a replay buffer from odometry and learn reward weights.
    Train(TrainArgs),
    /// Compare driving styles of weight vectors against odometry.
    Eval(EvalArgs),
    /// Render a training report or evaluation table as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[arg(long)]
    pub kind: SegmentKind,
    #[arg(long, allow_hyphen_values = true)]
    pub length: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long)]
    pub track: PathBuf,
    /// Hidden weights driving the expert: expert, zero, random:SEED or a file.
    #[arg(long, default_value = "expert")]
    pub weights: WeightsSource,
    /// Planning cycles; defaults to as many as the track allows.
    #[arg(long)]
    pub cycles: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub track: PathBuf,
    #[arg(long)]
    pub demo: PathBuf,
    /// Train on a saved replay buffer instead of building one.
    #[arg(long)]
    pub buffer: Option<PathBuf>,
    /// Initial weights, also used to build the buffer.
    #[arg(long, default_value = "random:1")]
    pub init: WeightsSource,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr0: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub refresh_rounds: Option<usize>,
    /// Replay cycles; defaults to all the odometry covers.
    #[arg(long)]
    pub cycles: Option<usize>,
    #[arg(long, default_value = "train_out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub track: PathBuf,
    #[arg(long)]
    pub demo: PathBuf,
    /// Weights to evaluate, as NAME=SOURCE or SOURCE; repeatable.
    #[arg(long = "weights", required = true)]
    pub weights: Vec<String>,
    #[arg(long)]
    pub cycles: Option<usize>,
    #[arg(long, default_value_t = 0.001)]
    pub bin_width: f64,
    #[arg(long, default_value_t = 200)]
    pub bins: usize,
    #[arg(long, default_value = "eval_out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Training report CSV (convergence chart) or evaluation CSV (histogram).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.001)]
    pub bin_width: f64,
    #[arg(long, default_value_t = 200)]
    pub bins: usize,
    #[arg(short, long)]
    pub output: PathBuf,
}

impl GlobalArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.horizon {
            cfg.planner.horizon = v;
        }
        if let Some(v) = self.prune_cap {
            cfg.planner.prune_cap = v;
        }
        if let Some(v) = self.gamma {
            cfg.planner.gamma = v;
        }
        if let Some(v) = self.alpha0 {
            cfg.demos.alpha0 = v;
        }
        if let Some(v) = self.demo_threshold {
            cfg.demos.demo_threshold = v;
        }
        if let Some(v) = self.augment_k {
            cfg.demos.augment_k = v;
        }
        if let Some(v) = self.resolution {
            cfg.track.resolution = v;
        }
        Ok(cfg)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn echo_config(cfg: &RunConfig, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    cfg.save(&dir.join("config.effective.json"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn partial_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".partial");
    PathBuf::from(s)
}

fn load_env(track: &Path, cfg: &RunConfig) -> Result<Environment> {
    let t = Track::load(track, &cfg.track)?;
    Environment::new(t, cfg.track.resolution)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = cli.global.resolve()?;
    match cli.command {
        Command::Track(a) => cmd_track(a, cfg),
        Command::Demo(a) => cmd_demo(a, cfg),
        Command::Train(a) => cmd_train(a, cfg),
        Command::Eval(a) => cmd_eval(a, cfg),
        Command::Plot(a) => cmd_plot(a),
    }
}

fn cmd_track(a: TrackArgs, cfg: RunConfig) -> Result<()> {
    cfg.validate()?;
    let track = generate_track_with(a.kind, a.length, a.seed, &cfg.track)?;
    track.validate()?;
    echo_config(&cfg, &parent_dir(&a.output))?;
    track.save(&a.output)?;
    println!("wrote {} ({:?}, {} m)", a.output.display(), track.kind, track.length);
    Ok(())
}

fn cmd_demo(a: DemoArgs, cfg: RunConfig) -> Result<()> {
    cfg.validate()?;
    let env = load_env(&a.track, &cfg)?;
    let hidden = a.weights.resolve()?;
    let cycles = a.cycles.unwrap_or_else(|| expert_cycles_for(&env, &cfg));
    echo_config(&cfg, &parent_dir(&a.output))?;
    match synthesize_expert(&env, &hidden, cycles, &cfg, a.seed) {
        Ok(zeta) => {
            zeta.write_csv(&a.output)?;
            println!("wrote {} ({cycles} cycles, {} s)", a.output.display(), zeta.duration());
            Ok(())
        }
        Err(Error::ExpertTruncated { reason, partial }) => {
            let p = partial_path(&a.output);
            if partial.samples().len() >= 2 {
                partial.write_csv(&p)?;
                eprintln!("partial record written to {}", p.display());
            }
            Err(Error::ExpertTruncated { reason, partial })
        }
        Err(e) => Err(e),
    }
}

fn write_report(report: &TrainingReport, dir: &Path) -> Result<()> {
    report.write_csv(&dir.join("report.csv"))?;
    let summary = serde_json::to_string_pretty(&report.summary_json())? + "\n";
    write_text(&dir.join("summary.json"), &summary)?;
    let series = |f: fn(&crate::irl::EpochMetrics) -> f64| -> Vec<(f64, f64)> {
        std::iter::once((0.0, f(&report.initial)))
            .chain(report.epochs.iter().map(|e| (e.epoch as f64, f(&e.metrics))))
            .collect()
    };
    let chart = svg::line_chart(
        "Training convergence",
        "epoch",
        "value",
        &[("EVD", series(|m| m.evd)), ("ED", series(|m| m.ed))],
    );
    write_text(&dir.join("convergence.svg"), &chart)
}

fn cmd_train(a: TrainArgs, mut cfg: RunConfig) -> Result<()> {
    if let Some(v) = a.epochs {
        cfg.irl.epochs = v;
    }
    if let Some(v) = a.lr0 {
        cfg.irl.lr0 = v;
    }
    if let Some(v) = a.batch_size {
        cfg.irl.batch_size = v;
    }
    if let Some(v) = a.seed {
        cfg.irl.seed = v;
    }
    if let Some(v) = a.refresh_rounds {
        cfg.irl.refresh_rounds = v;
    }
    cfg.validate()?;
    let env = load_env(&a.track, &cfg)?;
    let zeta = OdometryRecord::read_csv(&a.demo)?;
    let init = a.init.resolve()?;
    echo_config(&cfg, &a.out_dir)?;

    let result = match &a.buffer {
        Some(path) => {
            let buffer = ReplayBuffer::load(path)?;
            train_with(&buffer, &init, &cfg.irl, |_| {}).map(|r| (buffer, r))
        }
        None => build_and_train(&env, &zeta, &init, a.cycles.unwrap_or(usize::MAX), &cfg),
    };
    let (buffer, report) = match result {
        Ok(x) => x,
        Err(Error::Divergence { epoch, reason, last_theta }) => {
            if let Ok(w) = crate::reward::RewardWeights::from_slice(&last_theta) {
                let p = partial_path(&a.out_dir.join("weights.json"));
                w.save(&p)?;
                eprintln!("last finite weights written to {}", p.display());
            }
            return Err(Error::Divergence { epoch, reason, last_theta });
        }
        Err(e) => return Err(e),
    };
    if a.buffer.is_none() {
        buffer.save(&a.out_dir.join("buffer.jsonl"))?;
    }
    write_report(&report, &a.out_dir)?;
    report.final_theta.save(&a.out_dir.join("weights.json"))?;
    let (i, f) = (report.initial, report.final_metrics());
    println!(
        "buffer cycles {}; evd {} -> {}; ed {} -> {}",
        buffer.len(),
        i.evd,
        f.evd,
        i.ed,
        f.ed
    );
    Ok(())
}

fn weights_label(arg: &str) -> (String, &str) {
    match arg.split_once('=') {
        Some((name, src)) if !name.is_empty() && !name.contains(['/', '\\']) => (name.to_string(), src),
        _ => {
            let label = Path::new(arg)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| arg.to_string());
            (label.replace(|c: char| !c.is_ascii_alphanumeric() && c != '-' && c != '_', "_"), arg)
        }
    }
}

fn cmd_eval(a: EvalArgs, cfg: RunConfig) -> Result<()> {
    cfg.validate()?;
    if !(a.bin_width > 0.0) || a.bins == 0 {
        return Err(Error::InvalidArgument("bin_width and bins must be positive".into()));
    }
    let env = load_env(&a.track, &cfg)?;
    let zeta = OdometryRecord::read_csv(&a.demo)?;
    let cycles = a.cycles.unwrap_or_else(|| max_replay_cycles(&zeta, &cfg));
    echo_config(&cfg, &a.out_dir)?;
    let mut summary = serde_json::Map::new();
    for arg in &a.weights {
        let (name, src) = weights_label(arg);
        let weights = src.parse::<WeightsSource>()?.resolve()?;
        let report = evaluate_driving_style(&env, &zeta, &weights, cycles, &cfg)?;
        let csv_path = a.out_dir.join(format!("eval_{name}.csv"));
        let f = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        report
            .write_csv_to(&mut std::io::BufWriter::new(f))
            .map_err(|e| Error::io(&csv_path, e))?;
        let d: Vec<f64> = report.rows.iter().map(|r| r.optimal_distance).collect();
        let hist = svg::histogram(
            &format!("Optimal-policy distances: {name}"),
            "projection distance",
            &d,
            a.bin_width,
            a.bins,
        );
        write_text(&a.out_dir.join(format!("hist_{name}.svg")), &hist)?;
        println!(
            "{name}: cycles {} mean distance {} std {} mean expected distance {}",
            report.rows.len(),
            report.mean_distance,
            report.std_distance,
            report.mean_expected_distance
        );
        summary.insert(
            name,
            serde_json::json!({
                "source": src,
                "cycles": report.rows.len(),
                "mean_distance": report.mean_distance,
                "std_distance": report.std_distance,
                "mean_expected_distance": report.mean_expected_distance,
            }),
        );
    }
    let text = serde_json::to_string_pretty(&serde_json::Value::Object(summary))? + "\n";
    write_text(&a.out_dir.join("summary.json"), &text)
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Validation(format!("{}: {other:?}", path.display())),
        })?;
    let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| Error::Validation(format!("non-numeric cell '{s}'"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn cmd_plot(a: PlotArgs) -> Result<()> {
    let (header, rows) = read_table(&a.input)?;
    let col = |name: &str| header.iter().position(|h| h == name);
    let text = if let (Some(e), Some(evd), Some(ed)) = (col("epoch"), col("evd"), col("ed")) {
        let s = |c: usize| rows.iter().map(|r| (r[e], r[c])).collect::<Vec<_>>();
        svg::line_chart("Training convergence", "epoch", "value", &[("EVD", s(evd)), ("ED", s(ed))])
    } else if let Some(d) = col("optimal_distance") {
        let v: Vec<f64> = rows.iter().map(|r| r[d]).collect();
        svg::histogram("Optimal-policy distances", "projection distance", &v, a.bin_width, a.bins)
    } else {
        return Err(Error::Validation(format!(
            "{}: not a training report or evaluation table",
            a.input.display()
        )));
    };
    write_text(&a.output, &text)?;
    println!("wrote {}", a.output.display());
    Ok(())
}

/// Applies `DRIVEIRL_THREADS` (0 or unset = one worker per core).
pub fn init_threads() -> Result<()> {
    let n = match std::env::var("DRIVEIRL_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::InvalidArgument(format!("DRIVEIRL_THREADS must be an integer, got '{v}'")))?,
        Err(_) => 0,
    };
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    Ok(())
}
