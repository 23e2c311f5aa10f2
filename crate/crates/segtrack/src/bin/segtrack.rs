use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use segtrack::config::{config_error, load_toml, load_tracker_config};
use segtrack::pipeline::{self, FIXTURE_PROFILE};
use segtrack::CliError;
use segtrack_core::embedding::SamplingStrategy;
use segtrack_core::simulator::{FixtureConfig, ScenarioConfig};
use segtrack_core::tracker::{IouMode, OverflowPolicy, TrackerConfig};

#[derive(Parser)]
#[command(name = "segtrack", version, about = "Video instance segmentation tracking: simulate, track, evaluate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario: ground truth, detections and configs.
    Simulate(SimulateArgs),
    /// Associate detections into tracks.
    Track(TrackArgs),
    /// Score predicted tracks against ground truth.
    Eval(EvalArgs),
    /// Association losses of frame pairs against a ground-truth association.
    Losses(LossesArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Clean,
    Noisy,
    Deformation,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "clean", conflicts_with_all = ["config", "fixture"])]
    preset: Preset,
    /// Center-coincidence fixture with feature-map stacks instead of embeddings.
    #[arg(long)]
    fixture: bool,
    /// Scenario (or, with --fixture, fixture) config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Embedding noise of the noisy preset.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    /// Detection drop probability of the noisy preset.
    #[arg(long, default_value_t = 0.05)]
    drop: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sampling {
    #[value(name = "centroid_max_contour")]
    CentroidMaxContour,
    #[value(name = "bbox_center")]
    BboxCenter,
}

#[derive(Clone, Copy, ValueEnum)]
enum Iou {
    Mask,
    Bbox,
}

#[derive(Args)]
struct TrackArgs {
    /// Detection JSONL file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Tracker config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Track JSONL output.
    #[arg(long)]
    out: PathBuf,
    /// Fail on frames with more than `max_instances` detections.
    #[arg(long, conflicts_with = "lenient")]
    strict: bool,
    /// Keep the most confident `max_instances` detections instead.
    #[arg(long)]
    lenient: bool,
    #[arg(long, value_enum)]
    sampling: Option<Sampling>,
    #[arg(long, value_enum)]
    iou: Option<Iou>,
    /// Disable Kalman gating.
    #[arg(long)]
    no_kalman: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LossesArgs {
    /// Frame-pair JSONL file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Ground-truth association JSONL file, one line per frame pair.
    #[arg(long)]
    gt: PathBuf,
    /// Tracker config supplying capacity, scorer and entry/exit score.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    if args.fixture {
        let mut cfg = match &args.config {
            Some(p) => load_toml(p)?,
            None => FixtureConfig { profile: FIXTURE_PROFILE.to_vec(), ..FixtureConfig::default() },
        };
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
        return pipeline::simulate_fixture(&cfg, &args.out);
    }
    let seed = args.seed.unwrap_or(0);
    let mut cfg = match (&args.config, args.preset) {
        (Some(p), _) => load_toml(p)?,
        (None, Preset::Clean) => ScenarioConfig::clean(seed),
        (None, Preset::Noisy) => ScenarioConfig::noisy(seed, args.noise, args.drop),
        (None, Preset::Deformation) => ScenarioConfig::deformation(seed),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    pipeline::simulate(&cfg, &args.out)
}

fn track(args: TrackArgs) -> Result<(), CliError> {
    let mut cfg: TrackerConfig = load_tracker_config(args.config.as_deref())?;
    if args.strict {
        cfg.overflow = OverflowPolicy::Strict;
    }
    if args.lenient {
        cfg.overflow = OverflowPolicy::Lenient;
    }
    match args.sampling {
        Some(Sampling::CentroidMaxContour) => cfg.sampling_strategy = SamplingStrategy::CentroidMaxContour,
        Some(Sampling::BboxCenter) => cfg.sampling_strategy = SamplingStrategy::BboxCenter,
        None => {}
    }
    match args.iou {
        Some(Iou::Mask) => cfg.iou_mode = IouMode::Mask,
        Some(Iou::Bbox) => cfg.iou_mode = IouMode::Bbox,
        None => {}
    }
    if args.no_kalman {
        cfg.use_kalman = false;
    }
    cfg.validate().map_err(|e| config_error(e, args.config.as_deref()))?;
    pipeline::track(&args.input, &cfg, &args.out)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Track(a) => track(a),
        Command::Eval(a) => pipeline::emit_report(&pipeline::eval(&a.gt, &a.pred)?, a.out.as_ref()),
        Command::Losses(a) => {
            let cfg = load_tracker_config(a.config.as_deref())?;
            pipeline::emit_report(&pipeline::losses(&a.input, &a.gt, &cfg)?, a.out.as_ref())
        }
    }
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(CliError::Usage(e.render().to_string().trim_end().to_string())),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
