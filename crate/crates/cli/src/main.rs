//! `engage`: command line front end for the annotation-to-engagement pipeline.
//!
//! Exit codes: 0 on success, 2 when the configuration or arguments are
//! invalid, 3 when a pipeline stage fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use engage_core::features::{FeatureParams, SampleEntropyParams};
use engage_core::fixture::{generate_fixture, FixtureSpec};
use engage_core::io;
use engage_core::pipeline::{
    self, write_artifacts, Artifact, AtStage, ExperimentConfig, ExperimentReport, Stage, StageError,
};
use engage_core::report::{format_mae, variant_from_relative};
use engage_core::selection::SelectionMethod;
use engage_core::signal::DEFAULT_SAMPLE_PERIOD;

#[derive(Parser)]
#[command(
    name = "engage",
    version,
    about = "Continuous annotation features to engagement prediction"
)]
struct Cli {
    /// Log filter, e.g. `info` or `engage_core=debug`.
    #[arg(long, global = true, default_value = "warn")]
    log: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus with a planted linear target.
    Fixture(FixtureArgs),
    /// Fuse annotator traces into gold-standard signals.
    Fuse(FuseArgs),
    /// Extract the 24 features from gold-standard signals.
    Extract(ExtractArgs),
    /// Correlate features with engagement indicators.
    Correlate(StageArgs),
    /// Run cross-task and automatic feature selection.
    Select(StageArgs),
    /// Train and evaluate every configured cell from a feature file.
    Train(StageArgs),
    /// Print a result table from report.json, or derive variant MAEs.
    Report(ReportArgs),
    /// Run the full pipeline.
    Run(RunArgs),
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    n_videos: usize,
    /// Replace the last annotator with an adversarial one.
    #[arg(long)]
    adversarial: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FuseArgs {
    #[arg(long)]
    traces: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_PERIOD)]
    sample_period: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    /// Gold-standard CSV written by `fuse`.
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_PERIOD)]
    sample_period: f64,
    #[arg(long, default_value_t = 10)]
    peak_support: usize,
    #[arg(long, default_value_t = 0.0)]
    crossing_level: f64,
    #[arg(long, default_value_t = 2)]
    saen_m: usize,
    #[arg(long, default_value_t = 0.2)]
    saen_r_factor: f64,
    #[arg(long)]
    out: PathBuf,
}

/// Overrides applied on top of the config file.
#[derive(Args, Clone, Default)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    c_grid: Option<Vec<f64>>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    targets: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    combinations: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    peak_support: Option<usize>,
    #[arg(long)]
    saen_m: Option<usize>,
    #[arg(long)]
    saen_r_factor: Option<f64>,
    #[arg(long)]
    sample_period: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct StageArgs {
    #[arg(long)]
    config: PathBuf,
    /// Feature CSV written by `extract` (or a previous run).
    #[arg(long)]
    features: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct ReportArgs {
    /// report.json of a previous run.
    #[arg(long, conflicts_with = "all_mae")]
    report: Option<PathBuf>,
    /// All-features MAE to derive variant MAEs from.
    #[arg(long, requires = "rel")]
    all_mae: Option<f64>,
    /// Relative changes in percent, '+' meaning lower MAE.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    rel: Vec<f64>,
}

enum Failure {
    Validation(anyhow::Error),
    Stage(anyhow::Error),
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.into())
        } else {
            Failure::Stage(e.into())
        }
    }
}

type CmdResult = Result<(), Failure>;

fn invalid(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Validation(e.into())
}

fn stage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Stage(e.into())
}

fn load_config(path: &Path, o: &Overrides) -> Result<ExperimentConfig, Failure> {
    let mut c = ExperimentConfig::from_file(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(invalid)?;
    if let Some(v) = o.seed {
        c.seed = v;
    }
    if let Some(v) = &o.out {
        c.output_dir = Some(v.clone());
    }
    if o.jobs.is_some() {
        c.jobs = o.jobs;
    }
    if let Some(v) = o.epsilon {
        c.svr.epsilon = v;
    }
    if let Some(v) = &o.c_grid {
        c.svr.c_grid = v.clone();
    }
    if let Some(v) = o.max_iter {
        c.svr.max_iter = v;
    }
    if let Some(v) = o.tol {
        c.svr.tol = v;
    }
    if let Some(v) = o.threshold {
        c.selection.threshold = v;
    }
    if let Some(v) = o.k_min {
        c.selection.k_min = v;
    }
    if o.k_max.is_some() {
        c.selection.k_max = o.k_max;
    }
    if let Some(v) = &o.targets {
        c.targets = v.clone();
    }
    if let Some(v) = &o.combinations {
        c.combinations = v.clone();
    }
    if let Some(v) = &o.methods {
        c.methods = v
            .iter()
            .map(|m| m.parse::<SelectionMethod>())
            .collect::<Result<_, _>>()
            .map_err(invalid)?;
    }
    if let Some(v) = o.peak_support {
        c.features.peak_support = v;
    }
    if let Some(v) = o.saen_m {
        c.features.saen_m = v;
    }
    if let Some(v) = o.saen_r_factor {
        c.features.saen_r_factor = v;
    }
    if let Some(v) = o.sample_period {
        c.sample_period = v;
    }
    c.validate().map_err(invalid)?;
    Ok(c)
}

fn output_dir(c: &ExperimentConfig) -> Result<PathBuf, Failure> {
    c.output_dir.clone().ok_or_else(|| {
        invalid(anyhow::anyhow!(
            "no output directory: set output_dir or pass --out"
        ))
    })
}

fn write(dir: &Path, artifacts: &[Artifact]) -> CmdResult {
    write_artifacts(dir, artifacts)
        .with_context(|| format!("writing to {}", dir.display()))
        .map_err(stage)?;
    log::info!("wrote {} files to {}", artifacts.len(), dir.display());
    Ok(())
}

fn read_features(path: &Path) -> Result<Vec<io::FeatureRow>, Failure> {
    io::open(path)
        .and_then(io::read_features)
        .at(Stage::Ingest)
        .with_context(|| format!("reading features {}", path.display()))
        .map_err(stage)
}

fn cmd_fixture(a: FixtureArgs) -> CmdResult {
    let spec = FixtureSpec {
        n_videos: a.n_videos,
        adversarial: a.adversarial,
        ..Default::default()
    };
    let fx = generate_fixture(a.seed, &spec).map_err(invalid)?;
    let files: Vec<Artifact> = fx
        .files()
        .map_err(stage)?
        .into_iter()
        .map(|(name, contents)| Artifact {
            path: name.into(),
            contents,
        })
        .collect();
    write(&a.out, &files)?;
    println!(
        "fixture with {} videos written to {}",
        a.n_videos,
        a.out.display()
    );
    Ok(())
}

fn cmd_fuse(a: FuseArgs) -> CmdResult {
    let traces = io::open(&a.traces)
        .and_then(|f| io::read_traces(f, a.sample_period))
        .at(Stage::Ingest)
        .map_err(stage)?;
    let golds = pipeline::fuse(traces).at(Stage::Fuse)?;
    write(
        &a.out,
        &[
            Artifact {
                path: "gold.csv".into(),
                contents: io::write_gold(&golds),
            },
            Artifact {
                path: "ewe_weights.csv".into(),
                contents: io::write_ewe_weights(&golds),
            },
        ],
    )
}

fn cmd_extract(a: ExtractArgs) -> CmdResult {
    let params = FeatureParams {
        peak_support: a.peak_support,
        crossing_level: a.crossing_level,
        sample_entropy: SampleEntropyParams {
            m: a.saen_m,
            r_factor: a.saen_r_factor,
        },
    };
    let golds = io::open(&a.gold)
        .and_then(|f| io::read_gold(f, a.sample_period))
        .at(Stage::Ingest)
        .map_err(stage)?;
    let rows = pipeline::extract(&golds, &params).at(Stage::Extract)?;
    write(
        &a.out,
        &[Artifact {
            path: "features.csv".into(),
            contents: io::write_features(&rows),
        }],
    )
}

fn cmd_stage(a: StageArgs, which: Stage) -> CmdResult {
    let c = load_config(&a.config, &a.overrides)?;
    let out = output_dir(&c)?;
    let rows = read_features(&a.features)?;
    let artifacts = pipeline::with_pool(c.jobs, || -> Result<Vec<Artifact>, StageError> {
        let ingested = pipeline::ingest_engagement(&c)?;
        match which {
            Stage::Correlate => pipeline::correlate_stage(&c, &rows, &ingested),
            Stage::Select => pipeline::select_stage(&c, &rows, &ingested),
            _ => pipeline::analyze(&c, None, &rows, &ingested).map(|r| r.artifacts),
        }
    })?;
    write(&out, &artifacts)
}

fn cmd_report(a: ReportArgs) -> CmdResult {
    if let Some(all) = a.all_mae {
        for rel in a.rel {
            let v = variant_from_relative(all, rel);
            println!("all {} {:+.1}% -> {}", format_mae(all), rel, format_mae(v));
        }
        return Ok(());
    }
    let path = a
        .report
        .ok_or_else(|| invalid(anyhow::anyhow!("pass --report or --all-mae")))?;
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(invalid)?;
    let report: ExperimentReport = ExperimentReport::from_json(&text).map_err(invalid)?;
    print!("{}", report.render_table());
    Ok(())
}

fn cmd_run(a: RunArgs) -> CmdResult {
    let c = load_config(&a.config, &a.overrides)?;
    let out = output_dir(&c)?;
    let result = pipeline::run(&c)?;
    write(&out, &result.artifacts)?;
    println!(
        "{} result rows written to {}",
        result.report.rows.len(),
        out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).init();
    let result = match cli.command {
        Command::Fixture(a) => cmd_fixture(a),
        Command::Fuse(a) => cmd_fuse(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Correlate(a) => cmd_stage(a, Stage::Correlate),
        Command::Select(a) => cmd_stage(a, Stage::Select),
        Command::Train(a) => cmd_stage(a, Stage::Train),
        Command::Report(a) => cmd_report(a),
        Command::Run(a) => cmd_run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
