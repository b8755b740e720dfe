use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lce::correlation::CorrelationMethod;
use lce::fixture::{gen_fixture, FixtureSpec};
use lce::pipeline::{run, Outputs, PipelineConfig};
use lce::Error;

#[derive(Parser)]
#[command(name = "lce", version, about = "Learned-concept embeddings of vision models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Threshold profiles and write abstracted per-category counts
    Ingest(RunArgs),
    /// Write the normalized and raw model-by-concept matrices
    Matrix(RunArgs),
    /// Fit the embedding; write scores, loadings and explained variance
    Embed(RunArgs),
    /// Elbow-selected KMeans over the models, with region labels
    Cluster(RunArgs),
    /// Correlate axes with concept categories and performance; interpolate fields
    Link(RunArgs),
    /// Pairwise soft-voting gain matrices
    Ensemble(RunArgs),
    /// Scatter plot, heatmaps and text report
    Report(RunArgs),
    /// Every stage
    Pipeline(RunArgs),
    /// Write a synthetic input bundle with planted structure
    GenFixture(FixtureArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Profile JSON file or directory of them (repeatable)
    #[arg(long = "profile")]
    profiles: Vec<PathBuf>,
    #[arg(long)]
    performance: Option<PathBuf>,
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    iou_threshold: Option<f64>,
    #[arg(long)]
    components: Option<usize>,
    /// Inclusive range such as `1..8`
    #[arg(long, value_parser = parse_range)]
    k_range: Option<(usize, usize)>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    knn_k: Option<usize>,
    #[arg(long)]
    resolution: Option<usize>,
    /// Rank correlations instead of Pearson
    #[arg(long)]
    spearman: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    models: Option<usize>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once("..=")
        .or_else(|| s.split_once(".."))
        .or_else(|| s.split_once('-'))
        .ok_or_else(|| format!("`{s}` is not a range like 1..8"))?;
    let parse = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("`{x}`: {e}"));
    Ok((parse(a)?, parse(b)?))
}

impl RunArgs {
    fn config(&self) -> Result<PipelineConfig, Error> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if !self.profiles.is_empty() {
            config.profile_paths = self.profiles.clone();
        }
        if let Some(p) = &self.performance {
            config.performance_path = Some(p.clone());
        }
        if let Some(p) = &self.predictions {
            config.predictions_dir = Some(p.clone());
        }
        if let Some(v) = self.iou_threshold {
            config.iou_threshold = v;
        }
        if let Some(v) = self.components {
            config.pca_components = v;
        }
        if let Some(v) = self.k_range {
            config.k_range = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.knn_k {
            config.knn_k = v;
        }
        if let Some(v) = self.resolution {
            config.grid_resolution = v;
        }
        if self.spearman {
            config.correlation = CorrelationMethod::Spearman;
        }
        if let Some(o) = &self.out {
            config.output_dir = o.clone();
        }
        Ok(config)
    }
}

fn run_stage(args: &RunArgs, outputs: Outputs) -> Result<(), Error> {
    let config = args.config()?;
    let manifest = run(&config, &outputs)?;
    for a in &manifest.artifacts {
        println!("{}", config.output_dir.join(&a.path).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let only = |f: fn(&mut Outputs)| {
        let mut o = Outputs::NONE;
        f(&mut o);
        o
    };
    let result = match &cli.command {
        Command::Ingest(a) => run_stage(a, only(|o| o.ingest = true)),
        Command::Matrix(a) => run_stage(a, only(|o| o.matrix = true)),
        Command::Embed(a) => run_stage(a, only(|o| o.embedding = true)),
        Command::Cluster(a) => run_stage(a, only(|o| o.clusters = true)),
        Command::Link(a) => run_stage(a, only(|o| o.link = true)),
        Command::Ensemble(a) => run_stage(a, only(|o| o.ensemble = true)),
        Command::Report(a) => run_stage(a, only(|o| o.plots = true)),
        Command::Pipeline(a) => run_stage(a, Outputs::ALL),
        Command::GenFixture(a) => {
            let defaults = FixtureSpec::default();
            let spec = FixtureSpec {
                n_models: a.models.unwrap_or(defaults.n_models),
                n_clusters: a.clusters.unwrap_or(defaults.n_clusters),
                n_samples: a.samples.unwrap_or(defaults.n_samples),
                n_classes: a.classes.unwrap_or(defaults.n_classes),
                ..defaults
            };
            gen_fixture(&spec, a.seed)
                .and_then(|b| b.write(&a.out))
                .map(|files| files.iter().for_each(|f| println!("{}", f.display())))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
