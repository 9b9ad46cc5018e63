//! `gaitreid`: command-line front end for the gait re-identification toolkit.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gait_reid::calibration::estimate_correction_factors;
use gait_reid::evaluation::benchmark_training;
use gait_reid::features::{extract_all, fit_normalization, save_feature_csv};
use gait_reid::landmark::save_landmark_csv;
use gait_reid::pipeline::{
    load_features, load_landmarks, predict_rows, predictions_csv, prepare, reid_tracks, run_evaluate, run_train,
    split_dataset, tracks_csv, tune_hyperparameters, ModelBundle, Partition, PipelineConfig, PipelineError, SearchSpace,
    MODEL_FILE,
};
use gait_reid::synth::SynthConfig;

#[derive(Parser)]
#[command(name = "gaitreid", version, about = "Cross-camera person re-identification from gait landmarks")]
struct Cli {
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Fixed-order reductions so results do not depend on thread count.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    deterministic: Option<bool>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Inputs {
    /// Landmark CSV files; replaces the configured inputs.
    #[arg(long = "input", short = 'i')]
    input: Vec<PathBuf>,
}

#[derive(Args)]
struct ModelArg {
    /// Trained model file; defaults to model.json in the output directory.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartitionArg {
    Train,
    Validation,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and smooth landmark CSVs and write the clean frames.
    Ingest(Inputs),
    /// Extract gait features from landmark CSVs.
    Features(Inputs),
    /// Estimate per-camera correction factors on the training split.
    Calibrate(Inputs),
    /// Train a model and write it with its sidecar files.
    Train(Inputs),
    /// Random search over training hyperparameters.
    Tune {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// TOML file with inclusive `[lo, hi]` bounds per parameter.
        #[arg(long)]
        space: Option<PathBuf>,
    },
    /// Score frames with a trained model.
    Predict {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        model: ModelArg,
    },
    /// Evaluate a trained model on one split partition.
    Evaluate {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, value_enum, default_value_t = PartitionArg::Test)]
        partition: PartitionArg,
    },
    /// Assign one identity per track by majority vote.
    Reid {
        #[command(flatten)]
        inputs: Inputs,
        #[command(flatten)]
        model: ModelArg,
    },
    /// Time and measure training on the configured or a synthetic dataset.
    Bench {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
    },
    /// Generate a synthetic multi-camera landmark dataset.
    Synth(SynthArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    persons: usize,
    #[arg(long, default_value_t = 4)]
    cameras: usize,
    #[arg(long, default_value_t = 200)]
    frames: usize,
    /// Videos per (person, camera) pair.
    #[arg(long, default_value_t = 2)]
    videos: usize,
    /// Separation between persons.
    #[arg(long, default_value_t = 0.1)]
    spread: f64,
    /// Coordinate noise standard deviation.
    #[arg(long, default_value_t = 0.005)]
    sigma: f64,
    /// Per-frame drop probability.
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    /// Comma-separated camera scales; camera 1 first.
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<f64>>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(d) = cli.deterministic {
        config.deterministic = d;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    config.validate()?;

    match cli.command {
        Command::Ingest(inputs) => ingest(&with_inputs(config, inputs)),
        Command::Features(inputs) => features(&with_inputs(config, inputs)),
        Command::Calibrate(inputs) => calibrate(&with_inputs(config, inputs)),
        Command::Train(inputs) => {
            let outcome = run_train(&with_inputs(config, inputs))?;
            let [tr, va, te] = outcome.row_counts;
            println!("rows: train {tr}, validation {va}, test {te}");
            if let Some(loss) = outcome.log.valid_loss.last() {
                println!("final validation loss {loss:.6}");
            }
            println!("model: {}", outcome.paths.model.display());
            Ok(())
        }
        Command::Tune { inputs, trials, space } => tune(&with_inputs(config, inputs), trials, space.as_deref()),
        Command::Predict { inputs, model } => {
            let config = with_inputs(config, inputs);
            let (bundle, preds) = predict(&config, &model)?;
            let path = config.out.join("predictions.csv");
            write(&path, &predictions_csv(&bundle.model.class_labels, &preds))?;
            println!("{} frames scored: {}", preds.len(), path.display());
            Ok(())
        }
        Command::Evaluate { inputs, model, partition } => {
            let config = with_inputs(config, inputs);
            let partition = match partition {
                PartitionArg::Train => Partition::Train,
                PartitionArg::Validation => Partition::Validation,
                PartitionArg::Test => Partition::Test,
            };
            let outcome = run_evaluate(&config, &model_path(&config, &model), partition)?;
            print!("{}", outcome.report.render());
            Ok(())
        }
        Command::Reid { inputs, model } => {
            let config = with_inputs(config, inputs);
            let (bundle, preds) = predict(&config, &model)?;
            let tracks = reid_tracks(&bundle, &preds)?;
            let path = config.out.join("tracks.csv");
            write(&path, &tracks_csv(&tracks))?;
            for t in &tracks {
                println!("{} camera {}: person {} ({} frames)", t.video_id, t.camera_id, t.predicted_person, t.frames);
            }
            Ok(())
        }
        Command::Bench { inputs, repetitions } => bench(config, inputs, repetitions, cli.config.is_some()),
        Command::Synth(args) => synth(&config, args),
    }
}

fn with_inputs(mut config: PipelineConfig, inputs: Inputs) -> PipelineConfig {
    if !inputs.input.is_empty() {
        config.inputs = inputs.input;
    }
    config
}

fn model_path(config: &PipelineConfig, arg: &ModelArg) -> PathBuf {
    arg.model.clone().unwrap_or_else(|| config.out.join(MODEL_FILE))
}

fn create_out(config: &PipelineConfig) -> Result<(), PipelineError> {
    std::fs::create_dir_all(&config.out).map_err(|source| PipelineError::Io {
        path: config.out.display().to_string(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn report_ingest(report: &gait_reid::landmark::IngestReport) {
    println!("rows {}, kept {}, dropped {}", report.total, report.kept, report.dropped);
    for (reason, n) in &report.reasons {
        println!("  dropped {n}: {reason}");
    }
}

fn ingest(config: &PipelineConfig) -> Result<(), PipelineError> {
    let (data, report) = load_landmarks(config)?;
    create_out(config)?;
    let path = config.out.join("landmarks.csv");
    save_landmark_csv(&data, &path)?;
    report_ingest(&report);
    println!("clean frames: {}", path.display());
    Ok(())
}

fn features(config: &PipelineConfig) -> Result<(), PipelineError> {
    let (landmarks, report) = load_landmarks(config)?;
    let (features, dropped) = extract_all(&landmarks)?;
    create_out(config)?;
    let path = config.out.join("features.csv");
    save_feature_csv(&features.rows, &path)?;
    report_ingest(&report);
    for (reason, n) in &dropped.reasons {
        println!("  dropped {n}: {reason}");
    }
    println!("{} feature rows: {}", features.len(), path.display());
    Ok(())
}

fn calibrate(config: &PipelineConfig) -> Result<(), PipelineError> {
    let (features, _) = load_features(config)?;
    let parts = split_dataset(&features, &config.split, config.seed)?;
    let table = estimate_correction_factors(&parts.train.rows, config.reference_camera)?;
    create_out(config)?;
    let path = config.out.join("correction.txt");
    table.save(&path)?;
    print!("{}", table.to_text());
    if config.normalize {
        let corrected = gait_reid::calibration::apply_correction(&parts.train.rows, &table)?;
        let stats = fit_normalization(&corrected)?;
        stats.save(&config.out.join("normalization.txt"))?;
        for name in stats.degenerate_features() {
            println!("warning: {name} is constant on the training split");
        }
    }
    Ok(())
}

fn tune(config: &PipelineConfig, trials: usize, space: Option<&Path>) -> Result<(), PipelineError> {
    let space = match space {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
            toml::from_str::<SearchSpace>(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?
        }
        None => SearchSpace::default(),
    };
    let result = tune_hyperparameters(config, &space, trials)?;
    let mut table = toml::Table::new();
    let params = toml::Table::try_from(&result.best).map_err(|e| PipelineError::Config(e.to_string()))?;
    table.insert("params".into(), toml::Value::Table(params));
    let text = toml::to_string(&table).map_err(|e| PipelineError::Config(e.to_string()))?;
    write(&config.out.join("best_params.toml"), &text)?;
    println!("best validation loss {:.6} over {} trials", result.best_loss, result.trials.len());
    print!("{text}");
    Ok(())
}

fn predict(config: &PipelineConfig, model: &ModelArg) -> Result<(ModelBundle, Vec<gait_reid::pipeline::FramePrediction>), PipelineError> {
    let pool = config.thread_pool()?;
    pool.install(|| {
        let bundle = ModelBundle::load(&model_path(config, model))?;
        let (features, _) = load_features(config)?;
        let preds = predict_rows(&bundle, &features.rows)?;
        Ok((bundle, preds))
    })
}

fn bench(mut config: PipelineConfig, inputs: Inputs, repetitions: usize, configured: bool) -> Result<(), PipelineError> {
    config = with_inputs(config, inputs);
    if config.inputs.is_empty() && !configured {
        let path = config.out.join("bench_walks.csv");
        create_out(&config)?;
        let synth = SynthConfig {
            persons: 8,
            frames: 320,
            seed: config.seed,
            ..SynthConfig::default()
        };
        save_landmark_csv(&synth.generate().0, &path)?;
        config.inputs = vec![path];
    }
    let pool = config.thread_pool()?;
    let report = pool.install(|| {
        let prepared = prepare(&config)?;
        Ok::<_, PipelineError>(benchmark_training(&prepared.train, &config.effective_params(), repetitions)?)
    })?;
    write(&config.out.join("bench.csv"), &report.to_csv())?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| PipelineError::Config(e.to_string()))?;
    write(&config.out.join("bench.json"), &json)?;
    println!(
        "{} rows x {} features, {} iterations: median {:.3} s, median peak {:.1} MB",
        report.rows, report.features, report.iterations, report.median_seconds, report.median_peak_mb
    );
    Ok(())
}

fn synth(config: &PipelineConfig, args: SynthArgs) -> Result<(), PipelineError> {
    if args.persons == 0 || args.cameras == 0 || args.frames == 0 || args.videos == 0 {
        return Err(PipelineError::Config("persons, cameras, frames and videos must be at least 1".into()));
    }
    if args.spread <= 0.0 || args.sigma < 0.0 || !(0.0..1.0).contains(&args.dropout) {
        return Err(PipelineError::Config("need spread > 0, sigma >= 0 and dropout in [0, 1)".into()));
    }
    if let Some(s) = &args.scales {
        if s.len() != args.cameras || s.iter().any(|v| !(*v > 0.0)) {
            return Err(PipelineError::Config(format!("expected {} positive camera scales", args.cameras)));
        }
    }
    let synth = SynthConfig {
        persons: args.persons,
        cameras: args.cameras,
        frames: args.frames,
        videos_per_pair: args.videos,
        spread: args.spread,
        sigma: args.sigma,
        dropout: args.dropout,
        scales: args.scales,
        seed: config.seed,
    };
    let (data, truth) = synth.generate();
    create_out(config)?;
    let path = config.out.join("landmarks.csv");
    save_landmark_csv(&data, &path)?;
    write(&config.out.join("truth.csv"), &truth.to_csv())?;
    println!("{} frames: {}", data.len(), path.display());
    Ok(())
}
