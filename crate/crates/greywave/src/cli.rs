//! Command-line interface: ingest -> attack -> features -> detect -> eval
//! -> sweep.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors. Every run
//! writes a `manifest.json` next to its primary output with the fully
//! resolved configuration and seeds, sufficient to replay the run.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use greywave::attack::{AttackIntent, AttackModel, AttackSpec, DEFAULT_AOP_TOP_FRACTION};
use greywave::data::{load_ratings, sample_genuine, InputFormat};
use greywave::detect::{detect, EmConfig};
use greywave::error::{Error, Result};
use greywave::eval::{
    detection_experiment, prediction_shift_experiment, run_sweep, CellKey, DetectorTuning,
    IntentSpec, SweepConfig,
};
use greywave::features::{extract_all_features, write_features_csv};
use greywave::seeding::SeedMixer;
use greywave::series::{OrderingSet, SeriesKind};
use greywave::wavelet::{WaveletKind, WaveletSpec};
use greywave::{compute_item_stats, inject_attacks};

#[derive(Parser, Debug)]
#[command(
    name = "greywave",
    version,
    about = "Shilling-attack simulation and wavelet-based detection for rating data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load a rating file, optionally subsample users, and write generic CSV.
    Ingest(IngestArgs),
    /// Inject synthetic attack profiles and write the attacked matrix plus labels.
    Attack(AttackArgs),
    /// Export the per-user amplitude-domain feature table.
    Features(FeaturesArgs),
    /// Run unsupervised detection and write the report.
    Detect(DetectArgs),
    /// Evaluate one attack setting end to end against ground truth.
    Eval(EvalArgs),
    /// Run a full evaluation grid from a JSON config.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Serialize)]
struct IngestArgs {
    /// Input rating file.
    #[arg(long = "in", env = "GREYWAVE_IN")]
    input: PathBuf,
    /// Input format.
    #[arg(long, value_enum, env = "GREYWAVE_FORMAT")]
    format: InputFormat,
    /// Output ratings CSV.
    #[arg(long, env = "GREYWAVE_OUT")]
    out: PathBuf,
    /// Keep only a uniform sample of this many users.
    #[arg(long, env = "GREYWAVE_SAMPLE")]
    sample: Option<usize>,
    /// Seed for the user sample.
    #[arg(long, default_value_t = 0, env = "GREYWAVE_SEED")]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct AttackArgs {
    /// Genuine ratings CSV (generic format).
    #[arg(long = "in", env = "GREYWAVE_IN")]
    input: PathBuf,
    /// JSON attack spec; mutually exclusive with the individual flags.
    #[arg(
        long,
        env = "GREYWAVE_CONFIG",
        conflicts_with_all = ["model", "intent", "grey_rating", "attack_size", "filler_size", "aop_top_fraction", "seed"]
    )]
    config: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present = "config", env = "GREYWAVE_MODEL")]
    model: Option<AttackModel>,
    #[arg(long, value_enum, required_unless_present = "config", env = "GREYWAVE_INTENT")]
    intent: Option<AttackIntent>,
    /// Target rating for grey attacks.
    #[arg(long, required_if_eq("intent", "grey"), env = "GREYWAVE_GREY_RATING")]
    grey_rating: Option<i32>,
    /// Attackers as a fraction of genuine users.
    #[arg(long, required_unless_present = "config", env = "GREYWAVE_ATTACK_SIZE")]
    attack_size: Option<f64>,
    /// Filler items as a fraction of the item universe.
    #[arg(long, required_unless_present = "config", env = "GREYWAVE_FILLER_SIZE")]
    filler_size: Option<f64>,
    /// Popular-item fraction for the AOP model.
    #[arg(long, env = "GREYWAVE_AOP_TOP_FRACTION")]
    aop_top_fraction: Option<f64>,
    /// Rater count above which an item counts as popular.
    #[arg(long, default_value_t = 200, env = "GREYWAVE_POPULARITY_THRESHOLD")]
    popularity_threshold: u32,
    #[arg(long, default_value_t = 0, env = "GREYWAVE_SEED")]
    seed: u64,
    /// Attacked ratings CSV.
    #[arg(long, env = "GREYWAVE_OUT_RATINGS")]
    out_ratings: PathBuf,
    /// Ground-truth label CSV.
    #[arg(long, env = "GREYWAVE_OUT_LABELS")]
    out_labels: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct FeaturesArgs {
    /// Ratings CSV (generic format).
    #[arg(long = "in", env = "GREYWAVE_IN")]
    input: PathBuf,
    /// Output feature CSV.
    #[arg(long, env = "GREYWAVE_OUT")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = WaveletKind::Haar, env = "GREYWAVE_WAVELET")]
    wavelet: WaveletKind,
    /// Wavelet decomposition depth.
    #[arg(long, default_value_t = 1, env = "GREYWAVE_LEVELS")]
    levels: usize,
    /// Also dump the three item orderings as CSV into this directory.
    #[arg(long, env = "GREYWAVE_DUMP_ORDERINGS")]
    dump_orderings: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct DetectArgs {
    /// Ratings CSV to scan (generic format).
    #[arg(long = "in", env = "GREYWAVE_IN")]
    input: PathBuf,
    /// Detection report JSON.
    #[arg(long, env = "GREYWAVE_OUT")]
    out: PathBuf,
    /// Also write the flagged user ids as a flat CSV.
    #[arg(long, env = "GREYWAVE_FLAGGED_CSV")]
    flagged_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 0, env = "GREYWAVE_SEED")]
    seed: u64,
    #[arg(long, value_enum, default_value_t = WaveletKind::Haar, env = "GREYWAVE_WAVELET")]
    wavelet: WaveletKind,
    #[arg(long, default_value_t = 1, env = "GREYWAVE_LEVELS")]
    levels: usize,
    #[arg(long, default_value_t = 200, env = "GREYWAVE_MAX_ITERATIONS")]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-6, env = "GREYWAVE_TOLERANCE")]
    tolerance: f64,
    #[arg(long, default_value_t = 1e-6, env = "GREYWAVE_VARIANCE_FLOOR")]
    variance_floor: f64,
    #[arg(long, default_value_t = 5, env = "GREYWAVE_RESTARTS")]
    restarts: usize,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    /// Genuine ratings CSV (generic format).
    #[arg(long = "in", env = "GREYWAVE_IN")]
    input: PathBuf,
    #[arg(long, value_enum, env = "GREYWAVE_MODEL")]
    model: AttackModel,
    #[arg(long, value_enum, env = "GREYWAVE_INTENT")]
    intent: AttackIntent,
    #[arg(long, required_if_eq("intent", "grey"), env = "GREYWAVE_GREY_RATING")]
    grey_rating: Option<i32>,
    #[arg(long, env = "GREYWAVE_ATTACK_SIZE")]
    attack_size: f64,
    #[arg(long, env = "GREYWAVE_FILLER_SIZE")]
    filler_size: f64,
    #[arg(long, env = "GREYWAVE_AOP_TOP_FRACTION")]
    aop_top_fraction: Option<f64>,
    #[arg(long, default_value_t = 200, env = "GREYWAVE_POPULARITY_THRESHOLD")]
    popularity_threshold: u32,
    #[arg(long, default_value_t = 1, env = "GREYWAVE_REPETITIONS")]
    repetitions: usize,
    #[arg(long, default_value_t = 0, env = "GREYWAVE_SEED")]
    seed: u64,
    #[arg(long, value_enum, default_value_t = WaveletKind::Haar, env = "GREYWAVE_WAVELET")]
    wavelet: WaveletKind,
    #[arg(long, default_value_t = 1, env = "GREYWAVE_LEVELS")]
    levels: usize,
    #[arg(long, default_value_t = 200, env = "GREYWAVE_MAX_ITERATIONS")]
    max_iterations: usize,
    #[arg(long, default_value_t = 1e-6, env = "GREYWAVE_TOLERANCE")]
    tolerance: f64,
    #[arg(long, default_value_t = 1e-6, env = "GREYWAVE_VARIANCE_FLOOR")]
    variance_floor: f64,
    #[arg(long, default_value_t = 5, env = "GREYWAVE_RESTARTS")]
    restarts: usize,
    /// Fraction of genuine ratings held out for the prediction-shift score.
    #[arg(long, default_value_t = 0.1, env = "GREYWAVE_HOLDOUT")]
    holdout_fraction: f64,
    /// Neighborhood size of the kNN predictor.
    #[arg(long, default_value_t = 20, env = "GREYWAVE_KNN_K")]
    knn_k: usize,
    /// Metrics JSON.
    #[arg(long, env = "GREYWAVE_OUT")]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    /// Sweep configuration JSON.
    #[arg(long, env = "GREYWAVE_CONFIG")]
    config: PathBuf,
    /// Worker threads for cell evaluation.
    #[arg(long, env = "GREYWAVE_PARALLELISM")]
    parallelism: Option<usize>,
}

/// Replay record written next to every primary output.
#[derive(Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    created_unix_seconds: u64,
    duration_seconds: f64,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    config: serde_json::Value,
}

fn write_manifest(
    subcommand: &'static str,
    started: Instant,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    config: serde_json::Value,
) -> Result<()> {
    let primary = outputs
        .first()
        .cloned()
        .unwrap_or_else(|| PathBuf::from("."));
    let dir = primary.parent().map(Path::to_path_buf).unwrap_or_default();
    let path = if dir.as_os_str().is_empty() {
        PathBuf::from("manifest.json")
    } else {
        dir.join("manifest.json")
    };
    let manifest = RunManifest {
        tool: "greywave",
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        created_unix_seconds: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        duration_seconds: started.elapsed().as_secs_f64(),
        seeds,
        inputs,
        outputs,
        config,
    };
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::to_writer_pretty(file, &manifest).map_err(|e| Error::Json {
        path,
        source: e,
    })?;
    Ok(())
}

fn to_config_value<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).unwrap_or(serde_json::Value::Null)
}

fn run_ingest(args: IngestArgs) -> Result<()> {
    let started = Instant::now();
    let mut matrix = load_ratings(&args.input, args.format)?;
    if let Some(n) = args.sample {
        matrix = sample_genuine(&matrix, n, args.seed)?;
    }
    matrix.write_csv(&args.out)?;
    eprintln!(
        "ingested {} users, {} items, {} ratings -> {}",
        matrix.n_users(),
        matrix.n_items(),
        matrix.n_ratings(),
        args.out.display()
    );
    write_manifest(
        "ingest",
        started,
        BTreeMap::from([("seed".to_string(), args.seed)]),
        vec![args.input.clone()],
        vec![args.out.clone()],
        to_config_value(&args),
    )
}

fn load_attack_spec(args: &AttackArgs) -> Result<AttackSpec> {
    if let Some(path) = &args.config {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        return serde_json::from_reader(file).map_err(|e| Error::Json {
            path: path.clone(),
            source: e,
        });
    }
    let model = args.model.expect("clap enforces presence");
    Ok(AttackSpec {
        model,
        intent: args.intent.expect("clap enforces presence"),
        grey_rating: args.grey_rating,
        attack_size: args.attack_size.expect("clap enforces presence"),
        filler_size: args.filler_size.expect("clap enforces presence"),
        aop_top_fraction: match (model, args.aop_top_fraction) {
            (AttackModel::Aop, None) => Some(DEFAULT_AOP_TOP_FRACTION),
            (_, value) => value,
        },
        popularity_threshold: args.popularity_threshold,
        seed: args.seed,
    })
}

fn run_attack(args: AttackArgs) -> Result<()> {
    let started = Instant::now();
    let spec = load_attack_spec(&args)?;
    let genuine = load_ratings(&args.input, InputFormat::GenericCsv)?;
    let (attacked, labels) = inject_attacks(&genuine, &spec)?;
    attacked.write_csv(&args.out_ratings)?;
    labels.write_csv(&args.out_labels)?;
    eprintln!(
        "injected {} attackers into {} genuine users -> {}",
        labels.attackers().len(),
        labels.genuine().len(),
        args.out_ratings.display()
    );
    let mut config = to_config_value(&args);
    if let serde_json::Value::Object(map) = &mut config {
        map.insert("resolved_spec".into(), to_config_value(&spec));
    }
    write_manifest(
        "attack",
        started,
        BTreeMap::from([("seed".to_string(), spec.seed)]),
        vec![args.input.clone()],
        vec![args.out_ratings.clone(), args.out_labels.clone()],
        config,
    )
}

fn run_features(args: FeaturesArgs) -> Result<()> {
    let started = Instant::now();
    let matrix = load_ratings(&args.input, InputFormat::GenericCsv)?;
    let stats = compute_item_stats(&matrix)?;
    let orderings = OrderingSet::compute(&matrix, &stats);
    let wavelet = WaveletSpec::new(args.wavelet);
    let sets = extract_all_features(&matrix, &orderings, &wavelet, args.levels)?;
    write_features_csv(&sets, &args.out)?;
    let mut outputs = vec![args.out.clone()];
    if let Some(dir) = &args.dump_orderings {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for kind in SeriesKind::ALL {
            let path = dir.join(format!("ordering_{}.csv", kind.code()));
            orderings.get(kind).write_csv(&matrix, &path)?;
            outputs.push(path);
        }
    }
    eprintln!(
        "extracted features for {} users -> {}",
        sets.len(),
        args.out.display()
    );
    write_manifest(
        "features",
        started,
        BTreeMap::new(),
        vec![args.input.clone()],
        outputs,
        to_config_value(&args),
    )
}

fn run_detect(args: DetectArgs) -> Result<()> {
    let started = Instant::now();
    let matrix = load_ratings(&args.input, InputFormat::GenericCsv)?;
    let stats = compute_item_stats(&matrix)?;
    let orderings = OrderingSet::compute(&matrix, &stats);
    let wavelet = WaveletSpec::new(args.wavelet);
    let sets = extract_all_features(&matrix, &orderings, &wavelet, args.levels)?;
    let em = EmConfig {
        max_iterations: args.max_iterations,
        tolerance: args.tolerance,
        variance_floor: args.variance_floor,
        restarts: args.restarts,
        ..EmConfig::with_seed(args.seed)
    };
    let report = detect(&sets, &em)?;
    let file = File::create(&args.out).map_err(|e| Error::io(&args.out, e))?;
    serde_json::to_writer_pretty(file, &report).map_err(|e| Error::Json {
        path: args.out.clone(),
        source: e,
    })?;
    let mut outputs = vec![args.out.clone()];
    if let Some(path) = &args.flagged_csv {
        let mut body = String::from("user_id\n");
        for user in &report.flagged {
            body.push_str(user);
            body.push('\n');
        }
        fs::write(path, body).map_err(|e| Error::io(path, e))?;
        outputs.push(path.clone());
    }
    eprintln!(
        "flagged {} of {} users -> {}",
        report.flagged.len(),
        matrix.n_users(),
        args.out.display()
    );
    write_manifest(
        "detect",
        started,
        BTreeMap::from([("seed".to_string(), args.seed)]),
        vec![args.input.clone()],
        outputs,
        to_config_value(&args),
    )
}

#[derive(Serialize)]
struct RepetitionMetrics {
    seed: u64,
    detection_rate: f64,
    false_alarm_rate: f64,
    mae: f64,
    rmse: f64,
}

#[derive(Serialize)]
struct EvalSummary {
    model: AttackModel,
    intent: AttackIntent,
    grey_rating: Option<i32>,
    attack_size: f64,
    filler_size: f64,
    repetitions: usize,
    detection_rate: f64,
    false_alarm_rate: f64,
    mae: f64,
    rmse: f64,
    per_repetition: Vec<RepetitionMetrics>,
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let started = Instant::now();
    if args.repetitions == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()));
    }
    let genuine = load_ratings(&args.input, InputFormat::GenericCsv)?;
    let wavelet = WaveletSpec::new(args.wavelet);
    let cell = CellKey {
        model: args.model,
        intent: IntentSpec {
            intent: args.intent,
            grey_rating: args.grey_rating,
        },
        attack_size: args.attack_size,
        filler_size: args.filler_size,
    };
    let tuning = DetectorTuning {
        max_iterations: args.max_iterations,
        tolerance: args.tolerance,
        variance_floor: args.variance_floor,
        restarts: args.restarts,
    };
    let mut reps = Vec::with_capacity(args.repetitions);
    for rep in 0..args.repetitions {
        let rep_seed = cell.rep_seed(args.seed, rep);
        let spec = AttackSpec {
            model: args.model,
            intent: args.intent,
            grey_rating: args.grey_rating,
            attack_size: args.attack_size,
            filler_size: args.filler_size,
            aop_top_fraction: match (args.model, args.aop_top_fraction) {
                (AttackModel::Aop, None) => Some(DEFAULT_AOP_TOP_FRACTION),
                (_, value) => value,
            },
            popularity_threshold: args.popularity_threshold,
            seed: rep_seed,
        };
        let em = tuning.to_config(SeedMixer::new(rep_seed).str("detect").finish());
        let outcome = detection_experiment(&genuine, &spec, &wavelet, args.levels, &em)?;
        let shift_spec = AttackSpec {
            seed: SeedMixer::new(rep_seed).str("shift-attack").finish(),
            ..spec
        };
        let (mae, rmse) = prediction_shift_experiment(
            &genuine,
            &shift_spec,
            args.holdout_fraction,
            args.knn_k,
            SeedMixer::new(rep_seed).str("shift").finish(),
        )?;
        reps.push(RepetitionMetrics {
            seed: rep_seed,
            detection_rate: outcome.detection_rate,
            false_alarm_rate: outcome.false_alarm_rate,
            mae,
            rmse,
        });
    }
    let n = reps.len() as f64;
    let summary = EvalSummary {
        model: args.model,
        intent: args.intent,
        grey_rating: args.grey_rating,
        attack_size: args.attack_size,
        filler_size: args.filler_size,
        repetitions: reps.len(),
        detection_rate: reps.iter().map(|r| r.detection_rate).sum::<f64>() / n,
        false_alarm_rate: reps.iter().map(|r| r.false_alarm_rate).sum::<f64>() / n,
        mae: reps.iter().map(|r| r.mae).sum::<f64>() / n,
        rmse: reps.iter().map(|r| r.rmse).sum::<f64>() / n,
        per_repetition: reps,
    };
    let file = File::create(&args.out).map_err(|e| Error::io(&args.out, e))?;
    serde_json::to_writer_pretty(file, &summary).map_err(|e| Error::Json {
        path: args.out.clone(),
        source: e,
    })?;
    eprintln!(
        "DR {:.3} FAR {:.3} MAE {:.3} RMSE {:.3} over {} repetitions -> {}",
        summary.detection_rate,
        summary.false_alarm_rate,
        summary.mae,
        summary.rmse,
        summary.repetitions,
        args.out.display()
    );
    write_manifest(
        "eval",
        started,
        BTreeMap::from([("seed".to_string(), args.seed)]),
        vec![args.input.clone()],
        vec![args.out.clone()],
        to_config_value(&args),
    )
}

fn run_sweep_cmd(args: SweepArgs) -> Result<()> {
    let started = Instant::now();
    let cfg = SweepConfig::load(&args.config)?;
    let rows = match args.parallelism {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| run_sweep(&cfg))?
        }
        None => run_sweep(&cfg)?,
    };
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    eprintln!(
        "swept {} cells ({} with errors) -> {}",
        rows.len(),
        failed,
        cfg.output.display()
    );
    let mut config = to_config_value(&args);
    if let serde_json::Value::Object(map) = &mut config {
        map.insert("resolved_sweep".into(), to_config_value(&cfg));
    }
    write_manifest(
        "sweep",
        started,
        BTreeMap::from([("base_seed".to_string(), cfg.base_seed)]),
        vec![args.config.clone()],
        vec![cfg.output.clone()],
        config,
    )
}

pub fn run() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Ingest(args) => run_ingest(args),
        Command::Attack(args) => run_attack(args),
        Command::Features(args) => run_features(args),
        Command::Detect(args) => run_detect(args),
        Command::Eval(args) => run_eval(args),
        Command::Sweep(args) => run_sweep_cmd(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
