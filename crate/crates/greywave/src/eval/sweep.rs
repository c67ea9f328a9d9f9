//! The full evaluation grid: every (model, intent, attack size, filler
//! size) cell, seeded per cell and repetition, with per-cell metric rows
//! flushed as they finish so interrupted sweeps resume.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{AttackIntent, AttackModel, AttackSpec, DEFAULT_AOP_TOP_FRACTION};
use crate::data::{load_ratings, sample_genuine, InputFormat, RatingMatrix};
use crate::detect::EmConfig;
use crate::error::{Error, Result};
use crate::eval::{detection_experiment, prediction_shift_experiment, DEFAULT_K};
use crate::seeding::SeedMixer;
use crate::synth::{generate_genuine, SyntheticConfig};
use crate::wavelet::{WaveletKind, WaveletSpec};

/// An intent together with the grey rating it carries (grey only).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentSpec {
    pub intent: AttackIntent,
    #[serde(default)]
    pub grey_rating: Option<i32>,
}

impl IntentSpec {
    pub fn nuke() -> Self {
        IntentSpec {
            intent: AttackIntent::Nuke,
            grey_rating: None,
        }
    }

    pub fn grey(rating: i32) -> Self {
        IntentSpec {
            intent: AttackIntent::Grey,
            grey_rating: Some(rating),
        }
    }

    fn label(&self) -> String {
        match self.grey_rating {
            Some(g) => format!("{}:{g}", self.intent.name()),
            None => self.intent.name().to_string(),
        }
    }
}

/// Where the genuine profiles come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetRef {
    /// A rating file on disk.
    Path { path: PathBuf, format: InputFormat },
    /// Generated genuine profiles.
    Synthetic { synthetic: SyntheticConfig },
}

/// Tunable detector knobs shared by every cell; the per-space seeds are
/// derived from the cell seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorTuning {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub variance_floor: f64,
    pub restarts: usize,
}

impl Default for DetectorTuning {
    fn default() -> Self {
        let base = EmConfig::with_seed(0);
        DetectorTuning {
            max_iterations: base.max_iterations,
            tolerance: base.tolerance,
            variance_floor: base.variance_floor,
            restarts: base.restarts,
        }
    }
}

impl DetectorTuning {
    pub fn to_config(self, seed: u64) -> EmConfig {
        EmConfig {
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            variance_floor: self.variance_floor,
            restarts: self.restarts,
            ..EmConfig::with_seed(seed)
        }
    }
}

fn default_popularity_threshold() -> u32 {
    crate::attack::DEFAULT_POPULARITY_THRESHOLD
}

fn default_aop_top_fraction() -> f64 {
    DEFAULT_AOP_TOP_FRACTION
}

fn default_levels() -> usize {
    1
}

fn default_holdout() -> f64 {
    0.1
}

fn default_knn_k() -> usize {
    DEFAULT_K
}

/// Everything one sweep needs; JSON-serializable so runs are replayable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub dataset: DatasetRef,
    /// Optional genuine-profile subsample drawn before the sweep.
    #[serde(default)]
    pub sample_users: Option<usize>,
    pub models: Vec<AttackModel>,
    pub intents: Vec<IntentSpec>,
    pub attack_sizes: Vec<f64>,
    pub filler_sizes: Vec<f64>,
    pub repetitions: usize,
    pub base_seed: u64,
    #[serde(default = "default_popularity_threshold")]
    pub popularity_threshold: u32,
    #[serde(default = "default_aop_top_fraction")]
    pub aop_top_fraction: f64,
    #[serde(default)]
    pub wavelet: WaveletKind,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default)]
    pub detector: DetectorTuning,
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
    #[serde(default = "default_knn_k")]
    pub knn_k: usize,
    /// The metric CSV this sweep writes (and resumes from).
    pub output: PathBuf,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        for (name, empty) in [
            ("models", self.models.is_empty()),
            ("intents", self.intents.is_empty()),
            ("attack_sizes", self.attack_sizes.is_empty()),
            ("filler_sizes", self.filler_sizes.is_empty()),
        ] {
            if empty {
                return Err(Error::Config(format!("{name} must be non-empty")));
            }
        }
        for intent in &self.intents {
            if intent.intent == AttackIntent::Grey && intent.grey_rating.is_none() {
                return Err(Error::Config(
                    "grey intent entries need a grey_rating".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_reader(file).map_err(|e| Error::Json {
            path: path.into(),
            source: e,
        })
    }
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey {
    pub model: AttackModel,
    pub intent: IntentSpec,
    pub attack_size: f64,
    pub filler_size: f64,
}

impl CellKey {
    fn key_string(&self) -> String {
        format!(
            "{}|{}|{}|{}",
            self.model.name(),
            self.intent.label(),
            self.attack_size,
            self.filler_size
        )
    }

    /// Stable per-repetition seed derived from the base seed and the full
    /// cell coordinates, independent of execution order.
    pub fn rep_seed(&self, base_seed: u64, rep: usize) -> u64 {
        SeedMixer::new(base_seed)
            .str("cell")
            .str(self.model.name())
            .str(self.intent.intent.name())
            .i64(self.intent.grey_rating.map(i64::from).unwrap_or(i64::MIN))
            .f64(self.attack_size)
            .f64(self.filler_size)
            .u64(rep as u64)
            .finish()
    }

    fn attack_spec(&self, cfg: &SweepConfig, seed: u64) -> AttackSpec {
        AttackSpec {
            model: self.model,
            intent: self.intent.intent,
            grey_rating: self.intent.grey_rating,
            attack_size: self.attack_size,
            filler_size: self.filler_size,
            aop_top_fraction: if self.model == AttackModel::Aop {
                Some(cfg.aop_top_fraction)
            } else {
                None
            },
            popularity_threshold: cfg.popularity_threshold,
            seed,
        }
    }
}

/// One output row: cell coordinates plus repetition-averaged metrics, or an
/// error marker when the cell could not run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub model: AttackModel,
    pub intent: AttackIntent,
    pub grey_rating: Option<i32>,
    pub attack_size: f64,
    pub filler_size: f64,
    pub detection_rate: Option<f64>,
    pub false_alarm_rate: Option<f64>,
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
    pub repetitions: usize,
    pub error: Option<String>,
}

impl MetricRow {
    fn key_string(&self) -> String {
        CellKey {
            model: self.model,
            intent: IntentSpec {
                intent: self.intent,
                grey_rating: self.grey_rating,
            },
            attack_size: self.attack_size,
            filler_size: self.filler_size,
        }
        .key_string()
    }
}

pub const SWEEP_CSV_HEADER: [&str; 11] = [
    "model",
    "intent",
    "grey_rating",
    "attack_size",
    "filler_size",
    "detection_rate",
    "false_alarm_rate",
    "mae",
    "rmse",
    "reps",
    "error",
];

fn opt_to_string<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

fn row_to_record(row: &MetricRow) -> Vec<String> {
    vec![
        row.model.name().to_string(),
        row.intent.name().to_string(),
        opt_to_string(&row.grey_rating),
        row.attack_size.to_string(),
        row.filler_size.to_string(),
        opt_to_string(&row.detection_rate),
        opt_to_string(&row.false_alarm_rate),
        opt_to_string(&row.mae),
        opt_to_string(&row.rmse),
        row.repetitions.to_string(),
        row.error.clone().unwrap_or_default(),
    ]
}

fn parse_enum_by_name<T: Copy>(pairs: &[(T, &str)], value: &str) -> Option<T> {
    pairs.iter().find(|(_, n)| *n == value).map(|&(v, _)| v)
}

fn record_to_row(record: &csv::StringRecord, path: &Path, line: u64) -> Result<MetricRow> {
    let get = |i: usize| record.get(i).unwrap_or("").to_string();
    let malformed = |message: String| Error::MalformedRow {
        path: path.into(),
        line,
        message,
    };
    let model_pairs: Vec<(AttackModel, &str)> =
        AttackModel::ALL.iter().map(|&m| (m, m.name())).collect();
    let model = parse_enum_by_name(&model_pairs, &get(0))
        .ok_or_else(|| malformed(format!("unknown model `{}`", get(0))))?;
    let intent_pairs = [
        (AttackIntent::Push, "push"),
        (AttackIntent::Nuke, "nuke"),
        (AttackIntent::Grey, "grey"),
    ];
    let intent = parse_enum_by_name(&intent_pairs, &get(1))
        .ok_or_else(|| malformed(format!("unknown intent `{}`", get(1))))?;
    let opt_num = |i: usize| -> Result<Option<f64>> {
        let raw = get(i);
        if raw.is_empty() {
            Ok(None)
        } else {
            raw.parse()
                .map(Some)
                .map_err(|_| malformed(format!("bad number `{raw}`")))
        }
    };
    let grey_rating = match get(2).as_str() {
        "" => None,
        raw => Some(
            raw.parse()
                .map_err(|_| malformed(format!("bad grey rating `{raw}`")))?,
        ),
    };
    Ok(MetricRow {
        model,
        intent,
        grey_rating,
        attack_size: opt_num(3)?.ok_or_else(|| malformed("missing attack_size".into()))?,
        filler_size: opt_num(4)?.ok_or_else(|| malformed("missing filler_size".into()))?,
        detection_rate: opt_num(5)?,
        false_alarm_rate: opt_num(6)?,
        mae: opt_num(7)?,
        rmse: opt_num(8)?,
        repetitions: get(9)
            .parse()
            .map_err(|_| malformed(format!("bad reps `{}`", get(9))))?,
        error: match get(10).as_str() {
            "" => None,
            text => Some(text.to_string()),
        },
    })
}

/// Read previously written rows, tolerating a missing file.
pub fn read_metric_rows(path: &Path) -> Result<Vec<MetricRow>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        rows.push(record_to_row(&record, path, i as u64 + 2)?);
    }
    Ok(rows)
}

fn write_metric_rows(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    writer
        .write_record(SWEEP_CSV_HEADER)
        .map_err(|e| Error::csv(path, e))?;
    for row in rows {
        writer
            .write_record(row_to_record(row))
            .map_err(|e| Error::csv(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// The grid in canonical order: models x intents x attack sizes x filler
/// sizes, each list in its configured order.
pub fn enumerate_cells(cfg: &SweepConfig) -> Vec<CellKey> {
    let mut cells = Vec::new();
    for &model in &cfg.models {
        for &intent in &cfg.intents {
            for &attack_size in &cfg.attack_sizes {
                for &filler_size in &cfg.filler_sizes {
                    cells.push(CellKey {
                        model,
                        intent,
                        attack_size,
                        filler_size,
                    });
                }
            }
        }
    }
    cells
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Run every repetition of one cell; errors land in the row instead of
/// aborting the sweep.
pub fn evaluate_cell(cfg: &SweepConfig, genuine: &RatingMatrix, cell: &CellKey) -> MetricRow {
    let wavelet = WaveletSpec::new(cfg.wavelet);
    let mut drs = Vec::with_capacity(cfg.repetitions);
    let mut fars = Vec::with_capacity(cfg.repetitions);
    let mut maes = Vec::with_capacity(cfg.repetitions);
    let mut rmses = Vec::with_capacity(cfg.repetitions);

    let mut failure: Option<String> = None;
    for rep in 0..cfg.repetitions {
        let rep_seed = cell.rep_seed(cfg.base_seed, rep);
        let spec = cell.attack_spec(cfg, rep_seed);
        let em = cfg
            .detector
            .to_config(SeedMixer::new(rep_seed).str("detect").finish());
        let outcome = detection_experiment(genuine, &spec, &wavelet, cfg.levels, &em);
        let shift_spec = AttackSpec {
            seed: SeedMixer::new(rep_seed).str("shift-attack").finish(),
            ..spec
        };
        let shift = outcome.as_ref().ok().map(|_| {
            prediction_shift_experiment(
                genuine,
                &shift_spec,
                cfg.holdout_fraction,
                cfg.knn_k,
                SeedMixer::new(rep_seed).str("shift").finish(),
            )
        });
        match (outcome, shift) {
            (Ok(detection), Some(Ok((m, r)))) => {
                drs.push(detection.detection_rate);
                fars.push(detection.false_alarm_rate);
                maes.push(m);
                rmses.push(r);
            }
            (Err(e), _) | (_, Some(Err(e))) => {
                failure = Some(format!("rep {rep}: {e}"));
                break;
            }
            (Ok(_), None) => unreachable!("shift runs whenever detection succeeded"),
        }
    }

    match failure {
        Some(error) => MetricRow {
            model: cell.model,
            intent: cell.intent.intent,
            grey_rating: cell.intent.grey_rating,
            attack_size: cell.attack_size,
            filler_size: cell.filler_size,
            detection_rate: None,
            false_alarm_rate: None,
            mae: None,
            rmse: None,
            repetitions: 0,
            error: Some(error),
        },
        None => MetricRow {
            model: cell.model,
            intent: cell.intent.intent,
            grey_rating: cell.intent.grey_rating,
            attack_size: cell.attack_size,
            filler_size: cell.filler_size,
            detection_rate: Some(mean(&drs)),
            false_alarm_rate: Some(mean(&fars)),
            mae: Some(mean(&maes)),
            rmse: Some(mean(&rmses)),
            repetitions: cfg.repetitions,
            error: None,
        },
    }
}

/// Load or generate the genuine matrix a sweep runs against.
pub fn load_sweep_dataset(cfg: &SweepConfig) -> Result<RatingMatrix> {
    let full = match &cfg.dataset {
        DatasetRef::Path { path, format } => load_ratings(path, *format)?,
        DatasetRef::Synthetic { synthetic } => generate_genuine(synthetic)?,
    };
    match cfg.sample_users {
        Some(n) => sample_genuine(
            &full,
            n,
            SeedMixer::new(cfg.base_seed).str("sample").finish(),
        ),
        None => Ok(full),
    }
}

/// Run the whole grid. Completed cells found in the output CSV are skipped,
/// fresh rows are appended (and flushed) as cells finish, and the final file
/// is rewritten in canonical cell order.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<MetricRow>> {
    cfg.validate()?;
    let genuine = load_sweep_dataset(cfg)?;
    let cells = enumerate_cells(cfg);

    let mut completed: BTreeMap<String, MetricRow> = read_metric_rows(&cfg.output)?
        .into_iter()
        .map(|r| (r.key_string(), r))
        .collect();
    let pending: Vec<CellKey> = cells
        .iter()
        .filter(|c| !completed.contains_key(&c.key_string()))
        .copied()
        .collect();

    if !pending.is_empty() {
        let fresh = !cfg.output.exists();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&cfg.output)
            .map_err(|e| Error::io(&cfg.output, e))?;
        let mut writer = csv::Writer::from_writer(BufWriter::new(file));
        if fresh {
            writer
                .write_record(SWEEP_CSV_HEADER)
                .map_err(|e| Error::csv(&cfg.output, e))?;
            writer.flush().map_err(|e| Error::io(&cfg.output, e))?;
        }
        let shared = Mutex::new(writer);

        let rows: Vec<MetricRow> = pending
            .par_iter()
            .map(|cell| {
                let row = evaluate_cell(cfg, &genuine, cell);
                let mut w = shared.lock().expect("writer lock");
                // Flush per cell so interrupted sweeps can resume.
                let _ = w.write_record(row_to_record(&row));
                let _ = w.flush();
                row
            })
            .collect();
        for row in rows {
            completed.insert(row.key_string(), row);
        }
    }

    let ordered: Vec<MetricRow> = cells
        .iter()
        .map(|c| {
            completed
                .get(&c.key_string())
                .cloned()
                .expect("every cell evaluated")
        })
        .collect();
    write_metric_rows(&cfg.output, &ordered)?;
    Ok(ordered)
}

#[cfg(test)]
mod tests {
    use super::*;

    use tempfile::tempdir;

    fn tiny_config(output: PathBuf) -> SweepConfig {
        SweepConfig {
            dataset: DatasetRef::Synthetic {
                synthetic: SyntheticConfig::new(40, 250, 5),
            },
            sample_users: None,
            models: vec![AttackModel::Average, AttackModel::LoveHate],
            intents: vec![IntentSpec::grey(3)],
            attack_sizes: vec![0.1, 0.3],
            filler_sizes: vec![0.05],
            repetitions: 1,
            base_seed: 99,
            popularity_threshold: 10,
            aop_top_fraction: 0.2,
            wavelet: WaveletKind::Haar,
            levels: 1,
            detector: DetectorTuning {
                restarts: 2,
                ..DetectorTuning::default()
            },
            holdout_fraction: 0.1,
            knn_k: 10,
            output,
        }
    }

    #[test]
    fn sweep_runs_grid_and_is_deterministic() {
        let dir = tempdir().unwrap();
        let cfg = tiny_config(dir.path().join("sweep.csv"));
        let rows1 = run_sweep(&cfg).unwrap();
        assert_eq!(rows1.len(), 4);
        let bytes1 = std::fs::read(&cfg.output).unwrap();

        let cfg2 = SweepConfig {
            output: dir.path().join("sweep2.csv"),
            ..cfg.clone()
        };
        let rows2 = run_sweep(&cfg2).unwrap();
        assert_eq!(rows1, rows2);
        let bytes2 = std::fs::read(&cfg2.output).unwrap();
        assert_eq!(bytes1, bytes2);
        for row in &rows1 {
            assert!(row.error.is_none(), "unexpected error: {:?}", row.error);
            assert!(row.rmse.unwrap() >= row.mae.unwrap());
        }
    }

    #[test]
    fn sweep_resumes_from_partial_output() {
        let dir = tempdir().unwrap();
        let cfg = tiny_config(dir.path().join("sweep.csv"));
        let full = run_sweep(&cfg).unwrap();

        // Keep only the first row and rerun.
        let partial = vec![full[0].clone()];
        write_metric_rows(&cfg.output, &partial).unwrap();
        let resumed = run_sweep(&cfg).unwrap();
        assert_eq!(full, resumed);
    }

    #[test]
    fn cell_results_are_order_independent() {
        let dir = tempdir().unwrap();
        let cfg = tiny_config(dir.path().join("s.csv"));
        let genuine = load_sweep_dataset(&cfg).unwrap();
        let mut cells = enumerate_cells(&cfg);
        let forward: Vec<MetricRow> = cells
            .iter()
            .map(|c| evaluate_cell(&cfg, &genuine, c))
            .collect();
        cells.reverse();
        let mut backward: Vec<MetricRow> = cells
            .iter()
            .map(|c| evaluate_cell(&cfg, &genuine, c))
            .collect();
        backward.reverse();
        assert_eq!(forward, backward);
    }

    #[test]
    fn zero_attacker_cell_records_error_and_isolates() {
        let dir = tempdir().unwrap();
        let mut cfg = tiny_config(dir.path().join("sweep.csv"));
        cfg.attack_sizes = vec![0.001, 0.3]; // first rounds to zero attackers
        let rows = run_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 4);
        let failing: Vec<&MetricRow> = rows
            .iter()
            .filter(|r| r.attack_size == 0.001)
            .collect();
        assert_eq!(failing.len(), 2);
        for row in failing {
            assert!(row.error.as_deref().unwrap().contains("zero attackers"));
            assert!(row.detection_rate.is_none());
        }
        for row in rows.iter().filter(|r| r.attack_size == 0.3) {
            assert!(row.error.is_none());
        }
    }

    #[test]
    fn rows_round_trip_through_csv() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("rows.csv");
        let rows = vec![
            MetricRow {
                model: AttackModel::BandwagonRandom,
                intent: AttackIntent::Grey,
                grey_rating: Some(3),
                attack_size: 0.17,
                filler_size: 0.05,
                detection_rate: Some(0.9),
                false_alarm_rate: Some(0.0625),
                mae: Some(1.25),
                rmse: Some(1.5),
                repetitions: 10,
                error: None,
            },
            MetricRow {
                model: AttackModel::Aop,
                intent: AttackIntent::Push,
                grey_rating: None,
                attack_size: 0.03,
                filler_size: 0.01,
                detection_rate: None,
                false_alarm_rate: None,
                mae: None,
                rmse: None,
                repetitions: 0,
                error: Some("rep 0: attack size 0.03 yields zero attackers".into()),
            },
        ];
        write_metric_rows(&path, &rows).unwrap();
        let back = read_metric_rows(&path).unwrap();
        assert_eq!(rows, back);
    }
}
