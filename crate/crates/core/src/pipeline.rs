//! End-to-end orchestration: split, calibrate, normalize, train, evaluate.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gait_boost::{BoostError, BoostedEnsemble, Dataset, FeatureMatrix, TrainLog, TrainParams};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{apply_correction, estimate_correction_factors, CalibrationError, CorrectionTable};
use crate::evaluation::{
    classification_report, confusion_matrix, track_accuracy, vote_tracks, write_report_files, ConfusionMatrix, EvalError,
    EvaluationReport, TrackResult,
};
use crate::features::{
    extract_all, feature_names, fit_normalization, normalize_features, FeatureError, GaitFeatureRow, NormalizationStats,
};
use crate::landmark::{
    filter_complete, parse_landmark_csv, smooth_sequence, CsvSchema, FrameRecord, GaitDataset, IngestReport, LandmarkError,
    LandmarkFrame,
};

pub const MODEL_FILE: &str = "model.json";
pub const CORRECTION_FILE: &str = "correction.txt";
pub const NORMALIZATION_FILE: &str = "normalization.txt";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const SPLIT_FILE: &str = "split.csv";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage} stage failed{}: {source}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        row: Option<usize>,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("model compatibility error: {0}")]
    Compatibility(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Process exit code: 2 config, 3 data, 4 model compatibility.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Stage { .. } | PipelineError::Io { .. } => 3,
            PipelineError::Compatibility(_) => 4,
        }
    }

    pub fn stage(&self) -> Option<&'static str> {
        match self {
            PipelineError::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    fn stage_err<E: std::error::Error + Send + Sync + 'static>(stage: &'static str, row: Option<usize>, e: E) -> Self {
        PipelineError::Stage {
            stage,
            row,
            source: Box::new(e),
        }
    }
}

impl From<LandmarkError> for PipelineError {
    fn from(e: LandmarkError) -> Self {
        let row = e.row();
        Self::stage_err("landmark_io", row, e)
    }
}

impl From<FeatureError> for PipelineError {
    fn from(e: FeatureError) -> Self {
        let row = match &e {
            FeatureError::Parse { row, .. } if *row > 0 => Some(*row),
            _ => None,
        };
        Self::stage_err("gait_features", row, e)
    }
}

impl From<CalibrationError> for PipelineError {
    fn from(e: CalibrationError) -> Self {
        Self::stage_err("camera_calibration", None, e)
    }
}

impl From<BoostError> for PipelineError {
    fn from(e: BoostError) -> Self {
        match e {
            BoostError::Format(m) => PipelineError::Compatibility(m),
            BoostError::InvalidParam { .. } => PipelineError::Config(e.to_string()),
            other => Self::stage_err("boost_core", None, other),
        }
    }
}

impl From<EvalError> for PipelineError {
    fn from(e: EvalError) -> Self {
        Self::stage_err("evaluation", None, e)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// How videos are assigned to train, validation and test.
///
/// Explicit lists take precedence. Videos not named in any list go to
/// training. Without lists, `fractions` (train, validation, test) applies to
/// all videos; otherwise `test_fraction` of the videos is held out and
/// `validation_fraction` of the remaining ones is used for validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_videos: Vec<String>,
    pub validation_videos: Vec<String>,
    pub test_videos: Vec<String>,
    pub fractions: Option<[f64; 3]>,
    pub test_fraction: f64,
    pub validation_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_videos: Vec::new(),
            validation_videos: Vec::new(),
            test_videos: Vec::new(),
            fractions: None,
            test_fraction: 0.2,
            validation_fraction: 0.25,
        }
    }
}

impl SplitSpec {
    fn has_lists(&self) -> bool {
        !(self.train_videos.is_empty() && self.validation_videos.is_empty() && self.test_videos.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: Vec<PathBuf>,
    pub reference_camera: u32,
    pub out: PathBuf,
    /// Drives the split shuffle and every training random stream.
    pub seed: u64,
    pub deterministic: bool,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
    pub normalize: bool,
    pub smoothing_alpha: f64,
    pub dedupe_shr: bool,
    pub split: SplitSpec,
    /// Keys left out fall back to [`TrainParams::gait_tuned`].
    #[serde(deserialize_with = "tuned_params")]
    pub params: TrainParams,
}

fn tuned_params<'de, D: serde::Deserializer<'de>>(d: D) -> Result<TrainParams, D::Error> {
    use serde::de::Error;
    let overrides = toml::Table::deserialize(d)?;
    let mut table = toml::Table::try_from(TrainParams::gait_tuned()).map_err(D::Error::custom)?;
    table.extend(overrides);
    table.try_into().map_err(D::Error::custom)
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            reference_camera: 1,
            out: PathBuf::from("out"),
            seed: 0,
            deterministic: true,
            threads: 0,
            normalize: true,
            smoothing_alpha: 0.0,
            dedupe_shr: false,
            split: SplitSpec::default(),
            params: TrainParams::gait_tuned(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a TOML config; relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in cfg.inputs.iter_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(0.0..=1.0).contains(&self.smoothing_alpha) {
            return Err(PipelineError::Config(format!("smoothing_alpha {} outside [0, 1]", self.smoothing_alpha)));
        }
        let s = &self.split;
        if let Some(f) = s.fractions {
            if f.iter().any(|v| !(0.0..=1.0).contains(v)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(PipelineError::Config(format!("split fractions {f:?} must be in [0, 1] and sum to 1")));
            }
        }
        for (name, v) in [("test_fraction", s.test_fraction), ("validation_fraction", s.validation_fraction)] {
            if !(0.0..1.0).contains(&v) {
                return Err(PipelineError::Config(format!("{name} {v} outside [0, 1)")));
            }
        }
        self.effective_params().validate()?;
        Ok(())
    }

    /// Training parameters with the top-level seed and determinism applied.
    pub fn effective_params(&self) -> TrainParams {
        TrainParams {
            seed: self.seed,
            deterministic: self.deterministic,
            ..self.params.clone()
        }
    }

    pub fn thread_pool(&self) -> Result<rayon::ThreadPool, PipelineError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))
    }
}

/// Video ids per partition.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

fn take_fraction(videos: &mut Vec<String>, fraction: f64) -> Vec<String> {
    let n = (fraction * videos.len() as f64).round() as usize;
    videos.drain(..n.min(videos.len())).collect()
}

/// Assigns whole videos to partitions. Shuffles use `seed` over the videos
/// sorted by id, so the result does not depend on file order.
pub fn plan_split<R: FrameRecord>(dataset: &GaitDataset<R>, spec: &SplitSpec, seed: u64) -> Result<Split, PipelineError> {
    let mut all: Vec<String> = dataset.manifest.iter().map(|v| v.video_id.clone()).collect();
    all.sort();
    let known: HashSet<&str> = all.iter().map(String::as_str).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let split = if spec.has_lists() {
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for (part, list) in [("train", &spec.train_videos), ("validation", &spec.validation_videos), ("test", &spec.test_videos)] {
            for v in list {
                if !known.contains(v.as_str()) {
                    return Err(PipelineError::Config(format!("{part} video {v} not in the data")));
                }
                if let Some(prev) = owner.insert(v, part) {
                    return Err(PipelineError::Config(format!("video {v} listed in both {prev} and {part}")));
                }
            }
        }
        let mut rest: Vec<String> = all.iter().filter(|v| !owner.contains_key(v.as_str())).cloned().collect();
        let mut validation = spec.validation_videos.clone();
        if validation.is_empty() && spec.train_videos.is_empty() && spec.validation_fraction > 0.0 {
            rest.shuffle(&mut rng);
            validation = take_fraction(&mut rest, spec.validation_fraction);
        }
        let mut train = spec.train_videos.clone();
        train.extend(rest);
        Split {
            train,
            validation,
            test: spec.test_videos.clone(),
        }
    } else if let Some([_, fv, ft]) = spec.fractions {
        all.shuffle(&mut rng);
        let n = all.len() as f64;
        let n_test = (ft * n).round() as usize;
        let n_val = ((fv * n).round() as usize).min(all.len() - n_test.min(all.len()));
        let test: Vec<String> = all.drain(..n_test.min(all.len())).collect();
        let validation: Vec<String> = all.drain(..n_val).collect();
        if fv > 0.0 && validation.is_empty() {
            return Err(PipelineError::Config("validation partition is empty".into()));
        }
        if ft > 0.0 && test.is_empty() {
            return Err(PipelineError::Config("test partition is empty".into()));
        }
        Split {
            train: all,
            validation,
            test,
        }
    } else {
        all.shuffle(&mut rng);
        let test = take_fraction(&mut all, spec.test_fraction);
        let validation = take_fraction(&mut all, spec.validation_fraction);
        if spec.test_fraction > 0.0 && test.is_empty() {
            return Err(PipelineError::Config("test partition is empty".into()));
        }
        if spec.validation_fraction > 0.0 && validation.is_empty() {
            return Err(PipelineError::Config("validation partition is empty".into()));
        }
        Split {
            train: all,
            validation,
            test,
        }
    };
    if split.train.is_empty() {
        return Err(PipelineError::Config("training partition is empty".into()));
    }
    Ok(split)
}

pub struct Partitions<R> {
    pub train: GaitDataset<R>,
    pub validation: GaitDataset<R>,
    pub test: GaitDataset<R>,
    pub split: Split,
}

impl<R> Partitions<R> {
    pub fn row_counts(&self) -> [usize; 3] {
        [self.train.rows.len(), self.validation.rows.len(), self.test.rows.len()]
    }
}

pub fn split_dataset<R: FrameRecord + Clone>(
    dataset: &GaitDataset<R>,
    spec: &SplitSpec,
    seed: u64,
) -> Result<Partitions<R>, PipelineError> {
    let split = plan_split(dataset, spec, seed)?;
    let pick = |videos: &[String]| {
        let set: HashSet<&str> = videos.iter().map(String::as_str).collect();
        dataset.select_videos(&set)
    };
    Ok(Partitions {
        train: pick(&split.train),
        validation: pick(&split.validation),
        test: pick(&split.test),
        split,
    })
}

/// Reads, validates and optionally smooths every input file.
pub fn load_landmarks(config: &PipelineConfig) -> Result<(GaitDataset<LandmarkFrame>, IngestReport), PipelineError> {
    if config.inputs.is_empty() {
        return Err(PipelineError::Config("no input files".into()));
    }
    let schema = CsvSchema::default();
    let mut rows = Vec::new();
    for path in &config.inputs {
        if !path.exists() {
            return Err(PipelineError::Io {
                path: path.display().to_string(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
            });
        }
        rows.extend(parse_landmark_csv(path, &schema)?.rows);
    }
    let (complete, report) = filter_complete(GaitDataset::from_rows(rows)?);
    log::info!("ingest: {} rows, {} kept, {} dropped", report.total, report.kept, report.dropped);
    let smoothed = smooth_sequence(&complete, config.smoothing_alpha)?;
    Ok((smoothed, report))
}

pub fn load_features(config: &PipelineConfig) -> Result<(GaitDataset<GaitFeatureRow>, IngestReport), PipelineError> {
    let (landmarks, mut report) = load_landmarks(config)?;
    let (features, feature_report) = extract_all(&landmarks)?;
    for (reason, n) in feature_report.reasons {
        *report.reasons.entry(reason).or_default() += n;
        report.dropped += n;
    }
    report.kept = features.len();
    Ok((features, report))
}

/// Correction and normalization fitted on a training partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    pub correction: CorrectionTable,
    pub normalization: Option<NormalizationStats>,
    pub dedupe_shr: bool,
}

impl Preprocessor {
    pub fn fit(train: &[GaitFeatureRow], config: &PipelineConfig) -> Result<Self, PipelineError> {
        let correction = estimate_correction_factors(train, config.reference_camera)?;
        let normalization = if config.normalize {
            Some(fit_normalization(&apply_correction(train, &correction)?)?)
        } else {
            None
        };
        Ok(Self {
            correction,
            normalization,
            dedupe_shr: config.dedupe_shr,
        })
    }

    pub fn transform(&self, rows: &[GaitFeatureRow]) -> Result<Vec<GaitFeatureRow>, PipelineError> {
        let corrected = apply_correction(rows, &self.correction)?;
        Ok(match &self.normalization {
            Some(stats) => normalize_features(&corrected, stats),
            None => corrected,
        })
    }

    pub fn matrix(&self, rows: &[GaitFeatureRow]) -> Result<FeatureMatrix, PipelineError> {
        let prepared = self.transform(rows)?;
        let vectors: Vec<Vec<f64>> = prepared.iter().map(|r| r.feature_vector(self.dedupe_shr)).collect();
        if vectors.is_empty() {
            return Ok(FeatureMatrix::new(0, crate::features::feature_count(self.dedupe_shr), Vec::new())?);
        }
        Ok(FeatureMatrix::from_rows(&vectors)?)
    }

    pub fn dataset(&self, rows: &[GaitFeatureRow]) -> Result<Dataset, PipelineError> {
        let labels = labels_of(rows)?;
        Ok(Dataset::new(self.matrix(rows)?, labels, feature_names(self.dedupe_shr))?)
    }
}

fn labels_of(rows: &[GaitFeatureRow]) -> Result<Vec<i64>, PipelineError> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            r.person_id.ok_or_else(|| {
                PipelineError::stage_err(
                    "boost_core",
                    Some(i + 1),
                    FeatureError::Contract(format!("video {} frame {} has no PERSON_ID", r.video_id, r.frame_no)),
                )
            })
        })
        .collect()
}

/// Everything the training stage needs, computed once.
pub struct PreparedData {
    pub ingest: IngestReport,
    pub partitions: Partitions<GaitFeatureRow>,
    pub preprocessor: Preprocessor,
    pub train: Dataset,
    pub validation: Option<Dataset>,
}

pub fn prepare(config: &PipelineConfig) -> Result<PreparedData, PipelineError> {
    config.validate()?;
    let (features, ingest) = load_features(config)?;
    let partitions = split_dataset(&features, &config.split, config.seed)?;
    let [tr, va, te] = partitions.row_counts();
    log::info!("split: train {tr} rows, validation {va} rows, test {te} rows");
    let preprocessor = Preprocessor::fit(&partitions.train.rows, config)?;
    let train = preprocessor.dataset(&partitions.train.rows)?;
    let validation = if partitions.validation.is_empty() {
        None
    } else {
        Some(preprocessor.dataset(&partitions.validation.rows)?)
    };
    Ok(PreparedData {
        ingest,
        partitions,
        preprocessor,
        train,
        validation,
    })
}

/// Paths of a persisted model and its sidecars.
#[derive(Debug, Clone, PartialEq)]
pub struct ArtifactPaths {
    pub model: PathBuf,
    pub correction: PathBuf,
    pub normalization: PathBuf,
    pub train_log: PathBuf,
    pub split: PathBuf,
}

impl ArtifactPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            model: dir.join(MODEL_FILE),
            correction: dir.join(CORRECTION_FILE),
            normalization: dir.join(NORMALIZATION_FILE),
            train_log: dir.join(TRAIN_LOG_FILE),
            split: dir.join(SPLIT_FILE),
        }
    }

    /// Sidecars live next to the model file.
    pub fn for_model(model: &Path) -> Self {
        let mut p = Self::in_dir(model.parent().unwrap_or(Path::new("")));
        p.model = model.to_path_buf();
        p
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: BoostedEnsemble,
    pub log: TrainLog,
    pub paths: ArtifactPaths,
    pub ingest: IngestReport,
    pub split: Split,
    pub row_counts: [usize; 3],
    pub preprocessor: Preprocessor,
}

fn train_log_csv(log: &TrainLog) -> String {
    let mut s = String::from("iteration,train_loss,valid_loss\n");
    for (i, t) in log.train_loss.iter().enumerate() {
        let v = log.valid_loss.get(i).map(|v| format!("{v:?}")).unwrap_or_default();
        let _ = writeln!(s, "{},{t:?},{v}", i + 1);
    }
    s
}

fn split_csv(p: &Partitions<GaitFeatureRow>) -> String {
    let mut s = String::from("video_id,partition,rows\n");
    for (name, ds) in [("train", &p.train), ("validation", &p.validation), ("test", &p.test)] {
        for v in &ds.manifest {
            let _ = writeln!(s, "{},{name},{}", v.video_id, v.frame_count);
        }
    }
    s
}

/// Runs every stage and writes the model plus its sidecar files to
/// `config.out`.
pub fn run_train(config: &PipelineConfig) -> Result<TrainOutcome, PipelineError> {
    let pool = config.thread_pool()?;
    pool.install(|| {
        let prepared = prepare(config)?;
        let params = config.effective_params();
        let (model, log) = gait_boost::train_with_validation(&prepared.train, prepared.validation.as_ref(), &params)?;
        std::fs::create_dir_all(&config.out).map_err(io_err(&config.out))?;
        let paths = ArtifactPaths::in_dir(&config.out);
        model.save(&paths.model).map_err(io_err(&paths.model))?;
        prepared.preprocessor.correction.save(&paths.correction)?;
        if let Some(stats) = &prepared.preprocessor.normalization {
            stats.save(&paths.normalization)?;
        } else if paths.normalization.exists() {
            std::fs::remove_file(&paths.normalization).map_err(io_err(&paths.normalization))?;
        }
        std::fs::write(&paths.train_log, train_log_csv(&log)).map_err(io_err(&paths.train_log))?;
        std::fs::write(&paths.split, split_csv(&prepared.partitions)).map_err(io_err(&paths.split))?;
        log::info!("model written to {}", paths.model.display());
        Ok(TrainOutcome {
            model,
            log,
            paths,
            ingest: prepared.ingest,
            row_counts: prepared.partitions.row_counts(),
            split: prepared.partitions.split,
            preprocessor: prepared.preprocessor,
        })
    })
}

/// A trained model with the artifacts needed to score new rows.
#[derive(Debug)]
pub struct ModelBundle {
    pub model: BoostedEnsemble,
    pub preprocessor: Preprocessor,
}

impl ModelBundle {
    pub fn load(model_path: &Path) -> Result<Self, PipelineError> {
        let paths = ArtifactPaths::for_model(model_path);
        if !paths.model.exists() {
            return Err(PipelineError::Io {
                path: paths.model.display().to_string(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "model file not found"),
            });
        }
        let model = BoostedEnsemble::load(&paths.model)?;
        let correction = CorrectionTable::load(&paths.correction).map_err(|e| PipelineError::Compatibility(format!("{}: {e}", paths.correction.display())))?;
        let normalization = if paths.normalization.exists() {
            Some(NormalizationStats::load(&paths.normalization).map_err(|e| PipelineError::Compatibility(format!("{}: {e}", paths.normalization.display())))?)
        } else {
            None
        };
        let dedupe_shr = if model.feature_names == feature_names(false) {
            false
        } else if model.feature_names == feature_names(true) {
            true
        } else {
            return Err(PipelineError::Compatibility(format!(
                "model features {:?} are not gait features",
                model.feature_names
            )));
        };
        Ok(Self {
            model,
            preprocessor: Preprocessor {
                correction,
                normalization,
                dedupe_shr,
            },
        })
    }

    /// Fails when the config asks for a different feature layout than the
    /// model was trained on.
    pub fn check_config(&self, config: &PipelineConfig) -> Result<(), PipelineError> {
        let expected = feature_names(config.dedupe_shr);
        if self.model.feature_names != expected {
            return Err(PipelineError::Compatibility(format!(
                "model features {:?} differ from configured {:?}",
                self.model.feature_names, expected
            )));
        }
        if config.normalize != self.preprocessor.normalization.is_some() {
            return Err(PipelineError::Compatibility("normalization setting differs from the trained model".into()));
        }
        Ok(())
    }

    pub fn predict_proba(&self, rows: &[GaitFeatureRow]) -> Result<Vec<Vec<f64>>, PipelineError> {
        let x = self.preprocessor.matrix(rows)?;
        Ok(self.model.predict_proba_batch(&x)?)
    }
}

/// Per-frame prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePrediction {
    pub video_id: String,
    pub camera_id: u32,
    pub frame_no: u64,
    pub true_person: Option<i64>,
    pub predicted_person: i64,
    pub probabilities: Vec<f64>,
}

pub fn predict_rows(bundle: &ModelBundle, rows: &[GaitFeatureRow]) -> Result<Vec<FramePrediction>, PipelineError> {
    let proba = bundle.predict_proba(rows)?;
    Ok(rows
        .iter()
        .zip(proba)
        .map(|(r, p)| FramePrediction {
            video_id: r.video_id.clone(),
            camera_id: r.camera_id,
            frame_no: r.frame_no,
            true_person: r.person_id,
            predicted_person: bundle.model.class_labels[gait_boost::argmax(&p)],
            probabilities: p,
        })
        .collect())
}

pub fn predictions_csv(labels: &[i64], preds: &[FramePrediction]) -> String {
    let mut s = String::from("VIDEO_ID,CAMERA_ID,FRAME_NO,PERSON_ID,PREDICTED");
    for l in labels {
        let _ = write!(s, ",P_{l}");
    }
    s.push('\n');
    for p in preds {
        let truth = p.true_person.map(|t| t.to_string()).unwrap_or_default();
        let _ = write!(s, "{},{},{},{truth},{}", p.video_id, p.camera_id, p.frame_no, p.predicted_person);
        for v in &p.probabilities {
            let _ = write!(s, ",{v:?}");
        }
        s.push('\n');
    }
    s
}

pub fn reid_tracks(bundle: &ModelBundle, preds: &[FramePrediction]) -> Result<Vec<TrackResult>, PipelineError> {
    let keys: Vec<(String, u32)> = preds.iter().map(|p| (p.video_id.clone(), p.camera_id)).collect();
    let truth: Vec<Option<i64>> = preds.iter().map(|p| p.true_person).collect();
    let scores: Vec<Vec<f64>> = preds.iter().map(|p| p.probabilities.clone()).collect();
    Ok(vote_tracks(&keys, &truth, &scores, &bundle.model.class_labels)?)
}

pub fn tracks_csv(tracks: &[TrackResult]) -> String {
    let mut s = String::from("VIDEO_ID,CAMERA_ID,FRAMES,PERSON_ID,PREDICTED\n");
    for t in tracks {
        let truth = t.true_person.map(|p| p.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{truth},{}", t.video_id, t.camera_id, t.frames, t.predicted_person);
    }
    s
}

#[derive(Debug)]
pub struct EvaluationOutcome {
    pub report: EvaluationReport,
    pub matrix: ConfusionMatrix,
    pub tracks: Vec<TrackResult>,
}

/// Scores labeled rows with a persisted model: frame-level metrics plus
/// track-level majority voting.
pub fn evaluate_rows(bundle: &ModelBundle, rows: &[GaitFeatureRow]) -> Result<EvaluationOutcome, PipelineError> {
    if rows.is_empty() {
        return Err(PipelineError::Config("evaluation partition is empty".into()));
    }
    let actual = labels_of(rows)?;
    let preds = predict_rows(bundle, rows)?;
    let predicted: Vec<i64> = preds.iter().map(|p| p.predicted_person).collect();
    let mut labels = bundle.model.class_labels.clone();
    for a in &actual {
        if !labels.contains(a) {
            labels.push(*a);
        }
    }
    labels.sort_unstable();
    let matrix = confusion_matrix(&predicted, &actual, &labels)?;
    let mut report = classification_report(&matrix)?;
    let tracks = reid_tracks(bundle, &preds)?;
    report.track_accuracy = track_accuracy(&tracks);
    report.n_tracks = Some(tracks.len());
    Ok(EvaluationOutcome { report, matrix, tracks })
}

/// Which partition [`run_evaluate`] scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    Train,
    Validation,
    Test,
}

/// Re-derives the split from the config and scores one partition with the
/// persisted artifacts (nothing is refitted). Writes `report.csv`,
/// `confusion.csv`, `report.json` and `tracks.csv` into `config.out`.
pub fn run_evaluate(config: &PipelineConfig, model_path: &Path, partition: Partition) -> Result<EvaluationOutcome, PipelineError> {
    let pool = config.thread_pool()?;
    pool.install(|| {
        let bundle = ModelBundle::load(model_path)?;
        bundle.check_config(config)?;
        let (features, _) = load_features(config)?;
        let parts = split_dataset(&features, &config.split, config.seed)?;
        let rows = match partition {
            Partition::Train => &parts.train.rows,
            Partition::Validation => &parts.validation.rows,
            Partition::Test => &parts.test.rows,
        };
        let outcome = evaluate_rows(&bundle, rows)?;
        write_report_files(&config.out, &outcome.report, &outcome.matrix)?;
        let tracks_path = config.out.join("tracks.csv");
        std::fs::write(&tracks_path, tracks_csv(&outcome.tracks)).map_err(io_err(&tracks_path))?;
        Ok(outcome)
    })
}

/// Inclusive bounds for random search. Equal bounds pin a value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub num_leaves: (usize, usize),
    /// Sampled log-uniformly.
    pub learning_rate: (f64, f64),
    pub colsample_bytree: (f64, f64),
    pub subsample: (f64, f64),
    pub subsample_freq: (usize, usize),
    pub min_child_samples: (usize, usize),
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            num_leaves: (8, 128),
            learning_rate: (0.01, 0.3),
            colsample_bytree: (0.5, 1.0),
            subsample: (0.5, 1.0),
            subsample_freq: (0, 10),
            min_child_samples: (5, 50),
        }
    }
}

impl SearchSpace {
    /// Every dimension pinned to the given parameters.
    pub fn pinned(p: &TrainParams) -> Self {
        Self {
            num_leaves: (p.num_leaves, p.num_leaves),
            learning_rate: (p.learning_rate, p.learning_rate),
            colsample_bytree: (p.colsample_bytree, p.colsample_bytree),
            subsample: (p.subsample, p.subsample),
            subsample_freq: (p.subsample_freq, p.subsample_freq),
            min_child_samples: (p.min_child_samples, p.min_child_samples),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |name: &str| Err(PipelineError::Config(format!("search space for {name} is empty")));
        let fine = |(lo, hi): (f64, f64)| lo <= hi && lo.is_finite() && hi.is_finite();
        if self.num_leaves.0 > self.num_leaves.1 || self.num_leaves.0 < 2 {
            return bad("num_leaves");
        }
        if !fine(self.learning_rate) || self.learning_rate.0 <= 0.0 {
            return bad("learning_rate");
        }
        if !fine(self.colsample_bytree) || self.colsample_bytree.0 <= 0.0 || self.colsample_bytree.1 > 1.0 {
            return bad("colsample_bytree");
        }
        if !fine(self.subsample) || self.subsample.0 <= 0.0 || self.subsample.1 > 1.0 {
            return bad("subsample");
        }
        if self.subsample_freq.0 > self.subsample_freq.1 {
            return bad("subsample_freq");
        }
        if self.min_child_samples.0 > self.min_child_samples.1 {
            return bad("min_child_samples");
        }
        Ok(())
    }

    pub fn sample(&self, base: &TrainParams, rng: &mut impl Rng) -> TrainParams {
        let int = |rng: &mut dyn rand::RngCore, (lo, hi): (usize, usize)| if lo == hi { lo } else { rng.random_range(lo..=hi) };
        let lin = |rng: &mut dyn rand::RngCore, (lo, hi): (f64, f64)| if lo == hi { lo } else { lo + (hi - lo) * rng.random::<f64>() };
        let (lo, hi) = self.learning_rate;
        TrainParams {
            num_leaves: int(rng, self.num_leaves),
            learning_rate: if lo == hi {
                lo
            } else {
                (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp()
            },
            colsample_bytree: lin(rng, self.colsample_bytree),
            subsample: lin(rng, self.subsample),
            subsample_freq: int(rng, self.subsample_freq),
            min_child_samples: int(rng, self.min_child_samples),
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub params: TrainParams,
    pub valid_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best: TrainParams,
    pub best_loss: f64,
    pub trials: Vec<Trial>,
}

impl TuneResult {
    pub fn trials_csv(&self) -> String {
        let mut s = String::from(
            "trial,num_leaves,learning_rate,colsample_bytree,subsample,subsample_freq,min_child_samples,valid_loss\n",
        );
        for t in &self.trials {
            let p = &t.params;
            let _ = writeln!(
                s,
                "{},{},{:?},{:?},{:?},{},{},{:?}",
                t.index, p.num_leaves, p.learning_rate, p.colsample_bytree, p.subsample, p.subsample_freq, p.min_child_samples, t.valid_loss
            );
        }
        s
    }
}

/// Random search scored by final validation log-loss. Trial `i` draws its
/// parameters from a stream derived from `(seed, i)`; trials run in
/// parallel and the lowest loss wins, earliest trial on ties.
pub fn tune_on(train: &Dataset, valid: &Dataset, base: &TrainParams, space: &SearchSpace, trials: usize, seed: u64) -> Result<TuneResult, PipelineError> {
    if trials == 0 {
        return Err(PipelineError::Config("tuning needs at least one trial".into()));
    }
    space.validate()?;
    let results: Vec<Trial> = (0..trials)
        .into_par_iter()
        .map(|index| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index as u64 + 1);
            let params = space.sample(base, &mut rng);
            let (_, log) = gait_boost::train_with_validation(train, Some(valid), &params)?;
            let valid_loss = log.valid_loss.last().copied().unwrap_or(f64::INFINITY);
            Ok(Trial { index, params, valid_loss })
        })
        .collect::<Result<_, PipelineError>>()?;
    let best = results
        .iter()
        .min_by(|a, b| a.valid_loss.total_cmp(&b.valid_loss).then(a.index.cmp(&b.index)))
        .expect("at least one trial");
    Ok(TuneResult {
        best: best.params.clone(),
        best_loss: best.valid_loss,
        trials: results,
    })
}

pub fn tune_hyperparameters(config: &PipelineConfig, space: &SearchSpace, trials: usize) -> Result<TuneResult, PipelineError> {
    let pool = config.thread_pool()?;
    pool.install(|| {
        let prepared = prepare(config)?;
        let valid = prepared
            .validation
            .as_ref()
            .ok_or_else(|| PipelineError::Config("tuning needs a non-empty validation partition".into()))?;
        let result = tune_on(&prepared.train, valid, &config.effective_params(), space, trials, config.seed)?;
        std::fs::create_dir_all(&config.out).map_err(io_err(&config.out))?;
        let path = config.out.join("trials.csv");
        std::fs::write(&path, result.trials_csv()).map_err(io_err(&path))?;
        Ok(result)
    })
}
