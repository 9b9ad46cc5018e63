use std::path::{Path, PathBuf};

use gait_boost::TrainParams;
use gait_reid::calibration::{estimate_correction_factors, CorrectionTable};
use gait_reid::features::{fit_normalization, NormalizationStats};
use gait_reid::landmark::save_landmark_csv;
use gait_reid::pipeline::{
    load_features, run_evaluate, run_train, split_dataset, tune_hyperparameters, ModelBundle, Partition, PipelineConfig,
    PipelineError, SearchSpace, SplitSpec,
};
use gait_reid::synth::SynthConfig;
use tempfile::TempDir;

fn write_synth(dir: &Path, cfg: &SynthConfig) -> PathBuf {
    let path = dir.join("walks.csv");
    save_landmark_csv(&cfg.generate().0, &path).unwrap();
    path
}

fn small_synth(spread: f64, seed: u64) -> SynthConfig {
    SynthConfig {
        persons: 4,
        cameras: 2,
        frames: 60,
        videos_per_pair: 3,
        spread,
        sigma: 0.005,
        seed,
        ..Default::default()
    }
}

fn held_out_v3() -> SplitSpec {
    let mut test = Vec::new();
    for p in 1..=4 {
        for c in 1..=2 {
            test.push(format!("p{p}_c{c}_v3"));
        }
    }
    SplitSpec {
        test_videos: test,
        ..Default::default()
    }
}

fn config(dir: &TempDir, input: PathBuf) -> PipelineConfig {
    PipelineConfig {
        inputs: vec![input],
        out: dir.path().join("out"),
        seed: 5,
        split: held_out_v3(),
        params: TrainParams {
            num_iterations: 30,
            ..TrainParams::gait_tuned()
        },
        ..Default::default()
    }
}

#[test]
fn train_writes_reloadable_artifacts_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_synth(dir.path(), &small_synth(0.1, 1));
    let cfg = config(&dir, input);
    let out = run_train(&cfg).unwrap();
    for p in [&out.paths.model, &out.paths.correction, &out.paths.normalization, &out.paths.train_log] {
        assert!(p.exists(), "{} missing", p.display());
    }
    let bundle = ModelBundle::load(&out.paths.model).unwrap();
    assert_eq!(bundle.model, out.model);
    assert_eq!(bundle.preprocessor.correction.factors, out.preprocessor.correction.factors);
    let log = std::fs::read_to_string(&out.paths.train_log).unwrap();
    assert_eq!(log.lines().count(), 31);
    assert_eq!(out.row_counts.iter().sum::<usize>(), 4 * 2 * 3 * 60);

    let first = std::fs::read(&out.paths.model).unwrap();
    run_train(&cfg).unwrap();
    assert_eq!(std::fs::read(&out.paths.model).unwrap(), first);
}

#[test]
fn statistics_come_from_the_training_split_only() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_synth(dir.path(), &small_synth(0.1, 2));
    let cfg = config(&dir, input);
    let out = run_train(&cfg).unwrap();

    let (features, _) = load_features(&cfg).unwrap();
    let parts = split_dataset(&features, &cfg.split, cfg.seed).unwrap();
    let table = estimate_correction_factors(&parts.train.rows, 1).unwrap();
    let saved = CorrectionTable::load(&out.paths.correction).unwrap();
    assert_eq!(saved.factors, table.factors);
    let corrected = gait_reid::calibration::apply_correction(&parts.train.rows, &table).unwrap();
    let stats = fit_normalization(&corrected).unwrap();
    assert_eq!(NormalizationStats::load(&out.paths.normalization).unwrap(), stats);
    assert!(parts.test.rows.iter().all(|r| r.video_id.ends_with("_v3")));
}

#[test]
fn training_split_resubstitution_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_synth(dir.path(), &small_synth(0.3, 3));
    let mut cfg = config(&dir, input);
    cfg.params.num_iterations = 60;
    let out = run_train(&cfg).unwrap();
    let eval = run_evaluate(&cfg, &out.paths.model, Partition::Train).unwrap();
    assert_eq!(eval.report.accuracy, 1.0);
    assert_eq!(eval.report.track_accuracy, Some(1.0));
    for f in ["report.csv", "confusion.csv", "report.json", "tracks.csv"] {
        assert!(cfg.out.join(f).exists());
    }
}

#[test]
fn corrupted_row_names_stage_and_row() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_synth(dir.path(), &small_synth(0.1, 4));
    let text = std::fs::read_to_string(&input).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[7] = lines[7].replacen(",0.", ",zz", 1);
    std::fs::write(&input, lines.join("\n")).unwrap();
    let err = run_train(&config(&dir, input)).unwrap_err();
    assert_eq!(err.stage(), Some("landmark_io"));
    assert_eq!(err.exit_code(), 3);
    let msg = err.to_string();
    assert!(msg.contains("landmark_io") && msg.contains("row 7"), "{msg}");
}

#[test]
fn unknown_camera_at_evaluation_is_a_missing_factor() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_synth(dir.path(), &small_synth(0.1, 5));
    let cfg = config(&dir, input);
    let out = run_train(&cfg).unwrap();

    let extra = SynthConfig {
        cameras: 3,
        ..small_synth(0.1, 5)
    };
    let wider = dir.path().join("wider.csv");
    save_landmark_csv(&extra.generate().0, &wider).unwrap();
    let mut eval_cfg = cfg.clone();
    eval_cfg.inputs = vec![wider];
    eval_cfg.split.test_videos.push("p1_c3_v3".into());
    let err = run_evaluate(&eval_cfg, &out.paths.model, Partition::Test).unwrap_err();
    assert_eq!(err.stage(), Some("camera_calibration"));
    assert!(err.to_string().contains("camera 3"), "{err}");
}

#[test]
fn feature_layout_mismatch_is_a_compatibility_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_synth(dir.path(), &small_synth(0.1, 6));
    let cfg = config(&dir, input);
    let out = run_train(&cfg).unwrap();
    let mut other = cfg.clone();
    other.dedupe_shr = true;
    let err = run_evaluate(&other, &out.paths.model, Partition::Test).unwrap_err();
    assert!(matches!(err, PipelineError::Compatibility(_)));
    assert_eq!(err.exit_code(), 4);

    let text = std::fs::read_to_string(&out.paths.model).unwrap().replacen("\"format_version\": 1", "\"format_version\": 9", 1);
    std::fs::write(&out.paths.model, text).unwrap();
    assert_eq!(ModelBundle::load(&out.paths.model).err().unwrap().exit_code(), 4);
}

#[test]
fn tuning_examples() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_synth(dir.path(), &small_synth(0.05, 7));
    let mut cfg = config(&dir, input);
    cfg.params.num_iterations = 10;

    let one = tune_hyperparameters(&cfg, &SearchSpace::default(), 1).unwrap();
    assert_eq!(one.trials.len(), 1);
    assert_eq!(one.best, one.trials[0].params);

    let tuned = TrainParams {
        num_iterations: 10,
        ..TrainParams::gait_tuned()
    };
    let pinned = tune_hyperparameters(&cfg, &SearchSpace::pinned(&tuned), 2).unwrap();
    assert_eq!(pinned.best.num_leaves, 87);
    assert_eq!(pinned.best.learning_rate, 0.0883);
    assert_eq!(pinned.best.colsample_bytree, 0.8652);
    assert_eq!(pinned.best.subsample, 0.8389);
    assert_eq!(pinned.best.subsample_freq, 10);
    assert_eq!(pinned.best.min_child_samples, 18);

    let many = tune_hyperparameters(&cfg, &SearchSpace::default(), 20).unwrap();
    assert!(many.trials.iter().all(|t| many.best_loss <= t.valid_loss));
    assert_eq!(std::fs::read_to_string(cfg.out.join("trials.csv")).unwrap().lines().count(), 21);
    let again = tune_hyperparameters(&cfg, &SearchSpace::default(), 20).unwrap();
    assert_eq!(again.trials, many.trials);

    let empty = SearchSpace {
        subsample: (0.9, 0.2),
        ..Default::default()
    };
    assert_eq!(tune_hyperparameters(&cfg, &empty, 3).unwrap_err().exit_code(), 2);
}

#[test]
fn larger_spread_never_lowers_accuracy() {
    let mut accuracies = Vec::new();
    for spread in [0.002, 0.02, 0.2] {
        let dir = tempfile::tempdir().unwrap();
        let input = write_synth(dir.path(), &SynthConfig { sigma: 0.01, ..small_synth(spread, 8) });
        let cfg = config(&dir, input);
        let out = run_train(&cfg).unwrap();
        accuracies.push(run_evaluate(&cfg, &out.paths.model, Partition::Test).unwrap().report.accuracy);
    }
    assert!(accuracies.windows(2).all(|w| w[1] >= w[0]), "{accuracies:?}");
}

#[test]
fn config_file_paths_are_relative_to_the_file() {
    let dir = tempfile::tempdir().unwrap();
    write_synth(dir.path(), &small_synth(0.1, 9));
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "inputs = [\"walks.csv\"]\nout = \"artifacts\"\nseed = 3\n[split]\ntest_fraction = 0.25\n[params]\nnum_iterations = 4\n").unwrap();
    let cfg = PipelineConfig::load(&path).unwrap();
    assert_eq!(cfg.inputs[0], dir.path().join("walks.csv"));
    assert_eq!(cfg.out, dir.path().join("artifacts"));
    assert_eq!(cfg.effective_params().seed, 3);
    assert!(PipelineConfig::load(&dir.path().join("absent.toml")).is_err());
}
