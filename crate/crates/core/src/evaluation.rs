//! Classification metrics, track voting and training benchmarks.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use gait_boost::{argmax, BoostError, Dataset, TrainParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Boost(#[from] BoostError),
}

/// Counts with rows indexed by true class and columns by predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<i64>,
    pub counts: Vec<Vec<u64>>,
    pub total: u64,
}

impl ConfusionMatrix {
    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn from_counts(labels: Vec<i64>, counts: Vec<Vec<u64>>) -> Result<Self, EvalError> {
        let k = labels.len();
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(EvalError::Contract(format!("confusion grid must be {k}x{k}")));
        }
        let total = counts.iter().flatten().sum();
        Ok(Self { labels, counts, total })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\pred");
        for l in &self.labels {
            let _ = write!(s, ",{l}");
        }
        s.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            let _ = write!(s, "{l}");
            for c in row {
                let _ = write!(s, ",{c}");
            }
            s.push('\n');
        }
        s
    }
}

pub fn confusion_matrix(predicted: &[i64], actual: &[i64], labels: &[i64]) -> Result<ConfusionMatrix, EvalError> {
    if predicted.len() != actual.len() {
        return Err(EvalError::Contract(format!(
            "{} predictions for {} true labels",
            predicted.len(),
            actual.len()
        )));
    }
    let index: BTreeMap<i64, usize> = labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let k = labels.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (p, a) in predicted.iter().zip(actual) {
        let lookup = |l: &i64| index.get(l).copied().ok_or_else(|| EvalError::Contract(format!("unknown label {l}")));
        counts[lookup(a)?][lookup(p)?] += 1;
    }
    Ok(ConfusionMatrix {
        labels: labels.to_vec(),
        counts,
        total: predicted.len() as u64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: i64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when a zero denominator forced a metric to 0.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub run: usize,
    pub seconds: f64,
    pub peak_mb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: usize,
    pub features: usize,
    pub iterations: usize,
    pub runs: Vec<BenchRun>,
    pub median_seconds: f64,
    pub median_peak_mb: f64,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("run,seconds,peak_mb\n");
        for r in &self.runs {
            let _ = writeln!(s, "{},{:?},{:?}", r.run, r.seconds, r.peak_mb);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub accuracy: f64,
    pub total: u64,
    pub classes: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub track_accuracy: Option<f64>,
    pub n_tracks: Option<usize>,
    pub bench: Option<BenchReport>,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

fn f1(p: f64, r: f64) -> (f64, bool) {
    if p + r == 0.0 {
        (0.0, true)
    } else {
        (2.0 * p * r / (p + r), false)
    }
}

pub fn classification_report(m: &ConfusionMatrix) -> Result<EvaluationReport, EvalError> {
    if m.total == 0 || m.n_classes() == 0 {
        return Err(EvalError::EmptyInput("confusion matrix has no scored rows".into()));
    }
    let k = m.n_classes();
    let (mut tp_sum, mut fp_sum, mut fn_sum) = (0u64, 0u64, 0u64);
    let mut classes = Vec::with_capacity(k);
    for i in 0..k {
        let tp = m.counts[i][i];
        let predicted: u64 = (0..k).map(|r| m.counts[r][i]).sum();
        let support: u64 = m.counts[i].iter().sum();
        let (precision, dp) = ratio(tp, predicted);
        let (recall, dr) = ratio(tp, support);
        let (f, df) = f1(precision, recall);
        tp_sum += tp;
        fp_sum += predicted - tp;
        fn_sum += support - tp;
        classes.push(ClassMetrics {
            label: m.labels[i],
            precision,
            recall,
            f1: f,
            support,
            degenerate: dp || dr || df,
        });
    }
    let mean = |f: fn(&ClassMetrics) -> f64| classes.iter().map(f).sum::<f64>() / k as f64;
    let micro_precision = ratio(tp_sum, tp_sum + fp_sum).0;
    let micro_recall = ratio(tp_sum, tp_sum + fn_sum).0;
    Ok(EvaluationReport {
        accuracy: m.trace() as f64 / m.total as f64,
        total: m.total,
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        micro_precision,
        micro_recall,
        micro_f1: f1(micro_precision, micro_recall).0,
        classes,
        track_accuracy: None,
        n_tracks: None,
        bench: None,
    })
}

impl EvaluationReport {
    /// Per-class rows plus macro and micro averages.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,precision,recall,f1,support\n");
        for c in &self.classes {
            let _ = writeln!(s, "{},{:?},{:?},{:?},{}", c.label, c.precision, c.recall, c.f1, c.support);
        }
        let _ = writeln!(s, "macro avg,{:?},{:?},{:?},{}", self.macro_precision, self.macro_recall, self.macro_f1, self.total);
        let _ = writeln!(s, "micro avg,{:?},{:?},{:?},{}", self.micro_precision, self.micro_recall, self.micro_f1, self.total);
        s
    }

    /// Fixed-width table for terminals.
    pub fn render(&self) -> String {
        let mut s = format!("{:>10} {:>10} {:>10} {:>10} {:>8}\n", "Class", "Precision", "Recall", "F1", "Support");
        let line = |s: &mut String, name: &str, p: f64, r: f64, f: f64, n: u64| {
            let _ = writeln!(s, "{name:>10} {p:>10.4} {r:>10.4} {f:>10.4} {n:>8}");
        };
        for c in &self.classes {
            line(&mut s, &c.label.to_string(), c.precision, c.recall, c.f1, c.support);
        }
        line(&mut s, "macro avg", self.macro_precision, self.macro_recall, self.macro_f1, self.total);
        line(&mut s, "micro avg", self.micro_precision, self.micro_recall, self.micro_f1, self.total);
        let _ = writeln!(s, "accuracy {:.4} over {} frames", self.accuracy, self.total);
        if let (Some(a), Some(n)) = (self.track_accuracy, self.n_tracks) {
            let _ = writeln!(s, "track accuracy {a:.4} over {n} tracks");
        }
        s
    }

    pub fn to_json(&self) -> Result<String, EvalError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Label with the most per-frame argmax votes. Ties go to the larger summed
/// score, then to the smaller label. `scores[f][k]` belongs to `labels[k]`.
pub fn majority_vote(scores: &[Vec<f64>], labels: &[i64]) -> Result<i64, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptyInput("track has no frames".into()));
    }
    let k = labels.len();
    let mut votes = vec![0usize; k];
    let mut mass = vec![0.0; k];
    for s in scores {
        if s.len() != k {
            return Err(EvalError::Contract(format!("frame scores have {} entries for {k} labels", s.len())));
        }
        votes[argmax(s)] += 1;
        for (m, v) in mass.iter_mut().zip(s) {
            *m += v;
        }
    }
    let best = (0..k)
        .max_by(|&a, &b| {
            votes[a]
                .cmp(&votes[b])
                .then(mass[a].total_cmp(&mass[b]))
                .then(labels[b].cmp(&labels[a]))
        })
        .expect("at least one label");
    Ok(labels[best])
}

/// Re-identification outcome for one (video, camera) track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackResult {
    pub video_id: String,
    pub camera_id: u32,
    pub frames: usize,
    pub true_person: Option<i64>,
    pub predicted_person: i64,
}

/// Groups frames by `(video_id, camera_id)` and votes within each group.
/// Tracks are returned sorted by key.
pub fn vote_tracks(
    keys: &[(String, u32)],
    true_labels: &[Option<i64>],
    scores: &[Vec<f64>],
    labels: &[i64],
) -> Result<Vec<TrackResult>, EvalError> {
    if keys.len() != scores.len() || keys.len() != true_labels.len() {
        return Err(EvalError::Contract("track keys, labels and scores differ in length".into()));
    }
    let mut groups: BTreeMap<(&str, u32), Vec<usize>> = BTreeMap::new();
    for (i, (v, c)) in keys.iter().enumerate() {
        groups.entry((v.as_str(), *c)).or_default().push(i);
    }
    groups
        .into_iter()
        .map(|((video, camera), idx)| {
            let frame_scores: Vec<Vec<f64>> = idx.iter().map(|&i| scores[i].clone()).collect();
            Ok(TrackResult {
                video_id: video.to_string(),
                camera_id: camera,
                frames: idx.len(),
                true_person: true_labels[idx[0]],
                predicted_person: majority_vote(&frame_scores, labels)?,
            })
        })
        .collect()
}

/// Fraction of labeled tracks whose vote matches the true person.
pub fn track_accuracy(tracks: &[TrackResult]) -> Option<f64> {
    let labeled: Vec<&TrackResult> = tracks.iter().filter(|t| t.true_person.is_some()).collect();
    if labeled.is_empty() {
        return None;
    }
    let hits = labeled.iter().filter(|t| t.true_person == Some(t.predicted_person)).count();
    Some(hits as f64 / labeled.len() as f64)
}

/// Current resident set size in bytes, when the platform exposes it.
pub fn resident_bytes() -> Option<u64> {
    let statm = std::fs::read_to_string("/proc/self/statm").ok()?;
    let pages: u64 = statm.split_whitespace().nth(1)?.parse().ok()?;
    Some(pages * 4096)
}

/// Samples RSS every `interval` until dropped; reports the peak above the
/// starting value.
struct MemorySampler {
    stop: Arc<AtomicBool>,
    handle: Option<std::thread::JoinHandle<u64>>,
    baseline: u64,
}

impl MemorySampler {
    fn start(interval: Duration) -> Self {
        let baseline = resident_bytes().unwrap_or(0);
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let handle = std::thread::spawn(move || {
            let mut peak = baseline;
            loop {
                peak = peak.max(resident_bytes().unwrap_or(0));
                if flag.load(Ordering::Relaxed) {
                    return peak;
                }
                std::thread::sleep(interval);
            }
        });
        Self {
            stop,
            handle: Some(handle),
            baseline,
        }
    }

    fn finish(mut self) -> u64 {
        self.stop.store(true, Ordering::Relaxed);
        let peak = self.handle.take().and_then(|h| h.join().ok()).unwrap_or(self.baseline);
        peak.saturating_sub(self.baseline)
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Trains `repetitions` times back to back, recording wall-clock time and
/// the peak resident-memory increase of each run.
pub fn benchmark_training(data: &Dataset, params: &TrainParams, repetitions: usize) -> Result<BenchReport, EvalError> {
    if repetitions == 0 {
        return Err(EvalError::Contract("repetitions must be at least 1".into()));
    }
    let mut runs = Vec::with_capacity(repetitions);
    for run in 1..=repetitions {
        let sampler = MemorySampler::start(Duration::from_millis(50));
        let start = Instant::now();
        let model = gait_boost::train(data, params)?;
        let seconds = start.elapsed().as_secs_f64();
        let peak = sampler.finish();
        drop(model);
        runs.push(BenchRun {
            run,
            seconds,
            peak_mb: peak as f64 / (1024.0 * 1024.0),
        });
    }
    let mut secs: Vec<f64> = runs.iter().map(|r| r.seconds).collect();
    let mut mbs: Vec<f64> = runs.iter().map(|r| r.peak_mb).collect();
    Ok(BenchReport {
        rows: data.n_rows(),
        features: data.features.n_cols(),
        iterations: params.num_iterations,
        median_seconds: median(&mut secs),
        median_peak_mb: median(&mut mbs),
        runs,
    })
}

/// Writes `report.csv`, `confusion.csv` and `report.json` into `dir`.
pub fn write_report_files(dir: &Path, report: &EvaluationReport, matrix: &ConfusionMatrix) -> Result<(), EvalError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.csv"), report.to_csv())?;
    std::fs::write(dir.join("confusion.csv"), matrix.to_csv())?;
    std::fs::write(dir.join("report.json"), report.to_json()?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_tallied_grid() {
        let m = confusion_matrix(&[0, 1, 0, 1], &[0, 0, 0, 1], &[0, 1]).unwrap();
        assert_eq!(m.counts, vec![vec![2, 1], vec![0, 1]]);
        let r = classification_report(&m).unwrap();
        assert_eq!(r.classes[0].precision, 1.0);
        assert_eq!(r.classes[0].recall, 2.0 / 3.0);
        assert!((r.classes[0].f1 - 0.8).abs() < 1e-12);
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.classes[1].support, 1);
    }

    #[test]
    fn perfect_and_constant_predictors() {
        let m = confusion_matrix(&[0, 1, 2], &[0, 1, 2], &[0, 1, 2]).unwrap();
        let r = classification_report(&m).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert!(r.classes.iter().all(|c| c.f1 == 1.0 && !c.degenerate));

        let m = confusion_matrix(&[0, 0, 0], &[0, 1, 2], &[0, 1, 2]).unwrap();
        assert!(m.counts.iter().all(|r| r[1] == 0 && r[2] == 0 && r[0] == 1));
        let r = classification_report(&m).unwrap();
        assert_eq!(r.classes[1].precision, 0.0);
        assert!(r.classes[1].degenerate);
    }

    #[test]
    fn contract_errors() {
        assert!(confusion_matrix(&[0], &[0, 1], &[0, 1]).is_err());
        assert!(confusion_matrix(&[5], &[0], &[0, 1]).is_err());
        let empty = ConfusionMatrix::from_counts(vec![0, 1], vec![vec![0, 0], vec![0, 0]]).unwrap();
        assert!(matches!(classification_report(&empty), Err(EvalError::EmptyInput(_))));
    }

    #[test]
    fn voting_rules() {
        let labels = [1, 2, 3];
        let frame = |k: usize| {
            let mut v = vec![0.1; 3];
            v[k] = 0.8;
            v
        };
        assert_eq!(majority_vote(&[frame(1), frame(1)], &labels).unwrap(), 2);
        assert_eq!(majority_vote(&[frame(0), frame(0), frame(2)], &labels).unwrap(), 1);
        // one vote each; summed scores 1.3 for the first label, 1.1 for the second
        let tie = [vec![1.0, 0.3], vec![0.3, 0.8]];
        assert_eq!(majority_vote(&tie, &[10, 20]).unwrap(), 10);
        let even = [vec![0.6, 0.4], vec![0.4, 0.6]];
        assert_eq!(majority_vote(&even, &[10, 20]).unwrap(), 10);
        assert!(majority_vote(&[], &labels).is_err());
    }

    #[test]
    fn tracks_group_by_video_and_camera() {
        let keys = vec![("a".to_string(), 1), ("a".to_string(), 1), ("b".to_string(), 2)];
        let truth = vec![Some(1), Some(1), Some(2)];
        let scores = vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.3, 0.7]];
        let tracks = vote_tracks(&keys, &truth, &scores, &[1, 2]).unwrap();
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[0].predicted_person, 1);
        assert_eq!(track_accuracy(&tracks), Some(1.0));
    }

    #[test]
    fn report_json_round_trip() {
        let m = confusion_matrix(&[0, 1, 1, 2, 2, 0], &[0, 1, 2, 2, 1, 0], &[0, 1, 2]).unwrap();
        let mut r = classification_report(&m).unwrap();
        r.track_accuracy = Some(2.0 / 3.0);
        r.n_tracks = Some(3);
        assert_eq!(EvaluationReport::from_json(&r.to_json().unwrap()).unwrap(), r);
        assert!(r.to_csv().starts_with("class,precision,recall,f1,support\n"));
        assert_eq!(m.to_csv().lines().count(), 4);
    }

    #[test]
    fn median_of_one_and_two() {
        assert_eq!(median(&mut [3.0]), 3.0);
        assert_eq!(median(&mut [4.0, 2.0]), 3.0);
    }
}
