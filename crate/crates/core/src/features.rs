//! Per-frame gait measurements, min-max normalization and correlation.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landmark::{FrameRecord, GaitDataset, IngestReport, Landmark, LandmarkError, LandmarkFrame, Point};

pub const FEATURE_NAMES: [&str; 7] = ["HEIGHT", "HAND", "LEG", "STEP_LENGTH", "FOOT_CLEARANCE", "BODY_WIDENESS", "SHR"];

/// Indices into [`FEATURE_NAMES`] of the features measured in image units.
pub const LENGTH_FEATURES: [usize; 5] = [0, 1, 2, 3, 4];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("zero hip width in video {video_id}, frame {frame_no}")]
    DegenerateHipWidth { video_id: String, frame_no: u64 },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Dataset(#[from] LandmarkError),
}

pub fn euclidean_distance(a: Point, b: Point) -> Result<f64, FeatureError> {
    if ![a.x, a.y, b.x, b.y].iter().all(|v| v.is_finite()) {
        return Err(FeatureError::Contract(format!("non-finite point in distance {a:?} {b:?}")));
    }
    Ok(((b.x - a.x).powi(2) + (b.y - a.y).powi(2)).sqrt())
}

/// Every intermediate length behind the feature vector of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitMeasurements {
    pub height: f64,
    pub upper_hand: f64,
    pub lower_hand: f64,
    pub hand: f64,
    pub thigh: f64,
    pub lower_leg: f64,
    pub leg: f64,
    pub step_length: f64,
    pub foot_clearance: f64,
    pub hip_wideness: f64,
    pub shoulder_wideness: f64,
}

pub fn measure(frame: &LandmarkFrame) -> Result<GaitMeasurements, FeatureError> {
    let p = |l: Landmark| {
        frame
            .point(l)
            .ok_or_else(|| FeatureError::Contract(format!("frame {} of {} lacks {l}", frame.frame_no, frame.video_id)))
    };
    use Landmark::*;
    let d = |a: Landmark, b: Landmark| euclidean_distance(p(a)?, p(b)?);
    let upper_hand = d(LeftShoulder, LeftElbow)?;
    let lower_hand = d(LeftElbow, LeftWrist)?;
    let thigh = d(LeftHip, LeftKnee)?;
    let lower_leg = d(LeftKnee, LeftAnkle)?;
    Ok(GaitMeasurements {
        height: d(LeftEar, LeftHeel)?,
        upper_hand,
        lower_hand,
        hand: upper_hand + lower_hand,
        thigh,
        lower_leg,
        leg: thigh + lower_leg,
        step_length: (p(LeftHeel)?.x - p(RightHeel)?.x).abs(),
        foot_clearance: (p(LeftHeel)?.x - p(RightFootIndex)?.x).abs(),
        hip_wideness: d(LeftHip, RightHip)?,
        shoulder_wideness: d(LeftShoulder, RightShoulder)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitFeatureRow {
    pub person_id: Option<i64>,
    pub camera_id: u32,
    pub video_id: String,
    pub frame_no: u64,
    pub height: f64,
    pub hand: f64,
    pub leg: f64,
    pub step_length: f64,
    pub foot_clearance: f64,
    pub body_wideness: f64,
    pub shr: f64,
}

impl GaitFeatureRow {
    /// Feature values in [`FEATURE_NAMES`] order.
    pub fn values(&self) -> [f64; 7] {
        [
            self.height,
            self.hand,
            self.leg,
            self.step_length,
            self.foot_clearance,
            self.body_wideness,
            self.shr,
        ]
    }

    pub fn set_values(&mut self, v: [f64; 7]) {
        [
            self.height,
            self.hand,
            self.leg,
            self.step_length,
            self.foot_clearance,
            self.body_wideness,
            self.shr,
        ] = v;
    }

    /// Model input vector; `dedupe_shr` drops the trailing duplicate ratio.
    pub fn feature_vector(&self, dedupe_shr: bool) -> Vec<f64> {
        let v = self.values();
        v[..feature_count(dedupe_shr)].to_vec()
    }
}

pub fn feature_count(dedupe_shr: bool) -> usize {
    if dedupe_shr {
        6
    } else {
        7
    }
}

pub fn feature_names(dedupe_shr: bool) -> Vec<String> {
    FEATURE_NAMES[..feature_count(dedupe_shr)].iter().map(|s| s.to_string()).collect()
}

impl FrameRecord for GaitFeatureRow {
    fn person_id(&self) -> Option<i64> {
        self.person_id
    }
    fn camera_id(&self) -> u32 {
        self.camera_id
    }
    fn video_id(&self) -> &str {
        &self.video_id
    }
    fn frame_no(&self) -> u64 {
        self.frame_no
    }
}

pub fn extract_features(frame: &LandmarkFrame) -> Result<GaitFeatureRow, FeatureError> {
    let m = measure(frame)?;
    if m.hip_wideness == 0.0 {
        return Err(FeatureError::DegenerateHipWidth {
            video_id: frame.video_id.clone(),
            frame_no: frame.frame_no,
        });
    }
    let ratio = m.shoulder_wideness / m.hip_wideness;
    Ok(GaitFeatureRow {
        person_id: frame.person_id,
        camera_id: frame.camera_id,
        video_id: frame.video_id.clone(),
        frame_no: frame.frame_no,
        height: m.height,
        hand: m.hand,
        leg: m.leg,
        step_length: m.step_length,
        foot_clearance: m.foot_clearance,
        body_wideness: ratio,
        shr: ratio,
    })
}

/// Extracts features from complete frames in parallel, keeping input order.
/// Frames with zero hip width are dropped and counted in the report.
pub fn extract_all(dataset: &GaitDataset<LandmarkFrame>) -> Result<(GaitDataset<GaitFeatureRow>, IngestReport), FeatureError> {
    let results: Vec<Result<GaitFeatureRow, FeatureError>> = dataset.rows.par_iter().map(extract_features).collect();
    let mut report = IngestReport {
        total: results.len(),
        ..Default::default()
    };
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(FeatureError::DegenerateHipWidth { .. }) => report.record_drop("zero hip width".into()),
            Err(e) => return Err(e),
        }
    }
    report.kept = rows.len();
    Ok((GaitDataset::from_rows(rows)?, report))
}

/// Per-feature extrema from the fitting split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub min: [f64; 7],
    pub max: [f64; 7],
}

impl NormalizationStats {
    /// Whether feature `i` was constant on the fitting split.
    pub fn is_degenerate(&self, i: usize) -> bool {
        self.max[i] == self.min[i]
    }

    pub fn degenerate_features(&self) -> Vec<&'static str> {
        (0..7).filter(|&i| self.is_degenerate(i)).map(|i| FEATURE_NAMES[i]).collect()
    }

    pub fn apply(&self, values: [f64; 7]) -> [f64; 7] {
        std::array::from_fn(|i| {
            if self.max[i] > self.min[i] {
                (values[i] - self.min[i]) / (self.max[i] - self.min[i])
            } else {
                0.0
            }
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, name) in FEATURE_NAMES.iter().enumerate() {
            s.push_str(&format!("{name}.min={:?}\n{name}.max={:?}\n", self.min[i], self.max[i]));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, FeatureError> {
        let kv = parse_key_values(text)?;
        let get = |key: String| -> Result<f64, FeatureError> {
            let (line, v) = kv.get(&key).ok_or_else(|| FeatureError::Parse {
                row: 0,
                message: format!("missing key {key}"),
            })?;
            v.parse().map_err(|_| FeatureError::Parse {
                row: *line,
                message: format!("bad number {v:?} for {key}"),
            })
        };
        let mut stats = NormalizationStats {
            min: [0.0; 7],
            max: [0.0; 7],
        };
        for (i, name) in FEATURE_NAMES.iter().enumerate() {
            stats.min[i] = get(format!("{name}.min"))?;
            stats.max[i] = get(format!("{name}.max"))?;
            if !(stats.max[i] >= stats.min[i]) {
                return Err(FeatureError::Parse {
                    row: 0,
                    message: format!("{name}: max below min"),
                });
            }
        }
        if kv.len() != 14 {
            return Err(FeatureError::Parse {
                row: 0,
                message: "unexpected keys in normalization file".into(),
            });
        }
        Ok(stats)
    }

    pub fn save(&self, path: &Path) -> Result<(), FeatureError> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// `key=value` lines; blank lines and `#` comments skipped. Values carry
/// their 1-based line number.
pub(crate) fn parse_key_values(text: &str) -> Result<BTreeMap<String, (usize, String)>, FeatureError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| FeatureError::Parse {
            row: i + 1,
            message: format!("expected key=value, got {line:?}"),
        })?;
        if out.insert(k.trim().to_string(), (i + 1, v.trim().to_string())).is_some() {
            return Err(FeatureError::Parse {
                row: i + 1,
                message: format!("duplicate key {}", k.trim()),
            });
        }
    }
    Ok(out)
}

pub fn fit_normalization(rows: &[GaitFeatureRow]) -> Result<NormalizationStats, FeatureError> {
    if rows.is_empty() {
        return Err(FeatureError::EmptyInput("no rows to fit normalization on".into()));
    }
    let mut stats = NormalizationStats {
        min: [f64::INFINITY; 7],
        max: [f64::NEG_INFINITY; 7],
    };
    for r in rows {
        for (i, v) in r.values().into_iter().enumerate() {
            stats.min[i] = stats.min[i].min(v);
            stats.max[i] = stats.max[i].max(v);
        }
    }
    Ok(stats)
}

pub fn normalize_features(rows: &[GaitFeatureRow], stats: &NormalizationStats) -> Vec<GaitFeatureRow> {
    rows.iter()
        .map(|r| {
            let mut out = r.clone();
            out.set_values(stats.apply(r.values()));
            out
        })
        .collect()
}

/// Pearson correlation of two equal-length samples; `None` when either is
/// constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len(), "pearson needs equal-length samples");
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Symmetric Pearson matrix over the seven features. Entries involving a
/// constant feature are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub names: Vec<&'static str>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| *n == a)?;
        let j = self.names.iter().position(|n| *n == b)?;
        self.values[i][j]
    }
}

pub fn feature_correlation(rows: &[GaitFeatureRow]) -> Result<CorrelationMatrix, FeatureError> {
    if rows.len() < 2 {
        return Err(FeatureError::EmptyInput("correlation needs at least 2 rows".into()));
    }
    let columns: Vec<Vec<f64>> = (0..7).map(|i| rows.iter().map(|r| r.values()[i]).collect()).collect();
    let constant: Vec<bool> = columns.iter().map(|c| c.iter().all(|&v| v == c[0])).collect();
    if constant.iter().all(|&c| c) {
        return Err(FeatureError::EmptyInput("every feature is constant".into()));
    }
    let mut values = vec![vec![None; 7]; 7];
    for i in 0..7 {
        if constant[i] {
            continue;
        }
        values[i][i] = Some(1.0);
        for j in i + 1..7 {
            if !constant[j] {
                let r = pearson(&columns[i], &columns[j]);
                values[i][j] = r;
                values[j][i] = r;
            }
        }
    }
    Ok(CorrelationMatrix {
        names: FEATURE_NAMES.to_vec(),
        values,
    })
}

pub fn write_feature_csv<W: Write>(rows: &[GaitFeatureRow], writer: W) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["PERSON_ID", "CAMERA_ID", "VIDEO_ID", "FRAME_NO"];
    header.extend(FEATURE_NAMES);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.person_id.map(|p| p.to_string()).unwrap_or_default(),
            r.camera_id.to_string(),
            r.video_id.clone(),
            r.frame_no.to_string(),
        ];
        rec.extend(r.values().iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_csv<R: Read>(reader: R) -> Result<GaitDataset<GaitFeatureRow>, FeatureError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let mut expected = vec!["PERSON_ID", "CAMERA_ID", "VIDEO_ID", "FRAME_NO"];
    expected.extend(FEATURE_NAMES);
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(FeatureError::Parse {
            row: 0,
            message: format!("feature CSV header must be {}", expected.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let bad = |col: usize| FeatureError::Parse {
            row,
            message: format!("cannot parse {} value {:?}", expected[col], &rec[col]),
        };
        let person_id = match &rec[0] {
            "" => None,
            s => Some(s.parse().map_err(|_| bad(0))?),
        };
        let mut values = [0.0; 7];
        for (k, v) in values.iter_mut().enumerate() {
            *v = rec[4 + k].parse().map_err(|_| bad(4 + k))?;
        }
        let mut r = GaitFeatureRow {
            person_id,
            camera_id: rec[1].parse().map_err(|_| bad(1))?,
            video_id: rec[2].to_string(),
            frame_no: rec[3].parse().map_err(|_| bad(3))?,
            height: 0.0,
            hand: 0.0,
            leg: 0.0,
            step_length: 0.0,
            foot_clearance: 0.0,
            body_wideness: 0.0,
            shr: 0.0,
        };
        r.set_values(values);
        rows.push(r);
    }
    Ok(GaitDataset::from_rows(rows)?)
}

pub fn save_feature_csv(rows: &[GaitFeatureRow], path: &Path) -> Result<(), FeatureError> {
    let file = std::fs::File::create(path)?;
    write_feature_csv(rows, std::io::BufWriter::new(file))
}

pub fn load_feature_csv(path: &Path) -> Result<GaitDataset<GaitFeatureRow>, FeatureError> {
    read_feature_csv(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landmark::tests::complete_frame;

    fn row(values: [f64; 7]) -> GaitFeatureRow {
        let mut r = extract_features(&complete_frame("v", 0)).unwrap();
        r.set_values(values);
        r
    }

    #[test]
    fn distance_examples() {
        let d = |a: (f64, f64), b: (f64, f64)| euclidean_distance(Point::new(a.0, a.1), Point::new(b.0, b.1)).unwrap();
        assert_eq!(d((0.0, 0.0), (0.0, 0.0)), 0.0);
        assert_eq!(d((0.0, 0.0), (3.0, 4.0)), 5.0);
        assert!((d((0.1, 0.2), (0.4, 0.6)) - 0.5).abs() < 1e-12);
        assert!(euclidean_distance(Point::new(f64::NAN, 0.0), Point::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn coincident_ear_and_heel_give_zero_height() {
        let mut f = complete_frame("v", 0);
        let heel = f.point(Landmark::LeftHeel).unwrap();
        f.set(Landmark::LeftEar, heel);
        assert_eq!(extract_features(&f).unwrap().height, 0.0);
    }

    #[test]
    fn foot_clearance_uses_x_only() {
        let mut f = complete_frame("v", 0);
        f.set(Landmark::LeftHeel, Point::new(0.30, 0.9));
        f.set(Landmark::RightFootIndex, Point::new(0.42, 0.1));
        assert!((extract_features(&f).unwrap().foot_clearance - 0.12).abs() < 1e-12);
    }

    #[test]
    fn equal_widths_give_unit_ratios() {
        let mut f = complete_frame("v", 0);
        f.set(Landmark::LeftShoulder, Point::new(0.4, 0.3));
        f.set(Landmark::RightShoulder, Point::new(0.5, 0.3));
        f.set(Landmark::LeftHip, Point::new(0.4, 0.5));
        f.set(Landmark::RightHip, Point::new(0.5, 0.5));
        let r = extract_features(&f).unwrap();
        assert_eq!((r.body_wideness, r.shr), (1.0, 1.0));
    }

    #[test]
    fn zero_hip_width_is_degenerate() {
        let mut f = complete_frame("v", 0);
        let hip = f.point(Landmark::LeftHip).unwrap();
        f.set(Landmark::RightHip, hip);
        assert!(matches!(extract_features(&f), Err(FeatureError::DegenerateHipWidth { .. })));
        let ds = GaitDataset::from_rows(vec![f, complete_frame("v", 1)]).unwrap();
        let (out, report) = extract_all(&ds).unwrap();
        assert_eq!((out.len(), report.dropped), (1, 1));
    }

    #[test]
    fn incomplete_frame_is_a_contract_violation() {
        let mut f = complete_frame("v", 0);
        f.landmarks.remove(&Landmark::LeftWrist);
        assert!(matches!(extract_features(&f), Err(FeatureError::Contract(_))));
    }

    #[test]
    fn sums_are_exact() {
        let m = measure(&complete_frame("v", 0)).unwrap();
        assert_eq!(m.hand, m.upper_hand + m.lower_hand);
        assert_eq!(m.leg, m.thigh + m.lower_leg);
    }

    #[test]
    fn normalization_examples() {
        let one = row([0.2, 0.3, 0.4, 0.1, 0.1, 1.2, 1.2]);
        let s = fit_normalization(std::slice::from_ref(&one)).unwrap();
        assert_eq!(s.min, one.values());
        assert_eq!(s.max, one.values());
        assert_eq!(s.degenerate_features().len(), 7);

        let two = row([0.6, 0.3, 0.8, 0.3, 0.2, 1.4, 1.4]);
        let s = fit_normalization(&[one.clone(), two.clone()]).unwrap();
        assert_eq!((s.min[0], s.max[0]), (0.2, 0.6));
        assert!(s.is_degenerate(1));
        let n = normalize_features(&[one, two], &s);
        assert_eq!(n[0].height, 0.0);
        assert_eq!(n[1].height, 1.0);
        assert_eq!(n[0].hand, 0.0);
        let mid = s.apply([0.4, 0.3, 0.6, 0.2, 0.15, 1.3, 1.3]);
        assert!((mid[0] - 0.5).abs() < 1e-12);
        assert!(fit_normalization(&[]).is_err());
    }

    #[test]
    fn normalization_text_round_trip() {
        let s = fit_normalization(&[row([0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]), row([1.0 / 3.0, 0.9, 0.8, 0.7, 0.6, 0.9, 0.9])]).unwrap();
        assert_eq!(NormalizationStats::from_text(&s.to_text()).unwrap(), s);
        assert!(NormalizationStats::from_text("HEIGHT.min=0\n").is_err());
    }

    #[test]
    fn correlation_markers() {
        let rows: Vec<GaitFeatureRow> = (0..5)
            .map(|i| {
                let x = i as f64;
                row([x, -x, 2.0 * x + 1.0, 0.5, x * x, 1.0, 1.0])
            })
            .collect();
        let c = feature_correlation(&rows).unwrap();
        assert_eq!(c.get("HEIGHT", "HEIGHT"), Some(1.0));
        assert!((c.get("HEIGHT", "HAND").unwrap() + 1.0).abs() < 1e-12);
        assert!((c.get("HEIGHT", "LEG").unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(c.get("STEP_LENGTH", "STEP_LENGTH"), None);
        assert_eq!(c.get("HEIGHT", "SHR"), None);
        assert!(feature_correlation(&rows[..1]).is_err());
    }

    #[test]
    fn feature_csv_round_trip() {
        let ds = GaitDataset::from_rows(vec![complete_frame("a", 0), complete_frame("a", 1)]).unwrap();
        let (feats, _) = extract_all(&ds).unwrap();
        let mut buf = Vec::new();
        write_feature_csv(&feats.rows, &mut buf).unwrap();
        let back = read_feature_csv(buf.as_slice()).unwrap();
        assert_eq!(back.rows, feats.rows);
    }

    #[test]
    fn dedupe_drops_only_shr() {
        let r = row([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 6.0]);
        assert_eq!(r.feature_vector(true), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(r.feature_vector(false).len(), 7);
        assert_eq!(feature_names(true).last().unwrap(), "BODY_WIDENESS");
    }
}
