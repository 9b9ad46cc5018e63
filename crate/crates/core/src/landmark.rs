//! Landmark CSV ingestion, frame validation and optional smoothing.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// Identifier columns that precede the coordinates in every CSV file.
pub const ID_COLUMNS: [&str; 4] = ["PERSON_ID", "CAMERA_ID", "VIDEO_ID", "FRAME_NO"];

/// The skeletal keypoints the gait features are computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Landmark {
    LeftEar,
    LeftShoulder,
    LeftElbow,
    LeftWrist,
    LeftHip,
    LeftKnee,
    LeftAnkle,
    LeftHeel,
    RightShoulder,
    RightHip,
    RightHeel,
    RightFootIndex,
}

impl Landmark {
    pub const ALL: [Landmark; 12] = [
        Landmark::LeftEar,
        Landmark::LeftShoulder,
        Landmark::LeftElbow,
        Landmark::LeftWrist,
        Landmark::LeftHip,
        Landmark::LeftKnee,
        Landmark::LeftAnkle,
        Landmark::LeftHeel,
        Landmark::RightShoulder,
        Landmark::RightHip,
        Landmark::RightHeel,
        Landmark::RightFootIndex,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Landmark::LeftEar => "LEFT_EAR",
            Landmark::LeftShoulder => "LEFT_SHOULDER",
            Landmark::LeftElbow => "LEFT_ELBOW",
            Landmark::LeftWrist => "LEFT_WRIST",
            Landmark::LeftHip => "LEFT_HIP",
            Landmark::LeftKnee => "LEFT_KNEE",
            Landmark::LeftAnkle => "LEFT_ANKLE",
            Landmark::LeftHeel => "LEFT_HEEL",
            Landmark::RightShoulder => "RIGHT_SHOULDER",
            Landmark::RightHip => "RIGHT_HIP",
            Landmark::RightHeel => "RIGHT_HEEL",
            Landmark::RightFootIndex => "RIGHT_FOOT_INDEX",
        }
    }

    pub fn x_column(self) -> String {
        format!("{}_X", self.name())
    }

    pub fn y_column(self) -> String {
        format!("{}_Y", self.name())
    }
}

impl fmt::Display for Landmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A 2-D point in normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Coordinates as read from a file; either half may be absent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RawPoint {
    pub x: Option<f64>,
    pub y: Option<f64>,
}

/// Common identifiers of per-frame records.
pub trait FrameRecord {
    fn person_id(&self) -> Option<i64>;
    fn camera_id(&self) -> u32;
    fn video_id(&self) -> &str;
    fn frame_no(&self) -> u64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkFrame {
    pub person_id: Option<i64>,
    pub camera_id: u32,
    pub video_id: String,
    pub frame_no: u64,
    pub landmarks: BTreeMap<Landmark, RawPoint>,
}

impl LandmarkFrame {
    pub fn new(person_id: Option<i64>, camera_id: u32, video_id: impl Into<String>, frame_no: u64) -> Self {
        Self {
            person_id,
            camera_id,
            video_id: video_id.into(),
            frame_no,
            landmarks: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, landmark: Landmark, p: Point) {
        self.landmarks.insert(
            landmark,
            RawPoint {
                x: Some(p.x),
                y: Some(p.y),
            },
        );
    }

    /// The landmark's position when both coordinates are present and finite.
    pub fn point(&self, landmark: Landmark) -> Option<Point> {
        match self.landmarks.get(&landmark)? {
            RawPoint {
                x: Some(x),
                y: Some(y),
            } if x.is_finite() && y.is_finite() => Some(Point::new(*x, *y)),
            _ => None,
        }
    }

    pub fn is_complete(&self) -> bool {
        Landmark::ALL.iter().all(|&l| self.point(l).is_some())
    }
}

impl FrameRecord for LandmarkFrame {
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub video_id: String,
    pub camera_id: u32,
    pub person_id: Option<i64>,
    pub frame_count: usize,
}

/// Rows in file order plus a per-video manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitDataset<R> {
    pub rows: Vec<R>,
    /// Videos in order of first appearance.
    pub manifest: Vec<VideoEntry>,
    pub schema_version: u32,
}

impl<R: FrameRecord> GaitDataset<R> {
    /// Builds the manifest, rejecting repeated `(video, frame)` pairs and
    /// videos whose rows disagree on camera or person.
    pub fn from_rows(rows: Vec<R>) -> Result<Self, LandmarkError> {
        let mut seen: HashSet<(&str, u64)> = HashSet::with_capacity(rows.len());
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut manifest: Vec<VideoEntry> = Vec::new();
        for r in &rows {
            if !seen.insert((r.video_id(), r.frame_no())) {
                return Err(LandmarkError::DuplicateFrame {
                    video_id: r.video_id().to_string(),
                    frame_no: r.frame_no(),
                });
            }
            match index.get(r.video_id()) {
                Some(&i) => {
                    let e = &mut manifest[i];
                    if e.camera_id != r.camera_id() || e.person_id != r.person_id() {
                        return Err(LandmarkError::InconsistentVideo(r.video_id().to_string()));
                    }
                    e.frame_count += 1;
                }
                None => {
                    index.insert(r.video_id(), manifest.len());
                    manifest.push(VideoEntry {
                        video_id: r.video_id().to_string(),
                        camera_id: r.camera_id(),
                        person_id: r.person_id(),
                        frame_count: 1,
                    });
                }
            }
        }
        Ok(Self {
            rows,
            manifest,
            schema_version: SCHEMA_VERSION,
        })
    }

    pub fn empty() -> Self {
        Self {
            rows: Vec::new(),
            manifest: Vec::new(),
            schema_version: SCHEMA_VERSION,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows belonging to the given videos, in file order.
    pub fn select_videos(&self, videos: &HashSet<&str>) -> Self
    where
        R: Clone,
    {
        let rows: Vec<R> = self.rows.iter().filter(|r| videos.contains(r.video_id())).cloned().collect();
        Self::from_rows(rows).expect("a subset of a valid dataset is valid")
    }
}

#[derive(Debug, Error)]
pub enum LandmarkError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("empty input: no header row")]
    Empty,
    #[error("missing required column {0}")]
    MissingColumn(String),
    #[error("row {row} (line {line}), column {column}: cannot parse {value:?}")]
    Parse {
        row: usize,
        line: u64,
        column: String,
        value: String,
    },
    #[error("duplicate frame {frame_no} in video {video_id}")]
    DuplicateFrame { video_id: String, frame_no: u64 },
    #[error("video {0} mixes cameras or persons")]
    InconsistentVideo(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

impl LandmarkError {
    /// 1-based data row the error refers to, if any.
    pub fn row(&self) -> Option<usize> {
        match self {
            LandmarkError::Parse { row, .. } => Some(*row),
            _ => None,
        }
    }
}

/// Column layout of a landmark CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub landmarks: Vec<Landmark>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            landmarks: Landmark::ALL.to_vec(),
        }
    }
}

impl CsvSchema {
    /// Header in write order: the id columns, then `X`/`Y` per landmark.
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ID_COLUMNS.iter().map(|s| s.to_string()).collect();
        for l in &self.landmarks {
            h.push(l.x_column());
            h.push(l.y_column());
        }
        h
    }
}

pub fn parse_landmark_csv(path: &Path, schema: &CsvSchema) -> Result<GaitDataset<LandmarkFrame>, LandmarkError> {
    let file = std::fs::File::open(path).map_err(|source| LandmarkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_landmark_csv(file, schema)
}

/// Parses landmark rows. Empty coordinate cells are kept as missing and
/// `NaN` cells as non-finite so that validation can report them.
pub fn read_landmark_csv<Rd: Read>(reader: Rd, schema: &CsvSchema) -> Result<GaitDataset<LandmarkFrame>, LandmarkError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(LandmarkError::Empty),
    };
    let position: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let column = |name: &str| position.get(name).copied().ok_or_else(|| LandmarkError::MissingColumn(name.to_string()));
    let ids: Vec<usize> = ID_COLUMNS.iter().map(|c| column(c)).collect::<Result<_, _>>()?;
    let coords: Vec<(Landmark, usize, usize)> = schema
        .landmarks
        .iter()
        .map(|&l| Ok((l, column(&l.x_column())?, column(&l.y_column())?)))
        .collect::<Result<_, LandmarkError>>()?;

    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        let row = i + 1;
        let line = rec.position().map_or(row as u64 + 1, |p| p.line());
        let cell = |idx: usize| rec.get(idx).unwrap_or("");
        let fail = |idx: usize| LandmarkError::Parse {
            row,
            line,
            column: header.get(idx).unwrap_or("?").to_string(),
            value: cell(idx).to_string(),
        };
        let person_id = match cell(ids[0]) {
            "" => None,
            s => Some(s.parse::<i64>().map_err(|_| fail(ids[0]))?),
        };
        let camera_id = cell(ids[1]).parse::<u32>().ok().filter(|&c| c >= 1).ok_or_else(|| fail(ids[1]))?;
        let video_id = cell(ids[2]);
        if video_id.is_empty() {
            return Err(fail(ids[2]));
        }
        let frame_no = cell(ids[3]).parse::<u64>().map_err(|_| fail(ids[3]))?;
        let coord = |idx: usize| -> Result<Option<f64>, LandmarkError> {
            match cell(idx) {
                "" => Ok(None),
                s => s.parse::<f64>().map(Some).map_err(|_| fail(idx)),
            }
        };
        let mut frame = LandmarkFrame::new(person_id, camera_id, video_id, frame_no);
        for &(l, xi, yi) in &coords {
            let p = RawPoint {
                x: coord(xi)?,
                y: coord(yi)?,
            };
            if p.x.is_some() || p.y.is_some() {
                frame.landmarks.insert(l, p);
            }
        }
        rows.push(frame);
    }
    GaitDataset::from_rows(rows)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_landmark_csv<W: Write>(dataset: &GaitDataset<LandmarkFrame>, schema: &CsvSchema, writer: W) -> Result<(), LandmarkError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(schema.header())?;
    for f in &dataset.rows {
        let mut rec = vec![
            f.person_id.map(|p| p.to_string()).unwrap_or_default(),
            f.camera_id.to_string(),
            f.video_id.clone(),
            f.frame_no.to_string(),
        ];
        for l in &schema.landmarks {
            let p = f.landmarks.get(l).copied().unwrap_or_default();
            rec.push(fmt_opt(p.x));
            rec.push(fmt_opt(p.y));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| LandmarkError::Io {
        path: "<output>".into(),
        source,
    })?;
    Ok(())
}

pub fn save_landmark_csv(dataset: &GaitDataset<LandmarkFrame>, path: &Path) -> Result<(), LandmarkError> {
    let file = std::fs::File::create(path).map_err(|source| LandmarkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_landmark_csv(dataset, &CsvSchema::default(), std::io::BufWriter::new(file))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    Drop(String),
}

/// Keeps a frame only when every canonical landmark has two finite
/// coordinates. The reason names the first offending column.
pub fn validate_frame(frame: &LandmarkFrame) -> Verdict {
    for l in Landmark::ALL {
        let p = frame.landmarks.get(&l).copied().unwrap_or_default();
        for (value, column) in [(p.x, l.x_column()), (p.y, l.y_column())] {
            match value {
                None => return Verdict::Drop(format!("missing {column}")),
                Some(v) if !v.is_finite() => return Verdict::Drop(format!("non-finite {column}")),
                Some(_) => {}
            }
        }
    }
    Verdict::Keep
}

/// Counts of kept and dropped rows, with drop reasons.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub total: usize,
    pub kept: usize,
    pub dropped: usize,
    pub reasons: BTreeMap<String, usize>,
}

impl IngestReport {
    pub fn record_drop(&mut self, reason: String) {
        self.dropped += 1;
        *self.reasons.entry(reason).or_default() += 1;
    }
}

/// Splits off the frames that fail [`validate_frame`].
pub fn filter_complete(dataset: GaitDataset<LandmarkFrame>) -> (GaitDataset<LandmarkFrame>, IngestReport) {
    let mut report = IngestReport {
        total: dataset.rows.len(),
        ..Default::default()
    };
    let mut kept = Vec::with_capacity(dataset.rows.len());
    for f in dataset.rows {
        match validate_frame(&f) {
            Verdict::Keep => kept.push(f),
            Verdict::Drop(reason) => report.record_drop(reason),
        }
    }
    report.kept = kept.len();
    let ds = GaitDataset::from_rows(kept).expect("a subset of a valid dataset is valid");
    (ds, report)
}

fn blend(alpha: f64, previous: f64, current: f64) -> f64 {
    if previous == current {
        current
    } else {
        alpha * previous + (1.0 - alpha) * current
    }
}

/// Blends `current` toward `previous`: `alpha * previous + (1 - alpha) * current`
/// per coordinate. Identifiers come from `current`.
pub fn smooth_landmarks(current: &LandmarkFrame, previous: &LandmarkFrame, alpha: f64) -> Result<LandmarkFrame, LandmarkError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(LandmarkError::Contract(format!("smoothing alpha {alpha} outside [0, 1]")));
    }
    if current.video_id != previous.video_id {
        return Err(LandmarkError::Contract(format!(
            "cannot smooth across videos {} and {}",
            previous.video_id, current.video_id
        )));
    }
    let mut out = LandmarkFrame::new(current.person_id, current.camera_id, current.video_id.clone(), current.frame_no);
    for l in Landmark::ALL {
        match (current.point(l), previous.point(l)) {
            (Some(c), Some(p)) => out.set(l, Point::new(blend(alpha, p.x, c.x), blend(alpha, p.y, c.y))),
            _ => return Err(LandmarkError::Contract(format!("frame {} lacks {l}", current.frame_no))),
        }
    }
    Ok(out)
}

/// Recursive smoothing within each video, in frame-number order. Each frame
/// is blended with the already smoothed frame before it. Frames must be
/// complete.
pub fn smooth_sequence(dataset: &GaitDataset<LandmarkFrame>, alpha: f64) -> Result<GaitDataset<LandmarkFrame>, LandmarkError> {
    if alpha == 0.0 {
        return Ok(dataset.clone());
    }
    let mut by_video: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, f) in dataset.rows.iter().enumerate() {
        by_video.entry(&f.video_id).or_default().push(i);
    }
    let mut rows = dataset.rows.clone();
    for idx in by_video.values_mut() {
        idx.sort_by_key(|&i| dataset.rows[i].frame_no);
        for w in 1..idx.len() {
            let smoothed = smooth_landmarks(&dataset.rows[idx[w]], &rows[idx[w - 1]], alpha)?;
            rows[idx[w]] = smoothed;
        }
    }
    GaitDataset::from_rows(rows)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn complete_frame(video: &str, frame_no: u64) -> LandmarkFrame {
        let mut f = LandmarkFrame::new(Some(1), 1, video, frame_no);
        for (i, l) in Landmark::ALL.iter().enumerate() {
            f.set(*l, Point::new(0.1 + 0.03 * i as f64, 0.05 + 0.07 * i as f64));
        }
        f
    }

    fn csv_text(rows: &[LandmarkFrame]) -> String {
        let ds = GaitDataset::from_rows(rows.to_vec()).unwrap();
        let mut buf = Vec::new();
        write_landmark_csv(&ds, &CsvSchema::default(), &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn header_has_twenty_eight_columns() {
        let h = CsvSchema::default().header();
        assert_eq!(h.len(), 28);
        assert_eq!(h[4], "LEFT_EAR_X");
        assert_eq!(h[27], "RIGHT_FOOT_INDEX_Y");
    }

    #[test]
    fn single_row_parses() {
        let text = csv_text(&[complete_frame("v1", 0)]);
        let ds = read_landmark_csv(text.as_bytes(), &CsvSchema::default()).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.manifest[0].frame_count, 1);
        assert!(ds.rows[0].is_complete());
    }

    #[test]
    fn missing_column_is_named() {
        let text = csv_text(&[complete_frame("v1", 0)]).replacen("LEFT_EAR_X", "SOMETHING_ELSE", 1);
        match read_landmark_csv(text.as_bytes(), &CsvSchema::default()) {
            Err(LandmarkError::MissingColumn(c)) => assert_eq!(c, "LEFT_EAR_X"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_cell_reports_location() {
        let mut text = csv_text(&[complete_frame("v1", 0), complete_frame("v1", 1)]);
        let lines: Vec<String> = text.lines().map(String::from).collect();
        let mut cells: Vec<String> = lines[2].split(',').map(String::from).collect();
        cells[14] = "abc".into();
        text = format!("{}\n{}\n{}\n", lines[0], lines[1], cells.join(","));
        let err = read_landmark_csv(text.as_bytes(), &CsvSchema::default()).unwrap_err();
        match &err {
            LandmarkError::Parse { row, line, column, value } => {
                assert_eq!((*row, *line), (2, 3));
                assert_eq!(column, "LEFT_KNEE_X");
                assert_eq!(value, "abc");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(err.row(), Some(2));
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(read_landmark_csv(&b""[..], &CsvSchema::default()), Err(LandmarkError::Empty)));
    }

    #[test]
    fn duplicate_frames_are_rejected() {
        let text = csv_text(&[complete_frame("v1", 3)]);
        let last = text.lines().last().unwrap().to_string();
        let doubled = format!("{text}{last}\n");
        assert!(matches!(
            read_landmark_csv(doubled.as_bytes(), &CsvSchema::default()),
            Err(LandmarkError::DuplicateFrame { .. })
        ));
    }

    #[test]
    fn validation_verdicts() {
        let f = complete_frame("v", 0);
        assert_eq!(validate_frame(&f), Verdict::Keep);

        let mut g = f.clone();
        g.landmarks.get_mut(&Landmark::LeftHeel).unwrap().y = None;
        assert_eq!(validate_frame(&g), Verdict::Drop("missing LEFT_HEEL_Y".into()));

        let mut h = f.clone();
        h.landmarks.get_mut(&Landmark::LeftKnee).unwrap().x = Some(f64::NAN);
        assert_eq!(validate_frame(&h), Verdict::Drop("non-finite LEFT_KNEE_X".into()));
    }

    #[test]
    fn ingest_report_balances() {
        let mut bad = complete_frame("v", 1);
        bad.landmarks.remove(&Landmark::RightHip);
        let ds = GaitDataset::from_rows(vec![complete_frame("v", 0), bad, complete_frame("v", 2)]).unwrap();
        let (kept, report) = filter_complete(ds);
        assert_eq!((report.total, report.kept, report.dropped), (3, 2, 1));
        assert_eq!(report.reasons["missing RIGHT_HIP_X"], 1);
        assert_eq!(kept.manifest[0].frame_count, 2);
    }

    #[test]
    fn smoothing_endpoints_and_midpoint() {
        let cur = complete_frame("v", 1);
        let mut prev = complete_frame("v", 0);
        for p in prev.landmarks.values_mut() {
            p.x = p.x.map(|x| x + 0.1);
        }
        assert_eq!(smooth_landmarks(&cur, &prev, 0.0).unwrap().landmarks, cur.landmarks);
        assert_eq!(smooth_landmarks(&cur, &prev, 1.0).unwrap().landmarks, prev.landmarks);

        let mut a = complete_frame("v", 1);
        let mut b = complete_frame("v", 0);
        a.set(Landmark::LeftEar, Point::new(0.4, 0.5));
        b.set(Landmark::LeftEar, Point::new(0.2, 0.5));
        let s = smooth_landmarks(&a, &b, 0.5).unwrap();
        let p = s.point(Landmark::LeftEar).unwrap();
        assert!((p.x - 0.3).abs() < 1e-12);
        assert_eq!(s.frame_no, 1);
    }

    #[test]
    fn smoothing_rejects_mixed_videos() {
        let a = complete_frame("v1", 1);
        let b = complete_frame("v2", 0);
        assert!(matches!(smooth_landmarks(&a, &b, 0.5), Err(LandmarkError::Contract(_))));
    }

    #[test]
    fn smoothing_identical_frames_is_identity() {
        let f = complete_frame("v", 0);
        for alpha in [0.0, 0.13, 0.5, 0.77, 1.0] {
            assert_eq!(smooth_landmarks(&f, &f, alpha).unwrap().landmarks, f.landmarks);
        }
    }
}
