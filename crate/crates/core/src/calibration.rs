//! Per-camera scale correction estimated from subject heights.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{parse_key_values, FeatureError, GaitFeatureRow, LENGTH_FEATURES};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("person {person} appears in camera {camera} but not in reference camera {reference}")]
    Coverage { person: i64, camera: u32, reference: u32 },
    #[error("reference camera {0} has no calibration rows")]
    MissingReference(u32),
    #[error("mean height of person {person} in camera {camera} is not positive")]
    Degenerate { person: i64, camera: u32 },
    #[error("no correction factor for camera {0}")]
    MissingFactor(u32),
    #[error("calibration row without person id (video {video_id}, frame {frame_no})")]
    Unlabeled { video_id: String, frame_no: u64 },
    #[error("correction file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionTable {
    pub reference_camera: u32,
    pub factors: BTreeMap<u32, f64>,
    pub per_person_factors: BTreeMap<(i64, u32), f64>,
    pub method: String,
}

/// Sum of values in ascending order, so the result does not depend on the
/// order rows arrived in.
fn ordered_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Factor of camera C = mean over persons P seen in C of `H_PC / H_P,ref`,
/// where `H_PC` is the mean raw height of P in C.
pub fn estimate_correction_factors(rows: &[GaitFeatureRow], reference_camera: u32) -> Result<CorrectionTable, CalibrationError> {
    let mut heights: BTreeMap<(i64, u32), Vec<f64>> = BTreeMap::new();
    for r in rows {
        let person = r.person_id.ok_or_else(|| CalibrationError::Unlabeled {
            video_id: r.video_id.clone(),
            frame_no: r.frame_no,
        })?;
        heights.entry((person, r.camera_id)).or_default().push(r.height);
    }
    if !heights.keys().any(|&(_, c)| c == reference_camera) {
        return Err(CalibrationError::MissingReference(reference_camera));
    }
    let mut mean_height = BTreeMap::new();
    for (&(person, camera), hs) in heights.iter_mut() {
        let m = ordered_mean(hs);
        if !(m > 0.0 && m.is_finite()) {
            return Err(CalibrationError::Degenerate { person, camera });
        }
        mean_height.insert((person, camera), m);
    }

    let mut per_person_factors = BTreeMap::new();
    let mut by_camera: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (&(person, camera), &h) in &mean_height {
        let reference = mean_height.get(&(person, reference_camera)).ok_or(CalibrationError::Coverage {
            person,
            camera,
            reference: reference_camera,
        })?;
        let f = if camera == reference_camera { 1.0 } else { h / reference };
        per_person_factors.insert((person, camera), f);
        by_camera.entry(camera).or_default().push(f);
    }
    let factors = by_camera
        .into_iter()
        .map(|(camera, fs)| {
            let f = if camera == reference_camera {
                1.0
            } else {
                fs.iter().sum::<f64>() / fs.len() as f64
            };
            (camera, f)
        })
        .collect();
    Ok(CorrectionTable {
        reference_camera,
        factors,
        per_person_factors,
        method: "mean".into(),
    })
}

impl CorrectionTable {
    /// A table that leaves every listed camera unchanged.
    pub fn identity(reference_camera: u32, cameras: impl IntoIterator<Item = u32>) -> Self {
        let mut factors: BTreeMap<u32, f64> = cameras.into_iter().map(|c| (c, 1.0)).collect();
        factors.insert(reference_camera, 1.0);
        Self {
            reference_camera,
            factors,
            per_person_factors: BTreeMap::new(),
            method: "identity".into(),
        }
    }

    pub fn factor(&self, camera: u32) -> Result<f64, CalibrationError> {
        self.factors.get(&camera).copied().ok_or(CalibrationError::MissingFactor(camera))
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("reference={}\n", self.reference_camera);
        for (c, f) in &self.factors {
            s.push_str(&format!("camera.{c}={f:?}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, CalibrationError> {
        let kv = parse_key_values(text).map_err(|e| match e {
            FeatureError::Parse { row, message } => CalibrationError::Parse { line: row, message },
            other => CalibrationError::Parse {
                line: 0,
                message: other.to_string(),
            },
        })?;
        let mut reference = None;
        let mut factors = BTreeMap::new();
        for (key, (line, value)) in &kv {
            let bad = |message: String| CalibrationError::Parse { line: *line, message };
            if key == "reference" {
                reference = Some(value.parse::<u32>().map_err(|_| bad(format!("bad camera id {value:?}")))?);
            } else if let Some(c) = key.strip_prefix("camera.") {
                let c: u32 = c.parse().map_err(|_| bad(format!("bad camera id in {key:?}")))?;
                let f: f64 = value.parse().map_err(|_| bad(format!("bad factor {value:?}")))?;
                if !(f > 0.0 && f.is_finite()) {
                    return Err(bad(format!("factor {f} must be positive and finite")));
                }
                factors.insert(c, f);
            } else {
                return Err(bad(format!("unknown key {key:?}")));
            }
        }
        let reference_camera = reference.ok_or(CalibrationError::Parse {
            line: 0,
            message: "missing reference=<id>".into(),
        })?;
        if factors.get(&reference_camera) != Some(&1.0) {
            return Err(CalibrationError::Parse {
                line: 0,
                message: format!("reference camera {reference_camera} must have factor 1.0"),
            });
        }
        Ok(Self {
            reference_camera,
            factors,
            per_person_factors: BTreeMap::new(),
            method: "mean".into(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CalibrationError> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Divides the length features of each row by its camera's factor. Ratio
/// features pass through untouched.
pub fn apply_correction(rows: &[GaitFeatureRow], table: &CorrectionTable) -> Result<Vec<GaitFeatureRow>, CalibrationError> {
    rows.iter()
        .map(|r| {
            let f = table.factor(r.camera_id)?;
            let mut v = r.values();
            for i in LENGTH_FEATURES {
                v[i] /= f;
            }
            let mut out = r.clone();
            out.set_values(v);
            Ok(out)
        })
        .collect()
}
