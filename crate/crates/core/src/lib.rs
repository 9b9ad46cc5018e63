//! Gait-based person re-identification across non-overlapping cameras.
//!
//! Landmark CSVs are validated, turned into per-frame gait features,
//! rescaled per camera, normalized and fed to a boosted tree classifier.
//! Frame predictions are pooled per track by majority vote.

pub mod calibration;
pub mod evaluation;
pub mod features;
pub mod landmark;
pub mod synth;
pub mod pipeline;
