//! Synthetic multi-person, multi-camera walking sequences with known truth.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::landmark::{GaitDataset, Landmark, LandmarkFrame, Point};

/// Camera scales used when none are given: the first four resemble a
/// typical four-camera installation, later cameras step up by 0.1.
pub const DEFAULT_CAMERA_SCALES: [f64; 4] = [1.0, 1.02, 1.78, 1.56];

/// Height levels available before profiles start repeating.
pub const HEIGHT_LEVELS: u32 = 8;

/// Order in which proportion levels are handed out, so that neighbours in
/// height are not also neighbours in build.
const PROPORTION_ORDER: [u32; 8] = [3, 6, 1, 4, 7, 2, 5, 0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonProfile {
    pub person_id: i64,
    pub base_height: f64,
    pub hand_ratio: f64,
    pub leg_ratio: f64,
    pub shoulder_ratio: f64,
    pub hip_ratio: f64,
    /// Gait phase advance per frame, radians.
    pub cadence: f64,
    /// Peak thigh swing angle, radians.
    pub step_amplitude: f64,
    /// Standard deviation of additive coordinate noise.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCameraSpec {
    pub camera_id: u32,
    pub scale: f64,
    pub frames: usize,
    pub dropout: f64,
}

impl SynthCameraSpec {
    pub fn new(camera_id: u32, scale: f64, frames: usize) -> Self {
        Self {
            camera_id,
            scale,
            frames,
            dropout: 0.0,
        }
    }
}

fn rng_for(seed: u64, domain: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}

/// Deterministic profile for `(seed, id)`. Persons `1..=8` get distinct
/// height levels `1.25 * spread` apart with jitter below `0.25 * spread`,
/// so their base heights differ by at least `spread`.
pub fn generate_person_profile(seed: u64, id: i64, spread: f64) -> PersonProfile {
    assert!(spread > 0.0, "spread must be positive");
    let mut rng = rng_for(seed, 1, id as u64);
    let level = (id - 1).rem_euclid(HEIGHT_LEVELS as i64) as u32;
    let order = PROPORTION_ORDER[level as usize] as f64;
    let s = spread.min(1.0);
    let mut prop = |base: f64, width: f64| base + width * s * (order + rng.random::<f64>()) / 8.0;
    let hand_ratio = prop(0.38, 0.25);
    let leg_ratio = prop(0.47, 0.25);
    let shoulder_ratio = prop(0.22, 0.15);
    let hip_ratio = prop(0.16, 0.10);
    PersonProfile {
        person_id: id,
        base_height: 0.35 + spread * (1.25 * level as f64 + 0.25 * rng.random::<f64>()),
        hand_ratio,
        leg_ratio,
        shoulder_ratio,
        hip_ratio,
        cadence: 2.0 * PI / (28.0 + 8.0 * rng.random::<f64>()),
        step_amplitude: 0.30 + 0.10 * rng.random::<f64>(),
        sigma: 0.0,
    }
}

fn along(origin: Point, length: f64, angle: f64) -> Point {
    Point::new(origin.x + length * angle.sin(), origin.y + length * angle.cos())
}

/// Noise-free pose at gait phase `phase`, body centred at `cx`, camera
/// scale 1. Segment lengths are the same in every pose.
pub fn pose(profile: &PersonProfile, phase: f64, cx: f64) -> Vec<(Landmark, Point)> {
    use Landmark::*;
    let h = profile.base_height;
    let leg = profile.leg_ratio * h;
    let (thigh, shin) = (0.52 * leg, 0.48 * leg);
    let hand = profile.hand_ratio * h;
    let (upper, lower) = (0.55 * hand, 0.45 * hand);
    let hip_w = profile.hip_ratio * h;
    let shoulder_w = profile.shoulder_ratio * h;
    let a = profile.step_amplitude;

    let hip = Point::new(cx, 0.1 + 0.5 * h);
    let leg_chain = |phi: f64, origin: Point| {
        let t = a * phi.sin();
        let s = 0.6 * t - 0.25 * a * (1.0 - phi.cos());
        let knee = along(origin, thigh, t);
        let ankle = along(knee, shin, s);
        let heel = Point::new(ankle.x - 0.03 * h, ankle.y + 0.02 * h);
        (knee, ankle, heel)
    };
    let (l_knee, l_ankle, l_heel) = leg_chain(phase, hip);
    let r_hip = Point::new(hip.x + hip_w, hip.y);
    let (_, _, r_heel) = leg_chain(phase + PI, r_hip);
    let r_toe = Point::new(r_heel.x + 0.12 * h, r_heel.y);

    let shoulder = Point::new(cx, hip.y - 0.3 * h);
    let swing = -0.6 * a * phase.sin();
    let elbow = along(shoulder, upper, swing);
    let wrist = along(elbow, lower, swing + 0.2);

    let dx = cx - l_heel.x;
    let ear = Point::new(cx, l_heel.y - (h * h - dx * dx).sqrt());

    vec![
        (LeftEar, ear),
        (LeftShoulder, shoulder),
        (LeftElbow, elbow),
        (LeftWrist, wrist),
        (LeftHip, hip),
        (LeftKnee, l_knee),
        (LeftAnkle, l_ankle),
        (LeftHeel, l_heel),
        (RightShoulder, Point::new(shoulder.x + shoulder_w, shoulder.y)),
        (RightHip, r_hip),
        (RightHeel, r_heel),
        (RightFootIndex, r_toe),
    ]
}

pub fn video_id(person: i64, camera: u32, video: usize) -> String {
    format!("p{person}_c{camera}_v{video}")
}

/// One walking video: every coordinate scaled by the camera, Gaussian noise
/// added, frames dropped independently with the camera's dropout rate.
pub fn render_video(profile: &PersonProfile, camera: &SynthCameraSpec, seed: u64, video: usize) -> Vec<LandmarkFrame> {
    let stream = ((profile.person_id as u64) << 40) ^ ((camera.camera_id as u64) << 20) ^ video as u64;
    let mut rng = rng_for(seed, 2, stream);
    let noise = Normal::new(0.0, profile.sigma.max(0.0)).expect("finite sigma");
    let start_phase = 2.0 * PI * rng.random::<f64>();
    let vid = video_id(profile.person_id, camera.camera_id, video);
    let mut frames = Vec::with_capacity(camera.frames);
    for t in 0..camera.frames {
        let phase = start_phase + profile.cadence * t as f64;
        let cx = 0.2 + 0.6 * t as f64 / camera.frames.max(1) as f64;
        let mut frame = LandmarkFrame::new(Some(profile.person_id), camera.camera_id, vid.clone(), t as u64);
        for (l, p) in pose(profile, phase, cx) {
            let mut q = Point::new(p.x * camera.scale, p.y * camera.scale);
            if profile.sigma > 0.0 {
                q.x += noise.sample(&mut rng);
                q.y += noise.sample(&mut rng);
            }
            frame.set(l, q);
        }
        let dropped = camera.dropout > 0.0 && rng.random::<f64>() < camera.dropout;
        if !dropped {
            frames.push(frame);
        }
    }
    frames
}

pub fn render_walk_sequence(profile: &PersonProfile, camera: &SynthCameraSpec, seed: u64) -> Vec<LandmarkFrame> {
    render_video(profile, camera, seed, 1)
}

/// Parameters the data was generated from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub persons: Vec<PersonProfile>,
    pub cameras: Vec<SynthCameraSpec>,
    pub videos_per_pair: usize,
    pub seed: u64,
}

impl SynthTruth {
    pub fn scale(&self, camera: u32) -> Option<f64> {
        self.cameras.iter().find(|c| c.camera_id == camera).map(|c| c.scale)
    }

    /// One row per person and per camera; unused cells are left empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "kind,id,base_height,hand_ratio,leg_ratio,shoulder_ratio,hip_ratio,cadence,step_amplitude,sigma,scale,frames,dropout\n",
        );
        for p in &self.persons {
            let _ = writeln!(
                s,
                "person,{},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},,,",
                p.person_id, p.base_height, p.hand_ratio, p.leg_ratio, p.shoulder_ratio, p.hip_ratio, p.cadence, p.step_amplitude, p.sigma
            );
        }
        for c in &self.cameras {
            let _ = writeln!(s, "camera,{},,,,,,,,,{:?},{},{:?}", c.camera_id, c.scale, c.frames, c.dropout);
        }
        s
    }
}

/// Renders `videos_per_pair` videos for every (person, camera) pair. Rows
/// are ordered by person, camera, video, frame regardless of thread count.
pub fn generate_multicamera_dataset(
    persons: &[PersonProfile],
    cameras: &[SynthCameraSpec],
    videos_per_pair: usize,
    seed: u64,
) -> (GaitDataset<LandmarkFrame>, SynthTruth) {
    let jobs: Vec<(&PersonProfile, &SynthCameraSpec, usize)> = persons
        .iter()
        .flat_map(|p| cameras.iter().flat_map(move |c| (1..=videos_per_pair).map(move |v| (p, c, v))))
        .collect();
    let rows: Vec<LandmarkFrame> = jobs
        .par_iter()
        .map(|&(p, c, v)| render_video(p, c, seed, v))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let dataset = GaitDataset::from_rows(rows).expect("generated ids are unique");
    let truth = SynthTruth {
        persons: persons.to_vec(),
        cameras: cameras.to_vec(),
        videos_per_pair,
        seed,
    };
    (dataset, truth)
}

/// Convenience settings for a whole synthetic scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub persons: usize,
    pub cameras: usize,
    pub frames: usize,
    pub videos_per_pair: usize,
    pub spread: f64,
    pub sigma: f64,
    pub dropout: f64,
    pub scales: Option<Vec<f64>>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            persons: 4,
            cameras: 4,
            frames: 200,
            videos_per_pair: 2,
            spread: 0.1,
            sigma: 0.005,
            dropout: 0.0,
            scales: None,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn camera_scale(&self, index: usize) -> f64 {
        match &self.scales {
            Some(s) => s[index],
            None => DEFAULT_CAMERA_SCALES.get(index).copied().unwrap_or(1.0 + 0.1 * index as f64),
        }
    }

    pub fn generate(&self) -> (GaitDataset<LandmarkFrame>, SynthTruth) {
        let persons: Vec<PersonProfile> = (1..=self.persons as i64)
            .map(|id| PersonProfile {
                sigma: self.sigma,
                ..generate_person_profile(self.seed, id, self.spread)
            })
            .collect();
        let cameras: Vec<SynthCameraSpec> = (0..self.cameras)
            .map(|i| SynthCameraSpec {
                camera_id: i as u32 + 1,
                scale: self.camera_scale(i),
                frames: self.frames,
                dropout: self.dropout,
            })
            .collect();
        generate_multicamera_dataset(&persons, &cameras, self.videos_per_pair, self.seed)
    }
}
