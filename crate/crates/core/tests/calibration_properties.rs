use gait_reid::calibration::{apply_correction, estimate_correction_factors, CorrectionTable};
use gait_reid::features::{extract_all, GaitFeatureRow};
use gait_reid::landmark::filter_complete;
use gait_reid::synth::SynthConfig;
use proptest::prelude::*;

fn rows(scales: Vec<f64>, sigma: f64, seed: u64) -> Vec<GaitFeatureRow> {
    let cfg = SynthConfig {
        persons: 3,
        cameras: scales.len(),
        frames: 40,
        videos_per_pair: 1,
        sigma,
        scales: Some(scales),
        seed,
        ..Default::default()
    };
    let (ds, _) = cfg.generate();
    extract_all(&filter_complete(ds).0).unwrap().0.rows
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn noiseless_scales_are_recovered(s2 in 0.5f64..2.5, s3 in 0.5f64..2.5, seed in 0u64..100) {
        let t = estimate_correction_factors(&rows(vec![1.0, s2, s3], 0.0, seed), 1).unwrap();
        prop_assert!((t.factors[&2] - s2).abs() <= 1e-12 * s2);
        prop_assert!((t.factors[&3] - s3).abs() <= 1e-12 * s3);
    }

    #[test]
    fn correction_then_estimation_gives_unit_factors(s2 in 0.5f64..2.5, seed in 0u64..100) {
        let data = rows(vec![1.0, s2], 0.004, seed);
        let t = estimate_correction_factors(&data, 1).unwrap();
        let corrected = apply_correction(&data, &t).unwrap();
        let again = estimate_correction_factors(&corrected, 1).unwrap();
        for f in again.factors.values() {
            prop_assert!((f - 1.0).abs() <= 1e-9);
        }
        for (a, b) in data.iter().zip(&corrected) {
            prop_assert_eq!(a.body_wideness.to_bits(), b.body_wideness.to_bits());
            prop_assert_eq!(a.shr.to_bits(), b.shr.to_bits());
        }
    }

    #[test]
    fn row_order_does_not_matter(seed in 0u64..100, shift in 1usize..50) {
        let mut data = rows(vec![1.0, 1.3, 0.8], 0.004, seed);
        let a = estimate_correction_factors(&data, 1).unwrap();
        data.rotate_left(shift);
        data.reverse();
        prop_assert_eq!(a, estimate_correction_factors(&data, 1).unwrap());
    }
}

#[test]
fn single_camera_gives_identity_table() {
    let cfg = SynthConfig {
        persons: 1,
        cameras: 1,
        frames: 20,
        videos_per_pair: 1,
        sigma: 0.0,
        ..Default::default()
    };
    let data = extract_all(&cfg.generate().0).unwrap().0.rows;
    let t = estimate_correction_factors(&data, 1).unwrap();
    assert_eq!(t.factors.len(), 1);
    assert_eq!(t.factors[&1], 1.0);
}

#[test]
fn non_reference_camera_as_reference() {
    let data = rows(vec![1.0, 2.0], 0.0, 4);
    let t = estimate_correction_factors(&data, 2).unwrap();
    assert_eq!(t.factors[&2], 1.0);
    assert!((t.factors[&1] - 0.5).abs() < 1e-12);
    let back = CorrectionTable::from_text(&t.to_text()).unwrap();
    assert_eq!(back.reference_camera, 2);
}
