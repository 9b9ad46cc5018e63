use gait_reid::features::{euclidean_distance, extract_features, fit_normalization, normalize_features, GaitFeatureRow};
use gait_reid::landmark::{Landmark, LandmarkFrame, Point};
use proptest::prelude::*;

fn point() -> impl Strategy<Value = Point> {
    (-10.0f64..10.0, -10.0f64..10.0).prop_map(|(x, y)| Point::new(x, y))
}

fn frame_from(coords: &[(f64, f64)]) -> LandmarkFrame {
    let mut f = LandmarkFrame::new(Some(1), 1, "v", 0);
    for (l, &(x, y)) in Landmark::ALL.iter().zip(coords) {
        f.set(*l, Point::new(x, y));
    }
    f
}

fn coords() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 12)
        .prop_filter("hips apart", |c| (c[4].0 - c[9].0).abs() + (c[4].1 - c[9].1).abs() > 1e-3)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #[test]
    fn distance_is_a_metric(a in point(), b in point(), c in point()) {
        let d = |p, q| euclidean_distance(p, q).unwrap();
        prop_assert_eq!(d(a, b), d(b, a));
        prop_assert_eq!(d(a, a), 0.0);
        if a != b {
            prop_assert!(d(a, b) > 0.0);
        }
        prop_assert!(d(a, c) <= d(a, b) + d(b, c) + 1e-12);
    }

    #[test]
    fn lengths_are_translation_invariant(c in coords(), dx in -5.0f64..5.0, dy in -5.0f64..5.0) {
        let a = extract_features(&frame_from(&c)).unwrap();
        let shifted: Vec<(f64, f64)> = c.iter().map(|&(x, y)| (x + dx, y + dy)).collect();
        let b = extract_features(&frame_from(&shifted)).unwrap();
        for (u, v) in a.values()[..5].iter().zip(&b.values()[..5]) {
            prop_assert!((u - v).abs() <= 1e-9, "{} vs {}", u, v);
        }
    }

    #[test]
    fn lengths_scale_and_ratios_do_not(c in coords(), s in 0.1f64..10.0) {
        let a = extract_features(&frame_from(&c)).unwrap();
        let scaled: Vec<(f64, f64)> = c.iter().map(|&(x, y)| (x * s, y * s)).collect();
        let b = extract_features(&frame_from(&scaled)).unwrap();
        for i in 0..5 {
            prop_assert!(close(b.values()[i], s * a.values()[i]));
        }
        prop_assert!(close(a.body_wideness, b.body_wideness));
        prop_assert!(close(a.shr, b.shr));
    }

    #[test]
    fn ratios_coincide_and_lengths_are_non_negative(c in coords()) {
        let r = extract_features(&frame_from(&c)).unwrap();
        prop_assert_eq!(r.body_wideness, r.shr);
        prop_assert!(r.values()[..5].iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn fitted_rows_normalize_into_unit_range(cs in prop::collection::vec(coords(), 1..30)) {
        let rows: Vec<GaitFeatureRow> = cs.iter().map(|c| extract_features(&frame_from(c)).unwrap()).collect();
        let stats = fit_normalization(&rows).unwrap();
        for r in normalize_features(&rows, &stats) {
            prop_assert!(r.values().iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert_eq!(r.frame_no, 0);
        }
    }
}

#[test]
fn out_of_range_values_pass_through() {
    let rows: Vec<GaitFeatureRow> = [0.2, 0.4]
        .iter()
        .map(|&x| {
            let c: Vec<(f64, f64)> = (0..12).map(|i| (x * (i as f64 + 1.0), 0.1 * i as f64)).collect();
            extract_features(&frame_from(&c)).unwrap()
        })
        .collect();
    let stats = fit_normalization(&rows).unwrap();
    let mut wide = rows[1].clone();
    wide.height = stats.max[0] * 2.0 - stats.min[0];
    assert!((normalize_features(&[wide], &stats)[0].height - 2.0).abs() < 1e-12);
}
