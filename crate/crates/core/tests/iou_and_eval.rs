mod common;

use pcselect_core::detect::{OracleConfig, OracleDetector};
use pcselect_core::eval::{
    average_precision_r40, evaluate, rotated_iou_3d, Detection, Difficulty, EvalConfig, FrameData, GroundTruth,
    MatchLabel,
};
use pcselect_core::features::LabeledBox;
use pcselect_core::OrientedBox3D;
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn arb_box() -> impl Strategy<Value = OrientedBox3D> {
    (
        -3.0f64..3.0,
        -3.0f64..3.0,
        -1.0f64..1.0,
        0.5f64..6.0,
        0.5f64..6.0,
        0.5f64..6.0,
        -3.2f64..3.2,
    )
        .prop_map(|(x, y, z, l, w, h, yaw)| OrientedBox3D::new([x, y, z], [l, w, h], yaw).unwrap())
}

fn moved(b: &OrientedBox3D, angle: f64, t: [f64; 3]) -> OrientedBox3D {
    let [x, y, z] = b.center();
    let (s, c) = angle.sin_cos();
    OrientedBox3D::new(
        [c * x - s * y + t[0], s * x + c * y + t[1], z + t[2]],
        b.dims(),
        b.yaw() + angle,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn iou_is_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        let ab = rotated_iou_3d(&a, &b);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - rotated_iou_3d(&b, &a)).abs() <= 1e-9);
    }

    #[test]
    fn iou_is_invariant_under_rigid_motion(
        a in arb_box(), b in arb_box(), angle in -3.2f64..3.2, tx in -50.0f64..50.0, ty in -50.0f64..50.0, tz in -5.0f64..5.0,
    ) {
        let before = rotated_iou_3d(&a, &b);
        let after = rotated_iou_3d(&moved(&a, angle, [tx, ty, tz]), &moved(&b, angle, [tx, ty, tz]));
        prop_assert!((before - after).abs() <= 1e-9, "{} vs {}", before, after);
    }

    #[test]
    fn ap_does_not_rise_when_a_hit_becomes_a_miss(
        mut scored in prop::collection::vec((0.0f64..1.0, prop::bool::ANY), 1..60),
        flip in any::<prop::sample::Index>(),
    ) {
        let to_label = |tp: bool| if tp { MatchLabel::TruePositive } else { MatchLabel::FalsePositive };
        let total = scored.iter().filter(|s| s.1).count() + 3;
        let labels: Vec<(f64, MatchLabel)> = scored.iter().map(|&(s, tp)| (s, to_label(tp))).collect();
        let before = average_precision_r40(&labels, total);
        let i = flip.index(scored.len());
        scored[i].1 = false;
        let labels: Vec<(f64, MatchLabel)> = scored.iter().map(|&(s, tp)| (s, to_label(tp))).collect();
        let after = average_precision_r40(&labels, total);
        prop_assert!(after <= before + 1e-12, "{} -> {}", before, after);
    }
}

#[test]
fn monte_carlo_oracle_on_small_sample() {
    let mut rng = common::rng(99);
    for _ in 0..20 {
        let (a, b) = common::random_box_pair(&mut rng);
        let mc = common::monte_carlo_iou(&a, &b, 100_000, &mut rng);
        let exact = rotated_iou_3d(&a, &b);
        assert!((mc - exact).abs() < 0.02, "{mc} vs {exact}");
    }
}

fn scene(frames: usize) -> Vec<(String, Vec<LabeledBox>)> {
    (0..frames)
        .map(|f| {
            let boxes = (0..5)
                .map(|k| LabeledBox {
                    class_name: if k == 4 { "Pedestrian" } else { "Car" }.to_string(),
                    bbox: OrientedBox3D::new(
                        [8.0 + 7.0 * k as f64, (f % 3) as f64 - 1.0, -0.9],
                        if k == 4 { [0.8, 0.6, 1.75] } else { [3.9, 1.6, 1.5] },
                        0.2 * k as f64,
                    )
                    .unwrap(),
                })
                .collect();
            (format!("{f:06}"), boxes)
        })
        .collect()
}

fn ground_truth(frames: &[(String, Vec<LabeledBox>)]) -> Vec<FrameData<GroundTruth>> {
    frames
        .iter()
        .map(|(id, b)| {
            FrameData::new(
                id.clone(),
                b.iter()
                    .map(|l| GroundTruth::new(l.bbox, l.class_name.clone(), Difficulty::Easy))
                    .collect(),
            )
        })
        .collect()
}

fn detect(frames: &[(String, Vec<LabeledBox>)], cfg: OracleConfig) -> Vec<FrameData<Detection>> {
    let oracle = OracleDetector::new(frames.to_vec(), cfg).unwrap();
    frames
        .iter()
        .map(|(id, _)| FrameData::new(id.clone(), oracle.detect_frame(id)))
        .collect()
}

#[test]
fn evaluation_ignores_detection_order() {
    let frames = scene(30);
    let gts = ground_truth(&frames);
    let cfg = OracleConfig {
        jitter_sigma_m: 0.3,
        drop_rate: 0.2,
        fp_rate: 1.0,
        seed: 4,
    };
    let dets = detect(&frames, cfg);
    let base = evaluate(&dets, &gts, &EvalConfig::default()).unwrap();
    let mut rng = common::rng(1);
    for _ in 0..5 {
        let mut shuffled = dets.clone();
        for f in &mut shuffled {
            f.items.shuffle(&mut rng);
        }
        assert_eq!(evaluate(&shuffled, &gts, &EvalConfig::default()).unwrap(), base);
    }
}

#[test]
fn perfect_oracle_scores_full_marks_everywhere() {
    let frames = scene(10);
    let report = evaluate(
        &detect(&frames, OracleConfig::default()),
        &ground_truth(&frames),
        &EvalConfig::default(),
    )
    .unwrap();
    for class in ["Car", "Pedestrian"] {
        for d in [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard] {
            let e = report.get(class, d).unwrap();
            assert_eq!(e.ap_percent, Some(100.0), "{class} {d:?}");
            assert_eq!((e.fp, e.fn_count), (0, 0));
        }
    }
}

#[test]
fn ap_falls_with_localization_error() {
    let frames = scene(40);
    let gts = ground_truth(&frames);
    let mut last = f64::INFINITY;
    for jitter in [0.0, 0.2, 0.5, 1.0, 2.0] {
        let cfg = OracleConfig {
            jitter_sigma_m: jitter,
            seed: 2,
            ..OracleConfig::default()
        };
        let report = evaluate(&detect(&frames, cfg), &gts, &EvalConfig::default()).unwrap();
        let ap = report.get("Car", Difficulty::Moderate).unwrap().ap_percent.unwrap();
        assert!(ap <= last + 1e-9, "jitter {jitter}: {ap} after {last}");
        last = ap;
    }
    assert!(last < 20.0, "2 m jitter still scores {last}");
}
