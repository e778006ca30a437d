use pcselect_core::features::DataFeatures;
use pcselect_core::registry::{BoxStrategy, ModelRegistry, ProcessingUnit};
use pcselect_core::selector::{select, SelectionThresholds, SizeTable, TargetData};
use proptest::prelude::*;

fn features(ratio: f64, sigma: Option<f64>) -> DataFeatures {
    DataFeatures {
        normalized_point_count: ratio,
        noise_sigma: sigma,
        frames_analyzed: 3,
    }
}

fn pick(reg: &ModelRegistry, class: &str, ratio: f64, sigma: Option<f64>, budget: Option<f64>) -> Option<String> {
    let mut target = TargetData::new([class]);
    target.latency_budget_s = budget;
    select(
        &target,
        &features(ratio, sigma),
        reg,
        &SelectionThresholds::default(),
        &SizeTable::default(),
    )
    .ok()
    .map(|d| d.chosen.model_id)
}

fn classes() -> impl Strategy<Value = &'static str> {
    prop_oneof![Just("Car"), Just("Pedestrian"), Just("Cyclist")]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn deterministic(class in classes(), ratio in 0.01f64..1.2, sigma in prop::option::of(0.0f64..0.12)) {
        let reg = ModelRegistry::kitti_fixture();
        let a = select(&TargetData::new([class]), &features(ratio, sigma), &reg, &SelectionThresholds::default(), &SizeTable::default());
        let b = select(&TargetData::new([class]), &features(ratio, sigma), &reg, &SelectionThresholds::default(), &SizeTable::default());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn scaling_ap_keeps_the_choice(class in classes(), ratio in 0.01f64..1.2, sigma in prop::option::of(0.0f64..0.12), k in 0.1f64..10.0) {
        let reg = ModelRegistry::kitti_fixture();
        let scaled = ModelRegistry::new(
            reg.models()
                .iter()
                .cloned()
                .map(|mut m| {
                    m.ap_profile.values_mut().for_each(|v| *v *= k);
                    m
                })
                .collect(),
        )
        .unwrap();
        prop_assert_eq!(pick(&reg, class, ratio, sigma, None), pick(&scaled, class, ratio, sigma, None));
    }

    #[test]
    fn choice_respects_branches(
        class in classes(),
        ratio in 0.01f64..1.2,
        sigma in prop::option::of(0.0f64..0.12),
        budget in prop::option::of(0.02f64..0.5),
    ) {
        let reg = ModelRegistry::kitti_fixture();
        let mut target = TargetData::new([class]);
        target.latency_budget_s = budget;
        let want = if class == "Car" { BoxStrategy::AnchorBased } else { BoxStrategy::AnchorFree };
        let Ok(d) = select(&target, &features(ratio, sigma), &reg, &SelectionThresholds::default(), &SizeTable::default()) else {
            // Only an unmeetable budget may leave nothing to choose.
            let fastest = reg
                .models()
                .iter()
                .filter(|m| m.features.box_strategy == want)
                .map(|m| m.latency_s)
                .fold(f64::INFINITY, f64::min);
            prop_assert!(budget.is_some_and(|b| b < fastest));
            return Ok(());
        };
        prop_assert_eq!(d.chosen.features.box_strategy, want);
        if let Some(b) = budget {
            let fastest = reg.models_of(&d.chosen.features.method_id).map(|m| m.latency_s).fold(f64::INFINITY, f64::min);
            prop_assert!(fastest <= b + 1e-9);
        }
        for step in &d.branch_trace {
            match (step.branch.as_str(), step.option.as_str()) {
                ("processing_unit", "point") => prop_assert!(d.chosen.features.has_unit(ProcessingUnit::Point)),
                ("processing_unit", "voxel") => prop_assert!(d.chosen.features.has_unit(ProcessingUnit::Voxel)),
                ("processing_unit", "pillar") => prop_assert!(d.chosen.features.has_unit(ProcessingUnit::Pillar)),
                _ => {}
            }
        }
        prop_assert_eq!(d.branch_trace.last().map(|s| s.branch.as_str()), Some("model"));
    }
}

#[test]
fn chosen_training_density_tracks_inference_density() {
    let reg = ModelRegistry::kitti_fixture();
    for class in ["Car", "Pedestrian", "Cyclist"] {
        let mut last = 0.0;
        for i in 1..=120 {
            let ratio = i as f64 / 100.0;
            let id = pick(&reg, class, ratio, None, None).unwrap();
            let trained = reg.get(&id).unwrap().train_normalized_points;
            assert!(
                trained >= last,
                "{class}: ratio {ratio} chose {id} (trained {trained}) after {last}"
            );
            last = trained;
        }
    }
}

#[test]
fn unmeetable_budget_is_no_candidate() {
    let reg = ModelRegistry::kitti_fixture();
    assert_eq!(pick(&reg, "Car", 1.0, None, Some(1e-4)), None);
}
