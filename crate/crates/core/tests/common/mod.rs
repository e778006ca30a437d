//! Helpers shared by the integration tests: independent oracles and random
//! message generators.
#![allow(dead_code)]

use pcselect_core::degrade::{DegradationKind, DegradationSpec};
use pcselect_core::features::DataFeatures;
use pcselect_core::protocol::{ModelAssignment, SelectionRequest, WireMessage};
use pcselect_core::registry::{BoxStrategy, MethodFeatures, ProcessingUnit};
use pcselect_core::selector::BranchStep;
use pcselect_core::OrientedBox3D;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Monte-Carlo IoU: uniform samples in the joint axis-aligned bounds,
/// with point-in-box tests written from scratch.
pub fn monte_carlo_iou(a: &OrientedBox3D, b: &OrientedBox3D, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    struct Inside {
        c: [f64; 3],
        half: [f64; 3],
        cos: f64,
        sin: f64,
    }
    impl Inside {
        fn new(b: &OrientedBox3D) -> Self {
            let d = b.dims();
            Self {
                c: b.center(),
                half: [d[0] / 2.0, d[1] / 2.0, d[2] / 2.0],
                cos: b.yaw().cos(),
                sin: b.yaw().sin(),
            }
        }
        fn test(&self, p: [f64; 3]) -> bool {
            let (dx, dy) = (p[0] - self.c[0], p[1] - self.c[1]);
            let u = dx * self.cos + dy * self.sin;
            let v = -dx * self.sin + dy * self.cos;
            u.abs() <= self.half[0] && v.abs() <= self.half[1] && (p[2] - self.c[2]).abs() <= self.half[2]
        }
        fn radius(&self) -> f64 {
            self.half[0].hypot(self.half[1])
        }
    }
    let (ia, ib) = (Inside::new(a), Inside::new(b));
    let lo = [
        (ia.c[0] - ia.radius()).min(ib.c[0] - ib.radius()),
        (ia.c[1] - ia.radius()).min(ib.c[1] - ib.radius()),
        (ia.c[2] - ia.half[2]).min(ib.c[2] - ib.half[2]),
    ];
    let hi = [
        (ia.c[0] + ia.radius()).max(ib.c[0] + ib.radius()),
        (ia.c[1] + ia.radius()).max(ib.c[1] + ib.radius()),
        (ia.c[2] + ia.half[2]).max(ib.c[2] + ib.half[2]),
    ];
    let (mut na, mut nb, mut both) = (0usize, 0usize, 0usize);
    for _ in 0..samples {
        let p = [
            rng.random_range(lo[0]..hi[0]),
            rng.random_range(lo[1]..hi[1]),
            rng.random_range(lo[2]..hi[2]),
        ];
        let (x, y) = (ia.test(p), ib.test(p));
        na += x as usize;
        nb += y as usize;
        both += (x && y) as usize;
    }
    let union = na + nb - both;
    if union == 0 {
        0.0
    } else {
        both as f64 / union as f64
    }
}

/// A random box pair whose centers are close enough to overlap often.
pub fn random_box_pair(rng: &mut ChaCha8Rng) -> (OrientedBox3D, OrientedBox3D) {
    fn make(rng: &mut ChaCha8Rng, center: [f64; 3]) -> OrientedBox3D {
        let dims = [
            rng.random_range(0.5..6.0),
            rng.random_range(0.5..6.0),
            rng.random_range(0.5..6.0),
        ];
        let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        OrientedBox3D::new(center, dims, yaw).unwrap()
    }
    let a = make(rng, [0.0; 3]);
    let offset = [
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
        rng.random_range(-1.5..1.5),
    ];
    (a, make(rng, offset))
}

fn random_string(rng: &mut ChaCha8Rng, max: usize) -> String {
    let n = rng.random_range(0..=max);
    (0..n)
        .map(|_| {
            if rng.random_bool(0.1) {
                'é'
            } else {
                rng.random_range(b' '..=b'~') as char
            }
        })
        .collect()
}

fn random_opt_f64(rng: &mut ChaCha8Rng) -> Option<f64> {
    rng.random_bool(0.5).then(|| rng.random_range(-1e3..1e3))
}

fn random_unit(rng: &mut ChaCha8Rng) -> ProcessingUnit {
    [ProcessingUnit::Point, ProcessingUnit::Voxel, ProcessingUnit::Pillar][rng.random_range(0..3)]
}

fn random_method(rng: &mut ChaCha8Rng) -> MethodFeatures {
    MethodFeatures {
        method_id: random_string(rng, 12),
        stage1: random_unit(rng),
        stage2: rng.random_bool(0.5).then(|| random_unit(rng)),
        box_strategy: if rng.random_bool(0.5) {
            BoxStrategy::AnchorBased
        } else {
            BoxStrategy::AnchorFree
        },
    }
}

fn random_spec(rng: &mut ChaCha8Rng) -> DegradationSpec {
    let kind = [
        DegradationKind::None,
        DegradationKind::VoxelGrid,
        DegradationKind::Uniform,
        DegradationKind::Random,
        DegradationKind::GaussianNoise,
    ][rng.random_range(0..5)];
    DegradationSpec {
        kind,
        param: rng.random_range(0.0..1.0),
        seed: rng.random(),
    }
}

pub fn random_message(rng: &mut ChaCha8Rng) -> WireMessage {
    match rng.random_range(0..5) {
        0 => WireMessage::SelectionRequest(SelectionRequest {
            target_classes: (0..rng.random_range(0..4)).map(|_| random_string(rng, 10)).collect(),
            latency_budget_s: random_opt_f64(rng),
            sample_frames: (0..rng.random_range(0..3))
                .map(|_| (0..rng.random_range(0..64)).map(|_| rng.random()).collect())
                .collect(),
            declared_noise_sigma: random_opt_f64(rng),
        }),
        1 => WireMessage::FeatureReport(DataFeatures {
            normalized_point_count: rng.random_range(0.0..2.0),
            noise_sigma: random_opt_f64(rng),
            frames_analyzed: rng.random(),
        }),
        2 => WireMessage::ModelAssignment(ModelAssignment {
            model_id: random_string(rng, 20),
            features: random_method(rng),
            train_degradation: random_spec(rng),
            branch_trace: (0..rng.random_range(0..5))
                .map(|_| BranchStep {
                    branch: random_string(rng, 8),
                    option: random_string(rng, 8),
                    reason: random_string(rng, 30),
                })
                .collect(),
            weights: rng
                .random_bool(0.3)
                .then(|| (0..rng.random_range(0..32)).map(|_| rng.random()).collect()),
        }),
        3 => WireMessage::ErrorReply {
            code: rng.random(),
            message: random_string(rng, 40),
        },
        _ => WireMessage::Ack,
    }
}

/// A fixed request used for truncation tests.
pub fn golden_request() -> SelectionRequest {
    SelectionRequest {
        target_classes: vec!["Car".into(), "Pedestrian".into()],
        latency_budget_s: Some(0.1),
        sample_frames: vec![vec![0, 0, 128, 63, 0, 0, 0, 64, 0, 0, 64, 64, 0, 0, 0, 63]],
        declared_noise_sigma: Some(0.02),
    }
}
