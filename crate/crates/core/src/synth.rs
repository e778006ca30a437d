//! Seeded synthetic LIDAR scenes for demos and tests: a ring-pattern
//! ground plane plus box-shaped objects with matching KITTI labels.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::{Point, PointCloud};
use crate::corpus::{write_atomic, CorpusError, CALIB_DIR, LABEL_DIR, VELODYNE_DIR};
use crate::geometry::OrientedBox3D;
use crate::kitti::{lidar_box_to_label, write_labels, write_velodyne_bin, Calibration, ObjectLabel};
use crate::rng::frame_seed;

/// Sensor height above the ground, meters.
pub const SENSOR_HEIGHT_M: f64 = 1.73;
/// Focal length used to give labels a plausible 2D box height.
const FOCAL_PX: f64 = 721.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub rings: usize,
    pub azimuth_steps: usize,
    pub min_range_m: f64,
    pub max_range_m: f64,
    pub cars: usize,
    pub pedestrians: usize,
    pub cyclists: usize,
    /// Object centers are kept within this range.
    pub object_range_m: f64,
    /// Object surface points per square meter at 10 m.
    pub surface_density: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            rings: 32,
            azimuth_steps: 360,
            min_range_m: 3.0,
            max_range_m: 50.0,
            cars: 4,
            pedestrians: 2,
            cyclists: 1,
            object_range_m: 35.0,
            surface_density: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFrame {
    pub cloud: PointCloud,
    pub labels: Vec<ObjectLabel>,
    pub calib: Calibration,
}

fn class_dims(class: &str) -> [f64; 3] {
    match class {
        "Car" => [3.9, 1.6, 1.5],
        "Pedestrian" => [0.8, 0.6, 1.75],
        _ => [1.8, 0.6, 1.75],
    }
}

fn surface_points(b: &OrientedBox3D, density: f64, rng: &mut ChaCha8Rng, out: &mut Vec<Point>) {
    let [l, w, h] = b.dims();
    let c = b.center();
    let range = c[0].hypot(c[1]).max(1.0);
    let scale = density * (10.0 / range).powi(2);
    let (s, co) = b.yaw().sin_cos();
    // Four sides and the top, as (area, sampler) pairs in the box frame.
    let faces: [(f64, u8); 5] = [(l * h, 0), (l * h, 1), (w * h, 2), (w * h, 3), (l * w, 4)];
    for (area, face) in faces {
        let n = ((area * scale).round() as usize).clamp(4, 400);
        for _ in 0..n {
            let (u, v, t): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
            let (x, y, z) = match face {
                0 => ((u - 0.5) * l, 0.5 * w, t * h),
                1 => ((u - 0.5) * l, -0.5 * w, t * h),
                2 => (0.5 * l, (v - 0.5) * w, t * h),
                3 => (-0.5 * l, (v - 0.5) * w, t * h),
                _ => ((u - 0.5) * l, (v - 0.5) * w, h),
            };
            let z0 = c[2] - 0.5 * h;
            out.push(Point::new(
                (c[0] + co * x - s * y) as f32,
                (c[1] + s * x + co * y) as f32,
                (z0 + z) as f32,
                0.4,
            ));
        }
    }
}

/// One frame. Identical `(seed, frame_id, config)` give identical output.
pub fn synthetic_frame(seed: u64, frame_id: &str, config: &SceneConfig) -> SyntheticFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(seed, frame_id));
    let ground_z = -SENSOR_HEIGHT_M;
    let mut points = Vec::new();
    for r in 0..config.rings {
        let t = r as f64 / (config.rings.max(2) - 1) as f64;
        let radius = config.min_range_m * (config.max_range_m / config.min_range_m).powf(t);
        for a in 0..config.azimuth_steps {
            let phi = 2.0 * std::f64::consts::PI * a as f64 / config.azimuth_steps as f64;
            let z = ground_z + 0.01 * (rng.random::<f64>() - 0.5);
            points.push(Point::new(
                (radius * phi.cos()) as f32,
                (radius * phi.sin()) as f32,
                z as f32,
                0.1,
            ));
        }
    }

    let mut boxes: Vec<(String, OrientedBox3D)> = Vec::new();
    let classes = std::iter::repeat_n("Car", config.cars)
        .chain(std::iter::repeat_n("Pedestrian", config.pedestrians))
        .chain(std::iter::repeat_n("Cyclist", config.cyclists));
    for class in classes {
        let dims = class_dims(class);
        for _ in 0..50 {
            // Objects in front of the sensor so they sit in the camera view.
            let x = rng.random_range(6.0..config.object_range_m);
            let y = rng.random_range(-0.5 * x..0.5 * x);
            let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let b = OrientedBox3D::new([x, y, ground_z + 0.5 * dims[2]], dims, yaw).expect("valid dims");
            let clear = boxes.iter().all(|(_, o)| {
                let d = (o.center()[0] - x).hypot(o.center()[1] - y);
                d > 0.5 * (o.length() + b.length()) + 1.5
            });
            if clear {
                boxes.push((class.to_string(), b));
                break;
            }
        }
    }

    // Ground points under objects would be hidden; drop them.
    points.retain(|p| {
        !boxes
            .iter()
            .any(|(_, b)| b.contains([p.x as f64, p.y as f64, b.center()[2]]))
    });
    let calib = Calibration::kitti_like([0.0, -0.08, -0.27]);
    let mut labels = Vec::new();
    for (class, b) in &boxes {
        surface_points(b, config.surface_density, &mut rng, &mut points);
        let mut label = lidar_box_to_label(b, class, None, &calib);
        let depth = b.center()[0].max(1.0);
        let (bw, bh) = (
            FOCAL_PX * b.length().max(b.width()) / depth,
            FOCAL_PX * b.height() / depth,
        );
        label.bbox2d = [600.0, 180.0, 600.0 + bw, 180.0 + bh];
        label.alpha = 0.0;
        labels.push(label);
    }
    SyntheticFrame {
        cloud: PointCloud::new(frame_id, points).expect("finite synthetic points"),
        labels,
        calib,
    }
}

/// Writes `frames` synthetic frames as a KITTI-layout corpus under `root`.
pub fn write_synthetic_corpus(root: &Path, frames: usize, seed: u64, config: &SceneConfig) -> Result<(), CorpusError> {
    for i in 0..frames {
        let id = format!("{i:06}");
        let f = synthetic_frame(seed, &id, config);
        write_atomic(
            &root.join(VELODYNE_DIR).join(format!("{id}.bin")),
            &write_velodyne_bin(&f.cloud),
        )?;
        write_atomic(
            &root.join(LABEL_DIR).join(format!("{id}.txt")),
            write_labels(&f.labels).as_bytes(),
        )?;
        write_atomic(
            &root.join(CALIB_DIR).join(format!("{id}.txt")),
            f.calib.to_text().as_bytes(),
        )?;
    }
    Ok(())
}
