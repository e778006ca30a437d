//! KITTI file formats: velodyne `.bin` scans, `label_2` object records and
//! `calib` matrices, plus the camera-label to sensor-box conversion.
//!
//! Labels live in the rectified camera frame with `location` at the center of
//! the box's bottom face. Sensor-frame boxes use the geometric center, with
//! `yaw = -rotation_y - pi/2`.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use thiserror::Error;

use crate::cloud::{CloudError, Point, PointCloud};
use crate::geometry::{normalize_yaw, BoxError, OrientedBox3D};

const RECORD_BYTES: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KittiError {
    #[error("velodyne blob length {0} is not a multiple of 16")]
    LengthNotMultipleOf16(usize),
    #[error("point {index} has a non-finite field")]
    NonFiniteValue { index: usize },
    #[error("line {line_no}: malformed label record: {reason}")]
    MalformedLine { line_no: usize, reason: String },
    #[error("line {line_no}: field `{field}` out of range")]
    FieldOutOfRange { line_no: usize, field: &'static str },
    #[error("calibration key `{0}` is missing")]
    MissingKey(&'static str),
    #[error("calibration matrix `{key}` is malformed: {reason}")]
    MalformedMatrix { key: String, reason: String },
    #[error(transparent)]
    Box(#[from] BoxError),
}

impl From<CloudError> for KittiError {
    fn from(e: CloudError) -> Self {
        match e {
            CloudError::NonFiniteValue { index } => KittiError::NonFiniteValue { index },
        }
    }
}

/// Decodes consecutive little-endian `f32` quadruples `(x, y, z, intensity)`.
pub fn read_velodyne_bin(frame_id: impl Into<String>, bytes: &[u8]) -> Result<PointCloud, KittiError> {
    if !bytes.len().is_multiple_of(RECORD_BYTES) {
        return Err(KittiError::LengthNotMultipleOf16(bytes.len()));
    }
    let f = |b: &[u8]| f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
    let points = bytes
        .chunks_exact(RECORD_BYTES)
        .map(|r| Point::new(f(&r[0..4]), f(&r[4..8]), f(&r[8..12]), f(&r[12..16])))
        .collect();
    Ok(PointCloud::new(frame_id, points)?)
}

pub fn write_velodyne_bin(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * RECORD_BYTES);
    for p in cloud.points() {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub const DONT_CARE: &str = "DontCare";

/// One `label_2` record. Detection files append a trailing `score`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectLabel {
    pub class_name: String,
    pub truncation: f64,
    pub occlusion: i32,
    pub alpha: f64,
    /// `(left, top, right, bottom)` in pixels.
    pub bbox2d: [f64; 4],
    /// `(height, width, length)` in meters.
    pub dims: [f64; 3],
    pub location_cam: [f64; 3],
    pub rotation_y: f64,
    pub score: Option<f64>,
}

impl ObjectLabel {
    pub fn is_dont_care(&self) -> bool {
        self.class_name == DONT_CARE
    }

    pub fn bbox_height(&self) -> f64 {
        self.bbox2d[3] - self.bbox2d[1]
    }

    /// Formats the record as one label line (16 fields when a score is set).
    pub fn to_line(&self) -> String {
        let mut s = format!(
            "{} {:.2} {} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2}",
            self.class_name,
            self.truncation,
            self.occlusion,
            self.alpha,
            self.bbox2d[0],
            self.bbox2d[1],
            self.bbox2d[2],
            self.bbox2d[3],
            self.dims[0],
            self.dims[1],
            self.dims[2],
            self.location_cam[0],
            self.location_cam[1],
            self.location_cam[2],
            self.rotation_y,
        );
        if let Some(score) = self.score {
            let _ = write!(s, " {score:.6}");
        }
        s
    }
}

fn malformed(line_no: usize, reason: impl Into<String>) -> KittiError {
    KittiError::MalformedLine {
        line_no,
        reason: reason.into(),
    }
}

/// Parses label text, one record per non-empty line. Line numbers in errors
/// are 1-based.
pub fn read_labels(text: &str) -> Result<Vec<ObjectLabel>, KittiError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 15 && fields.len() != 16 {
            return Err(malformed(
                line_no,
                format!("expected 15 or 16 fields, found {}", fields.len()),
            ));
        }
        let num = |idx: usize, name: &str| -> Result<f64, KittiError> {
            let v: f64 = fields[idx]
                .parse()
                .map_err(|_| malformed(line_no, format!("field `{name}` is not a number")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(malformed(line_no, format!("field `{name}` is not finite")))
            }
        };
        let class_name = fields[0].to_string();
        let truncation = num(1, "truncation")?;
        let occlusion: i32 = fields[2]
            .parse()
            .map_err(|_| malformed(line_no, "field `occlusion` is not an integer"))?;
        let alpha = num(3, "alpha")?;
        let bbox2d = [num(4, "left")?, num(5, "top")?, num(6, "right")?, num(7, "bottom")?];
        let dims = [num(8, "height")?, num(9, "width")?, num(10, "length")?];
        let location_cam = [num(11, "x")?, num(12, "y")?, num(13, "z")?];
        let rotation_y = num(14, "rotation_y")?;
        let score = if fields.len() == 16 {
            Some(num(15, "score")?)
        } else {
            None
        };

        let label = ObjectLabel {
            class_name,
            truncation,
            occlusion,
            alpha,
            bbox2d,
            dims,
            location_cam,
            rotation_y,
            score,
        };
        // DontCare regions carry sentinel values (-1, -10, -1000) by convention.
        if !label.is_dont_care() {
            let range = |field| KittiError::FieldOutOfRange { line_no, field };
            if !(0.0..=1.0).contains(&label.truncation) {
                return Err(range("truncation"));
            }
            if !(0..=3).contains(&label.occlusion) {
                return Err(range("occlusion"));
            }
            if label.bbox2d[2] < label.bbox2d[0] || label.bbox2d[3] < label.bbox2d[1] {
                return Err(range("bbox2d"));
            }
            if label.dims.iter().any(|d| *d <= 0.0) {
                return Err(range("dims"));
            }
        }
        out.push(label);
    }
    Ok(out)
}

pub fn write_labels(labels: &[ObjectLabel]) -> String {
    let mut s = String::new();
    for l in labels {
        s.push_str(&l.to_line());
        s.push('\n');
    }
    s
}

/// Velodyne to rectified-camera calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    /// Row-major `[R | t]`.
    pub velo_to_cam: [[f64; 4]; 3],
    pub rect: [[f64; 3]; 3],
}

const ORTHONORMAL_TOL: f64 = 1e-6;

fn orthonormality_error(m: &[[f64; 3]; 3]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| m[k][i] * m[k][j]).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - target).abs());
        }
    }
    worst
}

impl Calibration {
    pub fn identity() -> Self {
        Self {
            velo_to_cam: [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]],
            rect: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// The axis permutation of the KITTI rig (camera x right, y down, z
    /// forward) with a translation, and identity rectification.
    pub fn kitti_like(translation: [f64; 3]) -> Self {
        let [tx, ty, tz] = translation;
        Self {
            velo_to_cam: [[0.0, -1.0, 0.0, tx], [0.0, 0.0, -1.0, ty], [1.0, 0.0, 0.0, tz]],
            rect: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn rotation(&self) -> [[f64; 3]; 3] {
        let m = &self.velo_to_cam;
        [
            [m[0][0], m[0][1], m[0][2]],
            [m[1][0], m[1][1], m[1][2]],
            [m[2][0], m[2][1], m[2][2]],
        ]
    }

    fn validate(&self) -> Result<(), KittiError> {
        for (key, m) in [("Tr_velo_to_cam", self.rotation()), ("R0_rect", self.rect)] {
            let err = orthonormality_error(&m);
            if !(err <= ORTHONORMAL_TOL) {
                return Err(KittiError::MalformedMatrix {
                    key: key.to_string(),
                    reason: format!("rotation block not orthonormal (error {err:.3e})"),
                });
            }
        }
        Ok(())
    }

    /// Sensor frame to rectified camera frame.
    pub fn velo_to_rect(&self, p: [f64; 3]) -> [f64; 3] {
        let m = &self.velo_to_cam;
        let c: [f64; 3] = std::array::from_fn(|r| m[r][0] * p[0] + m[r][1] * p[1] + m[r][2] * p[2] + m[r][3]);
        std::array::from_fn(|r| self.rect[r][0] * c[0] + self.rect[r][1] * c[1] + self.rect[r][2] * c[2])
    }

    /// Rectified camera frame to sensor frame (rotations inverted by transpose).
    pub fn rect_to_velo(&self, p: [f64; 3]) -> [f64; 3] {
        let r0 = &self.rect;
        let c: [f64; 3] = std::array::from_fn(|i| r0[0][i] * p[0] + r0[1][i] * p[1] + r0[2][i] * p[2]);
        let m = &self.velo_to_cam;
        let d = [c[0] - m[0][3], c[1] - m[1][3], c[2] - m[2][3]];
        std::array::from_fn(|i| m[0][i] * d[0] + m[1][i] * d[1] + m[2][i] * d[2])
    }

    pub fn to_text(&self) -> String {
        let fmt = |vals: Vec<f64>| vals.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ");
        format!(
            "R0_rect: {}\nTr_velo_to_cam: {}\n",
            fmt(self.rect.iter().flatten().copied().collect()),
            fmt(self.velo_to_cam.iter().flatten().copied().collect()),
        )
    }
}

/// Parses `key: values...` lines; only `Tr_velo_to_cam` and `R0_rect` are
/// used, other keys (projection matrices, IMU) are ignored.
pub fn read_calibration(text: &str) -> Result<Calibration, KittiError> {
    let mut tr: Option<Vec<f64>> = None;
    let mut r0: Option<Vec<f64>> = None;
    for line in text.lines() {
        let Some((key, rest)) = line.split_once(':') else {
            continue;
        };
        let key = key.trim();
        let slot = match key {
            "Tr_velo_to_cam" => &mut tr,
            "R0_rect" => &mut r0,
            _ => continue,
        };
        let vals = rest
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| KittiError::MalformedMatrix {
                key: key.to_string(),
                reason: e.to_string(),
            })?;
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(KittiError::MalformedMatrix {
                key: key.to_string(),
                reason: "non-finite entry".into(),
            });
        }
        *slot = Some(vals);
    }
    let tr = tr.ok_or(KittiError::MissingKey("Tr_velo_to_cam"))?;
    let r0 = r0.ok_or(KittiError::MissingKey("R0_rect"))?;
    let bad_len = |key: &str, want: usize, got: usize| KittiError::MalformedMatrix {
        key: key.to_string(),
        reason: format!("expected {want} values, found {got}"),
    };
    if tr.len() != 12 {
        return Err(bad_len("Tr_velo_to_cam", 12, tr.len()));
    }
    if r0.len() != 9 {
        return Err(bad_len("R0_rect", 9, r0.len()));
    }
    let calib = Calibration {
        velo_to_cam: std::array::from_fn(|r| std::array::from_fn(|c| tr[r * 4 + c])),
        rect: std::array::from_fn(|r| std::array::from_fn(|c| r0[r * 3 + c])),
    };
    calib.validate()?;
    Ok(calib)
}

/// Converts a camera-frame label into a sensor-frame box.
pub fn label_to_lidar_box(label: &ObjectLabel, calib: &Calibration) -> Result<OrientedBox3D, KittiError> {
    let [h, w, l] = label.dims;
    let mut center = calib.rect_to_velo(label.location_cam);
    center[2] += 0.5 * h;
    Ok(OrientedBox3D::new(center, [l, w, h], -label.rotation_y - FRAC_PI_2)?)
}

/// Inverse of [`label_to_lidar_box`]; used to write detections as label
/// lines. 2D fields carry neutral values since no image is involved.
pub fn lidar_box_to_label(b: &OrientedBox3D, class_name: &str, score: Option<f64>, calib: &Calibration) -> ObjectLabel {
    let [l, w, h] = b.dims();
    let mut bottom = b.center();
    bottom[2] -= 0.5 * h;
    ObjectLabel {
        class_name: class_name.to_string(),
        truncation: 0.0,
        occlusion: 0,
        alpha: -10.0,
        bbox2d: [0.0, 0.0, 0.0, 0.0],
        dims: [h, w, l],
        location_cam: calib.velo_to_rect(bottom),
        rotation_y: normalize_yaw(-b.yaw() - FRAC_PI_2),
        score,
    }
}
