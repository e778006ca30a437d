//! The point-cloud frame type shared by every operator.

use thiserror::Error;

/// One LIDAR return in the sensor frame. Stored as `f32` so the KITTI
/// binary layout round-trips bit-exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub intensity: f32,
}

impl Point {
    pub const fn new(x: f32, y: f32, z: f32, intensity: f32) -> Self {
        Self { x, y, z, intensity }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.intensity.is_finite()
    }

    pub fn xyz(&self) -> [f64; 3] {
        [self.x as f64, self.y as f64, self.z as f64]
    }

    /// Bit pattern of all four fields, used for exact multiset comparisons.
    pub fn bits(&self) -> [u32; 4] {
        [
            self.x.to_bits(),
            self.y.to_bits(),
            self.z.to_bits(),
            self.intensity.to_bits(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CloudError {
    #[error("point {index} has a non-finite field")]
    NonFiniteValue { index: usize },
}

/// An ordered frame of points. All fields of all points are finite.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    frame_id: String,
    points: Vec<Point>,
}

impl PointCloud {
    pub fn new(frame_id: impl Into<String>, points: Vec<Point>) -> Result<Self, CloudError> {
        if let Some(index) = points.iter().position(|p| !p.is_finite()) {
            return Err(CloudError::NonFiniteValue { index });
        }
        Ok(Self {
            frame_id: frame_id.into(),
            points,
        })
    }

    pub fn empty(frame_id: impl Into<String>) -> Self {
        Self {
            frame_id: frame_id.into(),
            points: Vec::new(),
        }
    }

    pub fn frame_id(&self) -> &str {
        &self.frame_id
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    /// Same frame id, new point set. Callers guarantee finiteness.
    pub(crate) fn with_points(&self, points: Vec<Point>) -> Self {
        debug_assert!(points.iter().all(Point::is_finite));
        Self {
            frame_id: self.frame_id.clone(),
            points,
        }
    }
}
