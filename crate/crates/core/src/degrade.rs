//! Pseudo-incompleteness operators: voxel-grid and uniform downsampling,
//! exact-count random sampling, and additive Gaussian coordinate noise.
//!
//! The voxel grid is anchored at the origin: a point falls in voxel
//! `floor(coord / edge)` on each axis, so boundary points go to the higher
//! index. Output points are emitted in order of each voxel's first point.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::cloud::{Point, PointCloud};
use crate::rng::CounterRng;

const STREAM_RANDOM_SAMPLE: u64 = 0x5241_4e44; // "RAND"
const STREAM_NOISE: u64 = 0x4e4f_4953; // "NOIS"

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DegradeError {
    #[error("voxel edge must be positive and finite, got {0}")]
    NonPositiveEdge(f64),
    #[error("keep fraction must be in (0, 1], got {0}")]
    FractionOutOfRange(f64),
    #[error("noise sigma must be non-negative and finite, got {0}")]
    NegativeSigma(f64),
    #[error("reference cloud is empty")]
    EmptyReference,
    #[error("bad degradation spec `{0}`")]
    BadSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DegradationKind {
    None,
    VoxelGrid,
    Uniform,
    Random,
    GaussianNoise,
}

impl DegradationKind {
    pub fn token(self) -> &'static str {
        match self {
            DegradationKind::None => "none",
            DegradationKind::VoxelGrid => "voxel_grid",
            DegradationKind::Uniform => "uniform",
            DegradationKind::Random => "random",
            DegradationKind::GaussianNoise => "noise",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            DegradationKind::None => 0,
            DegradationKind::VoxelGrid => 1,
            DegradationKind::Uniform => 2,
            DegradationKind::Random => 3,
            DegradationKind::GaussianNoise => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => DegradationKind::None,
            1 => DegradationKind::VoxelGrid,
            2 => DegradationKind::Uniform,
            3 => DegradationKind::Random,
            4 => DegradationKind::GaussianNoise,
            _ => return None,
        })
    }
}

impl FromStr for DegradationKind {
    type Err = DegradeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "none" => DegradationKind::None,
            "voxel_grid" => DegradationKind::VoxelGrid,
            "uniform" => DegradationKind::Uniform,
            "random" => DegradationKind::Random,
            "noise" | "gaussian_noise" => DegradationKind::GaussianNoise,
            other => return Err(DegradeError::BadSpec(other.to_string())),
        })
    }
}

/// A degradation recipe: voxel edge (m), keep fraction, or noise sigma (m)
/// depending on `kind`. `seed` only matters for random and noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationSpec {
    pub kind: DegradationKind,
    pub param: f64,
    pub seed: u64,
}

impl DegradationSpec {
    pub const NONE: DegradationSpec = DegradationSpec {
        kind: DegradationKind::None,
        param: 0.0,
        seed: 0,
    };

    pub fn new(kind: DegradationKind, param: f64, seed: u64) -> Result<Self, DegradeError> {
        let spec = Self { kind, param, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn voxel_grid(edge: f64) -> Self {
        Self {
            kind: DegradationKind::VoxelGrid,
            param: edge,
            seed: 0,
        }
    }

    pub fn uniform(edge: f64) -> Self {
        Self {
            kind: DegradationKind::Uniform,
            param: edge,
            seed: 0,
        }
    }

    pub fn random(fraction: f64, seed: u64) -> Self {
        Self {
            kind: DegradationKind::Random,
            param: fraction,
            seed,
        }
    }

    pub fn noise(sigma: f64, seed: u64) -> Self {
        Self {
            kind: DegradationKind::GaussianNoise,
            param: sigma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), DegradeError> {
        match self.kind {
            DegradationKind::None => Ok(()),
            DegradationKind::VoxelGrid | DegradationKind::Uniform => check_edge(self.param),
            DegradationKind::Random => check_fraction(self.param),
            DegradationKind::GaussianNoise => check_sigma(self.param),
        }
    }

    /// Noise sigma carried by this spec (0 unless it is a noise spec).
    pub fn noise_sigma(&self) -> f64 {
        match self.kind {
            DegradationKind::GaussianNoise => self.param,
            _ => 0.0,
        }
    }

    /// Applies this degradation to one frame.
    pub fn apply(&self, cloud: &PointCloud) -> Result<PointCloud, DegradeError> {
        match self.kind {
            DegradationKind::None => Ok(cloud.clone()),
            DegradationKind::VoxelGrid => voxel_grid_filter(cloud, self.param),
            DegradationKind::Uniform => uniform_sample(cloud, self.param),
            DegradationKind::Random => random_sample(cloud, self.param, self.seed),
            DegradationKind::GaussianNoise => add_gaussian_noise(cloud, self.param, self.seed),
        }
    }
}

/// Registry/CLI token form: `none`, `voxel_grid:0.1`, `random:0.25`, `noise:0.08`.
impl fmt::Display for DegradationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            DegradationKind::None => f.write_str("none"),
            kind => write!(f, "{}:{}", kind.token(), self.param),
        }
    }
}

impl FromStr for DegradationSpec {
    type Err = DegradeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "none" {
            return Ok(Self::NONE);
        }
        let (kind, param) = s.split_once(':').ok_or_else(|| DegradeError::BadSpec(s.to_string()))?;
        let kind: DegradationKind = kind.parse()?;
        if kind == DegradationKind::None {
            return Err(DegradeError::BadSpec(s.to_string()));
        }
        let param: f64 = param.parse().map_err(|_| DegradeError::BadSpec(s.to_string()))?;
        Self::new(kind, param, 0)
    }
}

fn check_edge(edge: f64) -> Result<(), DegradeError> {
    if edge.is_finite() && edge > 0.0 {
        Ok(())
    } else {
        Err(DegradeError::NonPositiveEdge(edge))
    }
}

fn check_fraction(p: f64) -> Result<(), DegradeError> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(DegradeError::FractionOutOfRange(p))
    }
}

fn check_sigma(sigma: f64) -> Result<(), DegradeError> {
    if sigma.is_finite() && sigma >= 0.0 {
        Ok(())
    } else {
        Err(DegradeError::NegativeSigma(sigma))
    }
}

type VoxelKey = (i64, i64, i64);

#[inline]
pub fn voxel_index(p: &Point, edge: f64) -> VoxelKey {
    (
        (p.x as f64 / edge).floor() as i64,
        (p.y as f64 / edge).floor() as i64,
        (p.z as f64 / edge).floor() as i64,
    )
}

/// Groups point indices by voxel, voxels ordered by first occurrence.
fn bucket(cloud: &PointCloud, edge: f64) -> Vec<(VoxelKey, Vec<usize>)> {
    let mut slot: HashMap<VoxelKey, usize> = HashMap::new();
    let mut groups: Vec<(VoxelKey, Vec<usize>)> = Vec::new();
    for (i, p) in cloud.points().iter().enumerate() {
        let key = voxel_index(p, edge);
        let g = *slot.entry(key).or_insert_with(|| {
            groups.push((key, Vec::new()));
            groups.len() - 1
        });
        groups[g].1.push(i);
    }
    groups
}

/// Number of distinct occupied voxels.
pub fn occupied_voxels(cloud: &PointCloud, edge: f64) -> usize {
    cloud
        .points()
        .iter()
        .map(|p| voxel_index(p, edge))
        .collect::<std::collections::HashSet<_>>()
        .len()
}

/// Replaces the points of each occupied voxel with their mean (x, y, z, intensity).
pub fn voxel_grid_filter(cloud: &PointCloud, edge: f64) -> Result<PointCloud, DegradeError> {
    check_edge(edge)?;
    let pts = cloud.points();
    let out = bucket(cloud, edge)
        .into_iter()
        .map(|(_, members)| {
            let mut acc = [0.0f64; 4];
            for &i in &members {
                let p = pts[i];
                acc[0] += p.x as f64;
                acc[1] += p.y as f64;
                acc[2] += p.z as f64;
                acc[3] += p.intensity as f64;
            }
            let n = members.len() as f64;
            Point::new(
                (acc[0] / n) as f32,
                (acc[1] / n) as f32,
                (acc[2] / n) as f32,
                (acc[3] / n) as f32,
            )
        })
        .collect();
    Ok(cloud.with_points(out))
}

/// Keeps, per occupied voxel, the input point nearest the voxel center.
/// Ties go to the lowest input index.
pub fn uniform_sample(cloud: &PointCloud, edge: f64) -> Result<PointCloud, DegradeError> {
    check_edge(edge)?;
    let pts = cloud.points();
    let out = bucket(cloud, edge)
        .into_iter()
        .map(|((ix, iy, iz), members)| {
            let c = [
                (ix as f64 + 0.5) * edge,
                (iy as f64 + 0.5) * edge,
                (iz as f64 + 0.5) * edge,
            ];
            let mut best = members[0];
            let mut best_d = f64::INFINITY;
            for &i in &members {
                let [x, y, z] = pts[i].xyz();
                let d = (x - c[0]).powi(2) + (y - c[1]).powi(2) + (z - c[2]).powi(2);
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            pts[best]
        })
        .collect();
    Ok(cloud.with_points(out))
}

/// Indices of an exact-size uniformly random subset, ascending.
///
/// Each index gets the key `CounterRng(seed, RAND).u64_at(index)`; the `k`
/// smallest `(key, index)` pairs are kept.
pub fn sample_indices(n: usize, k: usize, seed: u64, stream: u64) -> Vec<usize> {
    let rng = CounterRng::new(seed, stream);
    let mut keyed: Vec<(u64, usize)> = (0..n).map(|i| (rng.u64_at(i as u64), i)).collect();
    if k < n {
        keyed.select_nth_unstable(k);
        keyed.truncate(k);
    }
    let mut idx: Vec<usize> = keyed.into_iter().map(|(_, i)| i).collect();
    idx.sort_unstable();
    idx
}

/// Keeps exactly `round(keep_fraction * N)` distinct points, in input order.
pub fn random_sample(cloud: &PointCloud, keep_fraction: f64, seed: u64) -> Result<PointCloud, DegradeError> {
    check_fraction(keep_fraction)?;
    let n = cloud.len();
    let k = ((keep_fraction * n as f64).round() as usize).min(n);
    let pts = cloud.points();
    let out = sample_indices(n, k, seed, STREAM_RANDOM_SAMPLE)
        .into_iter()
        .map(|i| pts[i])
        .collect();
    Ok(cloud.with_points(out))
}

/// Displaces x, y and z of every point by independent `Normal(0, sigma)`
/// draws; the draw for axis `a` of point `i` is `normal_at(3 i + a)`.
pub fn add_gaussian_noise(cloud: &PointCloud, sigma: f64, seed: u64) -> Result<PointCloud, DegradeError> {
    check_sigma(sigma)?;
    if sigma == 0.0 {
        return Ok(cloud.clone());
    }
    let rng = CounterRng::new(seed, STREAM_NOISE);
    let out = cloud
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let base = 3 * i as u64;
            let shift = |v: f32, a: u64| (v as f64 + sigma * rng.normal_at(base + a)) as f32;
            Point::new(shift(p.x, 0), shift(p.y, 1), shift(p.z, 2), p.intensity)
        })
        .collect();
    Ok(cloud.with_points(out))
}

/// `count(after) / count(before)`.
pub fn normalized_point_count(before: &PointCloud, after: &PointCloud) -> Result<f64, DegradeError> {
    if before.is_empty() {
        return Err(DegradeError::EmptyReference);
    }
    Ok(after.len() as f64 / before.len() as f64)
}
