//! Feature analyzer: density of an inference stream relative to the training
//! reference, a noise-level estimate, and dataset distribution statistics.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::PointCloud;
use crate::degrade::sample_indices;
use crate::geometry::OrientedBox3D;

const STREAM_ANCHORS: u64 = 0x414e_4348; // "ANCH"

/// Divisor applied to the median neighbourhood residual RMS. Fitting a plane
/// to k+1 = 17 points absorbs 3 degrees of freedom and the median of the
/// per-anchor RMS sits slightly below the mean; 0.92 was fitted once on
/// synthetic noisy planes and is kept fixed.
pub const NOISE_CALIBRATION: f64 = 0.92;
pub const DEFAULT_NEIGHBORS: usize = 16;
pub const MAX_ANCHORS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("no frames in the reference corpus")]
    EmptyCorpus,
    #[error("no frames in the inference stream")]
    EmptyStream,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("neighbour count must be at least 8, got {0}")]
    BadNeighborCount(usize),
    #[error("reference stats are invalid: {0}")]
    InvalidReference(String),
}

/// Per-frame point-count statistics of the training corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceStats {
    pub mean_points_per_frame: f64,
    pub frame_count: u64,
    pub source_id: String,
}

impl ReferenceStats {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if !(self.mean_points_per_frame.is_finite() && self.mean_points_per_frame > 0.0) {
            return Err(FeatureError::InvalidReference(
                "mean_points_per_frame must be > 0".into(),
            ));
        }
        if self.frame_count < 1 {
            return Err(FeatureError::InvalidReference("frame_count must be >= 1".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, FeatureError> {
        let stats: ReferenceStats = toml::from_str(text).map_err(|e| FeatureError::InvalidReference(e.to_string()))?;
        stats.validate()?;
        Ok(stats)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("reference stats serialize")
    }
}

pub fn reference_stats(frames: &[PointCloud], source_id: &str) -> Result<ReferenceStats, FeatureError> {
    reference_stats_from_counts(frames.iter().map(PointCloud::len), source_id)
}

/// Same as [`reference_stats`] when only the counts are at hand.
pub fn reference_stats_from_counts(
    counts: impl IntoIterator<Item = usize>,
    source_id: &str,
) -> Result<ReferenceStats, FeatureError> {
    let (mut total, mut n) = (0u64, 0u64);
    for c in counts {
        total += c as u64;
        n += 1;
    }
    if n == 0 {
        return Err(FeatureError::EmptyCorpus);
    }
    let stats = ReferenceStats {
        mean_points_per_frame: total as f64 / n as f64,
        frame_count: n,
        source_id: source_id.to_string(),
    };
    stats.validate()?;
    Ok(stats)
}

/// Output of the analyzer, consumed by the selector.
#[derive(Debug, Clone, PartialEq)]
pub struct DataFeatures {
    pub normalized_point_count: f64,
    /// Declared or estimated; `None` when neither is available.
    pub noise_sigma: Option<f64>,
    pub frames_analyzed: u32,
}

impl DataFeatures {
    pub const CSV_HEADER: [&'static str; 3] = ["normalized_point_count", "noise_sigma", "frames_analyzed"];

    /// Writes `normalized_point_count,noise_sigma,frames_analyzed` with one
    /// data row; an absent sigma is an empty field.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(Self::CSV_HEADER)?;
        wtr.write_record([
            self.normalized_point_count.to_string(),
            self.noise_sigma.map(|s| s.to_string()).unwrap_or_default(),
            self.frames_analyzed.to_string(),
        ])?;
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self, String> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| format!("missing column `{name}`"))
        };
        let (ci, cs, cf) = (
            col("normalized_point_count")?,
            col("noise_sigma")?,
            col("frames_analyzed")?,
        );
        let rec = rdr
            .records()
            .next()
            .ok_or("features file has no data row")?
            .map_err(|e| e.to_string())?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim().to_string();
        let ratio: f64 = field(ci).parse().map_err(|_| "bad normalized_point_count")?;
        let sigma = match field(cs).as_str() {
            "" => None,
            s => Some(s.parse::<f64>().map_err(|_| "bad noise_sigma")?),
        };
        let frames: u32 = field(cf).parse().map_err(|_| "bad frames_analyzed")?;
        if !(ratio.is_finite() && ratio >= 0.0) || sigma.is_some_and(|s| !(s >= 0.0)) || frames < 1 {
            return Err("feature values out of range".into());
        }
        Ok(Self {
            normalized_point_count: ratio,
            noise_sigma: sigma,
            frames_analyzed: frames,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseEstimator {
    pub neighbors: usize,
    pub max_anchors: usize,
    pub seed: u64,
}

impl Default for NoiseEstimator {
    fn default() -> Self {
        Self {
            neighbors: DEFAULT_NEIGHBORS,
            max_anchors: MAX_ANCHORS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzerConfig {
    /// When set and no sigma is declared, sigma is estimated from up to
    /// `noise_frames` evenly spaced frames (median of per-frame estimates).
    pub estimator: Option<NoiseEstimator>,
    pub noise_frames: usize,
}

impl Default for AnalyzerConfig {
    fn default() -> Self {
        Self {
            estimator: None,
            noise_frames: 3,
        }
    }
}

pub fn analyze_stream(
    frames: &[PointCloud],
    reference: &ReferenceStats,
    declared_noise: Option<f64>,
    config: &AnalyzerConfig,
) -> Result<DataFeatures, FeatureError> {
    if frames.is_empty() {
        return Err(FeatureError::EmptyStream);
    }
    reference.validate()?;
    let mean = frames.iter().map(|f| f.len() as f64).sum::<f64>() / frames.len() as f64;
    let noise_sigma = match (declared_noise, config.estimator) {
        (Some(s), _) => Some(s),
        (None, Some(est)) => estimate_stream_noise(frames, &est, config.noise_frames.max(1)),
        (None, None) => None,
    };
    Ok(DataFeatures {
        normalized_point_count: mean / reference.mean_points_per_frame,
        noise_sigma,
        frames_analyzed: frames.len().min(u32::MAX as usize) as u32,
    })
}

fn estimate_stream_noise(frames: &[PointCloud], est: &NoiseEstimator, max_frames: usize) -> Option<f64> {
    let n = frames.len();
    let picks: Vec<usize> = if n <= max_frames {
        (0..n).collect()
    } else {
        (0..max_frames).map(|i| i * (n - 1) / (max_frames - 1).max(1)).collect()
    };
    let mut estimates: Vec<f64> = picks
        .into_iter()
        .filter_map(|i| estimate_noise_sigma_with(&frames[i], est).ok())
        .collect();
    median(&mut estimates)
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// Estimates isotropic coordinate noise from local planarity residuals.
pub fn estimate_noise_sigma(cloud: &PointCloud, k: usize) -> Result<f64, FeatureError> {
    estimate_noise_sigma_with(
        cloud,
        &NoiseEstimator {
            neighbors: k,
            ..NoiseEstimator::default()
        },
    )
}

/// For up to `max_anchors` seeded anchors, fits a least-squares plane to the
/// anchor and its `k` nearest neighbours, takes the orthogonal residual RMS,
/// and returns the median over anchors divided by [`NOISE_CALIBRATION`].
pub fn estimate_noise_sigma_with(cloud: &PointCloud, est: &NoiseEstimator) -> Result<f64, FeatureError> {
    let k = est.neighbors;
    if k < 8 {
        return Err(FeatureError::BadNeighborCount(k));
    }
    let n = cloud.len();
    if n < k + 1 {
        return Err(FeatureError::TooFewPoints { needed: k + 1, got: n });
    }
    let pts: Vec<[f64; 3]> = cloud.points().iter().map(|p| p.xyz()).collect();
    let grid = NeighborGrid::new(&pts, k);
    let anchors = sample_indices(n, n.min(est.max_anchors), est.seed, STREAM_ANCHORS);
    let mut rms: Vec<f64> = anchors
        .into_iter()
        .map(|a| {
            let hood = grid.nearest(&pts, pts[a], k + 1);
            plane_residual_rms(hood.iter().map(|&i| pts[i]))
        })
        .collect();
    let med = median(&mut rms).unwrap_or(0.0);
    Ok((med / NOISE_CALIBRATION).max(0.0))
}

/// RMS orthogonal distance to the total-least-squares plane, i.e. the square
/// root of the smallest covariance eigenvalue.
fn plane_residual_rms(points: impl Iterator<Item = [f64; 3]> + Clone) -> f64 {
    let mut count = 0.0;
    let mut mean = [0.0; 3];
    for p in points.clone() {
        count += 1.0;
        for a in 0..3 {
            mean[a] += p[a];
        }
    }
    if count < 3.0 {
        return 0.0;
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut cov = Matrix3::<f64>::zeros();
    for p in points {
        let d = [p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]];
        for r in 0..3 {
            for c in 0..3 {
                cov[(r, c)] += d[r] * d[c];
            }
        }
    }
    cov /= count;
    let eig = SymmetricEigen::new(cov);
    eig.eigenvalues.min().max(0.0).sqrt()
}

/// Uniform hash grid for k-nearest-neighbour queries. The cell edge is sized
/// so a cell holds about `k` points when the data lie on a surface spanned by
/// the two largest bounding-box extents.
struct NeighborGrid {
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
    max_ring: i64,
}

impl NeighborGrid {
    fn new(pts: &[[f64; 3]], k: usize) -> Self {
        let mut lo = [f64::MAX; 3];
        let mut hi = [f64::MIN; 3];
        for p in pts {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let mut ext: Vec<f64> = (0..3).map(|a| hi[a] - lo[a]).collect();
        ext.sort_by(|a, b| b.total_cmp(a));
        let area = (ext[0] * ext[1]).max(ext[0] * ext[0] * 1e-6);
        let mut cell = (area * k as f64 / pts.len() as f64).sqrt();
        if !(cell.is_finite() && cell > 0.0) {
            cell = 1.0;
        }
        let mut cells: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in pts.iter().enumerate() {
            cells.entry(Self::key(cell, p)).or_default().push(i);
        }
        let max_ring = (ext[0] / cell).ceil() as i64 + 1;
        Self { cell, cells, max_ring }
    }

    fn key(cell: f64, p: &[f64; 3]) -> (i64, i64, i64) {
        (
            (p[0] / cell).floor() as i64,
            (p[1] / cell).floor() as i64,
            (p[2] / cell).floor() as i64,
        )
    }

    /// Indices of the `m` nearest points to `q` (including `q` itself when it
    /// is a member), nearest first, ties by index.
    fn nearest(&self, pts: &[[f64; 3]], q: [f64; 3], m: usize) -> Vec<usize> {
        let (cx, cy, cz) = Self::key(self.cell, &q);
        let mut found: Vec<(f64, usize)> = Vec::new();
        let d2 = |i: usize| {
            let p = pts[i];
            (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)
        };
        let mut ring = 0i64;
        loop {
            // Visit the shell of cells at Chebyshev distance `ring`.
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        if let Some(members) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                            found.extend(members.iter().map(|&i| (d2(i), i)));
                        }
                    }
                }
            }
            if found.len() >= m {
                found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                // Everything within `ring * cell` of q has been visited.
                let safe = (ring as f64 * self.cell).powi(2);
                if found[m - 1].0 <= safe || ring >= self.max_ring {
                    found.truncate(m);
                    return found.into_iter().map(|(_, i)| i).collect();
                }
            } else if ring >= self.max_ring {
                found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                return found.into_iter().map(|(_, i)| i).collect();
            }
            ring += 1;
        }
    }
}

/// A labelled box in the sensor frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBox {
    pub class_name: String,
    pub bbox: OrientedBox3D,
}

pub const ORIENTATION_BINS: usize = 36;

/// Distribution statistics for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassHistograms {
    /// BEV occupancy at 1 m cells, keyed by `(floor(x), floor(y))`.
    pub heat: BTreeMap<(i64, i64), u64>,
    /// Yaw histogram; bin `b` covers `[-180 + 10 b, -170 + 10 b)` degrees.
    pub orientation: [u64; ORIENTATION_BINS],
    /// Objects-per-frame count to number of frames.
    pub objects_per_frame: BTreeMap<usize, u64>,
}

impl Default for ClassHistograms {
    fn default() -> Self {
        Self {
            heat: BTreeMap::new(),
            orientation: [0; ORIENTATION_BINS],
            objects_per_frame: BTreeMap::new(),
        }
    }
}

impl ClassHistograms {
    pub fn is_all_zero(&self) -> bool {
        self.heat.values().all(|c| *c == 0)
            && self.orientation.iter().all(|c| *c == 0)
            && self.objects_per_frame.iter().all(|(k, v)| *k == 0 || *v == 0)
    }
}

/// Orientation bin of a yaw in `(-pi, pi]`; `+180` folds into the last bin.
pub fn orientation_bin(yaw: f64) -> usize {
    let deg = yaw.to_degrees();
    let b = ((deg + 180.0) / 10.0 + 1e-9).floor();
    (b.max(0.0) as usize).min(ORIENTATION_BINS - 1)
}

/// Per-class position, orientation and objects-per-frame histograms.
pub fn dataset_statistics(frames: &[Vec<LabeledBox>], classes: &[&str]) -> BTreeMap<String, ClassHistograms> {
    let mut out: BTreeMap<String, ClassHistograms> = classes
        .iter()
        .map(|c| (c.to_string(), ClassHistograms::default()))
        .collect();
    for frame in frames {
        let mut per_frame: HashMap<&str, usize> = HashMap::new();
        for obj in frame {
            let Some(h) = out.get_mut(&obj.class_name) else {
                continue;
            };
            let c = obj.bbox.center();
            *h.heat.entry((c[0].floor() as i64, c[1].floor() as i64)).or_insert(0) += 1;
            h.orientation[orientation_bin(obj.bbox.yaw())] += 1;
            *per_frame.entry(obj.class_name.as_str()).or_insert(0) += 1;
        }
        for (class, h) in out.iter_mut() {
            let n = per_frame.get(class.as_str()).copied().unwrap_or(0);
            *h.objects_per_frame.entry(n).or_insert(0) += 1;
        }
    }
    out
}

/// Writes `<prefix>_heat.csv` (`class,x_cell,y_cell,count`),
/// `<prefix>_orientation.csv` (`class,bin_start_deg,count`) and
/// `<prefix>_objects_per_frame.csv` (`class,objects,frames`) contents.
pub fn statistics_csv(stats: &BTreeMap<String, ClassHistograms>) -> (String, String, String) {
    let mut heat = String::from("class,x_cell,y_cell,count\n");
    let mut ori = String::from("class,bin_start_deg,count\n");
    let mut opf = String::from("class,objects,frames\n");
    for (class, h) in stats {
        for ((x, y), c) in &h.heat {
            heat.push_str(&format!("{class},{x},{y},{c}\n"));
        }
        for (b, c) in h.orientation.iter().enumerate() {
            ori.push_str(&format!("{class},{},{c}\n", -180 + 10 * b as i64));
        }
        for (n, c) in &h.objects_per_frame {
            opf.push_str(&format!("{class},{n},{c}\n"));
        }
    }
    (heat, ori, opf)
}
