//! Non-learned detectors and a bird's-eye-view renderer.
//!
//! [`OracleDetector`] replays perturbed ground truth and exists to exercise
//! the evaluation harness. [`BaselineDetector`] is a classical geometric
//! pipeline (ground removal, BEV clustering, minimum-area box fit) meant to
//! keep the end-to-end loop runnable without trained networks; it makes no
//! accuracy claims.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use thiserror::Error;

use crate::cloud::{Point, PointCloud};
use crate::eval::Detection;
use crate::features::LabeledBox;
use crate::geometry::{min_area_rect, OrientedBox3D};
use crate::rng::frame_seed;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectError {
    #[error("config out of range: {0}")]
    ConfigOutOfRange(String),
}

/// A frame-by-frame 3D detector.
pub trait Detector {
    fn id(&self) -> &str;
    fn nominal_latency_s(&self) -> f64;
    fn detect(&self, cloud: &PointCloud) -> Vec<Detection>;
}

/// Lowest score an oracle true positive can get; false positives stay below it.
pub const ORACLE_MIN_TP_SCORE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub jitter_sigma_m: f64,
    pub drop_rate: f64,
    /// Mean number of false boxes per frame.
    pub fp_rate: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            jitter_sigma_m: 0.0,
            drop_rate: 0.0,
            fp_rate: 0.0,
            seed: 0,
        }
    }
}

/// Replays ground truth with center jitter, random drops and far-field
/// false positives. Randomness is drawn per frame from a generator seeded
/// by `(seed, frame_id)`, so output does not depend on call order.
#[derive(Debug, Clone)]
pub struct OracleDetector {
    id: String,
    gt: HashMap<String, Vec<LabeledBox>>,
    config: OracleConfig,
}

impl OracleDetector {
    pub fn new(
        gt: impl IntoIterator<Item = (String, Vec<LabeledBox>)>,
        config: OracleConfig,
    ) -> Result<Self, DetectError> {
        let c = &config;
        if !(c.jitter_sigma_m.is_finite() && c.jitter_sigma_m >= 0.0) {
            return Err(DetectError::ConfigOutOfRange(format!(
                "jitter sigma {}",
                c.jitter_sigma_m
            )));
        }
        if !(0.0..=1.0).contains(&c.drop_rate) {
            return Err(DetectError::ConfigOutOfRange(format!("drop rate {}", c.drop_rate)));
        }
        if !(c.fp_rate.is_finite() && c.fp_rate >= 0.0) {
            return Err(DetectError::ConfigOutOfRange(format!("fp rate {}", c.fp_rate)));
        }
        Ok(Self {
            id: format!("oracle(j={},d={},fp={})", c.jitter_sigma_m, c.drop_rate, c.fp_rate),
            gt: gt.into_iter().collect(),
            config,
        })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    /// Detections for a frame id; unknown frames produce only false positives.
    pub fn detect_frame(&self, frame_id: &str) -> Vec<Detection> {
        let c = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(c.seed, frame_id));
        let jitter = Normal::new(0.0, c.jitter_sigma_m).expect("validated sigma");
        let empty = Vec::new();
        let gts = self.gt.get(frame_id).unwrap_or(&empty);
        let mut out = Vec::with_capacity(gts.len());
        for g in gts {
            let d = [
                jitter.sample(&mut rng),
                jitter.sample(&mut rng),
                jitter.sample(&mut rng),
            ];
            let keep = rng.random::<f64>() >= c.drop_rate;
            if !keep {
                continue;
            }
            let ctr = g.bbox.center();
            let center = [ctr[0] + d[0], ctr[1] + d[1], ctr[2] + d[2]];
            let err = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            out.push(Detection {
                bbox: OrientedBox3D::new(center, g.bbox.dims(), g.bbox.yaw()).expect("finite jitter"),
                class_name: g.class_name.clone(),
                score: (1.0 / (1.0 + err)).max(ORACLE_MIN_TP_SCORE),
            });
        }
        if c.fp_rate > 0.0 {
            let n = Poisson::new(c.fp_rate).expect("validated rate").sample(&mut rng) as usize;
            let class = gts.first().map_or("Car", |g| g.class_name.as_str()).to_string();
            let dims = gts.first().map_or([3.9, 1.6, 1.5], |g| g.bbox.dims());
            for _ in 0..n {
                let range = rng.random_range(200.0..300.0);
                let bearing = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                let score = ORACLE_MIN_TP_SCORE * rng.random::<f64>();
                out.push(Detection {
                    bbox: OrientedBox3D::new([range * bearing.cos(), range * bearing.sin(), 0.0], dims, yaw)
                        .expect("finite box"),
                    class_name: class.clone(),
                    score,
                });
            }
        }
        out
    }
}

impl Detector for OracleDetector {
    fn id(&self) -> &str {
        &self.id
    }

    fn nominal_latency_s(&self) -> f64 {
        0.0
    }

    fn detect(&self, cloud: &PointCloud) -> Vec<Detection> {
        self.detect_frame(cloud.frame_id())
    }
}

/// Size prior used for classification and scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTemplate {
    /// `(length, width, height)` in meters.
    pub dims: [f64; 3],
    /// Points a well-observed object of this class is expected to return.
    pub expected_points: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub ground_threshold_m: f64,
    pub link_distance_m: f64,
    pub min_cluster_size: usize,
    pub ground_rounds: usize,
    /// Share of lowest points seeding the ground fit.
    pub ground_seed_fraction: f64,
    pub classes: BTreeMap<String, ClassTemplate>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        let t = |dims, expected_points| ClassTemplate { dims, expected_points };
        Self {
            ground_threshold_m: 0.2,
            link_distance_m: 0.6,
            min_cluster_size: 10,
            ground_rounds: 3,
            ground_seed_fraction: 0.2,
            classes: BTreeMap::from([
                ("Car".to_string(), t([3.9, 1.6, 1.5], 300.0)),
                ("Pedestrian".to_string(), t([0.8, 0.6, 1.75], 60.0)),
                ("Cyclist".to_string(), t([1.8, 0.6, 1.75], 80.0)),
            ]),
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        let bad = |what: &str| Err(DetectError::ConfigOutOfRange(what.to_string()));
        if !(self.ground_threshold_m.is_finite() && self.ground_threshold_m > 0.0) {
            return bad("ground threshold must be positive");
        }
        if !(self.link_distance_m.is_finite() && self.link_distance_m > 0.0) {
            return bad("link distance must be positive");
        }
        if self.min_cluster_size == 0 {
            return bad("min cluster size must be at least 1");
        }
        if !(self.ground_seed_fraction > 0.0 && self.ground_seed_fraction <= 1.0) {
            return bad("ground seed fraction must be in (0, 1]");
        }
        if self.classes.is_empty() {
            return bad("class table is empty");
        }
        for (name, t) in &self.classes {
            if t.dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) || !(t.expected_points > 0.0) {
                return bad(&format!("template for {name} must be positive"));
            }
        }
        Ok(())
    }
}

/// Ground plane `z = a x + b y + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundPlane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl GroundPlane {
    pub fn height_at(&self, x: f64, y: f64) -> f64 {
        self.a * x + self.b * y + self.c
    }
}

fn fit_plane(points: &[[f64; 3]], idx: &[usize]) -> Option<GroundPlane> {
    if idx.len() < 3 {
        return None;
    }
    let mut ata = Matrix3::<f64>::zeros();
    let mut atb = Vector3::<f64>::zeros();
    for &i in idx {
        let [x, y, z] = points[i];
        let row = Vector3::new(x, y, 1.0);
        ata += row * row.transpose();
        atb += row * z;
    }
    let s = ata.cholesky()?.solve(&atb);
    Some(GroundPlane {
        a: s[0],
        b: s[1],
        c: s[2],
    })
}

/// Least-squares ground fit seeded by the lowest points and refined by
/// reselecting inliers a fixed number of times.
pub fn fit_ground(points: &[[f64; 3]], config: &BaselineConfig) -> Option<GroundPlane> {
    if points.is_empty() {
        return None;
    }
    let mut by_z: Vec<usize> = (0..points.len()).collect();
    by_z.sort_by(|&i, &j| points[i][2].total_cmp(&points[j][2]).then(i.cmp(&j)));
    let seed_n = ((points.len() as f64 * config.ground_seed_fraction).ceil() as usize).max(3);
    by_z.truncate(seed_n);
    let mut plane = fit_plane(points, &by_z).unwrap_or(GroundPlane {
        a: 0.0,
        b: 0.0,
        c: points[by_z[0]][2],
    });
    for _ in 0..config.ground_rounds {
        let inliers: Vec<usize> = (0..points.len())
            .filter(|&i| (points[i][2] - plane.height_at(points[i][0], points[i][1])).abs() < config.ground_threshold_m)
            .collect();
        match fit_plane(points, &inliers) {
            Some(p) => plane = p,
            None => break,
        }
    }
    Some(plane)
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller root wins so labels do not depend on union order.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.0[hi] = lo;
        }
    }
}

/// Connected components in the plane under a link distance, via a grid
/// hash with cell size equal to the link distance.
pub fn cluster_bev(points: &[[f64; 2]], link: f64) -> Vec<Vec<usize>> {
    let cell = |p: &[f64; 2]| ((p[0] / link).floor() as i64, (p[1] / link).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(cell(p)).or_default().push(i);
    }
    let mut uf = UnionFind((0..points.len()).collect());
    let link2 = link * link;
    for (i, p) in points.iter().enumerate() {
        let (cx, cy) = cell(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = grid.get(&(cx + dx, cy + dy)) else {
                    continue;
                };
                for &j in bucket {
                    if j > i {
                        let q = points[j];
                        if (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) <= link2 {
                            uf.union(i, j);
                        }
                    }
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..points.len() {
        let r = uf.find(i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Smallest box extent the baseline emits, so degenerate clusters still
/// yield valid boxes.
const MIN_EXTENT_M: f64 = 0.05;

/// Ground removal, BEV clustering and minimum-area box fitting.
#[derive(Debug, Clone)]
pub struct BaselineDetector {
    config: BaselineConfig,
}

impl BaselineDetector {
    pub fn new(config: BaselineConfig) -> Result<Self, DetectError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.config
    }

    fn classify(&self, dims: [f64; 3]) -> (&str, &ClassTemplate) {
        let mut best: Option<(f64, &str, &ClassTemplate)> = None;
        for (name, t) in &self.config.classes {
            let d: f64 = dims.iter().zip(t.dims).map(|(a, b)| (a - b).powi(2)).sum();
            if best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, name, t));
            }
        }
        let (_, name, t) = best.expect("validated non-empty table");
        (name, t)
    }
}

impl Default for BaselineDetector {
    fn default() -> Self {
        Self::new(BaselineConfig::default()).expect("default config is valid")
    }
}

impl Detector for BaselineDetector {
    fn id(&self) -> &str {
        "baseline"
    }

    fn nominal_latency_s(&self) -> f64 {
        0.05
    }

    fn detect(&self, cloud: &PointCloud) -> Vec<Detection> {
        let cfg = &self.config;
        let mut pts: Vec<Point> = cloud.points().to_vec();
        pts.sort_by(|a, b| {
            a.x.total_cmp(&b.x)
                .then(a.y.total_cmp(&b.y))
                .then(a.z.total_cmp(&b.z))
                .then(a.intensity.total_cmp(&b.intensity))
        });
        let xyz: Vec<[f64; 3]> = pts.iter().map(Point::xyz).collect();
        let Some(ground) = fit_ground(&xyz, cfg) else {
            return Vec::new();
        };
        let above: Vec<[f64; 3]> = xyz
            .into_iter()
            .filter(|p| p[2] - ground.height_at(p[0], p[1]) >= cfg.ground_threshold_m)
            .collect();
        let bev: Vec<[f64; 2]> = above.iter().map(|p| [p[0], p[1]]).collect();

        let mut out = Vec::new();
        for members in cluster_bev(&bev, cfg.link_distance_m) {
            if members.len() < cfg.min_cluster_size {
                continue;
            }
            let foot: Vec<[f64; 2]> = members.iter().map(|&i| bev[i]).collect();
            let Some(rect) = min_area_rect(&foot) else {
                continue;
            };
            let base = ground.height_at(rect.center[0], rect.center[1]);
            let top = members.iter().map(|&i| above[i][2]).fold(f64::MIN, f64::max);
            let dims = [
                rect.length.max(MIN_EXTENT_M),
                rect.width.max(MIN_EXTENT_M),
                (top - base).max(MIN_EXTENT_M),
            ];
            let center = [rect.center[0], rect.center[1], base + 0.5 * dims[2]];
            let Ok(bbox) = OrientedBox3D::new(center, dims, rect.angle) else {
                continue;
            };
            let (class_name, template) = self.classify(dims);
            out.push(Detection {
                bbox,
                class_name: class_name.to_string(),
                score: (members.len() as f64 / template.expected_points).clamp(0.0, 1.0),
            });
        }
        out
    }
}

/// Pixels per meter in rendered scenes.
pub const SVG_SCALE: f64 = 10.0;
const SVG_MARGIN_M: f64 = 2.0;

fn svg_rect(out: &mut String, b: &OrientedBox3D, map: &impl Fn(f64, f64) -> (f64, f64), style: &str) {
    let c = b.center();
    let (cx, cy) = map(c[0], c[1]);
    let (w, h) = (b.length() * SVG_SCALE, b.width() * SVG_SCALE);
    let _ = writeln!(
        out,
        r#"<rect x="{:.2}" y="{:.2}" width="{w:.2}" height="{h:.2}" transform="rotate({:.4} {cx:.2} {cy:.2})" {style}/>"#,
        cx - 0.5 * w,
        cy - 0.5 * h,
        -b.yaw().to_degrees(),
    );
}

/// Top-down SVG of a frame: points as dots, detections as solid green
/// rectangles, ground truth as dashed ones. +x points right, +y up.
pub fn render_bev_svg(cloud: &PointCloud, detections: &[Detection], gts: Option<&[OrientedBox3D]>) -> String {
    let gts = gts.unwrap_or(&[]);
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for p in cloud.points() {
        xs.push(p.x as f64);
        ys.push(p.y as f64);
    }
    for b in detections.iter().map(|d| &d.bbox).chain(gts) {
        for c in b.footprint() {
            xs.push(c[0]);
            ys.push(c[1]);
        }
    }
    let range = |v: &[f64]| {
        if v.is_empty() {
            (-1.0, 1.0)
        } else {
            (
                v.iter().copied().fold(f64::INFINITY, f64::min) - SVG_MARGIN_M,
                v.iter().copied().fold(f64::NEG_INFINITY, f64::max) + SVG_MARGIN_M,
            )
        }
    };
    let (xmin, xmax) = range(&xs);
    let (ymin, ymax) = range(&ys);
    let width = (xmax - xmin) * SVG_SCALE;
    let height = (ymax - ymin) * SVG_SCALE;
    let map = |x: f64, y: f64| ((x - xmin) * SVG_SCALE, (ymax - y) * SVG_SCALE);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.2}" height="{height:.2}" viewBox="0 0 {width:.2} {height:.2}">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, xml_escape(cloud.frame_id()));
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="black"/>"#);
    let _ = writeln!(s, r#"<g id="scene">"#);
    if !cloud.is_empty() {
        let _ = writeln!(s, r#"<g id="points" fill="white">"#);
        for p in cloud.points() {
            let (x, y) = map(p.x as f64, p.y as f64);
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="0.6"/>"#);
        }
        let _ = writeln!(s, "</g>");
    }
    if !gts.is_empty() {
        let _ = writeln!(s, r#"<g id="ground-truth">"#);
        for b in gts {
            svg_rect(
                &mut s,
                b,
                &map,
                r#"fill="none" stroke="red" stroke-width="1.5" stroke-dasharray="4 3""#,
            );
        }
        let _ = writeln!(s, "</g>");
    }
    if !detections.is_empty() {
        let _ = writeln!(s, r#"<g id="detections">"#);
        for d in detections {
            svg_rect(&mut s, &d.bbox, &map, r#"fill="none" stroke="lime" stroke-width="1.5""#);
        }
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::rotated_iou_3d;

    fn lb(class: &str, c: [f64; 3]) -> LabeledBox {
        LabeledBox {
            class_name: class.into(),
            bbox: OrientedBox3D::new(c, [3.9, 1.6, 1.5], 0.3).unwrap(),
        }
    }

    fn oracle(cfg: OracleConfig) -> OracleDetector {
        OracleDetector::new(
            [(
                "f".to_string(),
                vec![lb("Car", [10.0, 2.0, -1.0]), lb("Car", [20.0, -3.0, -1.0])],
            )],
            cfg,
        )
        .unwrap()
    }

    #[test]
    fn unperturbed_oracle_is_identity() {
        let o = oracle(OracleConfig::default());
        let d = o.detect_frame("f");
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].bbox, lb("Car", [10.0, 2.0, -1.0]).bbox);
        assert_eq!(d[0].score, 1.0);
        assert!(o.detect_frame("other").is_empty());
    }

    #[test]
    fn oracle_drop_all_and_determinism() {
        let o = oracle(OracleConfig {
            drop_rate: 1.0,
            ..Default::default()
        });
        assert!(o.detect_frame("f").is_empty());
        let cfg = OracleConfig {
            jitter_sigma_m: 0.3,
            drop_rate: 0.3,
            fp_rate: 2.0,
            seed: 5,
        };
        assert_eq!(oracle(cfg.clone()).detect_frame("f"), oracle(cfg).detect_frame("f"));
    }

    #[test]
    fn oracle_false_positives_score_below_true_positives() {
        let o = oracle(OracleConfig {
            jitter_sigma_m: 2.0,
            fp_rate: 5.0,
            seed: 1,
            ..Default::default()
        });
        let d = o.detect_frame("f");
        let (far, near): (Vec<_>, Vec<_>) = d
            .iter()
            .partition(|d| d.bbox.center()[0].hypot(d.bbox.center()[1]) > 150.0);
        assert!(!far.is_empty());
        let min_tp = near.iter().map(|d| d.score).fold(1.0, f64::min);
        assert!(far.iter().all(|d| d.score < min_tp));
    }

    #[test]
    fn oracle_rejects_bad_rates() {
        assert!(OracleDetector::new(
            [],
            OracleConfig {
                drop_rate: 1.5,
                ..Default::default()
            }
        )
        .is_err());
        assert!(OracleDetector::new(
            [],
            OracleConfig {
                jitter_sigma_m: -1.0,
                ..Default::default()
            }
        )
        .is_err());
    }

    fn grid_ground(half: f64, step: f64, z: f64) -> Vec<Point> {
        let n = (2.0 * half / step) as i64;
        let mut v = Vec::new();
        for i in 0..=n {
            for j in 0..=n {
                v.push(Point::new(
                    (-half + i as f64 * step) as f32,
                    (-half + j as f64 * step) as f32,
                    z as f32,
                    0.1,
                ));
            }
        }
        v
    }

    fn box_points(c: [f64; 2], dims: [f64; 3], ground: f64, n: usize) -> Vec<Point> {
        // Deterministic lattice over the box volume.
        let per = (n as f64).cbrt().ceil() as usize;
        let mut v = Vec::new();
        'outer: for i in 0..per {
            for j in 0..per {
                for k in 0..per {
                    if v.len() == n {
                        break 'outer;
                    }
                    let f = |t: usize| (t as f64 + 0.5) / per as f64 - 0.5;
                    v.push(Point::new(
                        (c[0] + f(i) * dims[0]) as f32,
                        (c[1] + f(j) * dims[1]) as f32,
                        (ground + (f(k) + 0.5) * dims[2]) as f32,
                        0.5,
                    ));
                }
            }
        }
        v
    }

    #[test]
    fn baseline_empty_cloud() {
        assert!(BaselineDetector::default().detect(&PointCloud::empty("e")).is_empty());
    }

    #[test]
    fn baseline_finds_single_car() {
        let mut pts = grid_ground(15.0, 0.5, -1.7);
        pts.extend(box_points([5.0, 3.0], [4.0, 2.0, 1.5], -1.7, 512));
        let cloud = PointCloud::new("s", pts).unwrap();
        let d = BaselineDetector::default().detect(&cloud);
        assert_eq!(d.len(), 1, "{d:?}");
        assert_eq!(d[0].class_name, "Car");
        let truth = OrientedBox3D::new([5.0, 3.0, -1.7 + 0.75], [4.0, 2.0, 1.5], 0.0).unwrap();
        assert!(rotated_iou_3d(&d[0].bbox, &truth) >= 0.7);
    }

    #[test]
    fn baseline_separates_clusters_and_ignores_order() {
        let mut pts = grid_ground(20.0, 0.5, -1.7);
        pts.extend(box_points([-5.0, 0.0], [4.0, 2.0, 1.5], -1.7, 300));
        pts.extend(box_points([5.0, 0.0], [4.0, 2.0, 1.5], -1.7, 300));
        let cloud = PointCloud::new("s", pts.clone()).unwrap();
        let det = BaselineDetector::default();
        let a = det.detect(&cloud);
        assert_eq!(a.len(), 2);
        pts.reverse();
        pts.swap(3, 900);
        assert_eq!(det.detect(&PointCloud::new("s", pts).unwrap()), a);
    }

    #[test]
    fn baseline_rejects_bad_config() {
        let cfg = BaselineConfig {
            link_distance_m: 0.0,
            ..Default::default()
        };
        assert!(BaselineDetector::new(cfg).is_err());
    }

    #[test]
    fn svg_outputs() {
        let empty = render_bev_svg(&PointCloud::empty("e"), &[], None);
        assert!(empty.contains("<g id=\"scene\">\n</g>"));
        assert!(empty.trim_end().ends_with("</svg>"));
        let b = OrientedBox3D::new([3.0, 1.0, 0.0], [4.0, 2.0, 1.5], 0.5).unwrap();
        let d = Detection {
            bbox: b,
            class_name: "Car".into(),
            score: 0.9,
        };
        let one = render_bev_svg(&PointCloud::empty("e"), std::slice::from_ref(&d), None);
        assert_eq!(one.matches("<rect x=").count(), 1);
        assert!(one.contains(&format!("rotate({:.4} ", -0.5f64.to_degrees())));
        let again = render_bev_svg(&PointCloud::empty("e"), &[d], None);
        assert_eq!(one, again);
    }
}
