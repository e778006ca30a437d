//! 3D detection evaluation: rotated IoU, difficulty binning, greedy
//! matching and average precision over 40 recall positions.
//!
//! Difficulty cutoffs follow the KITTI object devkit:
//!
//! | level    | min 2D height (px) | max occlusion | max truncation |
//! |----------|--------------------|---------------|----------------|
//! | easy     | 40                 | 0             | 0.15           |
//! | moderate | 25                 | 1             | 0.30           |
//! | hard     | 25                 | 2             | 0.50           |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::geometry::{clip_convex, polygon_area, OrientedBox3D};
use crate::kitti::{label_to_lidar_box, Calibration, KittiError, ObjectLabel, DONT_CARE};

pub const EASY_MIN_HEIGHT_PX: f64 = 40.0;
pub const MODERATE_MIN_HEIGHT_PX: f64 = 25.0;
pub const HARD_MIN_HEIGHT_PX: f64 = 25.0;
pub const MAX_OCCLUSION: [i32; 3] = [0, 1, 2];
pub const MAX_TRUNCATION: [f64; 3] = [0.15, 0.30, 0.50];
/// Fraction of a detection footprint that must lie in a DontCare region
/// for the detection to be discarded.
pub const DONT_CARE_OVERLAP: f64 = 0.5;

const RECALL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("detections of class `{0}` and `{1}` in one matching call")]
    MixedClasses(String, String),
    #[error("frame {index}: detections for `{detections}` but ground truth for `{ground_truth}`")]
    FrameIdMismatch {
        index: usize,
        detections: String,
        ground_truth: String,
    },
    #[error("{0} detection frames but {1} ground-truth frames")]
    FrameCountMismatch(usize, usize),
    #[error("no IoU threshold configured for class `{0}`")]
    UnknownClass(String),
    #[error("invalid eval config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Kitti(#[from] KittiError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
    Ignored,
}

impl Difficulty {
    pub const LEVELS: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard];

    pub fn token(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Moderate => "moderate",
            Difficulty::Hard => "hard",
            Difficulty::Ignored => "ignored",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "moderate" => Ok(Difficulty::Moderate),
            "hard" => Ok(Difficulty::Hard),
            "ignored" => Ok(Difficulty::Ignored),
            _ => Err(format!("unknown difficulty `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: OrientedBox3D,
    pub class_name: String,
    pub score: f64,
}

/// One ground-truth object. DontCare regions use `class_name == "DontCare"`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub bbox: OrientedBox3D,
    pub class_name: String,
    pub difficulty: Difficulty,
    pub ignore: bool,
}

impl GroundTruth {
    pub fn new(bbox: OrientedBox3D, class_name: impl Into<String>, difficulty: Difficulty) -> Self {
        Self {
            bbox,
            class_name: class_name.into(),
            difficulty,
            ignore: false,
        }
    }

    /// Converts a label. DontCare records without usable dimensions yield `None`.
    pub fn from_label(label: &ObjectLabel, calib: &Calibration) -> Result<Option<Self>, EvalError> {
        if label.is_dont_care() && label.dims.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Ok(None);
        }
        Ok(Some(Self::new(
            label_to_lidar_box(label, calib)?,
            label.class_name.clone(),
            assign_difficulty(label),
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub iou_thresholds: BTreeMap<String, f64>,
    pub recall_positions: usize,
    pub neighbor_ignore: BTreeMap<String, BTreeSet<String>>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: [("Car", 0.7), ("Pedestrian", 0.5), ("Cyclist", 0.5)]
                .into_iter()
                .map(|(c, t)| (c.to_string(), t))
                .collect(),
            recall_positions: 40,
            neighbor_ignore: [("Car".to_string(), BTreeSet::from(["Van".to_string()]))].into(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.recall_positions == 0 {
            return Err(EvalError::BadConfig("recall_positions must be at least 1".into()));
        }
        for (class, t) in &self.iou_thresholds {
            if !(*t > 0.0 && *t <= 1.0) {
                return Err(EvalError::BadConfig(format!(
                    "IoU threshold {t} for {class} not in (0, 1]"
                )));
            }
        }
        Ok(())
    }

    fn is_neighbor(&self, class: &str, other: &str) -> bool {
        self.neighbor_ignore.get(class).is_some_and(|s| s.contains(other))
    }
}

/// Order used to make pairwise geometry independent of argument order.
fn box_key(b: &OrientedBox3D) -> [u64; 7] {
    let c = b.center();
    let d = b.dims();
    [c[0], c[1], c[2], d[0], d[1], d[2], b.yaw()].map(f64::to_bits)
}

/// Area of the intersection of two box footprints.
pub fn bev_intersection_area(a: &OrientedBox3D, b: &OrientedBox3D) -> f64 {
    let (a, b) = if box_key(a) <= box_key(b) { (a, b) } else { (b, a) };
    let dx = a.center()[0] - b.center()[0];
    let dy = a.center()[1] - b.center()[1];
    let reach = 0.5 * (a.length().hypot(a.width()) + b.length().hypot(b.width()));
    if dx * dx + dy * dy > reach * reach {
        return 0.0;
    }
    polygon_area(&clip_convex(&a.footprint(), &b.footprint())).abs()
}

/// Rotated 3D IoU in `[0, 1]`.
pub fn rotated_iou_3d(a: &OrientedBox3D, b: &OrientedBox3D) -> f64 {
    let dz = a.z_max().min(b.z_max()) - a.z_min().max(b.z_min());
    if dz <= 0.0 {
        return 0.0;
    }
    let inter = bev_intersection_area(a, b) * dz;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.volume() + b.volume() - inter;
    (inter / union).clamp(0.0, 1.0)
}

pub fn assign_difficulty(label: &ObjectLabel) -> Difficulty {
    let h = label.bbox_height();
    let ok = |i: usize, min_h: f64| {
        h >= min_h && label.occlusion <= MAX_OCCLUSION[i] && label.truncation <= MAX_TRUNCATION[i]
    };
    if ok(0, EASY_MIN_HEIGHT_PX) {
        Difficulty::Easy
    } else if ok(1, MODERATE_MIN_HEIGHT_PX) {
        Difficulty::Moderate
    } else if ok(2, HARD_MIN_HEIGHT_PX) {
        Difficulty::Hard
    } else {
        Difficulty::Ignored
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchLabel {
    TruePositive,
    FalsePositive,
    /// Matched an ignored object, or discarded by a DontCare region.
    Ignored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// One label per input detection, in input order.
    pub labels: Vec<MatchLabel>,
    pub false_negatives: usize,
    /// Ground truths that count towards recall.
    pub counted_gt: usize,
}

impl MatchResult {
    pub fn count(&self, label: MatchLabel) -> usize {
        self.labels.iter().filter(|l| **l == label).count()
    }
}

fn in_dont_care(det: &Detection, gts: &[GroundTruth]) -> bool {
    let area = det.bbox.length() * det.bbox.width();
    gts.iter()
        .filter(|g| g.class_name == DONT_CARE)
        .any(|g| bev_intersection_area(&det.bbox, &g.bbox) >= DONT_CARE_OVERLAP * area)
}

/// Greedy highest-score-first matching for one class and difficulty.
///
/// A ground truth counts if it has the evaluated class, is not flagged
/// ignore, and its difficulty is at or below the evaluated one. Same-class
/// objects of a harder (or ignored) difficulty, flagged objects and
/// neighbour classes can absorb a detection without it counting either way.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruth],
    class: &str,
    difficulty: Difficulty,
    config: &EvalConfig,
) -> Result<MatchResult, EvalError> {
    if let Some(d) = dets.iter().find(|d| d.class_name != class) {
        return Err(EvalError::MixedClasses(class.to_string(), d.class_name.clone()));
    }
    let threshold = *config
        .iou_thresholds
        .get(class)
        .ok_or_else(|| EvalError::UnknownClass(class.to_string()))?;

    #[derive(Clone, Copy, PartialEq)]
    enum Role {
        Counted,
        Absorbing,
        Unrelated,
    }
    let roles: Vec<Role> = gts
        .iter()
        .map(|g| {
            if g.class_name == class {
                if !g.ignore && g.difficulty != Difficulty::Ignored && g.difficulty <= difficulty {
                    Role::Counted
                } else {
                    Role::Absorbing
                }
            } else if config.is_neighbor(class, &g.class_name) {
                Role::Absorbing
            } else {
                Role::Unrelated
            }
        })
        .collect();

    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| dets[j].score.total_cmp(&dets[i].score));

    let mut used = vec![false; gts.len()];
    let mut labels = vec![MatchLabel::FalsePositive; dets.len()];
    for &di in &order {
        let det = &dets[di];
        if in_dont_care(det, gts) {
            labels[di] = MatchLabel::Ignored;
            continue;
        }
        let best = |role: Role| {
            let mut best: Option<(usize, f64)> = None;
            for (gi, g) in gts.iter().enumerate() {
                if used[gi] || roles[gi] != role {
                    continue;
                }
                let iou = rotated_iou_3d(&det.bbox, &g.bbox);
                if iou >= threshold && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((gi, iou));
                }
            }
            best.map(|(gi, _)| gi)
        };
        if let Some(gi) = best(Role::Counted) {
            used[gi] = true;
            labels[di] = MatchLabel::TruePositive;
        } else if let Some(gi) = best(Role::Absorbing) {
            used[gi] = true;
            labels[di] = MatchLabel::Ignored;
        }
    }
    let counted_gt = roles.iter().filter(|r| **r == Role::Counted).count();
    let matched = roles
        .iter()
        .zip(&used)
        .filter(|(r, u)| **r == Role::Counted && **u)
        .count();
    Ok(MatchResult {
        labels,
        false_negatives: counted_gt - matched,
        counted_gt,
    })
}

/// AP over `positions` evenly spaced recall levels `i / positions`.
///
/// `scored` holds `(score, label)` pairs in any order; ignored entries are
/// skipped. Operating points are taken after each distinct score, so the
/// result does not depend on the order of equal-score entries.
pub fn average_precision(scored: &[(f64, MatchLabel)], total_gt: usize, positions: usize) -> f64 {
    let mut seq: Vec<(f64, bool)> = scored
        .iter()
        .filter(|(_, l)| *l != MatchLabel::Ignored)
        .map(|(s, l)| (*s, *l == MatchLabel::TruePositive))
        .collect();
    if total_gt == 0 {
        return if seq.iter().any(|(_, tp)| !tp) { 0.0 } else { 1.0 };
    }
    seq.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points: Vec<(f64, f64)> = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (i, (score, is_tp)) in seq.iter().enumerate() {
        if *is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        let boundary = seq.get(i + 1).is_none_or(|next| next.0 != *score);
        if boundary {
            points.push((tp as f64 / total_gt as f64, tp as f64 / (tp + fp) as f64));
        }
    }
    // Suffix maximum of precision gives p_interp at each operating point.
    for i in (0..points.len().saturating_sub(1)).rev() {
        points[i].1 = points[i].1.max(points[i + 1].1);
    }
    let mut sum = 0.0;
    let mut j = 0;
    for i in 1..=positions {
        let r = i as f64 / positions as f64;
        while j < points.len() && points[j].0 + RECALL_EPS < r {
            j += 1;
        }
        if j == points.len() {
            break;
        }
        sum += points[j].1;
    }
    sum / positions as f64
}

/// [`average_precision`] at 40 recall positions.
pub fn average_precision_r40(scored: &[(f64, MatchLabel)], total_gt: usize) -> f64 {
    average_precision(scored, total_gt, 40)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub class_name: String,
    pub difficulty: Difficulty,
    /// `None` when there is nothing to evaluate (no ground truth and no detections).
    pub ap_percent: Option<f64>,
    pub tp: usize,
    pub fp: usize,
    pub fn_count: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub entries: Vec<ReportEntry>,
}

impl EvalReport {
    pub fn get(&self, class: &str, difficulty: Difficulty) -> Option<&ReportEntry> {
        self.entries
            .iter()
            .find(|e| e.class_name == class && e.difficulty == difficulty)
    }

    /// CSV with header `class,difficulty,ap_percent,tp,fp,fn`; not-applicable AP is `NA`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["class", "difficulty", "ap_percent", "tp", "fp", "fn"])
            .expect("in-memory write");
        for e in &self.entries {
            let ap = e.ap_percent.map_or("NA".to_string(), |a| format!("{a:.4}"));
            w.write_record([
                e.class_name.clone(),
                e.difficulty.to_string(),
                ap,
                e.tp.to_string(),
                e.fp.to_string(),
                e.fn_count.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv")
    }
}

/// Detections and ground truth of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameData<T> {
    pub frame_id: String,
    pub items: Vec<T>,
}

impl<T> FrameData<T> {
    pub fn new(frame_id: impl Into<String>, items: Vec<T>) -> Self {
        Self {
            frame_id: frame_id.into(),
            items,
        }
    }
}

/// Pools matches across frames and reports AP for every configured class
/// at each difficulty level. Classes are reported in name order.
pub fn evaluate(
    detections: &[FrameData<Detection>],
    ground_truth: &[FrameData<GroundTruth>],
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    config.validate()?;
    if detections.len() != ground_truth.len() {
        return Err(EvalError::FrameCountMismatch(detections.len(), ground_truth.len()));
    }
    for (index, (d, g)) in detections.iter().zip(ground_truth).enumerate() {
        if d.frame_id != g.frame_id {
            return Err(EvalError::FrameIdMismatch {
                index,
                detections: d.frame_id.clone(),
                ground_truth: g.frame_id.clone(),
            });
        }
    }
    let mut entries = Vec::new();
    for class in config.iou_thresholds.keys() {
        let per_frame: Vec<Vec<Detection>> = detections
            .iter()
            .map(|f| f.items.iter().filter(|d| &d.class_name == class).cloned().collect())
            .collect();
        for difficulty in Difficulty::LEVELS {
            let mut scored = Vec::new();
            let (mut total_gt, mut fn_count) = (0, 0);
            for (dets, gts) in per_frame.iter().zip(ground_truth) {
                let m = match_detections(dets, &gts.items, class, difficulty, config)?;
                total_gt += m.counted_gt;
                fn_count += m.false_negatives;
                scored.extend(dets.iter().map(|d| d.score).zip(m.labels));
            }
            let tp = scored.iter().filter(|(_, l)| *l == MatchLabel::TruePositive).count();
            let fp = scored.iter().filter(|(_, l)| *l == MatchLabel::FalsePositive).count();
            let ap_percent = if total_gt == 0 && tp + fp == 0 {
                None
            } else {
                Some(100.0 * average_precision(&scored, total_gt, config.recall_positions))
            };
            entries.push(ReportEntry {
                class_name: class.clone(),
                difficulty,
                ap_percent,
                tp,
                fp,
                fn_count,
            });
        }
    }
    Ok(EvalReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn bx(c: [f64; 3], d: [f64; 3], yaw: f64) -> OrientedBox3D {
        OrientedBox3D::new(c, d, yaw).unwrap()
    }

    fn det(b: OrientedBox3D, score: f64) -> Detection {
        Detection {
            bbox: b,
            class_name: "Car".into(),
            score,
        }
    }

    fn label(h: f64, occ: i32, trunc: f64) -> ObjectLabel {
        ObjectLabel {
            class_name: "Car".into(),
            truncation: trunc,
            occlusion: occ,
            alpha: 0.0,
            bbox2d: [100.0, 100.0, 150.0, 100.0 + h],
            dims: [1.5, 1.6, 3.9],
            location_cam: [0.0, 1.0, 10.0],
            rotation_y: 0.0,
            score: None,
        }
    }

    #[test]
    fn iou_analytic_cases() {
        let a = bx([0.0, 0.0, 0.0], [4.0, 2.0, 2.0], 0.0);
        assert_eq!(rotated_iou_3d(&a, &a), 1.0);
        assert_eq!(rotated_iou_3d(&a, &bx([100.0, 0.0, 0.0], [4.0, 2.0, 2.0], 0.0)), 0.0);
        let shifted = bx([2.0, 0.0, 0.0], [4.0, 2.0, 2.0], 0.0);
        assert!((rotated_iou_3d(&a, &shifted) - 1.0 / 3.0).abs() < 1e-12);
        let turned = bx([0.0, 0.0, 0.0], [4.0, 2.0, 2.0], FRAC_PI_2);
        assert!((rotated_iou_3d(&a, &turned) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn iou_vertical_overlap_and_contact() {
        let a = bx([0.0, 0.0, 0.0], [2.0, 2.0, 2.0], 0.0);
        let half_up = bx([0.0, 0.0, 1.0], [2.0, 2.0, 2.0], 0.0);
        assert!((rotated_iou_3d(&a, &half_up) - 1.0 / 3.0).abs() < 1e-12);
        let touching = bx([0.0, 0.0, 2.0], [2.0, 2.0, 2.0], 0.0);
        assert_eq!(rotated_iou_3d(&a, &touching), 0.0);
        let side = bx([2.0, 0.0, 0.0], [2.0, 2.0, 2.0], 0.0);
        assert_eq!(rotated_iou_3d(&a, &side), 0.0);
    }

    #[test]
    fn iou_is_exactly_symmetric() {
        let a = bx([0.3, -0.2, 0.1], [4.1, 1.7, 1.5], 0.37);
        let b = bx([0.9, 0.4, -0.2], [3.8, 1.9, 1.6], -1.1);
        assert_eq!(rotated_iou_3d(&a, &b).to_bits(), rotated_iou_3d(&b, &a).to_bits());
    }

    #[test]
    fn difficulty_cutoffs() {
        assert_eq!(assign_difficulty(&label(45.0, 0, 0.10)), Difficulty::Easy);
        assert_eq!(assign_difficulty(&label(30.0, 1, 0.20)), Difficulty::Moderate);
        assert_eq!(assign_difficulty(&label(20.0, 0, 0.0)), Difficulty::Ignored);
        assert_eq!(assign_difficulty(&label(40.0, 0, 0.15)), Difficulty::Easy);
        assert_eq!(assign_difficulty(&label(39.9, 0, 0.0)), Difficulty::Moderate);
        assert_eq!(assign_difficulty(&label(30.0, 2, 0.4)), Difficulty::Hard);
        assert_eq!(assign_difficulty(&label(30.0, 3, 0.0)), Difficulty::Ignored);
        assert_eq!(assign_difficulty(&label(30.0, 0, 0.51)), Difficulty::Ignored);
    }

    fn car_gt(b: OrientedBox3D) -> GroundTruth {
        GroundTruth::new(b, "Car", Difficulty::Easy)
    }

    #[test]
    fn matching_basics() {
        let cfg = EvalConfig::default();
        let b = bx([10.0, 0.0, 0.0], [3.9, 1.6, 1.5], 0.0);
        let m = match_detections(&[det(b, 0.9)], &[car_gt(b)], "Car", Difficulty::Moderate, &cfg).unwrap();
        assert_eq!(
            (
                m.count(MatchLabel::TruePositive),
                m.count(MatchLabel::FalsePositive),
                m.false_negatives
            ),
            (1, 0, 0)
        );
        let m = match_detections(&[det(b, 0.9)], &[], "Car", Difficulty::Moderate, &cfg).unwrap();
        assert_eq!(m.labels, vec![MatchLabel::FalsePositive]);
    }

    #[test]
    fn higher_score_wins_the_gt() {
        let cfg = EvalConfig::default();
        let g = bx([10.0, 0.0, 0.0], [4.0, 2.0, 1.5], 0.0);
        // IoU 1.0 at score 0.9, IoU 0.8 at score 0.95.
        let near = bx([10.0 + 4.0 * 0.2 / 1.8, 0.0, 0.0], [4.0, 2.0, 1.5], 0.0);
        assert!((rotated_iou_3d(&g, &near) - 0.8).abs() < 1e-9);
        let m = match_detections(
            &[det(g, 0.9), det(near, 0.95)],
            &[car_gt(g)],
            "Car",
            Difficulty::Hard,
            &cfg,
        )
        .unwrap();
        assert_eq!(m.labels, vec![MatchLabel::FalsePositive, MatchLabel::TruePositive]);
    }

    #[test]
    fn ignored_and_neighbor_gts_absorb() {
        let cfg = EvalConfig::default();
        let b = bx([10.0, 0.0, 0.0], [3.9, 1.6, 1.5], 0.0);
        let hard = GroundTruth::new(b, "Car", Difficulty::Hard);
        let m = match_detections(
            &[det(b, 0.5)],
            std::slice::from_ref(&hard),
            "Car",
            Difficulty::Moderate,
            &cfg,
        )
        .unwrap();
        assert_eq!(
            (m.labels[0], m.counted_gt, m.false_negatives),
            (MatchLabel::Ignored, 0, 0)
        );
        let m = match_detections(&[det(b, 0.5)], &[hard], "Car", Difficulty::Hard, &cfg).unwrap();
        assert_eq!(m.labels[0], MatchLabel::TruePositive);
        let van = GroundTruth::new(b, "Van", Difficulty::Easy);
        let m = match_detections(&[det(b, 0.5)], &[van], "Car", Difficulty::Easy, &cfg).unwrap();
        assert_eq!(m.labels[0], MatchLabel::Ignored);
        let mut flagged = car_gt(b);
        flagged.ignore = true;
        let m = match_detections(&[det(b, 0.5)], &[flagged], "Car", Difficulty::Easy, &cfg).unwrap();
        assert_eq!(m.labels[0], MatchLabel::Ignored);
    }

    #[test]
    fn dont_care_discards_detection() {
        let cfg = EvalConfig::default();
        let region = GroundTruth::new(
            bx([10.0, 0.0, 0.0], [10.0, 10.0, 3.0], 0.0),
            DONT_CARE,
            Difficulty::Ignored,
        );
        let d = det(bx([10.0, 1.0, 0.0], [3.9, 1.6, 1.5], 0.0), 0.7);
        let m = match_detections(
            std::slice::from_ref(&d),
            std::slice::from_ref(&region),
            "Car",
            Difficulty::Easy,
            &cfg,
        )
        .unwrap();
        assert_eq!(m.labels[0], MatchLabel::Ignored);
        let outside = det(bx([30.0, 0.0, 0.0], [3.9, 1.6, 1.5], 0.0), 0.7);
        let m = match_detections(&[outside], &[region], "Car", Difficulty::Easy, &cfg).unwrap();
        assert_eq!(m.labels[0], MatchLabel::FalsePositive);
    }

    #[test]
    fn mixed_classes_rejected() {
        let b = bx([0.0; 3], [1.0; 3], 0.0);
        let mut p = det(b, 0.5);
        p.class_name = "Pedestrian".into();
        assert!(matches!(
            match_detections(&[det(b, 0.4), p], &[], "Car", Difficulty::Easy, &EvalConfig::default()),
            Err(EvalError::MixedClasses(..))
        ));
    }

    #[test]
    fn ap_examples() {
        use MatchLabel::*;
        assert_eq!(
            average_precision_r40(&[(0.9, TruePositive), (0.8, TruePositive), (0.1, FalsePositive)], 2),
            1.0
        );
        assert_eq!(average_precision_r40(&[], 3), 0.0);
        assert_eq!(
            average_precision_r40(&[(0.9, TruePositive), (0.8, FalsePositive)], 2),
            0.5
        );
        assert_eq!(average_precision_r40(&[(0.3, FalsePositive)], 0), 0.0);
        assert_eq!(average_precision_r40(&[], 0), 1.0);
        // FP first, then both TPs: precision 2/3 from recall 0.5 up.
        let ap = average_precision_r40(&[(0.9, FalsePositive), (0.8, TruePositive), (0.7, TruePositive)], 2);
        assert!((ap - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ap_ignores_order_of_equal_scores() {
        use MatchLabel::*;
        let a = average_precision_r40(&[(0.5, TruePositive), (0.5, FalsePositive), (0.4, TruePositive)], 3);
        let b = average_precision_r40(&[(0.5, FalsePositive), (0.4, TruePositive), (0.5, TruePositive)], 3);
        assert_eq!(a, b);
    }

    #[test]
    fn evaluate_checks_frame_alignment() {
        let d = vec![FrameData::<Detection>::new("000001", vec![])];
        let g = vec![FrameData::<GroundTruth>::new("000002", vec![])];
        assert!(matches!(
            evaluate(&d, &g, &EvalConfig::default()),
            Err(EvalError::FrameIdMismatch { index: 0, .. })
        ));
    }

    #[test]
    fn empty_detections_report_zero_with_all_fn() {
        let b = bx([10.0, 0.0, 0.0], [3.9, 1.6, 1.5], PI / 3.0);
        let g = vec![FrameData::new(
            "0",
            vec![car_gt(b), car_gt(bx([20.0, 0.0, 0.0], [3.9, 1.6, 1.5], 0.0))],
        )];
        let d = vec![FrameData::<Detection>::new("0", vec![])];
        let r = evaluate(&d, &g, &EvalConfig::default()).unwrap();
        let e = r.get("Car", Difficulty::Moderate).unwrap();
        assert_eq!((e.ap_percent, e.fn_count), (Some(0.0), 2));
        assert_eq!(r.get("Pedestrian", Difficulty::Easy).unwrap().ap_percent, None);
        assert!(r
            .to_csv()
            .starts_with("class,difficulty,ap_percent,tp,fp,fn\nCar,easy,0.0000,0,0,2\n"));
    }
}
