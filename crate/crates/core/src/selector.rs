//! Rule-based model selection.
//!
//! Method selection runs three branches in order: an optional latency
//! filter, the object-size branch (large targets keep anchor-based methods,
//! small targets anchor-free ones) and the incompleteness branch (low point
//! density keeps methods with a point-based stage, severe noise keeps
//! voxel/pillar methods). The incompleteness branch is skipped when the data
//! are close to clean or when some registered model of a surviving method
//! was trained on data close to the inference data. Model selection then
//! picks the registered model whose training degradation is nearest the
//! inference features.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::DataFeatures;
use crate::registry::{BoxStrategy, MethodFeatures, ModelDescriptor, ModelRegistry, ProcessingUnit};

/// Absolute slack for threshold and distance comparisons.
const EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectError {
    #[error("no candidate left: {0}")]
    NoCandidate(String),
    #[error("class `{0}` is not in the size table")]
    UnknownClass(String),
    #[error("target class set is empty")]
    EmptyTarget,
    #[error("registry is empty")]
    EmptyRegistry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionThresholds {
    pub large_object_min_length_m: f64,
    pub low_density_max_ratio: f64,
    pub severe_noise_min_sigma_m: f64,
    /// Relative to the inference ratio.
    pub close_density_rel_tol: f64,
    pub close_noise_abs_tol_m: f64,
}

impl Default for SelectionThresholds {
    fn default() -> Self {
        Self {
            large_object_min_length_m: 3.0,
            low_density_max_ratio: 0.25,
            severe_noise_min_sigma_m: 0.08,
            close_density_rel_tol: 0.5,
            close_noise_abs_tol_m: 0.02,
        }
    }
}

impl SelectionThresholds {
    pub fn validate(&self) -> Result<(), String> {
        let all = [
            self.large_object_min_length_m,
            self.low_density_max_ratio,
            self.severe_noise_min_sigma_m,
            self.close_density_rel_tol,
            self.close_noise_abs_tol_m,
        ];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err("selection thresholds must all be positive".into())
        }
    }
}

/// Representative object length per class, in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeTable(pub BTreeMap<String, f64>);

impl Default for SizeTable {
    fn default() -> Self {
        Self(
            [
                ("Car", 3.9),
                ("Van", 5.0),
                ("Truck", 10.0),
                ("Pedestrian", 0.8),
                ("Cyclist", 1.8),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeClass {
    Large,
    Small,
}

pub fn classify_object_size(
    class_name: &str,
    sizes: &SizeTable,
    thresholds: &SelectionThresholds,
) -> Result<SizeClass, SelectError> {
    let len = sizes
        .0
        .get(class_name)
        .ok_or_else(|| SelectError::UnknownClass(class_name.to_string()))?;
    Ok(if *len >= thresholds.large_object_min_length_m {
        SizeClass::Large
    } else {
        SizeClass::Small
    })
}

/// What the edge wants detected. The first class drives the size branch.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetData {
    pub target_classes: Vec<String>,
    pub latency_budget_s: Option<f64>,
}

impl TargetData {
    pub fn new<S: Into<String>>(classes: impl IntoIterator<Item = S>) -> Self {
        Self {
            target_classes: classes.into_iter().map(Into::into).collect(),
            latency_budget_s: None,
        }
    }

    pub fn with_latency_budget(mut self, budget_s: f64) -> Self {
        self.latency_budget_s = Some(budget_s);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchStep {
    pub branch: String,
    pub option: String,
    pub reason: String,
}

impl BranchStep {
    fn new(branch: &str, option: &str, reason: impl Into<String>) -> Self {
        Self {
            branch: branch.to_string(),
            option: option.to_string(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for BranchStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={} reason={}", self.branch, self.option, self.reason)
    }
}

/// The incompleteness factor that drives distance in model selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Incompleteness {
    /// Neither threshold crossed.
    Small,
    Density,
    Noise,
}

/// Output of the method-selection stage.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSelection {
    pub methods: Vec<MethodFeatures>,
    pub dominant: Incompleteness,
    pub trace: Vec<BranchStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionDecision {
    pub chosen: ModelDescriptor,
    pub branch_trace: Vec<BranchStep>,
}

fn fmt_list<'a>(items: impl IntoIterator<Item = &'a str>) -> String {
    let v: Vec<&str> = items.into_iter().collect();
    if v.is_empty() {
        "-".into()
    } else {
        v.join(",")
    }
}

fn is_close(m: &ModelDescriptor, ratio: f64, sigma: f64, t: &SelectionThresholds) -> bool {
    (m.train_normalized_points - ratio).abs() <= t.close_density_rel_tol * ratio + EPS
        && (m.train_sigma() - sigma).abs() <= t.close_noise_abs_tol_m + EPS
}

/// Runs the latency, size and incompleteness branches.
pub fn select_method(
    target: &TargetData,
    features: &DataFeatures,
    registry: &ModelRegistry,
    thresholds: &SelectionThresholds,
    sizes: &SizeTable,
) -> Result<MethodSelection, SelectError> {
    if registry.is_empty() {
        return Err(SelectError::EmptyRegistry);
    }
    let first_class = target.target_classes.first().ok_or(SelectError::EmptyTarget)?;
    let mut trace = Vec::new();
    let mut methods: Vec<MethodFeatures> = registry.methods().into_iter().cloned().collect();

    // Latency: a method stays if its fastest model meets the budget.
    match target.latency_budget_s {
        Some(budget) => {
            let (keep, dropped): (Vec<_>, Vec<_>) = methods.into_iter().partition(|m| {
                registry
                    .models_of(&m.method_id)
                    .map(|d| d.latency_s)
                    .fold(f64::INFINITY, f64::min)
                    <= budget + EPS
            });
            trace.push(BranchStep::new(
                "latency",
                "budget",
                format!(
                    "budget {budget} s per frame; dropped {}",
                    fmt_list(dropped.iter().map(|m| m.method_id.as_str()))
                ),
            ));
            methods = keep;
            if methods.is_empty() {
                return Err(SelectError::NoCandidate(format!(
                    "no method meets the {budget} s latency budget"
                )));
            }
        }
        None => trace.push(BranchStep::new("latency", "unconstrained", "no latency budget given")),
    }

    // Object size -> box generation strategy.
    let size = classify_object_size(first_class, sizes, thresholds)?;
    let (option, strategy) = match size {
        SizeClass::Large => ("large", BoxStrategy::AnchorBased),
        SizeClass::Small => ("small", BoxStrategy::AnchorFree),
    };
    let mut reason = format!(
        "{first_class} representative length {} m vs {} m threshold; keep {} methods",
        sizes.0[first_class.as_str()],
        thresholds.large_object_min_length_m,
        match strategy {
            BoxStrategy::AnchorBased => "anchor-based",
            BoxStrategy::AnchorFree => "anchor-free",
        }
    );
    if target.target_classes.len() > 1 {
        reason.push_str(&format!(
            "; warning: {} target classes, size branch follows the first only",
            target.target_classes.len()
        ));
    }
    trace.push(BranchStep::new("size", option, reason));
    methods.retain(|m| m.box_strategy == strategy);
    if methods.is_empty() {
        return Err(SelectError::NoCandidate(format!(
            "no {} method registered",
            strategy.token()
        )));
    }

    // Incompleteness -> processing unit.
    let ratio = features.normalized_point_count;
    let sigma = features.noise_sigma.unwrap_or(0.0);
    let low_density = ratio <= thresholds.low_density_max_ratio + EPS;
    let severe_noise = sigma + EPS >= thresholds.severe_noise_min_sigma_m;
    let dominant = match (low_density, severe_noise) {
        (false, false) => Incompleteness::Small,
        (true, false) => Incompleteness::Density,
        (false, true) => Incompleteness::Noise,
        (true, true) => {
            let density_excess = if ratio > 0.0 {
                thresholds.low_density_max_ratio / ratio
            } else {
                f64::INFINITY
            };
            let noise_excess = sigma / thresholds.severe_noise_min_sigma_m;
            let d = if density_excess >= noise_excess {
                Incompleteness::Density
            } else {
                Incompleteness::Noise
            };
            trace.push(BranchStep::new(
                "combined",
                if d == Incompleteness::Density { "density" } else { "noise" },
                format!(
                    "extrapolation: both factors exceed thresholds (density x{density_excess:.3}, noise x{noise_excess:.3}); larger relative excess dominates"
                ),
            ));
            d
        }
    };
    let observed = format!("ratio {ratio} sigma {sigma}");

    if dominant == Incompleteness::Small {
        trace.push(BranchStep::new(
            "incompleteness",
            "small",
            format!(
                "{observed}: ratio > {} and sigma < {}; no unit filter",
                thresholds.low_density_max_ratio, thresholds.severe_noise_min_sigma_m
            ),
        ));
        return Ok(MethodSelection {
            methods,
            dominant,
            trace,
        });
    }

    let close = methods.iter().find_map(|m| {
        registry
            .models_of(&m.method_id)
            .find(|d| is_close(d, ratio, sigma, thresholds))
    });
    if let Some(model) = close {
        trace.push(BranchStep::new(
            "incompleteness",
            "small",
            format!(
                "{observed}: model {} trained close to the inference data (ratio {}, sigma {}); no unit filter",
                model.model_id,
                model.train_normalized_points,
                model.train_sigma()
            ),
        ));
        return Ok(MethodSelection {
            methods,
            dominant,
            trace,
        });
    }

    match dominant {
        Incompleteness::Density => {
            trace.push(BranchStep::new(
                "incompleteness",
                "low_density",
                format!("{observed}: ratio <= {}", thresholds.low_density_max_ratio),
            ));
            methods.retain(|m| m.has_unit(ProcessingUnit::Point));
            trace.push(BranchStep::new(
                "processing_unit",
                "point",
                format!("keep {}", fmt_list(methods.iter().map(|m| m.method_id.as_str()))),
            ));
        }
        Incompleteness::Noise => {
            trace.push(BranchStep::new(
                "incompleteness",
                "severe_noise",
                format!("{observed}: sigma >= {}", thresholds.severe_noise_min_sigma_m),
            ));
            methods.retain(MethodFeatures::is_quantized);
            let voxel_has_noise_model = methods.iter().any(|m| {
                m.has_unit(ProcessingUnit::Voxel) && registry.models_of(&m.method_id).any(|d| d.train_sigma() > 0.0)
            });
            let (unit, why) = if voxel_has_noise_model {
                (ProcessingUnit::Voxel, "a voxel method has a noise-trained model")
            } else {
                (ProcessingUnit::Pillar, "no noise-trained voxel model")
            };
            if methods.iter().any(|m| m.has_unit(unit)) {
                methods.retain(|m| m.has_unit(unit));
            }
            trace.push(BranchStep::new(
                "processing_unit",
                unit.token(),
                format!("{why}; keep {}", fmt_list(methods.iter().map(|m| m.method_id.as_str()))),
            ));
        }
        Incompleteness::Small => unreachable!(),
    }
    if methods.is_empty() {
        return Err(SelectError::NoCandidate(
            "no method survives the processing-unit branch".into(),
        ));
    }
    Ok(MethodSelection {
        methods,
        dominant,
        trace,
    })
}

/// AP of a model for `class`, falling back to the undegraded model of the
/// same method when the descriptor carries none.
fn ranking_ap(registry: &ModelRegistry, m: &ModelDescriptor, class: &str) -> Option<f64> {
    m.ap_profile.get(class).copied().or_else(|| {
        registry
            .models_of(&m.features.method_id)
            .filter(|d| d.is_undegraded())
            .find_map(|d| d.ap_profile.get(class).copied())
    })
}

/// Picks the registered model of the surviving methods whose training
/// degradation is nearest the inference data.
pub fn select_model(
    selection: &MethodSelection,
    features: &DataFeatures,
    target: &TargetData,
    registry: &ModelRegistry,
) -> Result<SelectionDecision, SelectError> {
    if selection.methods.is_empty() {
        return Err(SelectError::NoCandidate("no method selected".into()));
    }
    let class = target.target_classes.first().ok_or(SelectError::EmptyTarget)?;
    let ratio = features.normalized_point_count;
    let sigma = features.noise_sigma.unwrap_or(0.0);

    // Lexicographic key: (preference tier, distance); smaller is better.
    let key = |m: &ModelDescriptor| -> (u8, f64) {
        match selection.dominant {
            Incompleteness::Small => (
                u8::from(!m.is_undegraded()),
                (m.train_normalized_points - ratio).abs() + (m.train_sigma() - sigma).abs(),
            ),
            Incompleteness::Density => (0, (m.train_normalized_points - ratio).abs()),
            Incompleteness::Noise => (0, (m.train_sigma() - sigma).abs()),
        }
    };

    let mut best: Option<(&ModelDescriptor, (u8, f64), Option<f64>)> = None;
    for m in registry
        .models()
        .iter()
        .filter(|m| selection.methods.iter().any(|f| f.method_id == m.features.method_id))
    {
        let k = key(m);
        let ap = ranking_ap(registry, m, class);
        let better = match &best {
            None => true,
            Some((b, bk, bap)) => {
                if k.0 != bk.0 {
                    k.0 < bk.0
                } else if (k.1 - bk.1).abs() > EPS {
                    k.1 < bk.1
                } else if ap != *bap {
                    // Some(_) > None, then numeric.
                    ap > *bap
                } else {
                    m.model_id < b.model_id
                }
            }
        };
        if better {
            best = Some((m, k, ap));
        }
    }
    let (chosen, (_, distance), ap) =
        best.ok_or_else(|| SelectError::NoCandidate("no registered model for the selected methods".into()))?;

    let metric = match selection.dominant {
        Incompleteness::Small => "undegraded preferred, then combined ratio+sigma distance",
        Incompleteness::Density => "normalized point count distance",
        Incompleteness::Noise => "noise sigma distance",
    };
    let mut trace = selection.trace.clone();
    trace.push(BranchStep::new(
        "model",
        &chosen.model_id,
        format!(
            "{metric} {distance:.4}; {class} AP {}; train={} ratio {}",
            ap.map_or("n/a".to_string(), |a| a.to_string()),
            chosen.train_degradation,
            chosen.train_normalized_points
        ),
    ));
    Ok(SelectionDecision {
        chosen: chosen.clone(),
        branch_trace: trace,
    })
}

/// Method selection followed by model selection.
pub fn select(
    target: &TargetData,
    features: &DataFeatures,
    registry: &ModelRegistry,
    thresholds: &SelectionThresholds,
    sizes: &SizeTable,
) -> Result<SelectionDecision, SelectError> {
    let methods = select_method(target, features, registry, thresholds, sizes)?;
    select_model(&methods, features, target, registry)
}
