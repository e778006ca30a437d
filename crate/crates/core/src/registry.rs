//! Registry of trained-model descriptors.
//!
//! Text format, one record per line, `#` starts a comment:
//!
//! ```text
//! model <id> method=<name> stages=<1|2> stage1=<point|voxel|pillar>
//!       stage2=<point|voxel|pillar|none> box=<anchor|free>
//!       train=<none|voxel_grid:<edge_m>|uniform:<edge_m>|random:<frac>|noise:<sigma>>
//!       ratio=<float> latency_s=<float> [ap.<class>=<float> ...]
//! ```
//!
//! (written on a single line). Models sharing a method name must agree on
//! the method features.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::degrade::{DegradationKind, DegradationSpec};

/// Built-in six-method KITTI registry used by the selector fixtures.
pub const KITTI_FIXTURE: &str = include_str!("../data/kitti_registry.txt");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegistryError {
    #[error("line {line_no}: duplicate model id `{id}`")]
    DuplicateId { line_no: usize, id: String },
    #[error("line {line_no}: {reason}")]
    MalformedLine { line_no: usize, reason: String },
    #[error("line {line_no}: unknown value `{value}` for `{key}`")]
    UnknownEnum { line_no: usize, key: String, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProcessingUnit {
    Point,
    Voxel,
    Pillar,
}

impl ProcessingUnit {
    pub fn token(self) -> &'static str {
        match self {
            ProcessingUnit::Point => "point",
            ProcessingUnit::Voxel => "voxel",
            ProcessingUnit::Pillar => "pillar",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            ProcessingUnit::Point => 0,
            ProcessingUnit::Voxel => 1,
            ProcessingUnit::Pillar => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => ProcessingUnit::Point,
            1 => ProcessingUnit::Voxel,
            2 => ProcessingUnit::Pillar,
            _ => return None,
        })
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "point" => ProcessingUnit::Point,
            "voxel" => ProcessingUnit::Voxel,
            "pillar" => ProcessingUnit::Pillar,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoxStrategy {
    AnchorBased,
    AnchorFree,
}

impl BoxStrategy {
    pub fn token(self) -> &'static str {
        match self {
            BoxStrategy::AnchorBased => "anchor",
            BoxStrategy::AnchorFree => "free",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            BoxStrategy::AnchorBased => 0,
            BoxStrategy::AnchorFree => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(BoxStrategy::AnchorBased),
            1 => Some(BoxStrategy::AnchorFree),
            _ => None,
        }
    }
}

/// Architecture features of a detection method. `stage2 == None` marks a
/// one-stage method.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MethodFeatures {
    pub method_id: String,
    pub stage1: ProcessingUnit,
    pub stage2: Option<ProcessingUnit>,
    pub box_strategy: BoxStrategy,
}

impl MethodFeatures {
    pub fn num_stages(&self) -> u8 {
        if self.stage2.is_some() {
            2
        } else {
            1
        }
    }

    pub fn has_unit(&self, unit: ProcessingUnit) -> bool {
        self.stage1 == unit || self.stage2 == Some(unit)
    }

    /// No stage processes raw points.
    pub fn is_quantized(&self) -> bool {
        !self.has_unit(ProcessingUnit::Point)
    }
}

/// One trained model: method × training degradation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDescriptor {
    pub model_id: String,
    pub features: MethodFeatures,
    pub train_degradation: DegradationSpec,
    /// Mean normalized point count of the training data (1.0 when undegraded
    /// or noise-only).
    pub train_normalized_points: f64,
    /// AP in percent per class.
    pub ap_profile: BTreeMap<String, f64>,
    pub latency_s: f64,
}

impl ModelDescriptor {
    pub fn train_sigma(&self) -> f64 {
        self.train_degradation.noise_sigma()
    }

    pub fn is_undegraded(&self) -> bool {
        self.train_degradation.kind == DegradationKind::None
    }

    /// Registry line for this descriptor.
    pub fn to_line(&self) -> String {
        let f = &self.features;
        let mut s = format!(
            "model {} method={} stages={} stage1={} stage2={} box={} train={} ratio={} latency_s={}",
            self.model_id,
            f.method_id,
            f.num_stages(),
            f.stage1.token(),
            f.stage2.map_or("none", ProcessingUnit::token),
            f.box_strategy.token(),
            self.train_degradation,
            self.train_normalized_points,
            self.latency_s,
        );
        for (class, ap) in &self.ap_profile {
            s.push_str(&format!(" ap.{class}={ap}"));
        }
        s
    }
}

impl fmt::Display for ModelDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}

/// Immutable, ordered collection of descriptors with unique ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelRegistry {
    models: Vec<ModelDescriptor>,
}

impl ModelRegistry {
    pub fn new(models: Vec<ModelDescriptor>) -> Result<Self, RegistryError> {
        let mut seen = HashSet::new();
        let mut methods: HashMap<&str, &MethodFeatures> = HashMap::new();
        for (i, m) in models.iter().enumerate() {
            if !seen.insert(m.model_id.as_str()) {
                return Err(RegistryError::DuplicateId {
                    line_no: i + 1,
                    id: m.model_id.clone(),
                });
            }
            if let Some(prev) = methods.insert(&m.features.method_id, &m.features) {
                if prev != &m.features {
                    return Err(RegistryError::MalformedLine {
                        line_no: i + 1,
                        reason: format!(
                            "features of method `{}` disagree with an earlier model",
                            m.features.method_id
                        ),
                    });
                }
            }
        }
        Ok(Self { models })
    }

    pub fn kitti_fixture() -> Self {
        parse_registry(KITTI_FIXTURE).expect("shipped registry parses")
    }

    pub fn models(&self) -> &[ModelDescriptor] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn get(&self, model_id: &str) -> Option<&ModelDescriptor> {
        self.models.iter().find(|m| m.model_id == model_id)
    }

    /// Distinct methods in order of first appearance.
    pub fn methods(&self) -> Vec<&MethodFeatures> {
        let mut seen = HashSet::new();
        self.models
            .iter()
            .filter(|m| seen.insert(m.features.method_id.as_str()))
            .map(|m| &m.features)
            .collect()
    }

    pub fn models_of<'a>(&'a self, method_id: &'a str) -> impl Iterator<Item = &'a ModelDescriptor> + 'a {
        self.models.iter().filter(move |m| m.features.method_id == method_id)
    }

    pub fn to_text(&self) -> String {
        self.models.iter().map(|m| m.to_line() + "\n").collect()
    }
}

impl FromStr for ModelRegistry {
    type Err = RegistryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_registry(s)
    }
}

pub fn parse_registry(text: &str) -> Result<ModelRegistry, RegistryError> {
    let mut models = Vec::new();
    let mut ids: HashSet<String> = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let model = parse_line(line, line_no)?;
        if !ids.insert(model.model_id.clone()) {
            return Err(RegistryError::DuplicateId {
                line_no,
                id: model.model_id,
            });
        }
        models.push((line_no, model));
    }
    let line_of: Vec<usize> = models.iter().map(|(l, _)| *l).collect();
    ModelRegistry::new(models.into_iter().map(|(_, m)| m).collect()).map_err(|e| match e {
        RegistryError::MalformedLine { line_no, reason } => RegistryError::MalformedLine {
            line_no: line_of[line_no - 1],
            reason,
        },
        other => other,
    })
}

fn parse_line(line: &str, line_no: usize) -> Result<ModelDescriptor, RegistryError> {
    let malformed = |reason: String| RegistryError::MalformedLine { line_no, reason };
    let unknown = |key: &str, value: &str| RegistryError::UnknownEnum {
        line_no,
        key: key.to_string(),
        value: value.to_string(),
    };
    let mut tokens = line.split_whitespace();
    match tokens.next() {
        Some("model") => {}
        Some(other) => return Err(malformed(format!("expected `model`, found `{other}`"))),
        None => unreachable!("blank lines are skipped"),
    }
    let model_id = tokens
        .next()
        .filter(|t| !t.contains('='))
        .ok_or_else(|| malformed("missing model id".into()))?
        .to_string();

    let mut kv: HashMap<&str, &str> = HashMap::new();
    let mut ap_profile = BTreeMap::new();
    for tok in tokens {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| malformed(format!("expected key=value, found `{tok}`")))?;
        if let Some(class) = k.strip_prefix("ap.") {
            let ap: f64 = v.parse().map_err(|_| malformed(format!("bad AP `{v}`")))?;
            if !(0.0..=100.0).contains(&ap) || class.is_empty() {
                return Err(malformed(format!("AP for `{class}` must be in [0, 100]")));
            }
            ap_profile.insert(class.to_string(), ap);
            continue;
        }
        if ![
            "method",
            "stages",
            "stage1",
            "stage2",
            "box",
            "train",
            "ratio",
            "latency_s",
        ]
        .contains(&k)
        {
            return Err(malformed(format!("unknown key `{k}`")));
        }
        if kv.insert(k, v).is_some() {
            return Err(malformed(format!("key `{k}` given twice")));
        }
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| malformed(format!("missing `{k}`")));

    let stages = get("stages")?;
    let stage1 = ProcessingUnit::parse(get("stage1")?).ok_or_else(|| unknown("stage1", kv["stage1"]))?;
    let stage2 = match get("stage2")? {
        "none" => None,
        s => Some(ProcessingUnit::parse(s).ok_or_else(|| unknown("stage2", s))?),
    };
    match (stages, stage2) {
        ("1", None) | ("2", Some(_)) => {}
        ("1", Some(_)) | ("2", None) => {
            return Err(malformed("stages must be 1 exactly when stage2=none".into()));
        }
        (s, _) => return Err(unknown("stages", s)),
    }
    let box_strategy = match get("box")? {
        "anchor" => BoxStrategy::AnchorBased,
        "free" => BoxStrategy::AnchorFree,
        s => return Err(unknown("box", s)),
    };
    let train_tok = get("train")?;
    let train_degradation: DegradationSpec = train_tok.parse().map_err(|_| {
        let kind = train_tok.split(':').next().unwrap_or("");
        if kind.parse::<DegradationKind>().is_err() {
            unknown("train", train_tok)
        } else {
            malformed(format!("bad training degradation `{train_tok}`"))
        }
    })?;
    let ratio: f64 = get("ratio")?.parse().map_err(|_| malformed("bad ratio".into()))?;
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(malformed(format!("ratio must be in (0, 1], got {ratio}")));
    }
    let latency_s: f64 = get("latency_s")?
        .parse()
        .map_err(|_| malformed("bad latency_s".into()))?;
    if !(latency_s.is_finite() && latency_s > 0.0) {
        return Err(malformed(format!("latency_s must be positive, got {latency_s}")));
    }

    Ok(ModelDescriptor {
        model_id,
        features: MethodFeatures {
            method_id: get("method")?.to_string(),
            stage1,
            stage2,
            box_strategy,
        },
        train_degradation,
        train_normalized_points: ratio,
        ap_profile,
        latency_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = "model pv_rcnn.original method=PV-RCNN stages=2 stage1=voxel stage2=point box=anchor \
                        train=none ratio=1.0 latency_s=0.35 ap.Car=82.8 ap.Pedestrian=48.1";

    #[test]
    fn empty_registry() {
        assert!(parse_registry("").unwrap().is_empty());
        assert!(parse_registry("# only a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn one_line_populates_everything() {
        let r = parse_registry(LINE).unwrap();
        let m = &r.models()[0];
        assert_eq!(m.model_id, "pv_rcnn.original");
        assert_eq!(m.features.method_id, "PV-RCNN");
        assert_eq!(m.features.stage1, ProcessingUnit::Voxel);
        assert_eq!(m.features.stage2, Some(ProcessingUnit::Point));
        assert_eq!(m.features.box_strategy, BoxStrategy::AnchorBased);
        assert_eq!(m.train_degradation, DegradationSpec::NONE);
        assert_eq!(m.train_normalized_points, 1.0);
        assert_eq!(m.latency_s, 0.35);
        assert_eq!(m.ap_profile["Car"], 82.8);
        assert_eq!(m.ap_profile["Pedestrian"], 48.1);
        assert_eq!(parse_registry(&m.to_line()).unwrap(), r);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = format!("{LINE}\n{LINE}\n");
        assert_eq!(
            parse_registry(&text),
            Err(RegistryError::DuplicateId {
                line_no: 2,
                id: "pv_rcnn.original".into()
            })
        );
    }

    #[test]
    fn unknown_enums_and_malformed_lines() {
        let bad_unit = LINE.replace("stage1=voxel", "stage1=mesh");
        assert!(matches!(parse_registry(&bad_unit), Err(RegistryError::UnknownEnum { key, .. }) if key == "stage1"));
        let bad_box = LINE.replace("box=anchor", "box=grid");
        assert!(matches!(parse_registry(&bad_box), Err(RegistryError::UnknownEnum { key, .. }) if key == "box"));
        let bad_train = LINE.replace("train=none", "train=blur:1");
        assert!(matches!(parse_registry(&bad_train), Err(RegistryError::UnknownEnum { key, .. }) if key == "train"));
        let inconsistent = LINE.replace("stages=2", "stages=1");
        assert!(matches!(
            parse_registry(&inconsistent),
            Err(RegistryError::MalformedLine { .. })
        ));
        assert!(matches!(
            parse_registry("detector x"),
            Err(RegistryError::MalformedLine { line_no: 1, .. })
        ));
        let missing = LINE.replace(" latency_s=0.35", "");
        assert!(matches!(
            parse_registry(&missing),
            Err(RegistryError::MalformedLine { .. })
        ));
        let bad_ap = LINE.replace("ap.Car=82.8", "ap.Car=182.8");
        assert!(matches!(
            parse_registry(&bad_ap),
            Err(RegistryError::MalformedLine { .. })
        ));
    }

    #[test]
    fn method_features_must_agree() {
        let other = LINE
            .replace("pv_rcnn.original", "pv_rcnn.noise_0.08")
            .replace("stage2=point", "stage2=voxel");
        assert!(matches!(
            parse_registry(&format!("{LINE}\n# x\n{other}")),
            Err(RegistryError::MalformedLine { line_no: 3, .. })
        ));
    }
}
