//! Training-stage data preparation: materializes one degraded copy of a
//! corpus per degradation spec and emits registry stub lines. Training
//! itself happens outside this crate.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::{io_err, list_stems, write_atomic, Corpus, CorpusError, CALIB_DIR, LABEL_DIR, VELODYNE_DIR};
use crate::degrade::{normalized_point_count, DegradationKind, DegradationSpec, DegradeError};
use crate::kitti::write_velodyne_bin;
use crate::registry::{ModelDescriptor, ModelRegistry};
use crate::rng::frame_seed;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("i/o failure: {0}")]
    IoFailure(#[from] CorpusError),
    #[error("frame {frame}: {source}")]
    Degrade { frame: String, source: DegradeError },
    #[error("corpus has no frames")]
    EmptyCorpus,
}

/// Directory tag for a spec: `original`, `voxel_grid_0.1`, `noise_0.08`, ...
pub fn variant_tag(spec: &DegradationSpec) -> String {
    match spec.kind {
        DegradationKind::None => "original".to_string(),
        kind => format!("{}_{}", kind.token(), spec.param),
    }
}

/// Slug used in stub model ids: lowercase, non-alphanumerics become `_`.
pub fn method_slug(method_id: &str) -> String {
    method_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantReport {
    pub spec: DegradationSpec,
    pub tag: String,
    pub out_dir: PathBuf,
    pub frames: usize,
    /// Mean of per-frame `after / before` over frames with points.
    pub mean_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub variants: Vec<VariantReport>,
    /// One registry line per (method, variant), without AP entries.
    pub registry_stub: Vec<String>,
}

/// Applies one spec to every frame of `corpus`, writing `<out>/velodyne`
/// and byte copies of `label_2` and `calib`. Random and noise specs use a
/// per-frame seed derived from `(spec.seed, frame_id)`.
pub fn degrade_corpus(corpus: &Corpus, spec: &DegradationSpec, out: &Path) -> Result<VariantReport, PipelineError> {
    spec.validate().map_err(|source| PipelineError::Degrade {
        frame: String::new(),
        source,
    })?;
    let (mut sum, mut counted) = (0.0, 0usize);
    for id in corpus.frame_ids() {
        let cloud = corpus.read_cloud(id)?;
        let frame_spec = DegradationSpec {
            seed: frame_seed(spec.seed, id),
            ..*spec
        };
        let degraded = frame_spec.apply(&cloud).map_err(|source| PipelineError::Degrade {
            frame: id.clone(),
            source,
        })?;
        if let Ok(r) = normalized_point_count(&cloud, &degraded) {
            sum += r;
            counted += 1;
        }
        let bytes = if spec.kind == DegradationKind::None {
            fs::read(corpus.cloud_path(id)).map_err(io_err(&corpus.cloud_path(id)))?
        } else {
            write_velodyne_bin(&degraded)
        };
        write_atomic(&out.join(VELODYNE_DIR).join(format!("{id}.bin")), &bytes)?;
    }
    for sub in [LABEL_DIR, CALIB_DIR] {
        let src = corpus.root().join(sub);
        if !src.is_dir() {
            continue;
        }
        for stem in list_stems(&src, "txt")? {
            let from = src.join(format!("{stem}.txt"));
            let bytes = fs::read(&from).map_err(io_err(&from))?;
            write_atomic(&out.join(sub).join(format!("{stem}.txt")), &bytes)?;
        }
    }
    Ok(VariantReport {
        spec: *spec,
        tag: variant_tag(spec),
        out_dir: out.to_path_buf(),
        frames: corpus.len(),
        mean_ratio: if counted == 0 { 0.0 } else { sum / counted as f64 },
    })
}

/// Degrades `corpus` under every spec in `plan` into `<out>/<tag>/` and
/// builds stub registry lines for every method of `methods_from`. Stub
/// latency is the fastest registered latency of the method; noise and
/// undegraded variants report ratio 1.
pub fn training_pipeline(
    corpus: &Corpus,
    plan: &[DegradationSpec],
    out: &Path,
    methods_from: &ModelRegistry,
) -> Result<PipelineReport, PipelineError> {
    if corpus.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    let mut variants = Vec::with_capacity(plan.len());
    for spec in plan {
        variants.push(degrade_corpus(corpus, spec, &out.join(variant_tag(spec)))?);
    }
    let mut registry_stub = Vec::new();
    for method in methods_from.methods() {
        let latency = methods_from
            .models_of(&method.method_id)
            .map(|m| m.latency_s)
            .fold(f64::INFINITY, f64::min);
        for v in &variants {
            let ratio = match v.spec.kind {
                DegradationKind::None | DegradationKind::GaussianNoise => 1.0,
                _ => (v.mean_ratio * 1000.0).round() / 1000.0,
            };
            let stub = ModelDescriptor {
                model_id: format!("{}.{}", method_slug(&method.method_id), v.tag),
                features: method.clone(),
                train_degradation: DegradationSpec { seed: 0, ..v.spec },
                train_normalized_points: ratio,
                ap_profile: Default::default(),
                latency_s: latency,
            };
            registry_stub.push(stub.to_line());
        }
    }
    Ok(PipelineReport {
        variants,
        registry_stub,
    })
}
