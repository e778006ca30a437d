//! Command-line interface.
//!
//! Exit codes: 0 on success, 1 on a domain error (one-line diagnostic on
//! stderr), 2 on a usage error. Results go to files or stdout; progress and
//! diagnostics go to stderr.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use crate::corpus::{list_stems, read_calib_file, read_cloud_file, read_label_file, write_atomic, Corpus};
use crate::degrade::{DegradationKind, DegradationSpec};
use crate::detect::{render_bev_svg, BaselineDetector, Detector, OracleConfig, OracleDetector};
use crate::eval::{evaluate, Detection, EvalConfig, FrameData, GroundTruth};
use crate::features::{
    analyze_stream, dataset_statistics, reference_stats_from_counts, statistics_csv, AnalyzerConfig, DataFeatures,
    LabeledBox, NoiseEstimator, ReferenceStats,
};
use crate::kitti::{label_to_lidar_box, lidar_box_to_label, write_labels, Calibration, ObjectLabel};
use crate::protocol::pipeline::degrade_corpus;
use crate::protocol::{build_request, edge_session, ClientConfig, ServerConfig, TcpConnector};
use crate::registry::{ModelRegistry, KITTI_FIXTURE};
use crate::selector::{select, BranchStep, SelectionThresholds, SizeTable, TargetData};
use crate::synth::{write_synthetic_corpus, SceneConfig};

/// Registry argument naming the bundled fixture instead of a file.
pub const FIXTURE_REGISTRY: &str = "fixture:kitti";

#[derive(Debug, Parser)]
#[command(name = "pcselect", version, about = "Feature-based 3D detection model selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    VoxelGrid,
    Uniform,
    Random,
    Noise,
}

impl From<KindArg> for DegradationKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::VoxelGrid => DegradationKind::VoxelGrid,
            KindArg::Uniform => DegradationKind::Uniform,
            KindArg::Random => DegradationKind::Random,
            KindArg::Noise => DegradationKind::GaussianNoise,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DetectorArg {
    Oracle,
    Baseline,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a degraded copy of a corpus; prints the mean normalized point count.
    Degrade {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        param: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compute reference point-count statistics of a clean corpus.
    Refstats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "reference")]
        source_id: String,
    },
    /// Extract data features of an inference stream.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        declared_noise: Option<f64>,
        /// Estimate sigma from the data when none is declared.
        #[arg(long)]
        estimate_noise: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select a model; prints the decision and the branch trace.
    Select {
        /// Registry file, or `fixture:kitti` for the bundled one.
        #[arg(long)]
        registry: String,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        classes: Vec<String>,
        #[arg(long)]
        latency_budget: Option<f64>,
    },
    /// Evaluate detections against ground truth; writes a CSV report.
    Eval {
        #[arg(long)]
        det: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        calib: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a detector over a corpus; writes label files with scores.
    Detect {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        detector: DetectorArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        #[arg(long, default_value_t = 0.0)]
        drop_rate: f64,
        #[arg(long, default_value_t = 0.0)]
        fp_rate: f64,
    },
    /// Render a bird's-eye-view SVG of one frame.
    Render {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        det: PathBuf,
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Calibration for the label files; identity when omitted.
        #[arg(long)]
        calib: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-class position, orientation and count histograms of a label set.
    Stats {
        #[arg(long)]
        labels: PathBuf,
        /// Calibration directory; identity when omitted.
        #[arg(long)]
        calib: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "Car,Pedestrian,Cyclist")]
        classes: Vec<String>,
        #[arg(long)]
        out: String,
    },
    /// Write a seeded synthetic corpus in KITTI layout.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the selection server.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Ask a selection server for a model.
    Request {
        #[arg(long)]
        host: String,
        #[arg(long, value_delimiter = ',', required = true)]
        classes: Vec<String>,
        /// Corpus root or a directory of `.bin` frames.
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        latency_budget: Option<f64>,
        #[arg(long)]
        declared_noise: Option<f64>,
        #[arg(long, default_value_t = 30.0)]
        timeout_s: f64,
    },
}

type Res<T> = Result<T, String>;

fn msg<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn write_text(path: &Path, text: &str) -> Res<()> {
    write_atomic(path, text.as_bytes()).map_err(msg)
}

fn load_registry(arg: &str) -> Res<ModelRegistry> {
    let text = if arg == FIXTURE_REGISTRY {
        KITTI_FIXTURE.to_string()
    } else {
        fs::read_to_string(arg).map_err(|e| format!("{arg}: {e}"))?
    };
    text.parse().map_err(|e| format!("{arg}: {e}"))
}

fn print_trace(out: &mut dyn Write, trace: &[BranchStep]) -> Res<()> {
    for step in trace {
        writeln!(out, "{step}").map_err(msg)?;
    }
    Ok(())
}

fn detections_from_labels(labels: &[ObjectLabel], calib: &Calibration) -> Res<Vec<Detection>> {
    labels
        .iter()
        .filter(|l| !l.is_dont_care())
        .map(|l| {
            Ok(Detection {
                bbox: label_to_lidar_box(l, calib).map_err(msg)?,
                class_name: l.class_name.clone(),
                score: l.score.unwrap_or(1.0),
            })
        })
        .collect()
}

fn labeled_boxes(labels: &[ObjectLabel], calib: &Calibration) -> Res<Vec<LabeledBox>> {
    labels
        .iter()
        .filter(|l| !l.is_dont_care())
        .map(|l| {
            Ok(LabeledBox {
                class_name: l.class_name.clone(),
                bbox: label_to_lidar_box(l, calib).map_err(msg)?,
            })
        })
        .collect()
}

fn calib_or_identity(corpus: &Corpus, id: &str) -> Res<Calibration> {
    let path = corpus.calib_path(id);
    if path.exists() {
        read_calib_file(&path).map_err(msg)
    } else {
        Ok(Calibration::identity())
    }
}

fn read_frames_dir(dir: &Path) -> Res<Vec<crate::cloud::PointCloud>> {
    let corpus_dir = dir.join(crate::corpus::VELODYNE_DIR);
    let bin_dir = if corpus_dir.is_dir() {
        corpus_dir
    } else {
        dir.to_path_buf()
    };
    let stems = list_stems(&bin_dir, "bin").map_err(msg)?;
    stems
        .iter()
        .map(|s| read_cloud_file(&bin_dir.join(format!("{s}.bin"))).map_err(msg))
        .collect()
}

fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Res<()> {
    match cli.command {
        Command::Degrade {
            input,
            out: dest,
            kind,
            param,
            seed,
        } => {
            let spec = DegradationSpec::new(kind.into(), param, seed).map_err(msg)?;
            let corpus = Corpus::open(&input).map_err(msg)?;
            let report = degrade_corpus(&corpus, &spec, &dest).map_err(msg)?;
            writeln!(err, "degraded {} frames with {spec}", report.frames).map_err(msg)?;
            writeln!(out, "mean_ratio={:.6}", report.mean_ratio).map_err(msg)?;
        }
        Command::Refstats {
            input,
            out: dest,
            source_id,
        } => {
            let corpus = Corpus::open(&input).map_err(msg)?;
            let counts = corpus
                .frame_ids()
                .iter()
                .map(|id| corpus.read_cloud(id).map(|c| c.len()))
                .collect::<Result<Vec<_>, _>>()
                .map_err(msg)?;
            let stats = reference_stats_from_counts(counts, &source_id).map_err(msg)?;
            write_text(&dest, &stats.to_toml())?;
        }
        Command::Analyze {
            input,
            reference,
            declared_noise,
            estimate_noise,
            out: dest,
        } => {
            let reference_text = fs::read_to_string(&reference).map_err(|e| format!("{}: {e}", reference.display()))?;
            let reference = ReferenceStats::from_toml(&reference_text).map_err(msg)?;
            let frames = read_frames_dir(&input)?;
            let config = AnalyzerConfig {
                estimator: estimate_noise.then(NoiseEstimator::default),
                ..AnalyzerConfig::default()
            };
            let features = analyze_stream(&frames, &reference, declared_noise, &config).map_err(msg)?;
            let mut buf = Vec::new();
            features.write_csv(&mut buf).map_err(msg)?;
            write_atomic(&dest, &buf).map_err(msg)?;
        }
        Command::Select {
            registry,
            features,
            classes,
            latency_budget,
        } => {
            let registry = load_registry(&registry)?;
            let text = fs::read_to_string(&features).map_err(|e| format!("{}: {e}", features.display()))?;
            let features = DataFeatures::read_csv(&text)?;
            let target = TargetData {
                target_classes: classes,
                latency_budget_s: latency_budget,
            };
            let d = select(
                &target,
                &features,
                &registry,
                &SelectionThresholds::default(),
                &SizeTable::default(),
            )
            .map_err(msg)?;
            writeln!(out, "model={}", d.chosen.model_id).map_err(msg)?;
            print_trace(out, &d.branch_trace)?;
        }
        Command::Eval {
            det,
            gt,
            calib,
            out: dest,
        } => {
            let gt_ids = list_stems(&gt, "txt").map_err(msg)?;
            let det_ids = list_stems(&det, "txt").map_err(msg)?;
            if let Some(extra) = det_ids.iter().find(|d| gt_ids.binary_search(d).is_err()) {
                return Err(format!("detections for frame {extra} have no ground truth"));
            }
            let (mut dets, mut gts) = (Vec::new(), Vec::new());
            for id in &gt_ids {
                let c = read_calib_file(&calib.join(format!("{id}.txt"))).map_err(msg)?;
                let labels = read_label_file(&gt.join(format!("{id}.txt"))).map_err(msg)?;
                let mut items = Vec::new();
                for l in &labels {
                    if let Some(g) = GroundTruth::from_label(l, &c).map_err(msg)? {
                        items.push(g);
                    }
                }
                gts.push(FrameData::new(id.clone(), items));
                let det_path = det.join(format!("{id}.txt"));
                let d = if det_path.exists() {
                    detections_from_labels(&read_label_file(&det_path).map_err(msg)?, &c)?
                } else {
                    Vec::new()
                };
                dets.push(FrameData::new(id.clone(), d));
            }
            let report = evaluate(&dets, &gts, &EvalConfig::default()).map_err(msg)?;
            write_text(&dest, &report.to_csv())?;
        }
        Command::Detect {
            input,
            detector,
            out: dest,
            seed,
            jitter,
            drop_rate,
            fp_rate,
        } => {
            let corpus = Corpus::open(&input).map_err(msg)?;
            let det: Box<dyn Detector> = match detector {
                DetectorArg::Baseline => Box::new(BaselineDetector::default()),
                DetectorArg::Oracle => {
                    let mut gt = Vec::new();
                    for id in corpus.frame_ids() {
                        let calib = calib_or_identity(&corpus, id)?;
                        let labels = corpus.read_labels(id).map_err(msg)?;
                        gt.push((id.clone(), labeled_boxes(&labels, &calib)?));
                    }
                    let cfg = OracleConfig {
                        jitter_sigma_m: jitter,
                        drop_rate,
                        fp_rate,
                        seed,
                    };
                    Box::new(OracleDetector::new(gt, cfg).map_err(msg)?)
                }
            };
            for id in corpus.frame_ids() {
                let cloud = corpus.read_cloud(id).map_err(msg)?;
                let calib = calib_or_identity(&corpus, id)?;
                let labels: Vec<ObjectLabel> = det
                    .detect(&cloud)
                    .iter()
                    .map(|d| lidar_box_to_label(&d.bbox, &d.class_name, Some(d.score), &calib))
                    .collect();
                write_text(&dest.join(format!("{id}.txt")), &write_labels(&labels))?;
            }
            writeln!(err, "{} ran on {} frames", det.id(), corpus.len()).map_err(msg)?;
        }
        Command::Render {
            cloud,
            det,
            gt,
            calib,
            out: dest,
        } => {
            let cloud = read_cloud_file(&cloud).map_err(msg)?;
            let calib = match calib {
                Some(p) => read_calib_file(&p).map_err(msg)?,
                None => Calibration::identity(),
            };
            let dets = detections_from_labels(&read_label_file(&det).map_err(msg)?, &calib)?;
            let gts = match gt {
                Some(p) => Some(
                    labeled_boxes(&read_label_file(&p).map_err(msg)?, &calib)?
                        .into_iter()
                        .map(|b| b.bbox)
                        .collect::<Vec<_>>(),
                ),
                None => None,
            };
            write_text(&dest, &render_bev_svg(&cloud, &dets, gts.as_deref()))?;
        }
        Command::Stats {
            labels,
            calib,
            classes,
            out: prefix,
        } => {
            let mut frames = Vec::new();
            for id in list_stems(&labels, "txt").map_err(msg)? {
                let c = match &calib {
                    Some(dir) => read_calib_file(&dir.join(format!("{id}.txt"))).map_err(msg)?,
                    None => Calibration::identity(),
                };
                frames.push(labeled_boxes(
                    &read_label_file(&labels.join(format!("{id}.txt"))).map_err(msg)?,
                    &c,
                )?);
            }
            let class_refs: Vec<&str> = classes.iter().map(String::as_str).collect();
            let (heat, ori, opf) = statistics_csv(&dataset_statistics(&frames, &class_refs));
            write_text(Path::new(&format!("{prefix}_heat.csv")), &heat)?;
            write_text(Path::new(&format!("{prefix}_orientation.csv")), &ori)?;
            write_text(Path::new(&format!("{prefix}_objects_per_frame.csv")), &opf)?;
        }
        Command::Synth {
            out: dest,
            frames,
            seed,
        } => {
            write_synthetic_corpus(&dest, frames, seed, &SceneConfig::default()).map_err(msg)?;
            writeln!(err, "wrote {frames} synthetic frames").map_err(msg)?;
        }
        Command::Serve { config } => {
            let cfg = ServerConfig::load(&config).map_err(msg)?;
            let server = cfg.build_server().map_err(msg)?;
            let listener = std::net::TcpListener::bind(&cfg.listen).map_err(|e| format!("{}: {e}", cfg.listen))?;
            writeln!(err, "listening on {}", listener.local_addr().map_err(msg)?).map_err(msg)?;
            server.serve(&listener, &AtomicBool::new(false)).map_err(msg)?;
        }
        Command::Request {
            host,
            classes,
            frames,
            latency_budget,
            declared_noise,
            timeout_s,
        } => {
            if !(timeout_s.is_finite() && timeout_s > 0.0) {
                return Err(format!("timeout {timeout_s} must be positive"));
            }
            let clouds = read_frames_dir(&frames)?;
            let target = TargetData {
                target_classes: classes,
                latency_budget_s: latency_budget,
            };
            let request = build_request(&target, &clouds, declared_noise);
            let config = ClientConfig {
                timeout: Duration::from_secs_f64(timeout_s),
                ..ClientConfig::default()
            };
            let a = edge_session(&TcpConnector::new(host), &request, &config).map_err(msg)?;
            writeln!(out, "model={}", a.model_id).map_err(msg)?;
            print_trace(out, &a.branch_trace)?;
        }
    }
    Ok(())
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    2
                }
            };
        }
    };
    match execute(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.replace('\n', " "));
            1
        }
    }
}
