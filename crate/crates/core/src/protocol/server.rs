//! Cloud-side selection service.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use super::transport::{read_message, write_message, Listener, ReadError, Transport};
use super::wire::{ModelAssignment, SelectionRequest, WireMessage};
use crate::cloud::PointCloud;
use crate::features::{analyze_stream, AnalyzerConfig, NoiseEstimator, ReferenceStats};
use crate::kitti::read_velodyne_bin;
use crate::registry::ModelRegistry;
use crate::selector::{select_method, select_model, SelectError, SelectionThresholds, SizeTable, TargetData};

/// No method or model survives selection.
pub const ERR_NO_CANDIDATE: u16 = 1;
/// Sample frames missing or not valid velodyne blobs.
pub const ERR_BAD_FRAMES: u16 = 2;
/// The request could not be decoded.
pub const ERR_MALFORMED: u16 = 3;
/// A well-formed message that is not a selection request.
pub const ERR_UNEXPECTED: u16 = 4;
/// Target classes empty or not in the size table.
pub const ERR_BAD_TARGET: u16 = 5;

/// Immutable server state shared by all sessions.
#[derive(Debug, Clone)]
pub struct CloudServerState {
    pub registry: ModelRegistry,
    pub reference: ReferenceStats,
    pub thresholds: SelectionThresholds,
    pub sizes: SizeTable,
    pub analyzer: AnalyzerConfig,
}

impl CloudServerState {
    pub fn new(registry: ModelRegistry, reference: ReferenceStats) -> Self {
        Self {
            registry,
            reference,
            thresholds: SelectionThresholds::default(),
            sizes: SizeTable::default(),
            analyzer: AnalyzerConfig::default(),
        }
    }
}

fn error_reply(code: u16, message: impl Into<String>) -> WireMessage {
    WireMessage::ErrorReply {
        code,
        message: message.into(),
    }
}

/// Decodes the sample frames, analyzes them and runs selection.
pub fn cloud_handle(state: &CloudServerState, req: &SelectionRequest) -> WireMessage {
    if req.sample_frames.is_empty() {
        return error_reply(ERR_BAD_FRAMES, "request carries no sample frames");
    }
    let mut frames: Vec<PointCloud> = Vec::with_capacity(req.sample_frames.len());
    for (i, blob) in req.sample_frames.iter().enumerate() {
        match read_velodyne_bin(format!("{i:06}"), blob) {
            Ok(c) => frames.push(c),
            Err(e) => return error_reply(ERR_BAD_FRAMES, format!("frame {i}: {e}")),
        }
    }
    if let Some(s) = req.declared_noise_sigma {
        if !(s.is_finite() && s >= 0.0) {
            return error_reply(ERR_BAD_FRAMES, format!("declared noise sigma {s} is invalid"));
        }
    }
    let features = match analyze_stream(&frames, &state.reference, req.declared_noise_sigma, &state.analyzer) {
        Ok(f) => f,
        Err(e) => return error_reply(ERR_BAD_FRAMES, e.to_string()),
    };
    let target = TargetData {
        target_classes: req.target_classes.clone(),
        latency_budget_s: req.latency_budget_s,
    };
    let decision = select_method(&target, &features, &state.registry, &state.thresholds, &state.sizes)
        .and_then(|m| select_model(&m, &features, &target, &state.registry));
    match decision {
        Ok(d) => WireMessage::ModelAssignment(ModelAssignment {
            model_id: d.chosen.model_id.clone(),
            features: d.chosen.features.clone(),
            train_degradation: d.chosen.train_degradation,
            branch_trace: d.branch_trace,
            weights: None,
        }),
        Err(e @ (SelectError::NoCandidate(_) | SelectError::EmptyRegistry)) => {
            error_reply(ERR_NO_CANDIDATE, e.to_string())
        }
        Err(e @ (SelectError::UnknownClass(_) | SelectError::EmptyTarget)) => {
            error_reply(ERR_BAD_TARGET, e.to_string())
        }
    }
}

/// Reply to one inbound message, or `None` when there is nobody to answer.
pub fn respond(state: &CloudServerState, inbound: Result<WireMessage, ReadError>) -> Option<WireMessage> {
    match inbound {
        Ok(WireMessage::SelectionRequest(req)) => Some(cloud_handle(state, &req)),
        Ok(other) => Some(error_reply(
            ERR_UNEXPECTED,
            format!(
                "expected a selection request, got message type 0x{:02x}",
                other.type_byte()
            ),
        )),
        Err(ReadError::Decode(e)) => Some(error_reply(ERR_MALFORMED, e.to_string())),
        Err(ReadError::Closed { bytes_read }) if bytes_read > 0 => {
            Some(error_reply(ERR_MALFORMED, "request truncated"))
        }
        Err(_) => None,
    }
}

const DRAIN_TIMEOUT: Duration = Duration::from_secs(1);
const DRAIN_LIMIT: u64 = 1 << 20;

/// Serves one request per connection; connections run on their own threads.
#[derive(Debug, Clone)]
pub struct CloudServer {
    state: Arc<CloudServerState>,
    io_timeout: Duration,
}

impl CloudServer {
    pub fn new(state: CloudServerState) -> Self {
        Self {
            state: Arc::new(state),
            io_timeout: Duration::from_secs(30),
        }
    }

    pub fn with_io_timeout(mut self, timeout: Duration) -> Self {
        self.io_timeout = timeout;
        self
    }

    pub fn state(&self) -> &CloudServerState {
        &self.state
    }

    pub fn handle_connection<S: Transport>(&self, mut stream: S) {
        if stream.set_read_timeout(Some(self.io_timeout)).is_err() {
            return;
        }
        let inbound = read_message(&mut stream);
        if let Some(reply) = respond(&self.state, inbound) {
            // The client may already be gone; nothing else to do then.
            let _ = write_message(&mut stream, &reply);
        }
        let _ = stream.shutdown_write();
        // Closing with unread input resets the connection, which can drop
        // the reply before the peer reads it.
        let _ = stream.set_read_timeout(Some(self.io_timeout.min(DRAIN_TIMEOUT)));
        let _ = io::copy(&mut io::Read::take(&mut stream, DRAIN_LIMIT), &mut io::sink());
    }

    /// Accepts until `stop` is set or the listener fails, then waits for
    /// in-flight sessions.
    pub fn serve<L: Listener + Sync>(&self, listener: &L, stop: &AtomicBool) -> io::Result<()> {
        thread::scope(|scope| loop {
            let stream = match listener.accept() {
                Ok(s) => s,
                Err(e) if e.kind() == io::ErrorKind::NotConnected => return Ok(()),
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e),
            };
            if stop.load(Ordering::SeqCst) {
                return Ok(());
            }
            scope.spawn(move || self.handle_connection(stream));
        })
    }
}

/// A TCP server running on a background thread.
#[derive(Debug)]
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting, waits for in-flight sessions and returns the
    /// accept loop's result.
    pub fn shutdown(mut self) -> io::Result<()> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> io::Result<()> {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        match self.thread.take() {
            Some(t) => t
                .join()
                .unwrap_or_else(|_| Err(io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}

pub fn spawn_tcp(server: CloudServer, addr: &str) -> io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    let thread = thread::spawn(move || server.serve(&listener, &flag));
    Ok(ServerHandle {
        addr: local,
        stop,
        thread: Some(thread),
    })
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

/// On-disk server configuration (TOML). Relative paths are resolved
/// against the config file's directory.
///
/// ```toml
/// listen = "127.0.0.1:7878"
/// registry = "registry.txt"
/// reference = "reference.toml"
/// estimate_noise = false
/// io_timeout_s = 30.0
///
/// [thresholds]
/// low_density_max_ratio = 0.25
///
/// [sizes]
/// Tram = 15.0
/// ```
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    pub listen: String,
    pub registry: PathBuf,
    pub reference: PathBuf,
    #[serde(default)]
    pub estimate_noise: bool,
    #[serde(default = "default_io_timeout")]
    pub io_timeout_s: f64,
    #[serde(default)]
    pub thresholds: SelectionThresholds,
    /// Entries added to (or overriding) the default size table.
    #[serde(default)]
    pub sizes: BTreeMap<String, f64>,
}

fn default_io_timeout() -> f64 {
    30.0
}

impl ServerConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, String> {
        let mut cfg: ServerConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.registry = base_dir.join(&cfg.registry);
        cfg.reference = base_dir.join(&cfg.reference);
        cfg.thresholds.validate()?;
        if !(cfg.io_timeout_s.is_finite() && cfg.io_timeout_s > 0.0) {
            return Err("io_timeout_s must be positive".into());
        }
        if let Some((c, v)) = cfg.sizes.iter().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(format!("size for {c} must be positive, got {v}"));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|message| ConfigError::Invalid {
            path: path.to_path_buf(),
            message,
        })
    }

    /// Reads the registry and reference files and builds the server.
    pub fn build_server(&self) -> Result<CloudServer, ConfigError> {
        let read = |p: &Path| {
            fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.to_path_buf(),
                source,
            })
        };
        let invalid = |p: &Path, e: &dyn std::fmt::Display| ConfigError::Invalid {
            path: p.to_path_buf(),
            message: e.to_string(),
        };
        let registry: ModelRegistry = read(&self.registry)?.parse().map_err(|e| invalid(&self.registry, &e))?;
        if registry.is_empty() {
            return Err(invalid(&self.registry, &"registry is empty"));
        }
        let reference = ReferenceStats::from_toml(&read(&self.reference)?).map_err(|e| invalid(&self.reference, &e))?;
        let mut sizes = SizeTable::default();
        sizes.0.extend(self.sizes.clone());
        let state = CloudServerState {
            registry,
            reference,
            thresholds: self.thresholds.clone(),
            sizes,
            analyzer: AnalyzerConfig {
                estimator: self.estimate_noise.then(NoiseEstimator::default),
                ..AnalyzerConfig::default()
            },
        };
        Ok(CloudServer::new(state).with_io_timeout(Duration::from_secs_f64(self.io_timeout_s)))
    }
}
