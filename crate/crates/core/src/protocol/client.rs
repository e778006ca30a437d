//! Edge-side selection session.

use std::time::{Duration, Instant};

use thiserror::Error;

use super::transport::{read_message, write_message, Connector, ReadError, Transport};
use super::wire::{ModelAssignment, SelectionRequest, WireMessage};
use crate::cloud::PointCloud;
use crate::kitti::write_velodyne_bin;
use crate::selector::TargetData;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClientError {
    #[error("timed out waiting for the selection reply")]
    Timeout,
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("server rejected the request (code {code}): {message}")]
    Rejected { code: u16, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientConfig {
    /// Deadline for the whole session, retries included.
    pub timeout: Duration,
    /// Extra attempts after a transport failure that happens before any
    /// reply byte arrives.
    pub retries: u32,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(30),
            retries: 2,
        }
    }
}

/// Builds the request for a target and a set of sample frames.
pub fn build_request(
    target: &TargetData,
    frames: &[PointCloud],
    declared_noise_sigma: Option<f64>,
) -> SelectionRequest {
    SelectionRequest {
        target_classes: target.target_classes.clone(),
        latency_budget_s: target.latency_budget_s,
        sample_frames: frames.iter().map(write_velodyne_bin).collect(),
        declared_noise_sigma,
    }
}

enum Attempt {
    Done(Result<ModelAssignment, ClientError>),
    /// Failed before any reply byte; safe to resend.
    Retry(String),
}

fn attempt<C: Connector>(connector: &C, msg: &WireMessage, deadline: Instant) -> Attempt {
    let remaining = || deadline.saturating_duration_since(Instant::now());
    let mut stream = match connector.connect() {
        Ok(s) => s,
        Err(e) => return Attempt::Retry(format!("connect: {e}")),
    };
    if let Err(e) = write_message(&mut stream, msg).and_then(|_| stream.shutdown_write()) {
        return Attempt::Retry(format!("send: {e}"));
    }
    if remaining().is_zero() {
        return Attempt::Done(Err(ClientError::Timeout));
    }
    if let Err(e) = stream.set_read_timeout(Some(remaining())) {
        return Attempt::Done(Err(ClientError::Transport(e.to_string())));
    }
    let reply = read_message(&mut stream);
    Attempt::Done(match reply {
        Ok(WireMessage::ModelAssignment(a)) => Ok(a),
        Ok(WireMessage::ErrorReply { code, message }) => Err(ClientError::Rejected { code, message }),
        Ok(other) => Err(ClientError::ProtocolViolation(format!(
            "unexpected reply type 0x{:02x}",
            other.type_byte()
        ))),
        Err(ReadError::TimedOut { .. }) => Err(ClientError::Timeout),
        Err(e @ (ReadError::Closed { bytes_read: 0 } | ReadError::Io { bytes_read: 0, .. })) => {
            return Attempt::Retry(e.to_string())
        }
        Err(e @ (ReadError::Closed { .. } | ReadError::Decode(_))) => {
            Err(ClientError::ProtocolViolation(e.to_string()))
        }
        Err(e @ ReadError::Io { .. }) => Err(ClientError::Transport(e.to_string())),
    })
}

/// Sends one selection request and waits for the assignment.
pub fn edge_session<C: Connector>(
    connector: &C,
    request: &SelectionRequest,
    config: &ClientConfig,
) -> Result<ModelAssignment, ClientError> {
    let deadline = Instant::now() + config.timeout;
    let msg = WireMessage::SelectionRequest(request.clone());
    let mut last = String::new();
    for _ in 0..=config.retries {
        if Instant::now() >= deadline {
            return Err(ClientError::Timeout);
        }
        match attempt(connector, &msg, deadline) {
            Attempt::Done(r) => return r,
            Attempt::Retry(why) => last = why,
        }
    }
    Err(ClientError::Transport(last))
}
