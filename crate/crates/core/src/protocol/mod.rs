//! Edge/cloud selection protocol: wire codec, transports, the cloud
//! server, the edge client and the training-stage corpus pipeline.
//!
//! A session is one connection carrying one `SelectionRequest` from the
//! edge and one `ModelAssignment` or `ErrorReply` back. Re-selection opens
//! a new session.

pub mod client;
pub mod pipeline;
pub mod server;
pub mod transport;
pub mod wire;

pub use client::{build_request, edge_session, ClientConfig, ClientError};
pub use pipeline::{training_pipeline, PipelineError, PipelineReport};
pub use server::{cloud_handle, spawn_tcp, CloudServer, CloudServerState, ServerConfig, ServerHandle};
pub use transport::{memory_listener, memory_pair, Connector, Listener, MemoryStream, TcpConnector, Transport};
pub use wire::{decode, encode, ModelAssignment, SelectionRequest, WireError, WireMessage};
