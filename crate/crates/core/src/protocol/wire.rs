//! Binary message framing.
//!
//! ```text
//! frame    = magic(0x50 0x43) version(0x01) type(u8) length(u32) payload
//! string   = u16 length + UTF-8 bytes
//! real     = IEEE-754 binary64
//! list<T>  = u32 count + T*
//! blob     = list<u8>
//! option<T>= u8 presence (0|1) + T if present
//! ```
//!
//! All integers and reals are big-endian.
//!
//! | type | message          | payload                                                                 |
//! |------|------------------|-------------------------------------------------------------------------|
//! | 0x01 | SelectionRequest | list<string> classes, option<real> budget, list<blob> frames, option<real> sigma |
//! | 0x02 | FeatureReport    | real ratio, option<real> sigma, u32 frames                              |
//! | 0x03 | ModelAssignment  | string model, method, degradation, list<trace step>, option<blob> weights |
//! | 0x04 | ErrorReply       | u16 code, string message                                                |
//! | 0x05 | Ack              | empty                                                                   |
//!
//! `method` is `string id, u8 stage1, option<u8> stage2, u8 box`;
//! `degradation` is `u8 kind, real param, u64 seed`; a trace step is three
//! strings `branch, option, reason`.

use thiserror::Error;

use crate::degrade::{DegradationKind, DegradationSpec};
use crate::features::DataFeatures;
use crate::registry::{BoxStrategy, MethodFeatures, ProcessingUnit};
use crate::selector::BranchStep;

pub const MAGIC: [u8; 2] = [0x50, 0x43];
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 8;

pub const TYPE_REQUEST: u8 = 0x01;
pub const TYPE_FEATURES: u8 = 0x02;
pub const TYPE_ASSIGNMENT: u8 = 0x03;
pub const TYPE_ERROR: u8 = 0x04;
pub const TYPE_ACK: u8 = 0x05;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("bad magic {0:02x} {1:02x}")]
    BadMagic(u8, u8),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("truncated message")]
    Truncated,
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("{0} trailing bytes after message")]
    TrailingBytes(usize),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("{0} too long to encode")]
    TooLong(&'static str),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelectionRequest {
    pub target_classes: Vec<String>,
    pub latency_budget_s: Option<f64>,
    /// Raw velodyne `.bin` contents, one per frame.
    pub sample_frames: Vec<Vec<u8>>,
    pub declared_noise_sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelAssignment {
    pub model_id: String,
    pub features: MethodFeatures,
    pub train_degradation: DegradationSpec,
    pub branch_trace: Vec<BranchStep>,
    /// Opaque model payload; unused by the reference server.
    pub weights: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WireMessage {
    SelectionRequest(SelectionRequest),
    FeatureReport(DataFeatures),
    ModelAssignment(ModelAssignment),
    ErrorReply { code: u16, message: String },
    Ack,
}

impl WireMessage {
    pub fn type_byte(&self) -> u8 {
        match self {
            WireMessage::SelectionRequest(_) => TYPE_REQUEST,
            WireMessage::FeatureReport(_) => TYPE_FEATURES,
            WireMessage::ModelAssignment(_) => TYPE_ASSIGNMENT,
            WireMessage::ErrorReply { .. } => TYPE_ERROR,
            WireMessage::Ack => TYPE_ACK,
        }
    }
}

struct Enc(Vec<u8>);

impl Enc {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn count(&mut self, n: usize, what: &'static str) -> Result<(), WireError> {
        self.u32(u32::try_from(n).map_err(|_| WireError::TooLong(what))?);
        Ok(())
    }
    fn str(&mut self, s: &str) -> Result<(), WireError> {
        self.u16(u16::try_from(s.len()).map_err(|_| WireError::TooLong("string"))?);
        self.0.extend_from_slice(s.as_bytes());
        Ok(())
    }
    fn blob(&mut self, b: &[u8]) -> Result<(), WireError> {
        self.count(b.len(), "blob")?;
        self.0.extend_from_slice(b);
        Ok(())
    }
    fn opt_f64(&mut self, v: Option<f64>) {
        match v {
            Some(x) => {
                self.u8(1);
                self.f64(x);
            }
            None => self.u8(0),
        }
    }
}

struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Dec<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let end = self.pos.checked_add(n).ok_or(WireError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(WireError::Truncated)?;
        self.pos = end;
        Ok(s)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }
    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_be_bytes(self.array()?))
    }
    fn str(&mut self) -> Result<String, WireError> {
        let n = self.u16()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| WireError::InvalidField("string is not UTF-8".into()))
    }
    fn blob(&mut self) -> Result<Vec<u8>, WireError> {
        let n = self.u32()? as usize;
        Ok(self.take(n)?.to_vec())
    }
    fn present(&mut self) -> Result<bool, WireError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(WireError::InvalidField(format!("presence byte {b}"))),
        }
    }
    fn opt_f64(&mut self) -> Result<Option<f64>, WireError> {
        Ok(if self.present()? { Some(self.f64()?) } else { None })
    }
    /// Element count of a list. Every element takes at least `min_elem`
    /// bytes, so counts that cannot fit are reported as truncation before
    /// anything is allocated.
    fn count(&mut self, min_elem: usize) -> Result<usize, WireError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_elem) > self.buf.len() - self.pos {
            return Err(WireError::Truncated);
        }
        Ok(n)
    }
}

fn unit(code: u8) -> Result<ProcessingUnit, WireError> {
    ProcessingUnit::from_code(code).ok_or_else(|| WireError::InvalidField(format!("processing unit {code}")))
}

fn encode_payload(msg: &WireMessage, e: &mut Enc) -> Result<(), WireError> {
    match msg {
        WireMessage::SelectionRequest(r) => {
            e.count(r.target_classes.len(), "class list")?;
            for c in &r.target_classes {
                e.str(c)?;
            }
            e.opt_f64(r.latency_budget_s);
            e.count(r.sample_frames.len(), "frame list")?;
            for f in &r.sample_frames {
                e.blob(f)?;
            }
            e.opt_f64(r.declared_noise_sigma);
        }
        WireMessage::FeatureReport(f) => {
            e.f64(f.normalized_point_count);
            e.opt_f64(f.noise_sigma);
            e.u32(f.frames_analyzed);
        }
        WireMessage::ModelAssignment(a) => {
            e.str(&a.model_id)?;
            e.str(&a.features.method_id)?;
            e.u8(a.features.stage1.code());
            match a.features.stage2 {
                Some(u) => {
                    e.u8(1);
                    e.u8(u.code());
                }
                None => e.u8(0),
            }
            e.u8(a.features.box_strategy.code());
            e.u8(a.train_degradation.kind.code());
            e.f64(a.train_degradation.param);
            e.u64(a.train_degradation.seed);
            e.count(a.branch_trace.len(), "trace")?;
            for s in &a.branch_trace {
                e.str(&s.branch)?;
                e.str(&s.option)?;
                e.str(&s.reason)?;
            }
            match &a.weights {
                Some(w) => {
                    e.u8(1);
                    e.blob(w)?;
                }
                None => e.u8(0),
            }
        }
        WireMessage::ErrorReply { code, message } => {
            e.u16(*code);
            e.str(message)?;
        }
        WireMessage::Ack => {}
    }
    Ok(())
}

/// Serializes one framed message.
pub fn encode(msg: &WireMessage) -> Result<Vec<u8>, WireError> {
    let mut e = Enc(Vec::with_capacity(64));
    e.0.extend_from_slice(&MAGIC);
    e.u8(VERSION);
    e.u8(msg.type_byte());
    e.u32(0);
    encode_payload(msg, &mut e)?;
    let len = u32::try_from(e.0.len() - HEADER_LEN).map_err(|_| WireError::TooLong("payload"))?;
    e.0[4..8].copy_from_slice(&len.to_be_bytes());
    Ok(e.0)
}

/// Validates a header and returns `(type, payload length)`.
pub fn decode_header(h: &[u8; HEADER_LEN]) -> Result<(u8, usize), WireError> {
    if h[..2] != MAGIC {
        return Err(WireError::BadMagic(h[0], h[1]));
    }
    if h[2] != VERSION {
        return Err(WireError::UnsupportedVersion(h[2]));
    }
    if !(TYPE_REQUEST..=TYPE_ACK).contains(&h[3]) {
        return Err(WireError::UnknownType(h[3]));
    }
    Ok((h[3], u32::from_be_bytes([h[4], h[5], h[6], h[7]]) as usize))
}

/// Decodes a payload of the given type; the payload must be consumed exactly.
pub fn decode_payload(type_byte: u8, payload: &[u8]) -> Result<WireMessage, WireError> {
    let mut d = Dec { buf: payload, pos: 0 };
    let msg = match type_byte {
        TYPE_REQUEST => {
            let n = d.count(2)?;
            let target_classes = (0..n).map(|_| d.str()).collect::<Result<_, _>>()?;
            let latency_budget_s = d.opt_f64()?;
            let n = d.count(4)?;
            let sample_frames = (0..n).map(|_| d.blob()).collect::<Result<_, _>>()?;
            let declared_noise_sigma = d.opt_f64()?;
            WireMessage::SelectionRequest(SelectionRequest {
                target_classes,
                latency_budget_s,
                sample_frames,
                declared_noise_sigma,
            })
        }
        TYPE_FEATURES => WireMessage::FeatureReport(DataFeatures {
            normalized_point_count: d.f64()?,
            noise_sigma: d.opt_f64()?,
            frames_analyzed: d.u32()?,
        }),
        TYPE_ASSIGNMENT => {
            let model_id = d.str()?;
            let method_id = d.str()?;
            let stage1 = unit(d.u8()?)?;
            let stage2 = if d.present()? { Some(unit(d.u8()?)?) } else { None };
            let b = d.u8()?;
            let box_strategy =
                BoxStrategy::from_code(b).ok_or_else(|| WireError::InvalidField(format!("box strategy {b}")))?;
            let k = d.u8()?;
            let kind = DegradationKind::from_code(k)
                .ok_or_else(|| WireError::InvalidField(format!("degradation kind {k}")))?;
            let train_degradation = DegradationSpec {
                kind,
                param: d.f64()?,
                seed: d.u64()?,
            };
            let n = d.count(6)?;
            let branch_trace = (0..n)
                .map(|_| {
                    Ok(BranchStep {
                        branch: d.str()?,
                        option: d.str()?,
                        reason: d.str()?,
                    })
                })
                .collect::<Result<_, WireError>>()?;
            let weights = if d.present()? { Some(d.blob()?) } else { None };
            WireMessage::ModelAssignment(ModelAssignment {
                model_id,
                features: MethodFeatures {
                    method_id,
                    stage1,
                    stage2,
                    box_strategy,
                },
                train_degradation,
                branch_trace,
                weights,
            })
        }
        TYPE_ERROR => WireMessage::ErrorReply {
            code: d.u16()?,
            message: d.str()?,
        },
        TYPE_ACK => WireMessage::Ack,
        t => return Err(WireError::UnknownType(t)),
    };
    if d.pos != payload.len() {
        return Err(WireError::TrailingBytes(payload.len() - d.pos));
    }
    Ok(msg)
}

/// Decodes exactly one framed message occupying all of `bytes`.
pub fn decode(bytes: &[u8]) -> Result<WireMessage, WireError> {
    let header: &[u8; HEADER_LEN] = bytes
        .get(..HEADER_LEN)
        .ok_or(WireError::Truncated)?
        .try_into()
        .expect("exact length");
    let (t, len) = decode_header(header)?;
    let body = &bytes[HEADER_LEN..];
    if body.len() < len {
        return Err(WireError::Truncated);
    }
    if body.len() > len {
        return Err(WireError::TrailingBytes(body.len() - len));
    }
    decode_payload(t, body)
}
