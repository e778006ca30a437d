//! Byte-stream transports: TCP and an in-memory duplex for tests.

use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Mutex;
use std::time::Duration;

use super::wire::{decode_header, decode_payload, encode, WireError, WireMessage, HEADER_LEN};

/// A connected, bidirectional byte stream.
pub trait Transport: Read + Write + Send {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()>;
    /// Signals end of output to the peer.
    fn shutdown_write(&mut self) -> io::Result<()>;
}

impl Transport for TcpStream {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()> {
        TcpStream::set_read_timeout(self, timeout)
    }

    fn shutdown_write(&mut self) -> io::Result<()> {
        self.shutdown(Shutdown::Write)
    }
}

/// Opens client connections.
pub trait Connector {
    type Stream: Transport;
    fn connect(&self) -> io::Result<Self::Stream>;
}

/// Accepts server connections.
pub trait Listener {
    type Stream: Transport + 'static;
    fn accept(&self) -> io::Result<Self::Stream>;
}

#[derive(Debug, Clone)]
pub struct TcpConnector {
    pub addr: String,
    pub connect_timeout: Duration,
}

impl TcpConnector {
    pub fn new(addr: impl Into<String>) -> Self {
        Self {
            addr: addr.into(),
            connect_timeout: Duration::from_secs(10),
        }
    }
}

impl Connector for TcpConnector {
    type Stream = TcpStream;

    fn connect(&self) -> io::Result<TcpStream> {
        let mut last = io::Error::new(io::ErrorKind::AddrNotAvailable, format!("no address for {}", self.addr));
        for addr in self.addr.to_socket_addrs()? {
            match TcpStream::connect_timeout(&addr, self.connect_timeout) {
                Ok(s) => {
                    s.set_nodelay(true)?;
                    return Ok(s);
                }
                Err(e) => last = e,
            }
        }
        Err(last)
    }
}

impl Listener for TcpListener {
    type Stream = TcpStream;

    fn accept(&self) -> io::Result<TcpStream> {
        let (s, _) = TcpListener::accept(self)?;
        s.set_nodelay(true)?;
        Ok(s)
    }
}

/// One end of an in-memory duplex. Dropping an end (or shutting down its
/// write side) makes the peer read end-of-stream.
#[derive(Debug)]
pub struct MemoryStream {
    tx: Option<Sender<Vec<u8>>>,
    rx: Receiver<Vec<u8>>,
    pending: Vec<u8>,
    offset: usize,
    timeout: Option<Duration>,
}

pub fn memory_pair() -> (MemoryStream, MemoryStream) {
    let (atx, brx) = mpsc::channel();
    let (btx, arx) = mpsc::channel();
    let end = |tx, rx| MemoryStream {
        tx: Some(tx),
        rx,
        pending: Vec::new(),
        offset: 0,
        timeout: None,
    };
    (end(atx, arx), end(btx, brx))
}

impl Read for MemoryStream {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        if buf.is_empty() {
            return Ok(0);
        }
        while self.offset == self.pending.len() {
            let next = match self.timeout {
                Some(t) => self.rx.recv_timeout(t).map_err(|e| match e {
                    RecvTimeoutError::Timeout => io::Error::new(io::ErrorKind::TimedOut, "read timed out"),
                    RecvTimeoutError::Disconnected => io::Error::from(io::ErrorKind::UnexpectedEof),
                }),
                None => self
                    .rx
                    .recv()
                    .map_err(|_| io::Error::from(io::ErrorKind::UnexpectedEof)),
            };
            match next {
                Ok(chunk) => {
                    self.pending = chunk;
                    self.offset = 0;
                }
                Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(0),
                Err(e) => return Err(e),
            }
        }
        let n = buf.len().min(self.pending.len() - self.offset);
        buf[..n].copy_from_slice(&self.pending[self.offset..self.offset + n]);
        self.offset += n;
        Ok(n)
    }
}

impl Write for MemoryStream {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let tx = self
            .tx
            .as_ref()
            .ok_or_else(|| io::Error::from(io::ErrorKind::BrokenPipe))?;
        tx.send(buf.to_vec())
            .map_err(|_| io::Error::from(io::ErrorKind::BrokenPipe))?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Transport for MemoryStream {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()> {
        self.timeout = timeout;
        Ok(())
    }

    fn shutdown_write(&mut self) -> io::Result<()> {
        self.tx = None;
        Ok(())
    }
}

/// Client side of an in-memory listener.
#[derive(Debug, Clone)]
pub struct MemoryConnector {
    tx: Sender<MemoryStream>,
}

/// Server side of an in-memory listener.
#[derive(Debug)]
pub struct MemoryListener {
    rx: Mutex<Receiver<MemoryStream>>,
}

pub fn memory_listener() -> (MemoryConnector, MemoryListener) {
    let (tx, rx) = mpsc::channel();
    (MemoryConnector { tx }, MemoryListener { rx: Mutex::new(rx) })
}

impl Connector for MemoryConnector {
    type Stream = MemoryStream;

    fn connect(&self) -> io::Result<MemoryStream> {
        let (client, server) = memory_pair();
        self.tx
            .send(server)
            .map_err(|_| io::Error::from(io::ErrorKind::ConnectionRefused))?;
        Ok(client)
    }
}

impl Listener for MemoryListener {
    type Stream = MemoryStream;

    /// Fails with `NotConnected` once every connector is dropped.
    fn accept(&self) -> io::Result<MemoryStream> {
        self.rx
            .lock()
            .expect("listener lock")
            .recv()
            .map_err(|_| io::Error::from(io::ErrorKind::NotConnected))
    }
}

#[derive(Debug)]
pub enum ReadError {
    /// The stream ended after `bytes_read` bytes of the message.
    Closed {
        bytes_read: usize,
    },
    TimedOut {
        bytes_read: usize,
    },
    Io {
        bytes_read: usize,
        error: io::Error,
    },
    Decode(WireError),
}

impl ReadError {
    pub fn bytes_read(&self) -> usize {
        match self {
            ReadError::Closed { bytes_read }
            | ReadError::TimedOut { bytes_read }
            | ReadError::Io { bytes_read, .. } => *bytes_read,
            ReadError::Decode(_) => HEADER_LEN,
        }
    }
}

impl std::fmt::Display for ReadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReadError::Closed { bytes_read: 0 } => write!(f, "connection closed before any reply"),
            ReadError::Closed { bytes_read } => {
                write!(f, "connection closed mid-message after {bytes_read} bytes (truncated)")
            }
            ReadError::TimedOut { bytes_read } => write!(f, "timed out after {bytes_read} bytes"),
            ReadError::Io { error, .. } => write!(f, "{error}"),
            ReadError::Decode(e) => write!(f, "{e}"),
        }
    }
}

fn fill(r: &mut impl Read, buf: &mut [u8], already: usize) -> Result<(), ReadError> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => {
                return Err(ReadError::Closed {
                    bytes_read: already + got,
                })
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) if matches!(e.kind(), io::ErrorKind::TimedOut | io::ErrorKind::WouldBlock) => {
                return Err(ReadError::TimedOut {
                    bytes_read: already + got,
                })
            }
            Err(error) => {
                return Err(ReadError::Io {
                    bytes_read: already + got,
                    error,
                })
            }
        }
    }
    Ok(())
}

/// Upper bound on an accepted payload.
pub const MAX_PAYLOAD: usize = 256 << 20;

/// Reads one framed message. Header problems are reported before the
/// payload is read.
pub fn read_message(r: &mut impl Read) -> Result<WireMessage, ReadError> {
    let mut header = [0u8; HEADER_LEN];
    fill(r, &mut header, 0)?;
    let (t, len) = decode_header(&header).map_err(ReadError::Decode)?;
    if len > MAX_PAYLOAD {
        return Err(ReadError::Decode(WireError::TooLong("payload")));
    }
    let mut payload = vec![0u8; len];
    fill(r, &mut payload, HEADER_LEN)?;
    decode_payload(t, &payload).map_err(ReadError::Decode)
}

pub fn write_message(w: &mut impl Write, msg: &WireMessage) -> io::Result<()> {
    let bytes = encode(msg).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    w.write_all(&bytes)?;
    w.flush()
}
