//! Loop-facing transports. Every method returns immediately.

use std::io::{self, BufRead, BufReader, ErrorKind, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, SyncSender, TrySendError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, warn};

use super::wire::{self, MutationRequest, MutationResponse};
use crate::corpus::SeedId;
use crate::hexcodec;

pub const BACKOFF_START: Duration = Duration::from_millis(50);
pub const BACKOFF_CAP: Duration = Duration::from_secs(5);
const CONNECT_TIMEOUT: Duration = Duration::from_millis(250);
const GREETING_TIMEOUT: Duration = Duration::from_secs(2);
const POLL: Duration = Duration::from_millis(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SendOutcome {
    Sent,
    /// The endpoint is connected but still working on an earlier request.
    Busy,
    Disconnected,
}

pub trait Transport: Send {
    fn try_send(&mut self, req: &MutationRequest) -> SendOutcome;
    fn try_recv(&mut self) -> Option<MutationResponse>;
    fn is_connected(&self) -> bool;
}

/// Doubling delay capped at [`BACKOFF_CAP`].
#[derive(Debug, Clone)]
pub struct Backoff {
    next: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Self { next: BACKOFF_START }
    }
}

impl Backoff {
    pub fn next_delay(&mut self) -> Duration {
        let d = self.next;
        self.next = (self.next * 2).min(BACKOFF_CAP);
        d
    }

    pub fn reset(&mut self) {
        self.next = BACKOFF_START;
    }
}

/// Where the mutator listens: `host:port`, or `unix:<path>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Tcp(String),
    Unix(PathBuf),
}

impl std::str::FromStr for Endpoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if let Some(path) = s.strip_prefix("unix:") {
            if path.is_empty() {
                return Err("empty socket path".into());
            }
            return Ok(Endpoint::Unix(path.into()));
        }
        match s.rsplit_once(':') {
            Some((host, port)) if !host.is_empty() && port.parse::<u16>().is_ok() => Ok(Endpoint::Tcp(s.to_string())),
            _ => Err(format!("expected host:port or unix:<path>, got {s:?}")),
        }
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Tcp(a) => f.write_str(a),
            Endpoint::Unix(p) => write!(f, "unix:{}", p.display()),
        }
    }
}

enum Stream {
    Tcp(TcpStream),
    #[cfg(unix)]
    Unix(std::os::unix::net::UnixStream),
}

impl Stream {
    fn connect(endpoint: &Endpoint) -> io::Result<Stream> {
        match endpoint {
            Endpoint::Tcp(addr) => {
                let mut last = io::Error::new(ErrorKind::NotFound, "address did not resolve");
                for a in addr.to_socket_addrs()? {
                    match TcpStream::connect_timeout(&a, CONNECT_TIMEOUT) {
                        Ok(s) => {
                            s.set_nodelay(true)?;
                            return Ok(Stream::Tcp(s));
                        }
                        Err(e) => last = e,
                    }
                }
                Err(last)
            }
            #[cfg(unix)]
            Endpoint::Unix(path) => Ok(Stream::Unix(std::os::unix::net::UnixStream::connect(path)?)),
            #[cfg(not(unix))]
            Endpoint::Unix(_) => Err(io::Error::new(ErrorKind::Unsupported, "unix sockets")),
        }
    }

    fn try_clone(&self) -> io::Result<Stream> {
        Ok(match self {
            Stream::Tcp(s) => Stream::Tcp(s.try_clone()?),
            #[cfg(unix)]
            Stream::Unix(s) => Stream::Unix(s.try_clone()?),
        })
    }

    fn set_read_timeout(&self, t: Duration) -> io::Result<()> {
        match self {
            Stream::Tcp(s) => s.set_read_timeout(Some(t)),
            #[cfg(unix)]
            Stream::Unix(s) => s.set_read_timeout(Some(t)),
        }
    }
}

impl Read for Stream {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        match self {
            Stream::Tcp(s) => s.read(buf),
            #[cfg(unix)]
            Stream::Unix(s) => s.read(buf),
        }
    }
}

impl Write for Stream {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        match self {
            Stream::Tcp(s) => s.write(buf),
            #[cfg(unix)]
            Stream::Unix(s) => s.write(buf),
        }
    }

    fn flush(&mut self) -> io::Result<()> {
        match self {
            Stream::Tcp(s) => s.flush(),
            #[cfg(unix)]
            Stream::Unix(s) => s.flush(),
        }
    }
}

/// A socket connection owned by a background pump thread.
///
/// Requests are handed over through a rendezvous channel, so `try_send` only
/// succeeds when the pump is connected and idle; otherwise the request stays
/// in the caller's queue. The pump reconnects with [`Backoff`].
pub struct SocketTransport {
    requests: SyncSender<MutationRequest>,
    responses: Receiver<MutationResponse>,
    connected: Arc<AtomicBool>,
    shutdown: Arc<AtomicBool>,
    pump: Option<JoinHandle<()>>,
}

impl SocketTransport {
    pub fn spawn(endpoint: Endpoint) -> Self {
        let (req_tx, req_rx) = mpsc::sync_channel(0);
        let (res_tx, res_rx) = mpsc::channel();
        let connected = Arc::new(AtomicBool::new(false));
        let shutdown = Arc::new(AtomicBool::new(false));
        let pump = Pump {
            endpoint,
            requests: req_rx,
            responses: res_tx,
            connected: connected.clone(),
            shutdown: shutdown.clone(),
        };
        let handle = thread::Builder::new()
            .name("mutator-pump".into())
            .spawn(move || pump.run())
            .expect("spawn pump thread");
        Self {
            requests: req_tx,
            responses: res_rx,
            connected,
            shutdown,
            pump: Some(handle),
        }
    }
}

impl Transport for SocketTransport {
    fn try_send(&mut self, req: &MutationRequest) -> SendOutcome {
        if !self.is_connected() {
            return SendOutcome::Disconnected;
        }
        match self.requests.try_send(req.clone()) {
            Ok(()) => SendOutcome::Sent,
            Err(TrySendError::Full(_)) => SendOutcome::Busy,
            Err(TrySendError::Disconnected(_)) => SendOutcome::Disconnected,
        }
    }

    fn try_recv(&mut self) -> Option<MutationResponse> {
        self.responses.try_recv().ok()
    }

    fn is_connected(&self) -> bool {
        self.connected.load(Ordering::Acquire)
    }
}

impl Drop for SocketTransport {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::Release);
        if let Some(h) = self.pump.take() {
            let _ = h.join();
        }
    }
}

struct Pump {
    endpoint: Endpoint,
    requests: Receiver<MutationRequest>,
    responses: mpsc::Sender<MutationResponse>,
    connected: Arc<AtomicBool>,
    shutdown: Arc<AtomicBool>,
}

enum SessionEnd {
    Lost(io::Error),
    Closed,
}

impl Pump {
    fn stopping(&self) -> bool {
        self.shutdown.load(Ordering::Acquire)
    }

    fn run(self) {
        let mut backoff = Backoff::default();
        while !self.stopping() {
            match Stream::connect(&self.endpoint) {
                Ok(stream) => {
                    backoff.reset();
                    match self.session(stream) {
                        SessionEnd::Closed => return,
                        SessionEnd::Lost(e) => debug!("mutator at {} lost: {e}", self.endpoint),
                    }
                    self.connected.store(false, Ordering::Release);
                }
                Err(e) => debug!("mutator at {} unreachable: {e}", self.endpoint),
            }
            self.sleep(backoff.next_delay());
        }
    }

    fn sleep(&self, d: Duration) {
        let until = Instant::now() + d;
        while !self.stopping() && Instant::now() < until {
            thread::sleep(POLL.min(until.saturating_duration_since(Instant::now())));
        }
    }

    fn session(&self, stream: Stream) -> SessionEnd {
        match self.session_inner(stream) {
            Ok(end) => end,
            Err(e) => SessionEnd::Lost(e),
        }
    }

    fn session_inner(&self, stream: Stream) -> io::Result<SessionEnd> {
        let mut writer = stream.try_clone()?;
        stream.set_read_timeout(GREETING_TIMEOUT)?;
        let mut reader = BufReader::new(stream);
        let mut line = Vec::new();
        if reader.read_until(b'\n', &mut line)? == 0 {
            return Err(ErrorKind::UnexpectedEof.into());
        }
        wire::check_greeting(&String::from_utf8_lossy(&line)).map_err(|e| io::Error::new(ErrorKind::InvalidData, e))?;
        reader.get_ref().set_read_timeout(POLL)?;
        self.connected.store(true, Ordering::Release);

        line.clear();
        let mut in_flight: Option<SeedId> = None;
        loop {
            if self.stopping() {
                return Ok(SessionEnd::Closed);
            }
            if in_flight.is_none() {
                match self.requests.recv_timeout(POLL) {
                    Ok(req) => {
                        writer.write_all(wire::format_request(&req).as_bytes())?;
                        writer.flush()?;
                        in_flight = Some(req.seed_id);
                    }
                    Err(RecvTimeoutError::Timeout) => {}
                    Err(RecvTimeoutError::Disconnected) => return Ok(SessionEnd::Closed),
                }
                continue;
            }
            match reader.read_until(b'\n', &mut line) {
                Ok(0) => return Err(ErrorKind::UnexpectedEof.into()),
                Ok(_) if line.ends_with(b"\n") => {
                    let text = String::from_utf8_lossy(&line).into_owned();
                    line.clear();
                    match wire::parse_response(&text) {
                        Ok(res) => {
                            if Some(res.seed_id) == in_flight {
                                in_flight = None;
                            }
                            if self.responses.send(res).is_err() {
                                return Ok(SessionEnd::Closed);
                            }
                        }
                        Err(e) => {
                            warn!("dropping malformed mutator line: {e}");
                            in_flight = None;
                        }
                    }
                }
                Ok(_) => {}
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                Err(e) => return Err(e),
            }
        }
    }
}

type MutateFn = dyn FnMut(&[u8], &str) -> Vec<u8> + Send;

/// Runs a mutation function in the caller's thread, behaving like a single
/// endpoint that answers one request at a time. The answer becomes visible
/// after `latency` further polls.
pub struct InProcessTransport {
    mutate: Box<MutateFn>,
    latency: u32,
    pending: Option<(MutationResponse, u32)>,
}

impl InProcessTransport {
    pub fn new(mutate: impl FnMut(&[u8], &str) -> Vec<u8> + Send + 'static, latency: u32) -> Self {
        Self {
            mutate: Box::new(mutate),
            latency,
            pending: None,
        }
    }

    /// The reference structure-aware mutator.
    pub fn stub(latency: u32) -> Self {
        Self::new(crate::stub::stub_mutate, latency)
    }

    fn answer(&mut self, req: &MutationRequest) -> MutationResponse {
        let hex = hexcodec::decode(&req.hex)
            .ok()
            .map(|payload| hexcodec::encode(&(self.mutate)(&payload, &req.format_tag)))
            .and_then(|h| hexcodec::sanitize_response(&h))
            .filter(|h| !h.is_empty());
        MutationResponse {
            seed_id: req.seed_id,
            hex,
        }
    }
}

impl Transport for InProcessTransport {
    fn try_send(&mut self, req: &MutationRequest) -> SendOutcome {
        if self.pending.is_some() {
            return SendOutcome::Busy;
        }
        let res = self.answer(req);
        self.pending = Some((res, self.latency));
        SendOutcome::Sent
    }

    fn try_recv(&mut self) -> Option<MutationResponse> {
        match self.pending.as_mut()? {
            (_, 0) => self.pending.take().map(|(r, _)| r),
            (_, left) => {
                *left -= 1;
                None
            }
        }
    }

    fn is_connected(&self) -> bool {
        true
    }
}
