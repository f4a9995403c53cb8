//! Host side of the device workflow: connect, clock set/read, flash erase,
//! collection start and bulk readout.

pub mod ports;
pub mod wire;

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex, MutexGuard, TryLockError};
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::codec::DeviceInstant;

pub use ports::{list_ports, list_ports_in, PortAddress, PortDescriptor, PortRegistry};
pub use wire::{Command, Response};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinkError {
    #[error("port {0} is unavailable")]
    PortUnavailable(String),
    #[error("no handshake from {0}")]
    NoHandshake(String),
    #[error("not connected")]
    NotConnected,
    #[error("already connected")]
    AlreadyConnected,
    #[error("another device operation is in progress")]
    Busy,
    #[error("timed out waiting for the device")]
    Timeout,
    #[error("device rejected the command (ERR {0})")]
    Rejected(u16),
    #[error("malformed reply: {0}")]
    MalformedReply(String),
    #[error("device closed the link after {delivered} records")]
    AbortedByPeer { delivered: usize },
    #[error("i/o error: {0}")]
    Io(String),
}

impl LinkError {
    /// Stable variant name, used in API error bodies.
    pub fn name(&self) -> &'static str {
        match self {
            LinkError::PortUnavailable(_) => "PortUnavailable",
            LinkError::NoHandshake(_) => "NoHandshake",
            LinkError::NotConnected => "NotConnected",
            LinkError::AlreadyConnected => "AlreadyConnected",
            LinkError::Busy => "Busy",
            LinkError::Timeout => "Timeout",
            LinkError::Rejected(_) => "Rejected",
            LinkError::MalformedReply(_) => "MalformedReply",
            LinkError::AbortedByPeer { .. } => "AbortedByPeer",
            LinkError::Io(_) => "Io",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LinkState {
    Disconnected,
    Connected,
    Busy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkConfig {
    pub handshake_timeout: Duration,
    /// Per reply line, including each record during readout.
    pub line_timeout: Duration,
    pub baud_rate: u32,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            handshake_timeout: Duration::from_secs(2),
            line_timeout: Duration::from_secs(5),
            baud_rate: 115_200,
        }
    }
}

/// Byte stream to a device with adjustable read timeout.
pub trait Transport: Read + Write + Send {
    fn set_read_timeout(&mut self, timeout: Duration) -> io::Result<()>;
}

impl Transport for TcpStream {
    fn set_read_timeout(&mut self, timeout: Duration) -> io::Result<()> {
        TcpStream::set_read_timeout(self, Some(timeout))
    }
}

struct SerialTransport(Box<dyn serialport::SerialPort>);

impl Read for SerialTransport {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        self.0.read(buf)
    }
}

impl Write for SerialTransport {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.write(buf)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.0.flush()
    }
}

impl Transport for SerialTransport {
    fn set_read_timeout(&mut self, timeout: Duration) -> io::Result<()> {
        self.0.set_timeout(timeout).map_err(io::Error::from)
    }
}

fn open_transport(port: &PortAddress, config: &LinkConfig) -> Result<Box<dyn Transport>, LinkError> {
    match port {
        PortAddress::Tcp(addr) => {
            let sock = addr
                .to_socket_addrs()
                .ok()
                .and_then(|mut a| a.next())
                .ok_or_else(|| LinkError::PortUnavailable(port.to_string()))?;
            // Nothing listening is indistinguishable from a silent device.
            let stream = TcpStream::connect_timeout(&sock, config.handshake_timeout)
                .map_err(|_| LinkError::NoHandshake(port.to_string()))?;
            let _ = stream.set_nodelay(true);
            Ok(Box::new(stream))
        }
        PortAddress::Serial(path) => {
            let serial = serialport::new(path, config.baud_rate)
                .data_bits(serialport::DataBits::Eight)
                .parity(serialport::Parity::None)
                .stop_bits(serialport::StopBits::One)
                .flow_control(serialport::FlowControl::None)
                .timeout(config.handshake_timeout)
                .open()
                .map_err(|_| LinkError::PortUnavailable(path.clone()))?;
            Ok(Box::new(SerialTransport(serial)))
        }
    }
}

/// One device session. Commands run strictly one at a time: each waits for
/// its terminating reply before returning.
pub struct DeviceLink {
    config: LinkConfig,
    state: LinkState,
    port: Option<PortAddress>,
    conn: Option<BufReader<Box<dyn Transport>>>,
}

impl std::fmt::Debug for DeviceLink {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DeviceLink").field("state", &self.state).field("port", &self.port).finish_non_exhaustive()
    }
}

impl Default for DeviceLink {
    fn default() -> Self {
        DeviceLink::new(LinkConfig::default())
    }
}

enum Received {
    Line(String),
    Eof,
}

impl DeviceLink {
    pub fn new(config: LinkConfig) -> Self {
        DeviceLink { config, state: LinkState::Disconnected, port: None, conn: None }
    }

    /// Convenience: a fresh link already connected to `port`.
    pub fn open(port: &PortAddress, config: LinkConfig) -> Result<Self, LinkError> {
        let mut link = DeviceLink::new(config);
        link.connect(port)?;
        Ok(link)
    }

    pub fn state(&self) -> LinkState {
        self.state
    }

    pub fn port(&self) -> Option<&PortAddress> {
        self.port.as_ref()
    }

    pub fn config(&self) -> &LinkConfig {
        &self.config
    }

    /// Opens the port and exchanges PING/PONG.
    pub fn connect(&mut self, port: &PortAddress) -> Result<(), LinkError> {
        if self.state != LinkState::Disconnected {
            return Err(LinkError::AlreadyConnected);
        }
        let transport = open_transport(port, &self.config)?;
        self.conn = Some(BufReader::new(transport));
        self.state = LinkState::Busy;
        let handshake = self.send(Command::Ping).and_then(|_| self.recv(self.config.handshake_timeout));
        match handshake {
            Ok(Received::Line(line)) if Response::parse(&line) == Ok(Response::Pong) => {
                self.state = LinkState::Connected;
                self.port = Some(port.clone());
                log::debug!("connected to {port}");
                Ok(())
            }
            _ => {
                self.drop_connection();
                Err(LinkError::NoHandshake(port.to_string()))
            }
        }
    }

    pub fn disconnect(&mut self) {
        self.drop_connection();
    }

    fn drop_connection(&mut self) {
        self.conn = None;
        self.port = None;
        self.state = LinkState::Disconnected;
    }

    fn begin(&mut self) -> Result<(), LinkError> {
        match self.state {
            LinkState::Connected => {
                self.state = LinkState::Busy;
                Ok(())
            }
            LinkState::Busy => Err(LinkError::Busy),
            LinkState::Disconnected => Err(LinkError::NotConnected),
        }
    }

    /// Transport failures leave the stream in an unknown position, so the
    /// session is torn down; protocol-level refusals keep it.
    fn finish<T>(&mut self, result: Result<T, LinkError>) -> Result<T, LinkError> {
        match &result {
            Ok(_) | Err(LinkError::Rejected(_)) | Err(LinkError::MalformedReply(_)) => {
                if self.conn.is_some() {
                    self.state = LinkState::Connected;
                }
            }
            Err(_) => self.drop_connection(),
        }
        result
    }

    fn send(&mut self, command: Command) -> Result<(), LinkError> {
        let conn = self.conn.as_mut().ok_or(LinkError::NotConnected)?;
        let w = conn.get_mut();
        w.write_all(format!("{command}\n").as_bytes()).and_then(|_| w.flush()).map_err(|e| LinkError::Io(e.to_string()))
    }

    fn recv(&mut self, timeout: Duration) -> Result<Received, LinkError> {
        let conn = self.conn.as_mut().ok_or(LinkError::NotConnected)?;
        conn.get_mut().set_read_timeout(timeout).map_err(|e| LinkError::Io(e.to_string()))?;
        let mut line = String::new();
        match conn.read_line(&mut line) {
            Ok(0) => Ok(Received::Eof),
            Ok(_) if !line.ends_with('\n') => Ok(Received::Eof),
            Ok(_) => Ok(Received::Line(line.trim_end_matches(['\r', '\n']).to_string())),
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                Err(LinkError::Timeout)
            }
            Err(e) if matches!(e.kind(), io::ErrorKind::ConnectionReset | io::ErrorKind::BrokenPipe) => {
                Ok(Received::Eof)
            }
            Err(e) => Err(LinkError::Io(e.to_string())),
        }
    }

    fn recv_reply(&mut self) -> Result<Response, LinkError> {
        match self.recv(self.config.line_timeout)? {
            Received::Eof => Err(LinkError::AbortedByPeer { delivered: 0 }),
            Received::Line(line) => Response::parse(&line).map_err(|e| LinkError::MalformedReply(e.line)),
        }
    }

    /// One command, one reply line. `ERR` becomes `Rejected`.
    fn exchange(&mut self, command: Command) -> Result<Response, LinkError> {
        self.send(command)?;
        match self.recv_reply()? {
            Response::Err(code) => Err(LinkError::Rejected(code)),
            other => Ok(other),
        }
    }

    fn expect_ok(&mut self, command: Command) -> Result<(), LinkError> {
        match self.exchange(command)? {
            Response::Ok => Ok(()),
            other => Err(LinkError::MalformedReply(other.to_string())),
        }
    }

    pub fn set_time(&mut self, instant: DeviceInstant) -> Result<(), LinkError> {
        self.begin()?;
        let r = self.expect_ok(Command::SetTime(instant));
        self.finish(r)
    }

    pub fn read_time(&mut self) -> Result<DeviceInstant, LinkError> {
        self.begin()?;
        let r = match self.exchange(Command::GetTime) {
            Ok(Response::Time(i)) => Ok(i),
            Ok(other) => Err(LinkError::MalformedReply(other.to_string())),
            Err(e) => Err(e),
        };
        self.finish(r)
    }

    pub fn erase_flash(&mut self) -> Result<(), LinkError> {
        self.begin()?;
        let r = self.expect_ok(Command::Erase);
        self.finish(r)
    }

    /// Erase followed by clock sync, as one operation.
    pub fn start_collection(&mut self, now: DeviceInstant) -> Result<(), LinkError> {
        self.begin()?;
        let r = self.expect_ok(Command::Erase).and_then(|_| self.expect_ok(Command::SetTime(now)));
        self.finish(r)
    }

    /// Streams every stored record to `sink` as its 16-hex text, in storage
    /// order. Returns the number delivered.
    pub fn read_data<F: FnMut(&str)>(&mut self, mut sink: F) -> Result<usize, LinkError> {
        self.begin()?;
        let r = self.send(Command::Data).and_then(|_| {
            let mut delivered = 0usize;
            loop {
                let line = match self.recv(self.config.line_timeout)? {
                    Received::Eof => return Err(LinkError::AbortedByPeer { delivered }),
                    Received::Line(line) => line,
                };
                match Response::parse(&line) {
                    Ok(Response::Rec(hex)) => {
                        sink(&hex);
                        delivered += 1;
                    }
                    Ok(Response::End(n)) if n == delivered => return Ok(delivered),
                    Ok(Response::End(n)) => {
                        return Err(LinkError::MalformedReply(format!("END {n} after {delivered} records")))
                    }
                    Ok(Response::Err(code)) => return Err(LinkError::Rejected(code)),
                    _ => return Err(LinkError::Io(format!("unexpected line during readout: {line:?}"))),
                }
            }
        });
        self.finish(r)
    }

    /// Collects [`read_data`](Self::read_data) output into a vector.
    pub fn read_all(&mut self) -> Result<Vec<String>, LinkError> {
        let mut lines = Vec::new();
        self.read_data(|l| lines.push(l.to_string()))?;
        Ok(lines)
    }
}

/// A link shared between callers. [`SharedLink::lock`] queues behind the
/// current owner; [`SharedLink::try_with`] refuses with `Busy` instead.
#[derive(Debug, Clone, Default)]
pub struct SharedLink {
    inner: Arc<Mutex<DeviceLink>>,
}

impl SharedLink {
    pub fn new(link: DeviceLink) -> Self {
        SharedLink { inner: Arc::new(Mutex::new(link)) }
    }

    pub fn lock(&self) -> MutexGuard<'_, DeviceLink> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn try_with<R>(&self, f: impl FnOnce(&mut DeviceLink) -> Result<R, LinkError>) -> Result<R, LinkError> {
        let mut guard = match self.inner.try_lock() {
            Ok(g) => g,
            Err(TryLockError::WouldBlock) => return Err(LinkError::Busy),
            Err(TryLockError::Poisoned(p)) => p.into_inner(),
        };
        f(&mut guard)
    }

    /// State as seen from outside: `Busy` while another caller holds it.
    pub fn state(&self) -> LinkState {
        match self.inner.try_lock() {
            Ok(g) => g.state(),
            Err(TryLockError::WouldBlock) => LinkState::Busy,
            Err(TryLockError::Poisoned(p)) => p.into_inner().state(),
        }
    }
}
