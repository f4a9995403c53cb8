//! A virtual device that speaks the link protocol, for development and
//! tests without hardware.

#[cfg(unix)]
pub mod pty;
pub mod scenario;

use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::Duration;

use thiserror::Error;

use crate::codec::{CodecError, DeviceInstant, RawRecord};
use crate::link::ports::{Announcement, PortRegistry};
use crate::link::wire::{Command, Response, ERR_BAD_ARGUMENT, ERR_UNKNOWN_COMMAND};

pub use scenario::{
    generate_records, GeneratedLog, GroundTruth, NoiseModel, PuffSpec, Scenario, Session, TemperatureModel,
    TouchBehavior,
};

/// Stand-in for roughly ten days of storage.
pub const DEFAULT_FLASH_CAPACITY: usize = 65_536;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmulatorError {
    #[error("{records} records exceed the flash capacity of {capacity}")]
    CapacityExceeded { records: usize, capacity: usize },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("could not place every false positive without overlapping real activity")]
    NoRoomForNoise,
}

impl From<CodecError> for EmulatorError {
    fn from(e: CodecError) -> Self {
        EmulatorError::InvalidScenario(e.to_string())
    }
}

/// Flash contents plus a clock running at host speed with an offset.
#[derive(Debug, Clone)]
pub struct EmulatedDevice {
    flash: Vec<RawRecord>,
    capacity: usize,
    clock_offset_ticks: i64,
}

impl Default for EmulatedDevice {
    fn default() -> Self {
        EmulatedDevice::new(DEFAULT_FLASH_CAPACITY)
    }
}

impl EmulatedDevice {
    pub fn new(capacity: usize) -> Self {
        EmulatedDevice { flash: Vec::new(), capacity, clock_offset_ticks: 0 }
    }

    pub fn with_clock(mut self, now: DeviceInstant) -> Self {
        self.set_clock(now);
        self
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn clock(&self) -> DeviceInstant {
        let host = DeviceInstant::now().as_ticks() as i64;
        let ticks = (host + self.clock_offset_ticks).max(0) as u64;
        DeviceInstant::from_ticks(ticks).unwrap_or(DeviceInstant::new(u32::MAX, u16::MAX))
    }

    pub fn set_clock(&mut self, now: DeviceInstant) {
        self.clock_offset_ticks = now.as_ticks() as i64 - DeviceInstant::now().as_ticks() as i64;
    }

    /// Replaces the flash contents.
    pub fn load_flash(&mut self, records: &[RawRecord]) -> Result<(), EmulatorError> {
        if records.len() > self.capacity {
            return Err(EmulatorError::CapacityExceeded { records: records.len(), capacity: self.capacity });
        }
        self.flash = records.to_vec();
        Ok(())
    }

    pub fn dump_flash(&self) -> Vec<RawRecord> {
        self.flash.clone()
    }

    pub fn erase(&mut self) {
        self.flash.clear();
    }

    /// Reply lines for one command line.
    pub fn handle_line(&mut self, line: &str) -> Vec<Response> {
        let command = match Command::parse(line) {
            Ok(c) => c,
            Err(e) if e.reason == "unknown command" => return vec![Response::Err(ERR_UNKNOWN_COMMAND)],
            Err(_) => return vec![Response::Err(ERR_BAD_ARGUMENT)],
        };
        match command {
            Command::Ping => vec![Response::Pong],
            Command::SetTime(i) => {
                self.set_clock(i);
                vec![Response::Ok]
            }
            Command::GetTime => vec![Response::Time(self.clock())],
            Command::Erase => {
                self.erase();
                vec![Response::Ok]
            }
            Command::Data => self
                .flash
                .iter()
                .map(|r| Response::Rec(r.to_hex()))
                .chain(std::iter::once(Response::End(self.flash.len())))
                .collect(),
        }
    }
}

/// Faults injected by the server, for exercising client error paths.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FaultPlan {
    /// Never answer anything.
    pub silent: bool,
    /// Drop the connection after this many `REC` lines of a readout.
    pub truncate_data_after: Option<usize>,
    /// Pause before each reply line.
    pub line_delay: Option<Duration>,
}

pub type SharedDevice = Arc<Mutex<EmulatedDevice>>;

pub fn shared(device: EmulatedDevice) -> SharedDevice {
    Arc::new(Mutex::new(device))
}

pub(crate) fn lock(device: &SharedDevice) -> MutexGuard<'_, EmulatedDevice> {
    device.lock().unwrap_or_else(|p| p.into_inner())
}

const POLL: Duration = Duration::from_millis(50);

/// Runs the protocol over any line-oriented byte stream until EOF or
/// `stop` is raised. `read_line` must time out periodically so `stop` is
/// observed.
pub(crate) fn serve_stream<S: io::Read, W: Write>(
    device: &SharedDevice,
    reader: S,
    writer: &mut W,
    faults: FaultPlan,
    stop: &AtomicBool,
) -> io::Result<()> {
    let mut reader = BufReader::new(reader);
    let mut buf = String::new();
    while !stop.load(Ordering::SeqCst) {
        match reader.read_line(&mut buf) {
            Ok(0) => return Ok(()),
            Ok(_) => {}
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => continue,
            Err(e) => return Err(e),
        }
        if !buf.ends_with('\n') {
            continue;
        }
        let line = std::mem::take(&mut buf);
        if faults.silent {
            continue;
        }
        let replies = lock(device).handle_line(line.trim_end_matches(['\r', '\n']));
        let mut recs = 0usize;
        for reply in replies {
            if let Response::Rec(_) = reply {
                if faults.truncate_data_after == Some(recs) {
                    writer.flush()?;
                    return Ok(());
                }
                recs += 1;
            }
            if let Some(d) = faults.line_delay {
                std::thread::sleep(d);
            }
            writer.write_all(format!("{reply}\n").as_bytes())?;
        }
        writer.flush()?;
    }
    Ok(())
}

fn serve_connection(device: &SharedDevice, stream: TcpStream, faults: FaultPlan, stop: &AtomicBool) -> io::Result<()> {
    stream.set_read_timeout(Some(POLL))?;
    let _ = stream.set_nodelay(true);
    let mut writer = stream.try_clone()?;
    let result = serve_stream(device, stream.try_clone()?, &mut writer, faults, stop);
    let _ = stream.shutdown(Shutdown::Both);
    result
}

/// Accept loop: one connection at a time until `stop` is raised.
pub fn serve_tcp(
    device: &SharedDevice,
    listener: &TcpListener,
    faults: FaultPlan,
    stop: &AtomicBool,
) -> io::Result<()> {
    listener.set_nonblocking(true)?;
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                stream.set_nonblocking(false)?;
                log::debug!("emulator: connection from {peer}");
                if let Err(e) = serve_connection(device, stream, faults, stop) {
                    log::debug!("emulator: connection ended with {e}");
                }
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => std::thread::sleep(POLL),
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

/// A background TCP emulator. Stops when dropped.
pub struct EmulatorHandle {
    addr: SocketAddr,
    device: SharedDevice,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
    _announcement: Option<Announcement>,
}

impl EmulatorHandle {
    pub fn spawn(device: EmulatedDevice, bind: impl ToSocketAddrs) -> io::Result<Self> {
        Self::spawn_with(shared(device), bind, FaultPlan::default())
    }

    pub fn spawn_with(device: SharedDevice, bind: impl ToSocketAddrs, faults: FaultPlan) -> io::Result<Self> {
        let listener = TcpListener::bind(bind)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let thread = {
            let (device, stop) = (device.clone(), stop.clone());
            std::thread::Builder::new().name(format!("emulator-{}", addr.port())).spawn(move || {
                if let Err(e) = serve_tcp(&device, &listener, faults, &stop) {
                    log::warn!("emulator on {addr} stopped: {e}");
                }
            })?
        };
        Ok(EmulatorHandle { addr, device, stop, thread: Some(thread), _announcement: None })
    }

    /// Lists this endpoint in `registry` for as long as the handle lives.
    pub fn announce(mut self, registry: &PortRegistry, label: &str) -> io::Result<Self> {
        self._announcement = Some(registry.announce(self.addr, label)?);
        Ok(self)
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// `tcp://host:port` name accepted by the link.
    pub fn port_name(&self) -> String {
        format!("tcp://{}", self.addr)
    }

    pub fn device(&self) -> &SharedDevice {
        &self.device
    }

    pub fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for EmulatorHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}
