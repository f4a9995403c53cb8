//! Port addressing and discovery.
//!
//! Host serial ports come from the OS. Emulators listening on TCP announce
//! themselves by dropping a small file into a registry directory, so they
//! show up in the same listing.

use std::fmt;
use std::fs;
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::Serialize;

/// Environment variable overriding the registry directory.
pub const REGISTRY_ENV: &str = "FRIENDS_PORT_REGISTRY";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PortAddress {
    /// Serial device path such as `/dev/ttyUSB0` or `COM3`.
    Serial(String),
    /// `host:port` of a TCP endpoint (emulator loopback).
    Tcp(String),
}

impl FromStr for PortAddress {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err("empty port name".into());
        }
        if let Some(rest) = s.strip_prefix("tcp://") {
            return Ok(PortAddress::Tcp(rest.to_string()));
        }
        if let Some(rest) = s.strip_prefix("serial://") {
            return Ok(PortAddress::Serial(rest.to_string()));
        }
        let looks_tcp = !s.starts_with('/')
            && s.rsplit_once(':').is_some_and(|(host, port)| !host.is_empty() && port.parse::<u16>().is_ok());
        Ok(if looks_tcp { PortAddress::Tcp(s.to_string()) } else { PortAddress::Serial(s.to_string()) })
    }
}

impl fmt::Display for PortAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PortAddress::Serial(p) => f.write_str(p),
            PortAddress::Tcp(a) => write!(f, "tcp://{a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PortDescriptor {
    pub system_name: String,
    pub label: String,
}

#[derive(Debug, Clone)]
pub struct PortRegistry {
    dir: PathBuf,
}

impl Default for PortRegistry {
    fn default() -> Self {
        let dir = std::env::var_os(REGISTRY_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| std::env::temp_dir().join("friends-ports"));
        PortRegistry { dir }
    }
}

/// Removes its registry entry when dropped.
#[derive(Debug)]
pub struct Announcement {
    path: PathBuf,
}

impl Drop for Announcement {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

impl PortRegistry {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        PortRegistry { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn announce(&self, addr: SocketAddr, label: &str) -> std::io::Result<Announcement> {
        fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(format!("{}-{}.port", std::process::id(), addr.port()));
        fs::write(&path, format!("tcp://{addr}\n{label}\n"))?;
        Ok(Announcement { path })
    }

    /// Live announced endpoints, sorted by name. Entries whose endpoint no
    /// longer accepts connections are pruned.
    pub fn entries(&self) -> Vec<PortDescriptor> {
        let Ok(dir) = fs::read_dir(&self.dir) else { return Vec::new() };
        let mut out = Vec::new();
        for entry in dir.flatten() {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("port") {
                continue;
            }
            let Ok(text) = fs::read_to_string(&path) else { continue };
            let mut lines = text.lines();
            let Some(name) = lines.next().map(str::trim) else { continue };
            let label = lines.next().unwrap_or("emulator").trim().to_string();
            if endpoint_alive(name) {
                out.push(PortDescriptor { system_name: name.to_string(), label });
            } else {
                let _ = fs::remove_file(&path);
            }
        }
        out.sort_by(|a, b| a.system_name.cmp(&b.system_name));
        out
    }
}

fn endpoint_alive(name: &str) -> bool {
    let Ok(PortAddress::Tcp(addr)) = name.parse::<PortAddress>() else { return false };
    let Some(sock) = addr.to_socket_addrs().ok().and_then(|mut a| a.next()) else { return false };
    TcpStream::connect_timeout(&sock, Duration::from_millis(250)).is_ok()
}

/// Host serial ports.
pub fn host_serial_ports() -> Vec<PortDescriptor> {
    let mut out: Vec<PortDescriptor> = serialport::available_ports()
        .unwrap_or_default()
        .into_iter()
        .map(|p| {
            let label = match p.port_type {
                serialport::SerialPortType::UsbPort(info) => info
                    .product
                    .or(info.manufacturer)
                    .unwrap_or_else(|| format!("USB {:04x}:{:04x}", info.vid, info.pid)),
                serialport::SerialPortType::PciPort => "PCI serial".into(),
                serialport::SerialPortType::BluetoothPort => "Bluetooth serial".into(),
                serialport::SerialPortType::Unknown => "serial".into(),
            };
            PortDescriptor { system_name: p.port_name, label }
        })
        .collect();
    out.sort_by(|a, b| a.system_name.cmp(&b.system_name));
    out
}

/// Host serial ports followed by announced emulator endpoints.
pub fn list_ports_in(registry: &PortRegistry) -> Vec<PortDescriptor> {
    let mut ports = host_serial_ports();
    ports.extend(registry.entries());
    ports
}

pub fn list_ports() -> Vec<PortDescriptor> {
    list_ports_in(&PortRegistry::default())
}
