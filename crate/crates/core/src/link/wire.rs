//! Line protocol spoken between host and device. One LF-terminated ASCII
//! line per message; every command gets exactly one terminated reply
//! (`DATA` gets any number of `REC` lines followed by `END <count>`).
//!
//! ```text
//! host -> device   PING | SETT <16 hex> | GETT | ERAS | DATA
//! device -> host   PONG | OK | TIME <12 hex> | REC <16 hex> | END <n> | ERR <code>
//! ```

use std::fmt;

use thiserror::Error;

use crate::codec::DeviceInstant;

pub const ERR_UNKNOWN_COMMAND: u16 = 1;
pub const ERR_BAD_ARGUMENT: u16 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed protocol line {line:?}: {reason}")]
pub struct WireError {
    pub line: String,
    pub reason: &'static str,
}

fn wire_err(line: &str, reason: &'static str) -> WireError {
    WireError { line: line.to_string(), reason }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Ping,
    SetTime(DeviceInstant),
    GetTime,
    Erase,
    Data,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::Ping => f.write_str("PING"),
            Command::SetTime(i) => write!(f, "SETT 0000{:08X}{:04X}", i.posix_seconds, i.fraction_ticks),
            Command::GetTime => f.write_str("GETT"),
            Command::Erase => f.write_str("ERAS"),
            Command::Data => f.write_str("DATA"),
        }
    }
}

fn parse_hex(s: &str, digits: usize) -> Option<u64> {
    if s.len() != digits || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
        return None;
    }
    u64::from_str_radix(s, 16).ok()
}

impl Command {
    pub fn parse(line: &str) -> Result<Command, WireError> {
        let line = line.trim_end_matches(['\r', '\n']);
        let (head, arg) = match line.split_once(' ') {
            Some((h, a)) => (h, Some(a)),
            None => (line, None),
        };
        match (head, arg) {
            ("PING", None) => Ok(Command::Ping),
            ("GETT", None) => Ok(Command::GetTime),
            ("ERAS", None) => Ok(Command::Erase),
            ("DATA", None) => Ok(Command::Data),
            ("SETT", Some(arg)) => {
                let word = parse_hex(arg, 16).ok_or_else(|| wire_err(line, "SETT needs 16 hex digits"))?;
                if word >> 48 != 0 {
                    return Err(wire_err(line, "SETT padding must be zero"));
                }
                let instant = DeviceInstant::from_ticks(word).ok_or_else(|| wire_err(line, "instant out of range"))?;
                Ok(Command::SetTime(instant))
            }
            _ => Err(wire_err(line, "unknown command")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    Pong,
    Ok,
    Time(DeviceInstant),
    /// One stored record, exactly as transmitted.
    Rec(String),
    End(usize),
    Err(u16),
}

impl fmt::Display for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Response::Pong => f.write_str("PONG"),
            Response::Ok => f.write_str("OK"),
            Response::Time(i) => write!(f, "TIME {:08X}{:04X}", i.posix_seconds, i.fraction_ticks),
            Response::Rec(hex) => write!(f, "REC {hex}"),
            Response::End(n) => write!(f, "END {n}"),
            Response::Err(code) => write!(f, "ERR {code}"),
        }
    }
}

impl Response {
    pub fn parse(line: &str) -> Result<Response, WireError> {
        let line = line.trim_end_matches(['\r', '\n']);
        let (head, arg) = match line.split_once(' ') {
            Some((h, a)) => (h, Some(a)),
            None => (line, None),
        };
        match (head, arg) {
            ("PONG", None) => Ok(Response::Pong),
            ("OK", None) => Ok(Response::Ok),
            ("TIME", Some(a)) => {
                let ticks = parse_hex(a, 12).ok_or_else(|| wire_err(line, "TIME needs 12 hex digits"))?;
                Ok(Response::Time(DeviceInstant::from_ticks(ticks).expect("48-bit value")))
            }
            ("REC", Some(a)) => {
                parse_hex(a, 16).ok_or_else(|| wire_err(line, "REC needs 16 hex digits"))?;
                Ok(Response::Rec(a.to_string()))
            }
            ("END", Some(a)) => a.parse().map(Response::End).map_err(|_| wire_err(line, "END needs a decimal count")),
            ("ERR", Some(a)) => a.parse().map(Response::Err).map_err(|_| wire_err(line, "ERR needs a numeric code")),
            _ => Err(wire_err(line, "unknown reply")),
        }
    }
}
