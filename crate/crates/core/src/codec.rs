//! Extended-POSIX record format.
//!
//! Every record the device stores is a 64-bit word, transmitted as 16 hex
//! characters. The leading 16 bits carry the event code. Puff and touch
//! records then hold 32 bits of Unix seconds and a 16-bit binary fraction
//! (ticks of 1/65536 s). Temperature records hold an ADC count in the low
//! 16 bits; the middle 32 bits are zero on the wire.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::zone::ZoneConfig;

/// Number of fraction ticks per second.
pub const TICKS_PER_SECOND: u64 = 65_536;

/// Highest accepted temperature count. The device documentation gives the
/// range as 0 to 1024 inclusive even though a 10-bit ADC tops out at 1023.
pub const MAX_TEMPERATURE: u16 = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("expected 16 hex characters, got {0}")]
    WrongLength(usize),
    #[error("non-hex character {ch:?} at position {position}")]
    NonHexCharacter { position: usize, ch: char },
    #[error("unknown event code {0:#06X}")]
    UnknownEventCode(u16),
    #[error("temperature reading {0} exceeds {MAX_TEMPERATURE}")]
    TemperatureOutOfRange(u16),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    PuffOn,
    PuffOff,
    TouchOn,
    TouchOff,
    TemperatureOn,
    TemperatureOff,
}

impl EventKind {
    pub const ALL: [EventKind; 6] = [
        EventKind::PuffOn,
        EventKind::PuffOff,
        EventKind::TouchOn,
        EventKind::TouchOff,
        EventKind::TemperatureOn,
        EventKind::TemperatureOff,
    ];

    pub fn code(self) -> u16 {
        match self {
            EventKind::PuffOn => 0x1000,
            EventKind::PuffOff => 0x2000,
            EventKind::TouchOn => 0x3000,
            EventKind::TouchOff => 0x4000,
            EventKind::TemperatureOn => 0x5000,
            EventKind::TemperatureOff => 0x6000,
        }
    }

    pub fn from_code(code: u16) -> Option<EventKind> {
        EventKind::ALL.into_iter().find(|k| k.code() == code)
    }

    pub fn label(self) -> &'static str {
        match self {
            EventKind::PuffOn => "PUFF_ON",
            EventKind::PuffOff => "PUFF_OFF",
            EventKind::TouchOn => "TOUCH_ON",
            EventKind::TouchOff => "TOUCH_OFF",
            EventKind::TemperatureOn => "TEMPERATURE_ON",
            EventKind::TemperatureOff => "TEMPERATURE_OFF",
        }
    }

    /// Puff and touch records carry an instant; temperature records a reading.
    pub fn is_timestamped(self) -> bool {
        !self.is_temperature()
    }

    pub fn is_temperature(self) -> bool {
        matches!(self, EventKind::TemperatureOn | EventKind::TemperatureOff)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Device clock reading: Unix seconds (UTC) plus a 16-bit binary fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct DeviceInstant {
    pub posix_seconds: u32,
    pub fraction_ticks: u16,
}

impl DeviceInstant {
    pub const EPOCH: DeviceInstant = DeviceInstant { posix_seconds: 0, fraction_ticks: 0 };

    pub fn new(posix_seconds: u32, fraction_ticks: u16) -> Self {
        DeviceInstant { posix_seconds, fraction_ticks }
    }

    /// Total ticks since the epoch. Always fits in 48 bits.
    pub fn as_ticks(self) -> u64 {
        (u64::from(self.posix_seconds) << 16) | u64::from(self.fraction_ticks)
    }

    /// Inverse of [`as_ticks`](Self::as_ticks); `None` past the 32-bit seconds range.
    pub fn from_ticks(ticks: u64) -> Option<Self> {
        let secs = u32::try_from(ticks >> 16).ok()?;
        Some(DeviceInstant::new(secs, (ticks & 0xFFFF) as u16))
    }

    /// Nearest instant to a real number of Unix seconds. Saturates at the
    /// ends of the representable range.
    pub fn from_unix_seconds(seconds: f64) -> Self {
        let ticks = (seconds * TICKS_PER_SECOND as f64).round();
        let max = ((u64::from(u32::MAX) << 16) | 0xFFFF) as f64;
        DeviceInstant::from_ticks(ticks.clamp(0.0, max) as u64).unwrap_or_default()
    }

    /// Seconds since the epoch. The 48-bit tick count is exact in an f64.
    pub fn to_unix_seconds(self) -> f64 {
        self.as_ticks() as f64 / TICKS_PER_SECOND as f64
    }

    /// Signed distance `self - earlier` in ticks.
    pub fn ticks_since(self, earlier: DeviceInstant) -> i64 {
        self.as_ticks() as i64 - earlier.as_ticks() as i64
    }

    /// Shift by a signed number of ticks, `None` when leaving the 32-bit range.
    pub fn checked_add_ticks(self, delta: i64) -> Option<Self> {
        let t = i64::try_from(self.as_ticks()).ok()?.checked_add(delta)?;
        DeviceInstant::from_ticks(u64::try_from(t).ok()?)
    }

    /// Rounds the fraction to whole centiseconds (nearest, ties away from
    /// zero). Returns `(seconds, centis)` with a carry into the seconds when
    /// the fraction rounds up to a full second.
    pub fn centiseconds(self) -> (i64, u8) {
        let total = i64::from(self.posix_seconds) * 100 + fraction_centis(self.fraction_ticks);
        (total.div_euclid(100), total.rem_euclid(100) as u8)
    }

    pub fn now() -> Self {
        let since = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).unwrap_or_default();
        DeviceInstant::from_unix_seconds(since.as_secs_f64())
    }
}

/// Fraction ticks to centiseconds, round half up (ticks are nonnegative so
/// this is ties-away-from-zero). May return 100.
fn fraction_centis(ticks: u16) -> i64 {
    (i64::from(ticks) * 100 + (TICKS_PER_SECOND as i64 / 2)) / TICKS_PER_SECOND as i64
}

/// Free function alias kept for callers that think in terms of conversion.
pub fn to_unix_seconds(instant: DeviceInstant) -> f64 {
    instant.to_unix_seconds()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TemperatureReading(u16);

impl TemperatureReading {
    pub fn new(raw_value: u16) -> Result<Self, CodecError> {
        if raw_value > MAX_TEMPERATURE {
            return Err(CodecError::TemperatureOutOfRange(raw_value));
        }
        Ok(TemperatureReading(raw_value))
    }

    pub fn raw_value(self) -> u16 {
        self.0
    }

    /// Absolute difference between two readings.
    pub fn delta(self, other: TemperatureReading) -> u16 {
        self.0.abs_diff(other.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Instant(DeviceInstant),
    Temperature(TemperatureReading),
}

/// A record after decoding. Construct through [`DecodedEvent::timed`] or
/// [`DecodedEvent::temperature`] so kind and payload always agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecodedEvent {
    kind: EventKind,
    payload: Payload,
}

impl DecodedEvent {
    /// Panics if `kind` is a temperature kind.
    pub fn timed(kind: EventKind, instant: DeviceInstant) -> Self {
        assert!(kind.is_timestamped(), "{kind} does not carry an instant");
        DecodedEvent { kind, payload: Payload::Instant(instant) }
    }

    /// Panics if `kind` is not a temperature kind.
    pub fn temperature(kind: EventKind, reading: TemperatureReading) -> Self {
        assert!(kind.is_temperature(), "{kind} does not carry a temperature");
        DecodedEvent { kind, payload: Payload::Temperature(reading) }
    }

    pub fn kind(&self) -> EventKind {
        self.kind
    }

    pub fn instant(&self) -> Option<DeviceInstant> {
        match self.payload {
            Payload::Instant(i) => Some(i),
            Payload::Temperature(_) => None,
        }
    }

    pub fn temperature_reading(&self) -> Option<TemperatureReading> {
        match self.payload {
            Payload::Temperature(t) => Some(t),
            Payload::Instant(_) => None,
        }
    }

    pub fn to_word(&self) -> u64 {
        let code = u64::from(self.kind.code()) << 48;
        match self.payload {
            Payload::Instant(i) => code | i.as_ticks(),
            Payload::Temperature(t) => code | u64::from(t.raw_value()),
        }
    }

    pub fn from_word(word: u64) -> Result<Self, CodecError> {
        let code = (word >> 48) as u16;
        let kind = EventKind::from_code(code).ok_or(CodecError::UnknownEventCode(code))?;
        if kind.is_temperature() {
            let reading = TemperatureReading::new((word & 0xFFFF) as u16)?;
            Ok(DecodedEvent::temperature(kind, reading))
        } else {
            let instant = DeviceInstant::new((word >> 16) as u32, (word & 0xFFFF) as u16);
            Ok(DecodedEvent::timed(kind, instant))
        }
    }
}

/// One stored device record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RawRecord {
    pub word: u64,
    pub source_line: Option<usize>,
}

impl RawRecord {
    pub fn new(word: u64) -> Self {
        RawRecord { word, source_line: None }
    }

    /// Parses exactly 16 hex digits (surrounding whitespace ignored).
    pub fn from_hex(text: &str) -> Result<Self, CodecError> {
        let text = text.trim();
        let len = text.chars().count();
        if len != 16 {
            return Err(CodecError::WrongLength(len));
        }
        let mut word = 0u64;
        for (position, ch) in text.chars().enumerate() {
            let digit = ch.to_digit(16).ok_or(CodecError::NonHexCharacter { position, ch })?;
            word = (word << 4) | u64::from(digit);
        }
        Ok(RawRecord::new(word))
    }

    pub fn to_hex(&self) -> String {
        format!("{:016X}", self.word)
    }

    pub fn decode(&self) -> Result<DecodedEvent, CodecError> {
        DecodedEvent::from_word(self.word)
    }
}

impl From<DecodedEvent> for RawRecord {
    fn from(event: DecodedEvent) -> Self {
        RawRecord::new(event.to_word())
    }
}

impl fmt::Display for RawRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016X}", self.word)
    }
}

pub fn parse_record(text: &str) -> Result<DecodedEvent, CodecError> {
    RawRecord::from_hex(text)?.decode()
}

pub fn encode_record(event: &DecodedEvent) -> String {
    format!("{:016X}", event.to_word())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    /// 1-based line number in the input.
    pub line: usize,
    pub error: CodecError,
}

/// Non-fatal observations made while decoding, such as a reading at the
/// questionable top of the ADC range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeWarning {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecodedStream {
    pub events: Vec<DecodedEvent>,
    pub rejects: Vec<Reject>,
    pub warnings: Vec<DecodeWarning>,
}

/// Decodes a record file line by line. Blank lines are skipped; bad lines
/// are collected in `rejects` and never abort the stream.
pub fn decode_stream<I, S>(lines: I) -> DecodedStream
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = DecodedStream::default();
    for (idx, line) in lines.into_iter().enumerate() {
        let line_no = idx + 1;
        let text = line.as_ref().trim();
        if text.is_empty() {
            continue;
        }
        match parse_record(text) {
            Ok(event) => {
                if event.temperature_reading().map(TemperatureReading::raw_value) == Some(MAX_TEMPERATURE) {
                    out.warnings.push(DecodeWarning {
                        line: line_no,
                        message: format!("temperature reading {MAX_TEMPERATURE} is above the 10-bit ADC range"),
                    });
                }
                out.events.push(event);
            }
            Err(error) => out.rejects.push(Reject { line: line_no, error }),
        }
    }
    out
}

/// Renders one line of the converted file, e.g. `PUFF_ON 2024-02-12 10:09:44.55`
/// or `TEMPERATURE_OFF 260`.
pub fn render_converted_line(event: &DecodedEvent, zone: &ZoneConfig) -> String {
    match event.payload {
        Payload::Instant(instant) => format!("{} {}", event.kind, zone.format_instant(instant)),
        Payload::Temperature(t) => format!("{} {}", event.kind, t.raw_value()),
    }
}
