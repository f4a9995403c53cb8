//! Toolkit for FRIENDS vaping monitors: decode the device's 64-bit event
//! records, turn them into puff and touch episodes, filter sensor noise,
//! summarise puffing topography per day, and drive (or emulate) the device
//! over its serial link.

pub mod analysis;
pub mod codec;
pub mod emulator;
pub mod link;
pub mod pipeline;
pub mod plot;
pub mod zone;

pub use analysis::{analyze, Analysis};
pub use codec::{
    decode_stream, encode_record, parse_record, render_converted_line, to_unix_seconds, CodecError, DecodedEvent,
    DecodedStream, DeviceInstant, EventKind, RawRecord, Reject, TemperatureReading,
};
pub use emulator::{EmulatedDevice, EmulatorError, EmulatorHandle, FaultPlan, Scenario};
pub use link::{DeviceLink, LinkConfig, LinkError, LinkState, PortAddress, PortDescriptor, SharedLink};
pub use pipeline::{Confidence, Episode, EpisodeKind, FilterConfig, PTMetrics, PuffWithTemps};
pub use plot::DayPlot;
pub use zone::ZoneConfig;
