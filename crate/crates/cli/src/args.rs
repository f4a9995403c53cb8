//! Command-line grammar.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use friends_core::{FilterConfig, ZoneConfig};

#[derive(Debug, Parser)]
#[command(name = "friends", version, about = "Decode, analyze and plot FRIENDS monitor logs, and drive the device")]
pub struct Cli {
    /// Time zone for rendering: UTC, local, an offset like -06:00, or an IANA name.
    #[arg(long, global = true, default_value = "local", allow_hyphen_values = true)]
    pub zone: ZoneConfig,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a raw record file to human-readable lines.
    Decode {
        input: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pair, filter and summarise a raw record file.
    Analyze {
        input: PathBuf,
        #[command(flatten)]
        filter: FilterArgs,
        /// Directory receiving `<stem>-episodes.csv` and `<stem>-metrics.json`.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Write one SVG timeline per day.
    Plot {
        input: PathBuf,
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Device operations over a serial port or emulator endpoint.
    Device {
        /// Serial path, or tcp://host:port for an emulator.
        #[arg(long, env = "FRIENDS_PORT", global = true)]
        port: Option<String>,
        #[command(subcommand)]
        op: DeviceOp,
    },
    /// Run the JSON service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
        /// Raw record files (*.txt, *.raw, *.log) in this directory become
        /// sessions; pulls are saved here too.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Default device port for device endpoints.
        #[arg(long)]
        port: Option<String>,
        #[command(flatten)]
        filter: FilterArgs,
    },
    /// Run a device emulator.
    Emulate {
        /// Scenario file (JSON). Defaults to the validation day.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Seed for the validation-day scenario.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// TCP address to listen on.
        #[arg(long, default_value = "127.0.0.1:0", conflicts_with = "pty")]
        listen: String,
        /// Serve on a pseudo-terminal instead of TCP.
        #[arg(long)]
        pty: bool,
        /// Start with empty flash.
        #[arg(long, conflicts_with = "scenario")]
        blank: bool,
        /// Keep the endpoint out of the port listing.
        #[arg(long)]
        no_announce: bool,
    },
    /// Print a scenario file, optionally rendering its flash image.
    Scenario {
        /// Start from this scenario instead of the validation day.
        #[arg(long)]
        from: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Scenario output; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the generated raw record file here.
        #[arg(long)]
        records: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum DeviceOp {
    /// List serial ports and announced emulators.
    Ports,
    /// Set the device clock (host time by default).
    SetTime {
        #[arg(long, value_parser = parse_instant)]
        at: Option<f64>,
    },
    /// Print the device clock.
    ReadTime,
    /// Erase all stored records.
    Erase,
    /// Erase flash and set the clock.
    Start {
        #[arg(long, value_parser = parse_instant)]
        at: Option<f64>,
    },
    /// Read all records into a raw file.
    Pull {
        #[arg(long)]
        out: PathBuf,
        /// Also write the converted file here.
        #[arg(long)]
        convert: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct FilterArgs {
    /// Puffs this short or shorter are noise.
    #[arg(long, default_value_t = 200.0, value_parser = non_negative)]
    pub min_puff_ms: f64,
    /// Temperature swing (ADC counts) a short puff needs in thermistor mode.
    #[arg(long, default_value_t = 10)]
    pub temp_delta: u16,
    /// Drop puffs shorter than this many seconds before summarising.
    #[arg(long, value_parser = non_negative)]
    pub display_min_s: Option<f64>,
    /// Use thermistor readings to merge and rescue puffs.
    #[arg(long)]
    pub use_thermistor: bool,
}

impl FilterArgs {
    pub fn config(&self) -> FilterConfig {
        FilterConfig {
            use_thermistor: self.use_thermistor,
            min_puff_ms: self.min_puff_ms,
            temp_delta_threshold: self.temp_delta,
            display_min_puff_s: self.display_min_s,
        }
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(format!("expected a nonnegative number, got {s:?}")),
    }
}

/// Unix seconds, or an RFC 3339 timestamp.
pub fn parse_instant(s: &str) -> Result<f64, String> {
    if let Ok(v) = s.parse::<f64>() {
        if v.is_finite() && (0.0..4_294_967_296.0).contains(&v) {
            return Ok(v);
        }
        return Err(format!("{s} is outside the device clock range"));
    }
    let t = chrono::DateTime::parse_from_rfc3339(s).map_err(|e| format!("{s:?}: {e}"))?;
    let secs = t.timestamp() as f64 + f64::from(t.timestamp_subsec_nanos()) / 1e9;
    if (0.0..4_294_967_296.0).contains(&secs) {
        Ok(secs)
    } else {
        Err(format!("{s} is outside the device clock range"))
    }
}
