//! One function per subcommand. Normal output goes to the supplied writer;
//! diagnostics (rejected lines, notices) go to stderr.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use friends_core::emulator::{self, EmulatedDevice, EmulatorHandle, Scenario};
use friends_core::link::{list_ports, PortRegistry};
use friends_core::pipeline::export_metrics_json;
use friends_core::{
    analyze, decode_stream, render_converted_line, Analysis, DecodedStream, DeviceInstant, DeviceLink, FilterConfig,
    LinkConfig, PortAddress, RawRecord, ZoneConfig,
};

use crate::args::{Cli, Command, DeviceOp};
use crate::exit::{InputError, UsageError};

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let zone = cli.zone;
    match cli.command {
        Command::Decode { input, out: target } => {
            cmd_decode(&input, target.as_deref(), &zone, out)?;
        }
        Command::Analyze { input, filter, out: dir } => {
            let report = cmd_analyze(&input, &filter.config(), zone, &dir)?;
            let a = &report.analysis;
            writeln!(
                out,
                "raw puffs: {}, kept puffs: {}, touches: {}",
                a.raw_puff_count,
                a.puffs.len(),
                a.touches.len()
            )?;
            writeln!(out, "wrote {}", report.episodes_path.display())?;
            writeln!(out, "wrote {}", report.metrics_path.display())?;
        }
        Command::Plot { input, filter, out: dir } => {
            let files = cmd_plot(&input, &filter.config(), zone, &dir)?;
            if files.is_empty() {
                eprintln!("notice: {} has no episodes to plot", input.display());
            }
            for f in files {
                writeln!(out, "wrote {}", f.display())?;
            }
        }
        Command::Device { port, op } => cmd_device(&op, port.as_deref(), &zone, out)?,
        Command::Serve { listen, data_dir, port, filter } => {
            let default_port = port.as_deref().map(parse_port).transpose()?;
            crate::api::serve_blocking(&listen, data_dir, default_port, filter.config(), zone)?;
        }
        Command::Emulate { scenario, seed, listen, pty, blank, no_announce } => {
            let records =
                if blank { Vec::new() } else { load_scenario(scenario.as_deref(), seed)?.generate_default()? };
            cmd_emulate(&records, &listen, pty, !no_announce, out)?;
        }
        Command::Scenario { from, seed, out: target, records } => {
            let scenario = load_scenario(from.as_deref(), seed)?;
            let text = serde_json::to_string_pretty(&scenario)? + "\n";
            match target {
                Some(p) => write_file(&p, text.as_bytes())?,
                None => out.write_all(text.as_bytes())?,
            }
            if let Some(p) = records {
                write_raw(&p, &scenario.generate_default()?)?;
            }
        }
    }
    Ok(())
}

trait GenerateDefault {
    fn generate_default(&self) -> Result<Vec<RawRecord>>;
}

impl GenerateDefault for Scenario {
    fn generate_default(&self) -> Result<Vec<RawRecord>> {
        Ok(self.generate(emulator::DEFAULT_FLASH_CAPACITY)?.records)
    }
}

fn load_scenario(path: Option<&Path>, seed: u64) -> Result<Scenario> {
    let Some(path) = path else { return Ok(Scenario::validation_day(seed)) };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let scenario: Scenario = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    scenario.validate()?;
    Ok(scenario)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Raw record file: one 16-digit hex word per line.
pub fn write_raw(path: &Path, records: &[RawRecord]) -> Result<()> {
    let text: String = records.iter().map(|r| r.to_hex() + "\n").collect();
    write_file(path, text.as_bytes())
}

/// Decodes a raw file, reporting rejects and warnings on stderr. A file in
/// which every non-blank line is invalid is an error; an empty file is not.
pub fn load_records(path: &Path) -> Result<DecodedStream> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let stream = decode_stream(text.lines());
    for r in &stream.rejects {
        eprintln!("warning: {}:{}: {}", path.display(), r.line, r.error);
    }
    for w in &stream.warnings {
        eprintln!("warning: {}:{}: {}", path.display(), w.line, w.message);
    }
    if stream.events.is_empty() && !stream.rejects.is_empty() {
        return Err(InputError::NoValidRecords { path: path.display().to_string(), lines: stream.rejects.len() }.into());
    }
    Ok(stream)
}

pub fn converted_text(stream: &DecodedStream, zone: &ZoneConfig) -> String {
    stream.events.iter().map(|e| render_converted_line(e, zone) + "\n").collect()
}

/// Returns the number of converted lines.
pub fn cmd_decode(input: &Path, target: Option<&Path>, zone: &ZoneConfig, out: &mut dyn Write) -> Result<usize> {
    let stream = load_records(input)?;
    let text = converted_text(&stream, zone);
    match target {
        Some(p) => write_file(p, text.as_bytes())?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(stream.events.len())
}

pub struct AnalyzeReport {
    pub analysis: Analysis,
    pub episodes_path: PathBuf,
    pub metrics_path: PathBuf,
}

fn stem(input: &Path) -> String {
    input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "log".into())
}

fn analyze_file(input: &Path, filter: &FilterConfig, zone: ZoneConfig) -> Result<Analysis> {
    filter.validate().map_err(UsageError)?;
    let stream = load_records(input)?;
    Ok(analyze(&stream.events, filter, zone))
}

pub fn cmd_analyze(input: &Path, filter: &FilterConfig, zone: ZoneConfig, dir: &Path) -> Result<AnalyzeReport> {
    let analysis = analyze_file(input, filter, zone)?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = stem(input);
    let episodes_path = dir.join(format!("{name}-episodes.csv"));
    let metrics_path = dir.join(format!("{name}-metrics.json"));
    write_file(&episodes_path, analysis.episode_table().as_bytes())?;
    write_file(&metrics_path, export_metrics_json(&analysis.metrics()).as_bytes())?;
    Ok(AnalyzeReport { analysis, episodes_path, metrics_path })
}

/// Writes `<date>.svg` per day with episodes; returns the paths in date order.
pub fn cmd_plot(input: &Path, filter: &FilterConfig, zone: ZoneConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let analysis = analyze_file(input, filter, zone)?;
    let plots = analysis.day_plots();
    if plots.is_empty() {
        return Ok(Vec::new());
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    plots
        .iter()
        .map(|p| {
            let path = dir.join(p.file_name());
            write_file(&path, p.render_svg().as_bytes())?;
            Ok(path)
        })
        .collect()
}

pub fn parse_port(name: &str) -> Result<PortAddress> {
    Ok(name.parse::<PortAddress>().map_err(UsageError)?)
}

pub fn open_link(port: Option<&str>) -> Result<DeviceLink> {
    let name = port.ok_or_else(|| UsageError("no device port given (use --port or FRIENDS_PORT)".into()))?;
    let addr = parse_port(name)?;
    DeviceLink::open(&addr, LinkConfig::default()).with_context(|| format!("connecting to {addr}"))
}

fn instant_or_now(at: Option<f64>) -> DeviceInstant {
    at.map(DeviceInstant::from_unix_seconds).unwrap_or_else(DeviceInstant::now)
}

pub fn cmd_device(op: &DeviceOp, port: Option<&str>, zone: &ZoneConfig, out: &mut dyn Write) -> Result<()> {
    if let DeviceOp::Ports = op {
        for p in list_ports() {
            writeln!(out, "{}\t{}", p.system_name, p.label)?;
        }
        return Ok(());
    }
    let mut link = open_link(port)?;
    match op {
        DeviceOp::Ports => unreachable!(),
        DeviceOp::SetTime { at } => {
            let t = instant_or_now(*at);
            link.set_time(t)?;
            writeln!(out, "device time set to {}", zone.format_instant(t))?;
        }
        DeviceOp::ReadTime => {
            let t = link.read_time()?;
            let drift = t.ticks_since(DeviceInstant::now()) as f64 / 65_536.0;
            writeln!(out, "{} ({drift:+.2}s from host)", zone.format_instant(t))?;
        }
        DeviceOp::Erase => {
            link.erase_flash()?;
            writeln!(out, "flash erased")?;
        }
        DeviceOp::Start { at } => {
            let t = instant_or_now(*at);
            link.start_collection(t)?;
            writeln!(out, "collection started at {}", zone.format_instant(t))?;
        }
        DeviceOp::Pull { out: path, convert } => {
            let count = pull_to_file(&mut link, path)?;
            writeln!(out, "pulled {count} records into {}", path.display())?;
            if let Some(c) = convert {
                let n = cmd_decode(path, Some(c), zone, out)?;
                writeln!(out, "converted {n} records into {}", c.display())?;
            }
        }
    }
    link.disconnect();
    Ok(())
}

/// Streams the flash readout straight to `path`, keeping whatever arrived
/// if the transfer breaks off.
pub fn pull_to_file(link: &mut DeviceLink, path: &Path) -> Result<usize> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    let mut write_err: Option<io::Error> = None;
    let result = link.read_data(|line| {
        if write_err.is_none() {
            if let Err(e) = writeln!(w, "{line}") {
                write_err = Some(e);
            }
        }
    });
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    if let Some(e) = write_err {
        return Err(e).with_context(|| format!("writing {}", path.display()));
    }
    result.context("reading device flash")
}

pub fn cmd_emulate(records: &[RawRecord], listen: &str, pty: bool, announce: bool, out: &mut dyn Write) -> Result<()> {
    let mut device = EmulatedDevice::default();
    device.load_flash(records)?;
    let runtime = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    if pty {
        #[cfg(unix)]
        {
            use friends_core::emulator::{pty::PtyEmulator, FaultPlan};
            let emu = PtyEmulator::spawn(emulator::shared(device), FaultPlan::default())?;
            writeln!(out, "{}", emu.path().display())?;
            out.flush()?;
            runtime.block_on(tokio::signal::ctrl_c())?;
            drop(emu);
        }
        #[cfg(not(unix))]
        return Err(UsageError("--pty needs a unix host".into()).into());
    } else {
        let mut emu = EmulatorHandle::spawn(device, listen).with_context(|| format!("binding {listen}"))?;
        if announce {
            emu = emu.announce(&PortRegistry::default(), &format!("emulator ({} records)", records.len()))?;
        }
        writeln!(out, "{}", emu.port_name())?;
        out.flush()?;
        runtime.block_on(tokio::signal::ctrl_c())?;
        drop(emu);
    }
    Ok(())
}
