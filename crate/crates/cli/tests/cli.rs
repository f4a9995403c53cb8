use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use friends_core::emulator::{EmulatedDevice, EmulatorHandle, Scenario};
use friends_core::{DeviceInstant, RawRecord};

const TABLE_ONE_RAW: &str =
    "100065CA42C88D44\n200065CA42C9AAE0\n50000000000001F9\n6000000000000104\n300065CA42CE04A0\n400065CA42D007CD\n";

const TABLE_ONE_CONVERTED: &str = "\
PUFF_ON 2024-02-12 10:09:44.55
PUFF_OFF 2024-02-12 10:09:45.67
TEMPERATURE_ON 505
TEMPERATURE_OFF 260
TOUCH_ON 2024-02-12 10:09:50.02
TOUCH_OFF 2024-02-12 10:09:52.03
";

fn friends(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_friends"))
        .args(args)
        .current_dir(cwd)
        .env("FRIENDS_PORT_REGISTRY", cwd.join("registry"))
        .env_remove("FRIENDS_PORT")
        .output()
        .expect("run friends")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn validation_day_file(dir: &Path) -> Vec<RawRecord> {
    let records = Scenario::validation_day(7).generate(65_536).unwrap().records;
    let text: String = records.iter().map(|r| r.to_hex() + "\n").collect();
    std::fs::write(dir.join("day.txt"), text).unwrap();
    records
}

#[test]
fn decode_reproduces_converted_table() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t1.txt"), TABLE_ONE_RAW).unwrap();
    let o = friends(&["--zone", "-06:00", "decode", "t1.txt"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), TABLE_ONE_CONVERTED);

    let o = friends(&["--zone=UTC-06:00", "decode", "t1.txt", "--out", "conv.txt"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(dir.path().join("conv.txt")).unwrap(), TABLE_ONE_CONVERTED);
}

#[test]
fn decode_edge_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.txt"), "").unwrap();
    let o = friends(&["decode", "empty.txt"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());

    let one_bad = TABLE_ONE_RAW.replace("50000000000001F9", "5000XYZ0000001F9");
    std::fs::write(dir.path().join("one_bad.txt"), one_bad).unwrap();
    let o = friends(&["--zone", "-06:00", "decode", "one_bad.txt"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 5);
    assert!(stderr(&o).contains("one_bad.txt:3"), "{}", stderr(&o));

    std::fs::write(dir.path().join("junk.txt"), "hello\nworld\n").unwrap();
    assert_eq!(friends(&["decode", "junk.txt"], dir.path()).status.code(), Some(2));
    assert_eq!(friends(&["decode", "missing.txt"], dir.path()).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(friends(&["nonsense"], dir.path()).status.code(), Some(1));
    assert_eq!(friends(&["decode"], dir.path()).status.code(), Some(1));
    assert_eq!(friends(&["--zone", "Mars/Olympus", "decode", "x"], dir.path()).status.code(), Some(1));
    assert_eq!(friends(&["device", "read-time"], dir.path()).status.code(), Some(1));
    assert_eq!(friends(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn analyze_validation_day() {
    let dir = tempfile::tempdir().unwrap();
    validation_day_file(dir.path());
    let o = friends(&["--zone", "-06:00", "analyze", "day.txt", "--display-min-s", "1.0", "--out", "a"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a/day-metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics.as_array().unwrap().len(), 1);
    assert_eq!(metrics[0]["puff_count"], 72);
    assert_eq!(metrics[0]["date"], "2024-02-12");
    let table = std::fs::read_to_string(dir.path().join("a/day-episodes.csv")).unwrap();
    assert_eq!(table.lines().filter(|l| l.starts_with("PUFF,")).count(), 72);

    // both thresholds off: every paired puff survives
    let o = friends(&["--zone", "-06:00", "analyze", "day.txt", "--min-puff-ms", "0", "--out", "b"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("b/day-metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics[0]["puff_count"], 89);
}

#[test]
fn analyze_is_deterministic_and_handles_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    validation_day_file(dir.path());
    for out in ["r1", "r2"] {
        let o = friends(&["--zone", "UTC", "analyze", "day.txt", "--use-thermistor", "--out", out], dir.path());
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["day-episodes.csv", "day-metrics.json"] {
        let a = std::fs::read(dir.path().join("r1").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("r2").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }

    std::fs::write(dir.path().join("empty.txt"), "").unwrap();
    let o = friends(&["analyze", "empty.txt", "--out", "e"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        std::fs::read_to_string(dir.path().join("e/empty-episodes.csv")).unwrap(),
        "Event,Date,Range,Duration(ms)\n"
    );
    assert_eq!(std::fs::read_to_string(dir.path().join("e/empty-metrics.json")).unwrap().trim(), "[]");
}

#[test]
fn plot_writes_one_file_per_day() {
    let dir = tempfile::tempdir().unwrap();
    validation_day_file(dir.path());
    let o = friends(&["--zone", "-06:00", "plot", "day.txt", "--display-min-s", "1", "--out", "svg"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let files: Vec<_> = std::fs::read_dir(dir.path().join("svg")).unwrap().flatten().map(|e| e.file_name()).collect();
    assert_eq!(files, vec![std::ffi::OsString::from("2024-02-12.svg")]);
    let svg = std::fs::read_to_string(dir.path().join("svg/2024-02-12.svg")).unwrap();
    assert_eq!(svg.matches("class=\"puff ").count(), 72);

    std::fs::write(dir.path().join("empty.txt"), "").unwrap();
    let o = friends(&["plot", "empty.txt", "--out", "none"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("notice"));
    assert!(!dir.path().join("none").exists());
}

#[test]
fn device_commands_against_emulator() {
    let dir = tempfile::tempdir().unwrap();
    let records = Scenario::validation_day(3).generate(65_536).unwrap().records;
    let mut device = EmulatedDevice::default();
    device.load_flash(&records).unwrap();
    let emu = EmulatorHandle::spawn(device, "127.0.0.1:0").unwrap();
    let port = emu.port_name();

    let o = friends(&["device", "--port", &port, "pull", "--out", "raw.txt", "--convert", "conv.txt"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let expected: String = records.iter().map(|r| r.to_hex() + "\n").collect();
    assert_eq!(std::fs::read_to_string(dir.path().join("raw.txt")).unwrap(), expected);
    assert_eq!(std::fs::read_to_string(dir.path().join("conv.txt")).unwrap().lines().count(), records.len());

    let o = friends(&["device", "--port", &port, "set-time", "--at", "1707754184"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let clock = emu.device().lock().unwrap().clock();
    assert!(clock.ticks_since(DeviceInstant::new(1_707_754_184, 0)).abs() < 65_536);
    let o = friends(&["--zone", "UTC", "device", "--port", &port, "read-time"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("2024-02-12 16:09:4"), "{}", stdout(&o));

    let o = friends(&["device", "--port", &port, "start"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(emu.device().lock().unwrap().dump_flash().is_empty());
    let host = DeviceInstant::now();
    assert!(emu.device().lock().unwrap().clock().ticks_since(host).abs() < 65_536);

    let o = friends(&["device", "--port", &port, "erase"], dir.path());
    assert_eq!(o.status.code(), Some(0));

    drop(emu);
    let o = friends(&["device", "--port", &port, "read-time"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("no handshake"), "{}", stderr(&o));
}

#[test]
fn ports_listing_with_and_without_emulators() {
    let dir = tempfile::tempdir().unwrap();
    let o = friends(&["device", "ports"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(!stdout(&o).contains("tcp://"));

    let mut child = Command::new(env!("CARGO_BIN_EXE_friends"))
        .args(["emulate", "--seed", "5"])
        .env("FRIENDS_PORT_REGISTRY", dir.path().join("registry"))
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let port = line.trim().to_string();
    assert!(port.starts_with("tcp://127.0.0.1:"), "{port}");

    let o = friends(&["device", "ports"], dir.path());
    assert!(stdout(&o).contains(&port), "{}", stdout(&o));
    let o = friends(&["device", "--port", &port, "pull", "--out", "raw.txt"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let expected = Scenario::validation_day(5).generate(65_536).unwrap().records.len();
    assert_eq!(std::fs::read_to_string(dir.path().join("raw.txt")).unwrap().lines().count(), expected);

    child.kill().unwrap();
    child.wait().unwrap();
    // the stale announcement is pruned once the endpoint is gone
    let o = friends(&["device", "ports"], dir.path());
    assert!(!stdout(&o).contains(&port));
}

#[test]
fn scenario_file_round_trips_into_emulator_records() {
    let dir = tempfile::tempdir().unwrap();
    let o = friends(&["scenario", "--seed", "9", "--out", "s.json", "--records", "a.txt"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = friends(&["scenario", "--from", "s.json", "--records", "b.txt"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read(dir.path().join("a.txt")).unwrap(), std::fs::read(dir.path().join("b.txt")).unwrap());

    std::fs::write(dir.path().join("broken.json"), "{\"start\": 3}").unwrap();
    assert_eq!(friends(&["scenario", "--from", "broken.json"], dir.path()).status.code(), Some(2));
}
