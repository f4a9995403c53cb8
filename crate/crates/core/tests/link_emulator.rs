use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::time::Duration;

use friends_core::emulator::{self, EmulatedDevice, EmulatorHandle, FaultPlan, Scenario};
use friends_core::link::{
    list_ports_in, DeviceLink, LinkConfig, LinkError, LinkState, PortAddress, PortRegistry, SharedLink,
};
use friends_core::{DeviceInstant, RawRecord};

const TABLE_ONE: [&str; 6] = [
    "100065CA42C88D44",
    "200065CA42C9AAE0",
    "50000000000001F9",
    "6000000000000104",
    "300065CA42CE04A0",
    "400065CA42D007CD",
];

fn table_one() -> Vec<RawRecord> {
    TABLE_ONE.iter().map(|s| RawRecord::from_hex(s).unwrap()).collect()
}

fn fast() -> LinkConfig {
    LinkConfig {
        handshake_timeout: Duration::from_millis(500),
        line_timeout: Duration::from_millis(1500),
        ..LinkConfig::default()
    }
}

fn loaded(records: &[RawRecord]) -> EmulatorHandle {
    let mut device = EmulatedDevice::default();
    device.load_flash(records).unwrap();
    EmulatorHandle::spawn(device, "127.0.0.1:0").unwrap()
}

fn connect(emu: &EmulatorHandle) -> DeviceLink {
    DeviceLink::open(&emu.port_name().parse().unwrap(), fast()).unwrap()
}

#[test]
fn full_round_trip_of_all_commands() {
    let emu = loaded(&table_one());
    let mut link = connect(&emu);
    assert_eq!(link.state(), LinkState::Connected);

    let lines = link.read_all().unwrap();
    assert_eq!(lines, TABLE_ONE);

    let target = DeviceInstant::new(0x65CA42C8, 0);
    link.set_time(target).unwrap();
    let read = link.read_time().unwrap();
    assert!(read.ticks_since(target).abs() < 65_536, "{read:?}");

    link.erase_flash().unwrap();
    assert_eq!(link.read_data(|_| {}).unwrap(), 0);
    // erasing empty flash still succeeds
    link.erase_flash().unwrap();
    assert_eq!(link.state(), LinkState::Connected);
}

#[test]
fn fresh_clock_is_reported() {
    let device = EmulatedDevice::default().with_clock(DeviceInstant::new(0x65CA42C8, 0));
    let emu = EmulatorHandle::spawn(device, "127.0.0.1:0").unwrap();
    let mut link = connect(&emu);
    let t = link.read_time().unwrap();
    assert_eq!(t.posix_seconds, 0x65CA42C8);
}

#[test]
fn epoch_time_round_trip() {
    let emu = loaded(&[]);
    let mut link = connect(&emu);
    link.set_time(DeviceInstant::EPOCH).unwrap();
    assert!(link.read_time().unwrap().to_unix_seconds() < 1.0);
}

#[test]
fn start_collection_is_erase_then_set() {
    let emu = loaded(&table_one());
    let mut link = connect(&emu);
    let now = DeviceInstant::new(1_800_000_000, 0x4000);
    link.start_collection(now).unwrap();
    assert!(link.read_all().unwrap().is_empty());
    assert!(link.read_time().unwrap().ticks_since(now).abs() < 65_536);

    // same observable state as the two separate commands
    let emu2 = loaded(&table_one());
    let mut link2 = connect(&emu2);
    link2.erase_flash().unwrap();
    link2.set_time(now).unwrap();
    assert_eq!(
        emulator::SharedDevice::clone(emu.device()).lock().unwrap().dump_flash(),
        emu2.device().lock().unwrap().dump_flash()
    );
    let (c1, c2) = (emu.device().lock().unwrap().clock(), emu2.device().lock().unwrap().clock());
    assert!(c1.ticks_since(c2).abs() < 65_536);
}

#[test]
fn read_data_is_idempotent_and_non_destructive() {
    let records = Scenario::validation_day(11).generate(65_536).unwrap().records;
    let emu = loaded(&records);
    let mut link = connect(&emu);
    let first = link.read_all().unwrap();
    let second = link.read_all().unwrap();
    assert_eq!(first.len(), records.len());
    assert_eq!(first, second);
    assert_eq!(emu.device().lock().unwrap().dump_flash(), records);
}

#[test]
fn double_connect_is_refused() {
    let emu = loaded(&[]);
    let mut link = connect(&emu);
    let port: PortAddress = emu.port_name().parse().unwrap();
    assert_eq!(link.connect(&port), Err(LinkError::AlreadyConnected));
    assert_eq!(link.state(), LinkState::Connected);
}

#[test]
fn dead_endpoint_gives_no_handshake() {
    let emu = loaded(&[]);
    let port: PortAddress = emu.port_name().parse().unwrap();
    drop(emu);
    let err = DeviceLink::open(&port, fast()).unwrap_err();
    assert_eq!(err.name(), "NoHandshake");
}

#[test]
fn silent_endpoint_gives_no_handshake() {
    let faults = FaultPlan { silent: true, ..FaultPlan::default() };
    let emu = EmulatorHandle::spawn_with(emulator::shared(EmulatedDevice::default()), "127.0.0.1:0", faults).unwrap();
    let err = DeviceLink::open(&emu.port_name().parse().unwrap(), fast()).unwrap_err();
    assert!(matches!(err, LinkError::NoHandshake(_)));
}

#[test]
fn truncated_stream_reports_partial_count() {
    let faults = FaultPlan { truncate_data_after: Some(3), ..FaultPlan::default() };
    let mut device = EmulatedDevice::default();
    device.load_flash(&table_one()).unwrap();
    let emu = EmulatorHandle::spawn_with(emulator::shared(device), "127.0.0.1:0", faults).unwrap();
    let mut link = connect(&emu);
    let mut got = Vec::new();
    let err = link.read_data(|l| got.push(l.to_string())).unwrap_err();
    assert_eq!(err, LinkError::AbortedByPeer { delivered: 3 });
    assert_eq!(got, &TABLE_ONE[..3]);
    assert_eq!(link.state(), LinkState::Disconnected);
}

#[test]
fn operations_refused_while_busy() {
    let faults = FaultPlan { line_delay: Some(Duration::from_millis(40)), ..FaultPlan::default() };
    let mut device = EmulatedDevice::default();
    device.load_flash(&table_one()).unwrap();
    let emu = EmulatorHandle::spawn_with(emulator::shared(device), "127.0.0.1:0", faults).unwrap();
    let shared = SharedLink::new(connect(&emu));

    let reader = {
        let shared = shared.clone();
        std::thread::spawn(move || shared.try_with(|l| l.read_all()))
    };
    std::thread::sleep(Duration::from_millis(60));
    assert_eq!(shared.state(), LinkState::Busy);
    assert_eq!(shared.try_with(|l| l.set_time(DeviceInstant::EPOCH)), Err(LinkError::Busy));
    assert_eq!(shared.try_with(|l| l.erase_flash()), Err(LinkError::Busy));
    assert_eq!(reader.join().unwrap().unwrap().len(), 6);
    assert_eq!(shared.state(), LinkState::Connected);
    // queued access waits instead of refusing
    assert!(shared.lock().read_time().is_ok());
}

#[test]
fn emulator_answers_raw_protocol() {
    let emu = loaded(&[]);
    let stream = TcpStream::connect(emu.addr()).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(2))).unwrap();
    let mut w = stream.try_clone().unwrap();
    let mut r = BufReader::new(stream);
    let mut ask = |cmd: &str| {
        w.write_all(format!("{cmd}\n").as_bytes()).unwrap();
        let mut line = String::new();
        r.read_line(&mut line).unwrap();
        line
    };
    assert_eq!(ask("PING"), "PONG\n");
    assert_eq!(ask("DATA"), "END 0\n");
    assert_eq!(ask("BOGUS"), "ERR 1\n");
    assert_eq!(ask("SETT 000065CA42C80000"), "OK\n");
    assert!(ask("GETT").starts_with("TIME 65CA42C"));
    assert_eq!(ask("ERAS"), "OK\n");
}

#[test]
fn malformed_time_reply_is_reported() {
    // A hand-rolled peer that answers PONG, then garbage.
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let peer = std::thread::spawn(move || {
        let (s, _) = listener.accept().unwrap();
        let mut w = s.try_clone().unwrap();
        let mut r = BufReader::new(s);
        let mut line = String::new();
        r.read_line(&mut line).unwrap();
        w.write_all(b"PONG\n").unwrap();
        line.clear();
        r.read_line(&mut line).unwrap();
        w.write_all(b"TIME nonsense\n").unwrap();
        line.clear();
        let _ = r.read_line(&mut line);
    });
    let mut link = DeviceLink::open(&PortAddress::Tcp(addr.to_string()), fast()).unwrap();
    assert!(matches!(link.read_time(), Err(LinkError::MalformedReply(_))));
    link.disconnect();
    peer.join().unwrap();
}

#[test]
fn ports_listing_tracks_emulators() {
    let dir = tempfile::tempdir().unwrap();
    let registry = PortRegistry::new(dir.path());
    let host_count = list_ports_in(&PortRegistry::new(dir.path().join("none"))).len();

    let one = loaded(&[]).announce(&registry, "emulator A").unwrap();
    let listed = list_ports_in(&registry);
    assert_eq!(listed.len(), host_count + 1);
    assert!(listed.iter().any(|p| p.system_name == one.port_name()));

    let two = loaded(&[]).announce(&registry, "emulator B").unwrap();
    assert_eq!(list_ports_in(&registry).len(), host_count + 2);

    // every listed emulator is connectable
    for p in registry.entries() {
        assert!(DeviceLink::open(&p.system_name.parse().unwrap(), fast()).is_ok());
    }
    drop(one);
    drop(two);
    assert_eq!(list_ports_in(&registry).len(), host_count);
}

#[cfg(unix)]
#[test]
fn serial_client_over_pseudo_terminal() {
    use friends_core::emulator::pty::PtyEmulator;
    let mut device = EmulatedDevice::default();
    device.load_flash(&table_one()).unwrap();
    let pty = PtyEmulator::spawn(emulator::shared(device), FaultPlan::default()).unwrap();
    let port = PortAddress::Serial(pty.path().to_string_lossy().into_owned());
    let mut link = DeviceLink::open(&port, fast()).unwrap();
    assert_eq!(link.read_all().unwrap(), TABLE_ONE);
    link.set_time(DeviceInstant::new(0x65CA42C8, 0)).unwrap();
    assert_eq!(link.read_time().unwrap().posix_seconds, 0x65CA42C8);
}
