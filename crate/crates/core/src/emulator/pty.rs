//! Serving the emulator on a pseudo-terminal, so serial-port clients can
//! open it like a real USB adapter.

use std::fs::File;
use std::io::{self, Read};
use std::os::fd::{FromRawFd, OwnedFd, RawFd};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use super::{serve_stream, FaultPlan, SharedDevice};

/// Reader over the pty master that times out every poll interval instead of
/// blocking forever, so the server can notice shutdown.
struct PollingReader {
    file: File,
}

impl Read for PollingReader {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let fd = std::os::fd::AsRawFd::as_raw_fd(&self.file);
        let mut pfd = libc::pollfd { fd, events: libc::POLLIN, revents: 0 };
        // SAFETY: pfd is a valid pollfd for the duration of the call.
        let n = unsafe { libc::poll(&mut pfd, 1, 50) };
        if n < 0 {
            return Err(io::Error::last_os_error());
        }
        if n == 0 {
            return Err(io::ErrorKind::WouldBlock.into());
        }
        match self.file.read(buf) {
            // EIO on a master means no slave is open right now; keep waiting.
            Err(e) if e.raw_os_error() == Some(libc::EIO) => {
                std::thread::sleep(std::time::Duration::from_millis(50));
                Err(io::ErrorKind::WouldBlock.into())
            }
            other => other,
        }
    }
}

fn open_pty() -> io::Result<(OwnedFd, OwnedFd, PathBuf)> {
    let mut master: RawFd = -1;
    let mut slave: RawFd = -1;
    // SAFETY: openpty writes two fds; name/termios/winsize may be null.
    let rc =
        unsafe { libc::openpty(&mut master, &mut slave, std::ptr::null_mut(), std::ptr::null(), std::ptr::null()) };
    if rc != 0 {
        return Err(io::Error::last_os_error());
    }
    // SAFETY: both fds were just returned by openpty and are owned here.
    let (master, slave) = unsafe { (OwnedFd::from_raw_fd(master), OwnedFd::from_raw_fd(slave)) };
    let slave_fd = std::os::fd::AsRawFd::as_raw_fd(&slave);
    // SAFETY: termios is plain data; tcgetattr fills it for a valid fd.
    unsafe {
        let mut t: libc::termios = std::mem::zeroed();
        if libc::tcgetattr(slave_fd, &mut t) == 0 {
            libc::cfmakeraw(&mut t);
            libc::tcsetattr(slave_fd, libc::TCSANOW, &t);
        }
    }
    let mut name = [0 as libc::c_char; 256];
    // SAFETY: buffer is large enough and NUL-terminated on success.
    let rc = unsafe { libc::ttyname_r(slave_fd, name.as_mut_ptr(), name.len()) };
    if rc != 0 {
        return Err(io::Error::from_raw_os_error(rc));
    }
    // SAFETY: ttyname_r wrote a NUL-terminated string.
    let path = unsafe { std::ffi::CStr::from_ptr(name.as_ptr()) }.to_string_lossy().into_owned();
    Ok((master, slave, PathBuf::from(path)))
}

/// Emulator attached to a pseudo-terminal. Stops when dropped.
pub struct PtyEmulator {
    path: PathBuf,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
    // Keeping the slave open stops the master from reporting EIO between
    // client sessions.
    _slave: OwnedFd,
}

impl PtyEmulator {
    pub fn spawn(device: SharedDevice, faults: FaultPlan) -> io::Result<Self> {
        let (master, slave, path) = open_pty()?;
        let stop = Arc::new(AtomicBool::new(false));
        let reader_file = File::from(master.try_clone()?);
        let mut writer = File::from(master);
        let thread = {
            let stop = stop.clone();
            std::thread::Builder::new().name("emulator-pty".into()).spawn(move || {
                let reader = PollingReader { file: reader_file };
                if let Err(e) = serve_stream(&device, reader, &mut writer, faults, &stop) {
                    log::warn!("pty emulator stopped: {e}");
                }
            })?
        };
        Ok(PtyEmulator { path, stop, thread: Some(thread), _slave: slave })
    }

    /// Device path clients should open.
    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    /// Blocks until the serving thread ends.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn is_stopped(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }
}

impl Drop for PtyEmulator {
    fn drop(&mut self) {
        self.shutdown();
    }
}
