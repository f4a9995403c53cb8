//! Process exit codes and the mapping from errors to them.

use std::io;

use friends_core::LinkError;
use thiserror::Error;

pub const SUCCESS: u8 = 0;
pub const USAGE: u8 = 1;
pub const IO: u8 = 2;
pub const DEVICE: u8 = 3;

/// Input that was read fine but holds nothing usable.
#[derive(Debug, Error)]
pub enum InputError {
    #[error("{path}: none of the {lines} non-blank lines is a valid record")]
    NoValidRecords { path: String, lines: usize },
}

/// Bad combination of otherwise well-formed arguments.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Exit code for a failed command, decided by the first recognised cause.
pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<LinkError>() {
            return DEVICE;
        }
        if cause.is::<UsageError>() {
            return USAGE;
        }
        if cause.is::<io::Error>() || cause.is::<InputError>() {
            return IO;
        }
    }
    IO
}
