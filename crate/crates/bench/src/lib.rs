//! Shared fixtures for the criterion benchmarks in `benches/`.

use friends_core::emulator::{Scenario, DEFAULT_FLASH_CAPACITY};

/// Hex lines of a generated validation day, as pulled from a device.
pub fn validation_day_lines(seed: u64) -> Vec<String> {
    Scenario::validation_day(seed)
        .generate(DEFAULT_FLASH_CAPACITY)
        .expect("validation day fits in flash")
        .records
        .iter()
        .map(|r| r.to_hex())
        .collect()
}

/// `days` validation days back to back, one per calendar day.
pub fn multi_day_lines(days: u32) -> Vec<String> {
    (0..days)
        .flat_map(|d| {
            let mut s = Scenario::validation_day(u64::from(d));
            s.start.posix_seconds += d * 86_400;
            s.generate(DEFAULT_FLASH_CAPACITY).expect("fits").records
        })
        .map(|r| r.to_hex())
        .collect()
}
