//! Clock drift between reference (observed) and device-recorded event times.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{DeviceInstant, TICKS_PER_SECOND};

/// Granularity used by [`DriftReport::display`].
pub const DRIFT_DISPLAY_GRANULARITY_S: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DriftError {
    #[error("reference has {reference} pairs but device has {device}")]
    LengthMismatch { reference: usize, device: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub session: String,
    /// Reference minus device, in seconds: ON offset then OFF offset for
    /// each pair.
    pub offsets_s: Vec<f64>,
    /// Median of `offsets_s` (0 for an empty report).
    pub approx_time_diff_s: f64,
}

impl DriftReport {
    /// Median rounded to `granularity` seconds, half away from zero.
    pub fn rounded(&self, granularity: f64) -> f64 {
        (self.approx_time_diff_s / granularity).round() * granularity
    }

    /// Short form such as `4.0s`.
    pub fn display(&self) -> String {
        format!("{:.1}s", self.rounded(DRIFT_DISPLAY_GRANULARITY_S))
    }
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    }
}

pub fn compute_drift(
    session: &str,
    reference: &[(DeviceInstant, DeviceInstant)],
    device: &[(DeviceInstant, DeviceInstant)],
) -> Result<DriftReport, DriftError> {
    if reference.len() != device.len() {
        return Err(DriftError::LengthMismatch { reference: reference.len(), device: device.len() });
    }
    let diff = |a: DeviceInstant, b: DeviceInstant| a.ticks_since(b) as f64 / TICKS_PER_SECOND as f64;
    let offsets_s: Vec<f64> =
        reference.iter().zip(device).flat_map(|(r, d)| [diff(r.0, d.0), diff(r.1, d.1)]).collect();
    Ok(DriftReport { session: session.to_string(), approx_time_diff_s: median(&offsets_s), offsets_s })
}
