//! Thermistor fusion and duration-based noise removal.

use serde::{Deserialize, Serialize};

use super::{Episode, PuffWithTemps};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Use thermistor readings to merge split puffs and rescue short ones.
    pub use_thermistor: bool,
    /// Puffs at or below this duration are treated as noise.
    pub min_puff_ms: f64,
    /// ADC counts; a short puff survives in thermistor mode only when its
    /// temperature swing is strictly larger.
    pub temp_delta_threshold: u16,
    /// Optional post-filter: drop puffs shorter than this many seconds.
    pub display_min_puff_s: Option<f64>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { use_thermistor: false, min_puff_ms: 200.0, temp_delta_threshold: 10, display_min_puff_s: None }
    }
}

impl FilterConfig {
    /// Thresholds must be finite and nonnegative.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.min_puff_ms.is_finite() && self.min_puff_ms >= 0.0) {
            return Err(format!("min_puff_ms must be a nonnegative number, got {}", self.min_puff_ms));
        }
        if let Some(s) = self.display_min_puff_s {
            if !(s.is_finite() && s >= 0.0) {
                return Err(format!("display_min_puff_s must be a nonnegative number, got {s}"));
            }
        }
        Ok(())
    }
}

/// The keep/remove decision for a single (possibly merged) puff.
///
/// Longer than `min_puff_ms`: keep. Otherwise, in thermistor mode with both
/// readings available, keep iff the swing exceeds the threshold. Every other
/// short puff is removed.
pub fn keep_puff(duration_ms: f64, temp_delta: Option<u16>, config: &FilterConfig) -> bool {
    if duration_ms > config.min_puff_ms {
        return true;
    }
    match (config.use_thermistor, temp_delta) {
        (true, Some(delta)) => delta > config.temp_delta_threshold,
        _ => false,
    }
}

/// Like [`fuse_and_filter`] but keeps the readings attached to each output.
///
/// In thermistor mode consecutive puffs N and N+1 are first merged into one
/// span whenever the start reading of N+1 is not above the end reading of
/// N; merges chain. Merged puffs carry the start reading of the first and
/// the end reading of the last. Non-puff entries pass through unchanged.
pub fn fuse_and_filter_with_temps(items: &[PuffWithTemps], config: &FilterConfig) -> Vec<PuffWithTemps> {
    let mut puffs: Vec<PuffWithTemps> = Vec::new();
    let mut others: Vec<PuffWithTemps> = Vec::new();
    for item in items {
        if !item.episode.is_puff() {
            others.push(*item);
            continue;
        }
        let merge_into_last = config.use_thermistor
            && puffs.last().is_some_and(|prev| match (item.temp_on, prev.temp_off) {
                (Some(next_on), Some(prev_off)) => next_on <= prev_off,
                _ => false,
            });
        match puffs.last_mut() {
            Some(prev) if merge_into_last => {
                prev.episode.end = prev.episode.end.max(item.episode.end);
                prev.temp_off = item.temp_off;
            }
            _ => puffs.push(*item),
        }
    }
    puffs.retain(|p| keep_puff(p.episode.duration_ms(), p.temp_delta(), config));
    puffs.extend(others);
    puffs.sort_by_key(|p| (p.episode.start, p.episode.kind));
    puffs
}

/// Noise filter over puffs in chronological order. Touch episodes in the
/// input are passed through.
pub fn fuse_and_filter(items: &[PuffWithTemps], config: &FilterConfig) -> Vec<Episode> {
    fuse_and_filter_with_temps(items, config).into_iter().map(|p| p.episode).collect()
}

pub(crate) fn passes_display_filter(episode: &Episode, min_seconds: f64) -> bool {
    !episode.is_puff() || episode.duration_s() >= min_seconds
}

/// Keeps puffs lasting at least `min_seconds`; touches always pass.
pub fn apply_display_filter(episodes: &[Episode], min_seconds: f64) -> Vec<Episode> {
    episodes.iter().filter(|e| passes_display_filter(e, min_seconds)).copied().collect()
}
