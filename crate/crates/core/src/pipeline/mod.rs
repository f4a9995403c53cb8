//! From decoded events to episodes and puffing-topography summaries.

pub mod drift;
pub mod export;
pub mod filter;
pub mod metrics;
pub mod pairing;
pub mod temps;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::codec::{DeviceInstant, TICKS_PER_SECOND};
use crate::zone::ZoneConfig;

pub use drift::{compute_drift, DriftError, DriftReport};
pub use export::{episode_range, export_episode_table, export_metrics_json, EPISODE_TABLE_HEADER};
pub use filter::{apply_display_filter, fuse_and_filter, fuse_and_filter_with_temps, keep_puff, FilterConfig};
pub use metrics::{bucket_by_day, classify_confidence, compute_pt_metrics, PTMetrics};
pub use pairing::{pair_episodes, Orphan, PairedEpisode, Pairing};
pub use temps::{associate_temperatures, PuffWithTemps, TemperatureAssociation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EpisodeKind {
    Puff,
    Touch,
}

impl EpisodeKind {
    pub fn label(self) -> &'static str {
        match self {
            EpisodeKind::Puff => "PUFF",
            EpisodeKind::Touch => "TOUCH",
        }
    }
}

impl std::str::FromStr for EpisodeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PUFF" => Ok(EpisodeKind::Puff),
            "TOUCH" => Ok(EpisodeKind::Touch),
            other => Err(format!("unknown episode kind {other:?}")),
        }
    }
}

/// Puffs corroborated by a touch are `High`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Confidence {
    High,
    Standard,
}

/// A paired ON/OFF interval. `end >= start` always holds; the pairer sends
/// reversed pairs to the orphan list instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub kind: EpisodeKind,
    pub start: DeviceInstant,
    pub end: DeviceInstant,
    /// Always `Some` for puffs, `None` for touches.
    pub confidence: Option<Confidence>,
}

impl Episode {
    pub fn new(kind: EpisodeKind, start: DeviceInstant, end: DeviceInstant) -> Self {
        debug_assert!(end >= start);
        let confidence = match kind {
            EpisodeKind::Puff => Some(Confidence::Standard),
            EpisodeKind::Touch => None,
        };
        Episode { kind, start, end, confidence }
    }

    pub fn puff(start: DeviceInstant, end: DeviceInstant) -> Self {
        Episode::new(EpisodeKind::Puff, start, end)
    }

    pub fn touch(start: DeviceInstant, end: DeviceInstant) -> Self {
        Episode::new(EpisodeKind::Touch, start, end)
    }

    pub fn is_puff(&self) -> bool {
        self.kind == EpisodeKind::Puff
    }

    pub fn duration_ticks(&self) -> u64 {
        self.end.as_ticks().saturating_sub(self.start.as_ticks())
    }

    pub fn duration_ms(&self) -> f64 {
        self.duration_ticks() as f64 * 1000.0 / TICKS_PER_SECOND as f64
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_ticks() as f64 / TICKS_PER_SECOND as f64
    }

    /// Calendar date of the start instant.
    pub fn date(&self, zone: &ZoneConfig) -> NaiveDate {
        zone.date_of(self.start)
    }

    /// Closed-interval overlap.
    pub fn overlaps(&self, other: &Episode) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}
