use std::fmt::Write as _;

use crate::zone::ZoneConfig;

use super::{Episode, PTMetrics};

pub const EPISODE_TABLE_HEADER: &str = "Event,Date,Range,Duration(ms)";

/// Comma-separated episode table, header first, one row per episode in the
/// given order, e.g. `PUFF,2024-02-12,10:09:44.55 to 10:09:45.67,1115.66`.
pub fn export_episode_table(episodes: &[Episode], zone: &ZoneConfig) -> String {
    let mut out = String::with_capacity(64 * (episodes.len() + 1));
    out.push_str(EPISODE_TABLE_HEADER);
    out.push('\n');
    for e in episodes {
        let _ = writeln!(
            out,
            "{},{},{},{:.2}",
            e.kind.label(),
            e.date(zone).format("%Y-%m-%d"),
            episode_range(e, zone),
            e.duration_ms(),
        );
    }
    out
}

/// `HH:MM:SS.cc to HH:MM:SS.cc` in `zone`.
pub fn episode_range(episode: &Episode, zone: &ZoneConfig) -> String {
    format!("{} to {}", zone.format_time_of_day(episode.start), zone.format_time_of_day(episode.end))
}

/// Metrics document: a JSON array with one object per date.
pub fn export_metrics_json(metrics: &[PTMetrics]) -> String {
    let mut s = serde_json::to_string_pretty(metrics).expect("metrics serialize");
    s.push('\n');
    s
}
