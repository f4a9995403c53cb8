use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::codec::TICKS_PER_SECOND;
use crate::zone::ZoneConfig;

use super::{Confidence, Episode, EpisodeKind};

/// Per-day puffing topography.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PTMetrics {
    pub date: NaiveDate,
    pub puff_count: usize,
    pub total_puff_duration_s: f64,
    /// Gap from each PUFF_OFF to the next PUFF_ON on the same date.
    pub inter_puff_intervals_s: Vec<f64>,
    pub touch_count: usize,
    pub total_touch_duration_s: f64,
}

/// Marks each puff `High` iff its closed interval meets any touch interval.
pub fn classify_confidence(puffs: &[Episode], touches: &[Episode]) -> Vec<Episode> {
    puffs
        .iter()
        .map(|p| {
            let mut p = *p;
            if p.is_puff() {
                let touched = touches.iter().any(|t| t.kind == EpisodeKind::Touch && p.overlaps(t));
                p.confidence = Some(if touched { Confidence::High } else { Confidence::Standard });
            }
            p
        })
        .collect()
}

/// Groups episodes by the calendar date of their start. Episodes running
/// past midnight stay whole under the start date.
pub fn bucket_by_day(episodes: &[Episode], zone: &ZoneConfig) -> BTreeMap<NaiveDate, Vec<Episode>> {
    let mut days: BTreeMap<NaiveDate, Vec<Episode>> = BTreeMap::new();
    for e in episodes {
        days.entry(e.date(zone)).or_default().push(*e);
    }
    for list in days.values_mut() {
        list.sort_by_key(|e| (e.start, e.kind));
    }
    days
}

fn ticks_to_s(ticks: i64) -> f64 {
    ticks as f64 / TICKS_PER_SECOND as f64
}

pub fn compute_pt_metrics(days: &BTreeMap<NaiveDate, Vec<Episode>>) -> Vec<PTMetrics> {
    days.iter()
        .map(|(date, episodes)| {
            let mut puffs: Vec<&Episode> = episodes.iter().filter(|e| e.is_puff()).collect();
            puffs.sort_by_key(|e| e.start);
            let touches: Vec<&Episode> = episodes.iter().filter(|e| !e.is_puff()).collect();
            // Sum whole ticks so totals do not accumulate float error.
            let puff_ticks: u64 = puffs.iter().map(|e| e.duration_ticks()).sum();
            let touch_ticks: u64 = touches.iter().map(|e| e.duration_ticks()).sum();
            PTMetrics {
                date: *date,
                puff_count: puffs.len(),
                total_puff_duration_s: ticks_to_s(puff_ticks as i64),
                inter_puff_intervals_s: puffs
                    .windows(2)
                    .map(|w| ticks_to_s(w[1].start.ticks_since(w[0].end)))
                    .collect(),
                touch_count: touches.len(),
                total_touch_duration_s: ticks_to_s(touch_ticks as i64),
            }
        })
        .collect()
}
