//! The full batch pipeline over one downloaded log. The CLI and the JSON
//! service both go through [`analyze`] so their outputs cannot diverge.

use std::collections::BTreeMap;

use chrono::NaiveDate;

use crate::codec::DecodedEvent;
use crate::pipeline::filter::passes_display_filter;
use crate::pipeline::{
    associate_temperatures, bucket_by_day, classify_confidence, compute_pt_metrics, export_episode_table,
    fuse_and_filter_with_temps, pair_episodes, Episode, FilterConfig, Orphan, PTMetrics, PuffWithTemps,
};
use crate::plot::DayPlot;
use crate::zone::ZoneConfig;

#[derive(Debug, Clone)]
pub struct Analysis {
    pub zone: ZoneConfig,
    pub filter: FilterConfig,
    /// Puff episodes straight out of pairing, before any filtering.
    pub raw_puff_count: usize,
    pub orphans: Vec<Orphan>,
    pub unattached_temperatures: Vec<Orphan>,
    /// Surviving puffs with readings and confidence, chronological.
    pub puffs: Vec<PuffWithTemps>,
    pub touches: Vec<Episode>,
}

/// pair, attach readings, fuse/filter, display filter, classify confidence.
pub fn analyze(events: &[DecodedEvent], filter: &FilterConfig, zone: ZoneConfig) -> Analysis {
    let pairing = pair_episodes(events);
    let raw_puff_count = pairing.episodes().filter(|e| e.is_puff()).count();
    let association = associate_temperatures(events, &pairing.episodes);
    let fused = fuse_and_filter_with_temps(&association.episodes, filter);

    let min_s = filter.display_min_puff_s.unwrap_or(0.0);
    let (mut puffs, touches): (Vec<PuffWithTemps>, Vec<PuffWithTemps>) =
        fused.into_iter().filter(|p| passes_display_filter(&p.episode, min_s)).partition(|p| p.episode.is_puff());
    let touches: Vec<Episode> = touches.into_iter().map(|t| t.episode).collect();

    let classified = classify_confidence(&puffs.iter().map(|p| p.episode).collect::<Vec<_>>(), &touches);
    for (p, e) in puffs.iter_mut().zip(classified) {
        p.episode = e;
    }

    Analysis {
        zone,
        filter: *filter,
        raw_puff_count,
        orphans: pairing.orphans,
        unattached_temperatures: association.unattached,
        puffs,
        touches,
    }
}

impl Analysis {
    /// Puffs and touches together, ordered by start.
    pub fn episodes(&self) -> Vec<Episode> {
        let mut all: Vec<Episode> = self.puffs.iter().map(|p| p.episode).chain(self.touches.iter().copied()).collect();
        all.sort_by_key(|e| (e.start, e.kind));
        all
    }

    pub fn days(&self) -> BTreeMap<NaiveDate, Vec<Episode>> {
        bucket_by_day(&self.episodes(), &self.zone)
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.days().into_keys().collect()
    }

    pub fn metrics(&self) -> Vec<PTMetrics> {
        compute_pt_metrics(&self.days())
    }

    pub fn episode_table(&self) -> String {
        export_episode_table(&self.episodes(), &self.zone)
    }

    pub fn day_plot(&self, date: NaiveDate) -> DayPlot {
        DayPlot::build(date, &self.puffs, &self.touches, &self.zone)
    }

    pub fn day_plots(&self) -> Vec<DayPlot> {
        self.dates().into_iter().map(|d| self.day_plot(d)).collect()
    }
}
