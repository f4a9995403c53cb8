use crate::codec::{DecodedEvent, EventKind};

use super::{Episode, EpisodeKind};

/// An event that could not be paired. `index` is its position in the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Orphan {
    pub index: usize,
    pub event: DecodedEvent,
}

/// An episode together with the stream positions of its ON and OFF records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairedEpisode {
    pub episode: Episode,
    pub on_index: usize,
    pub off_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Pairing {
    /// Sorted by start instant, then stream position.
    pub episodes: Vec<PairedEpisode>,
    /// In stream order.
    pub orphans: Vec<Orphan>,
}

impl Pairing {
    pub fn episodes(&self) -> impl Iterator<Item = &Episode> + '_ {
        self.episodes.iter().map(|p| &p.episode)
    }
}

/// Pairs each ON with an immediately following OFF of the same family.
/// Puffs and touches are handled independently. A repeated ON orphans the
/// earlier one; an OFF with nothing open is an orphan; an OFF stamped before
/// its ON orphans both. Temperature records are ignored here.
pub fn pair_episodes(events: &[DecodedEvent]) -> Pairing {
    let mut out = Pairing::default();
    let mut open_puff: Option<(usize, DecodedEvent)> = None;
    let mut open_touch: Option<(usize, DecodedEvent)> = None;

    for (index, event) in events.iter().copied().enumerate() {
        let (slot, kind, is_on) = match event.kind() {
            EventKind::PuffOn => (&mut open_puff, EpisodeKind::Puff, true),
            EventKind::PuffOff => (&mut open_puff, EpisodeKind::Puff, false),
            EventKind::TouchOn => (&mut open_touch, EpisodeKind::Touch, true),
            EventKind::TouchOff => (&mut open_touch, EpisodeKind::Touch, false),
            EventKind::TemperatureOn | EventKind::TemperatureOff => continue,
        };
        if is_on {
            if let Some((i, e)) = slot.replace((index, event)) {
                out.orphans.push(Orphan { index: i, event: e });
            }
            continue;
        }
        match slot.take() {
            None => out.orphans.push(Orphan { index, event }),
            Some((on_index, on)) => {
                let start = on.instant().expect("timed event");
                let end = event.instant().expect("timed event");
                if end < start {
                    out.orphans.push(Orphan { index: on_index, event: on });
                    out.orphans.push(Orphan { index, event });
                } else {
                    out.episodes.push(PairedEpisode {
                        episode: Episode::new(kind, start, end),
                        on_index,
                        off_index: index,
                    });
                }
            }
        }
    }
    for (index, event) in [open_puff, open_touch].into_iter().flatten() {
        out.orphans.push(Orphan { index, event });
    }
    out.orphans.sort_by_key(|o| o.index);
    out.episodes.sort_by_key(|p| (p.episode.start, p.on_index));
    out
}
