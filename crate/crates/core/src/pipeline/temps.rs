use serde::Serialize;

use crate::codec::{DecodedEvent, EventKind, TemperatureReading};

use super::{Episode, Orphan, PairedEpisode};

/// An episode with the thermistor readings taken at its start and end.
/// Despite the name, touch episodes use the same carrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PuffWithTemps {
    pub episode: Episode,
    pub temp_on: Option<TemperatureReading>,
    pub temp_off: Option<TemperatureReading>,
}

impl PuffWithTemps {
    pub fn bare(episode: Episode) -> Self {
        PuffWithTemps { episode, temp_on: None, temp_off: None }
    }

    /// `|temp_on - temp_off|` when both readings are present.
    pub fn temp_delta(&self) -> Option<u16> {
        Some(self.temp_on?.delta(self.temp_off?))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemperatureAssociation {
    /// One entry per input episode, same order.
    pub episodes: Vec<PuffWithTemps>,
    /// Temperature records with no episode to attach to.
    pub unattached: Vec<Orphan>,
}

/// Attaches temperature records to the episode that closed most recently
/// before them. The window for an episode runs from its OFF record to the
/// next episode ON record in the stream. Within the window the first
/// TEMPERATURE_ON and then the first TEMPERATURE_OFF are taken; anything
/// else is reported as unattached.
pub fn associate_temperatures(events: &[DecodedEvent], episodes: &[PairedEpisode]) -> TemperatureAssociation {
    #[derive(Clone, Copy)]
    enum Mark {
        Opens,
        Closes(usize),
    }
    let mut marks: Vec<Option<Mark>> = vec![None; events.len()];
    for (slot, p) in episodes.iter().enumerate() {
        if let Some(m) = marks.get_mut(p.on_index) {
            *m = Some(Mark::Opens);
        }
        if let Some(m) = marks.get_mut(p.off_index) {
            *m = Some(Mark::Closes(slot));
        }
    }

    let mut out = TemperatureAssociation {
        episodes: episodes.iter().map(|p| PuffWithTemps::bare(p.episode)).collect(),
        unattached: Vec::new(),
    };
    let mut window: Option<usize> = None;
    for (index, event) in events.iter().enumerate() {
        match marks[index] {
            Some(Mark::Opens) => window = None,
            Some(Mark::Closes(slot)) => window = Some(slot),
            None => {}
        }
        let Some(reading) = event.temperature_reading() else { continue };
        let target = window.map(|slot| &mut out.episodes[slot]);
        let attached = match (event.kind(), target) {
            (EventKind::TemperatureOn, Some(t)) if t.temp_on.is_none() && t.temp_off.is_none() => {
                t.temp_on = Some(reading);
                true
            }
            (EventKind::TemperatureOff, Some(t)) if t.temp_on.is_some() && t.temp_off.is_none() => {
                t.temp_off = Some(reading);
                true
            }
            _ => false,
        };
        if !attached {
            out.unattached.push(Orphan { index, event: *event });
        }
    }
    out
}
