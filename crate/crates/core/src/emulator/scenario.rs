//! Scripted behavioural sessions rendered into a flash image.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{
    DecodedEvent, DeviceInstant, EventKind, RawRecord, TemperatureReading, MAX_TEMPERATURE, TICKS_PER_SECOND,
};

use super::{EmulatorError, DEFAULT_FLASH_CAPACITY};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PuffSpec {
    pub duration_s: f64,
    /// Pause between this puff's end and the next puff's start.
    pub gap_after_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TouchBehavior {
    /// Probability that a puff is bracketed by a touch.
    pub accompany_fraction: f64,
    /// Touch starts this long before the puff.
    pub lead_s: f64,
    /// Touch ends this long after the puff.
    pub lag_s: f64,
}

impl Default for TouchBehavior {
    fn default() -> Self {
        TouchBehavior { accompany_fraction: 0.9, lead_s: 0.5, lag_s: 0.5 }
    }
}

/// Thermistor readings emitted after each true puff: `baseline + delta` at
/// the start, `baseline` at the end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemperatureModel {
    pub baseline: u16,
    pub delta: u16,
}

impl Default for TemperatureModel {
    fn default() -> Self {
        TemperatureModel { baseline: 260, delta: 245 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub label: String,
    /// Seconds after the scenario start.
    pub start_offset_s: f64,
    pub puffs: Vec<PuffSpec>,
    #[serde(default)]
    pub touch: TouchBehavior,
    #[serde(default)]
    pub temperature: TemperatureModel,
}

impl Session {
    /// Offset of the last puff's end, relative to the session start.
    fn active_span_s(&self) -> f64 {
        let n = self.puffs.len();
        self.puffs.iter().enumerate().map(|(i, p)| p.duration_s + if i + 1 < n { p.gap_after_s } else { 0.0 }).sum()
    }

    fn window_s(&self) -> (f64, f64) {
        let lead = if self.touch.accompany_fraction > 0.0 { self.touch.lead_s } else { 0.0 };
        let lag = if self.touch.accompany_fraction > 0.0 { self.touch.lag_s } else { 0.0 };
        (self.start_offset_s - lead, self.start_offset_s + self.active_span_s() + lag)
    }
}

/// Spurious short puffs, placed uniformly within session spans in gaps
/// between real activity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub false_positive_count: usize,
    /// Half-open range `[lo, hi)` of false-positive durations, seconds.
    pub duration_range_s: (f64, f64),
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { false_positive_count: 0, duration_range_s: (0.1, 0.9) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub start: DeviceInstant,
    pub sessions: Vec<Session>,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub seed: u64,
}

/// What the generator actually emitted, for checking analysis output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub puffs: Vec<(DeviceInstant, DeviceInstant)>,
    pub false_positives: Vec<(DeviceInstant, DeviceInstant)>,
    pub touches: Vec<(DeviceInstant, DeviceInstant)>,
}

impl GroundTruth {
    pub fn puff_count(&self) -> usize {
        self.puffs.len()
    }

    pub fn total_puff_duration_s(&self) -> f64 {
        let ticks: i64 = self.puffs.iter().map(|(a, b)| b.ticks_since(*a)).sum();
        ticks as f64 / TICKS_PER_SECOND as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedLog {
    pub records: Vec<RawRecord>,
    pub truth: GroundTruth,
}

const NOISE_MARGIN_S: f64 = 0.05;

// NaN fails both.
fn positive(x: f64) -> bool {
    x > 0.0
}

fn non_negative(x: f64) -> bool {
    x >= 0.0
}

const NOISE_ATTEMPTS: usize = 100_000;

impl Scenario {
    pub fn empty(start: DeviceInstant) -> Self {
        Scenario { start, sessions: Vec::new(), noise: NoiseModel::default(), seed: 0 }
    }

    /// A full validation day: four sessions (around 01:37, 08:33, 16:46 and
    /// 21:04 local time at UTC-06:00 on 2024-02-12), each three sets of six
    /// puffs of roughly 2, 3 and 4 s separated by 30 s, plus 17 injected
    /// false positives shorter than a second.
    pub fn validation_day(seed: u64) -> Self {
        // 2024-02-12 00:00:00 at UTC-06:00
        let start = DeviceInstant::new(1_707_717_600, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let starts = [
            ("Midnight", 1.0 * 3600.0 + 37.0 * 60.0),
            ("Morning", 8.0 * 3600.0 + 33.0 * 60.0 + 30.0),
            ("Afternoon", 16.0 * 3600.0 + 46.0 * 60.0 + 55.0),
            ("Evening", 21.0 * 3600.0 + 4.0 * 60.0 + 25.0),
        ];
        let sessions = starts
            .iter()
            .map(|(label, offset)| Session {
                label: (*label).to_string(),
                start_offset_s: *offset,
                puffs: [2.0, 3.0, 4.0]
                    .iter()
                    .flat_map(|nominal| [*nominal; 6])
                    .map(|nominal: f64| PuffSpec {
                        // button-held puffs overshoot the nominal length a little
                        duration_s: nominal + rng.gen_range(0.1..0.45),
                        gap_after_s: 30.0,
                    })
                    .collect(),
                touch: TouchBehavior::default(),
                temperature: TemperatureModel::default(),
            })
            .collect();
        Scenario { start, sessions, noise: NoiseModel { false_positive_count: 17, duration_range_s: (0.1, 0.9) }, seed }
    }

    pub fn validate(&self) -> Result<(), EmulatorError> {
        let bad = |msg: String| Err(EmulatorError::InvalidScenario(msg));
        let mut prev_end = f64::NEG_INFINITY;
        for s in &self.sessions {
            if !(s.start_offset_s.is_finite() && s.start_offset_s >= 0.0) {
                return bad(format!("session {:?}: start offset must be nonnegative", s.label));
            }
            if s.puffs.iter().any(|p| !positive(p.duration_s) || !non_negative(p.gap_after_s)) {
                return bad(format!("session {:?}: puff durations must be > 0 and gaps >= 0", s.label));
            }
            let t = s.touch;
            if !(0.0..=1.0).contains(&t.accompany_fraction) || !non_negative(t.lead_s) || !non_negative(t.lag_s) {
                return bad(format!("session {:?}: touch fraction must be in [0,1], lead/lag >= 0", s.label));
            }
            if u32::from(s.temperature.baseline) + u32::from(s.temperature.delta) > u32::from(MAX_TEMPERATURE) {
                return bad(format!("session {:?}: baseline + delta exceeds {MAX_TEMPERATURE}", s.label));
            }
            let (lo, hi) = s.window_s();
            if lo < prev_end {
                return bad(format!("session {:?} overlaps or precedes the previous session", s.label));
            }
            prev_end = hi;
        }
        let (lo, hi) = self.noise.duration_range_s;
        if self.noise.false_positive_count > 0 && !(lo > 0.0 && hi > lo) {
            return bad("noise duration range must satisfy 0 < lo < hi".into());
        }
        Ok(())
    }

    fn at(&self, offset_s: f64) -> Result<DeviceInstant, EmulatorError> {
        let delta = (offset_s * TICKS_PER_SECOND as f64).round() as i64;
        self.start
            .checked_add_ticks(delta)
            .ok_or_else(|| EmulatorError::InvalidScenario(format!("offset {offset_s}s leaves the 32-bit clock range")))
    }

    /// Renders the scenario into a flash image plus the ground truth.
    pub fn generate(&self, capacity: usize) -> Result<GeneratedLog, EmulatorError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut truth = GroundTruth::default();
        // (tick, insertion order, event)
        let mut timeline: Vec<(u64, usize, DecodedEvent)> = Vec::new();
        let push = |timeline: &mut Vec<(u64, usize, DecodedEvent)>, at: DeviceInstant, event: DecodedEvent| {
            let seq = timeline.len();
            timeline.push((at.as_ticks(), seq, event));
        };
        // spans no false positive may touch, in scenario seconds
        let mut occupied: Vec<(f64, f64)> = Vec::new();
        let mut spans: Vec<(f64, f64)> = Vec::new();

        for s in &self.sessions {
            let mut t = s.start_offset_s;
            let on_reading = TemperatureReading::new(s.temperature.baseline + s.temperature.delta)?;
            let off_reading = TemperatureReading::new(s.temperature.baseline)?;
            for p in &s.puffs {
                let (on_s, off_s) = (t, t + p.duration_s);
                let on = self.at(on_s)?;
                let off = self.at(off_s)?;
                let touched = rng.gen_bool(s.touch.accompany_fraction);
                let (mut busy_lo, mut busy_hi) = (on_s, off_s);
                let touch = if touched {
                    busy_lo = on_s - s.touch.lead_s;
                    busy_hi = off_s + s.touch.lag_s;
                    Some((self.at(busy_lo)?, self.at(busy_hi)?))
                } else {
                    None
                };
                if let Some((t_on, _)) = touch {
                    push(&mut timeline, t_on, DecodedEvent::timed(EventKind::TouchOn, t_on));
                }
                push(&mut timeline, on, DecodedEvent::timed(EventKind::PuffOn, on));
                push(&mut timeline, off, DecodedEvent::timed(EventKind::PuffOff, off));
                push(&mut timeline, off, DecodedEvent::temperature(EventKind::TemperatureOn, on_reading));
                push(&mut timeline, off, DecodedEvent::temperature(EventKind::TemperatureOff, off_reading));
                if let Some((t_on, t_off)) = touch {
                    push(&mut timeline, t_off, DecodedEvent::timed(EventKind::TouchOff, t_off));
                    truth.touches.push((t_on, t_off));
                }
                truth.puffs.push((on, off));
                occupied.push((busy_lo, busy_hi));
                t = off_s + p.gap_after_s;
            }
            if !s.puffs.is_empty() {
                spans.push((s.start_offset_s, s.start_offset_s + s.active_span_s()));
            }
        }

        let total_span: f64 = spans.iter().map(|(a, b)| b - a).sum();
        let (lo, hi) = self.noise.duration_range_s;
        for _ in 0..self.noise.false_positive_count {
            let duration = rng.gen_range(lo..hi);
            let mut placed = None;
            for _ in 0..NOISE_ATTEMPTS {
                if total_span <= 0.0 {
                    break;
                }
                // uniform over the union of session spans
                let mut u = rng.gen_range(0.0..total_span);
                let Some(&(a, b)) = spans.iter().find(|(a, b)| {
                    if u < b - a {
                        true
                    } else {
                        u -= b - a;
                        false
                    }
                }) else {
                    continue;
                };
                let start = a + u;
                if start + duration > b {
                    continue;
                }
                let end = start + duration;
                let clear = occupied.iter().all(|(x, y)| end + NOISE_MARGIN_S <= *x || start >= y + NOISE_MARGIN_S);
                if clear {
                    placed = Some((start, end));
                    break;
                }
            }
            let (start_s, end_s) = placed.ok_or(EmulatorError::NoRoomForNoise)?;
            occupied.push((start_s, end_s));
            let (on, off) = (self.at(start_s)?, self.at(end_s)?);
            push(&mut timeline, on, DecodedEvent::timed(EventKind::PuffOn, on));
            push(&mut timeline, off, DecodedEvent::timed(EventKind::PuffOff, off));
            truth.false_positives.push((on, off));
        }
        truth.false_positives.sort();

        if timeline.len() > capacity {
            return Err(EmulatorError::CapacityExceeded { records: timeline.len(), capacity });
        }
        timeline.sort_by_key(|(tick, seq, _)| (*tick, *seq));
        Ok(GeneratedLog { records: timeline.into_iter().map(|(_, _, e)| RawRecord::from(e)).collect(), truth })
    }
}

/// Flash image for `scenario` at the default capacity.
pub fn generate_records(scenario: &Scenario) -> Result<Vec<RawRecord>, EmulatorError> {
    Ok(scenario.generate(DEFAULT_FLASH_CAPACITY)?.records)
}
