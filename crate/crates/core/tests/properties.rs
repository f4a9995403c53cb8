use friends_core::codec::{
    decode_stream, encode_record, parse_record, DecodedEvent, DeviceInstant, EventKind, TemperatureReading,
};
use friends_core::pipeline::{
    apply_display_filter, associate_temperatures, bucket_by_day, classify_confidence, compute_drift,
    compute_pt_metrics, fuse_and_filter, fuse_and_filter_with_temps, pair_episodes, Episode, EpisodeKind, FilterConfig,
    PuffWithTemps,
};
use friends_core::ZoneConfig;
use proptest::prelude::*;

fn arb_event() -> impl Strategy<Value = DecodedEvent> {
    prop_oneof![
        (0usize..4, any::<u32>(), any::<u16>()).prop_map(|(k, s, t)| {
            let kind = [EventKind::PuffOn, EventKind::PuffOff, EventKind::TouchOn, EventKind::TouchOff][k];
            DecodedEvent::timed(kind, DeviceInstant::new(s, t))
        }),
        (any::<bool>(), 0u16..=1024).prop_map(|(on, v)| {
            let kind = if on { EventKind::TemperatureOn } else { EventKind::TemperatureOff };
            DecodedEvent::temperature(kind, TemperatureReading::new(v).unwrap())
        }),
    ]
}

proptest! {
    #[test]
    fn encode_then_parse_is_identity(e in arb_event()) {
        prop_assert_eq!(parse_record(&encode_record(&e)).unwrap(), e);
    }

    #[test]
    fn parse_then_encode_uppercases(code in 1u16..=6, middle in any::<u32>(), low in any::<u16>(), lower in any::<bool>()) {
        let is_temp = code >= 5;
        let middle = if is_temp { 0 } else { middle };
        let low = if is_temp { low % 1025 } else { low };
        let text = format!("{:04X}{:08X}{:04X}", code << 12, middle, low);
        let input = if lower { text.to_lowercase() } else { text.clone() };
        prop_assert_eq!(encode_record(&parse_record(&input).unwrap()), text);
    }

    #[test]
    fn decode_stream_keeps_every_valid_record(
        valid in proptest::collection::vec(arb_event(), 0..40),
        junk in proptest::collection::vec("[g-z ]{0,20}", 0..10),
        seed in any::<u64>(),
    ) {
        let mut lines: Vec<String> = valid.iter().map(encode_record).collect();
        let mut s = seed;
        for j in &junk {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let at = (s >> 33) as usize % (lines.len() + 1);
            lines.insert(at, j.clone());
        }
        let out = decode_stream(&lines);
        prop_assert_eq!(out.events, valid);
    }

    #[test]
    fn rendering_is_deterministic(e in arb_event()) {
        let z: ZoneConfig = "America/Chicago".parse().unwrap();
        prop_assert_eq!(
            friends_core::render_converted_line(&e, &z),
            friends_core::render_converted_line(&e, &z)
        );
    }
}

// ---- pairing oracle ----------------------------------------------------

/// Brute-force reference: within each family's subsequence an episode is an
/// ON directly followed by an OFF with a non-decreasing instant; everything
/// else is an orphan.
fn oracle_pairing(events: &[DecodedEvent]) -> (Vec<(EpisodeKind, usize, usize)>, Vec<usize>) {
    let mut pairs = Vec::new();
    let mut orphans = Vec::new();
    for (family, on, off) in [
        (EpisodeKind::Puff, EventKind::PuffOn, EventKind::PuffOff),
        (EpisodeKind::Touch, EventKind::TouchOn, EventKind::TouchOff),
    ] {
        let idx: Vec<usize> = (0..events.len()).filter(|&i| [on, off].contains(&events[i].kind())).collect();
        let mut k = 0;
        while k < idx.len() {
            let here = events[idx[k]];
            if here.kind() == on && k + 1 < idx.len() && events[idx[k + 1]].kind() == off {
                if events[idx[k + 1]].instant() >= here.instant() {
                    pairs.push((family, idx[k], idx[k + 1]));
                } else {
                    orphans.extend([idx[k], idx[k + 1]]);
                }
                k += 2;
            } else {
                orphans.push(idx[k]);
                k += 1;
            }
        }
    }
    pairs.sort_by_key(|&(_, on, _)| (events[on].instant(), on));
    orphans.sort();
    (pairs, orphans)
}

fn streaming(events: &[DecodedEvent]) -> (Vec<(EpisodeKind, usize, usize)>, Vec<usize>) {
    let p = pair_episodes(events);
    (
        p.episodes.iter().map(|e| (e.episode.kind, e.on_index, e.off_index)).collect(),
        p.orphans.iter().map(|o| o.index).collect(),
    )
}

#[test]
fn pairing_matches_oracle_exhaustively_up_to_six() {
    let kinds = [EventKind::PuffOn, EventKind::PuffOff, EventKind::TouchOn, EventKind::TouchOff];
    for len in 0..=6u32 {
        for code in 0..4usize.pow(len) {
            let mut c = code;
            let events: Vec<DecodedEvent> = (0..len)
                .map(|i| {
                    let k = kinds[c % 4];
                    c /= 4;
                    DecodedEvent::timed(k, DeviceInstant::new(100 + i, 0))
                })
                .collect();
            assert_eq!(streaming(&events), oracle_pairing(&events), "{events:?}");
        }
    }
}

proptest! {
    #[test]
    fn pairing_matches_oracle_with_random_times(
        seq in proptest::collection::vec((0usize..4, 0u32..20), 0..=8)
    ) {
        let kinds = [EventKind::PuffOn, EventKind::PuffOff, EventKind::TouchOn, EventKind::TouchOff];
        let events: Vec<DecodedEvent> = seq.iter()
            .map(|&(k, s)| DecodedEvent::timed(kinds[k], DeviceInstant::new(s, 0)))
            .collect();
        prop_assert_eq!(streaming(&events), oracle_pairing(&events));
    }
}

// ---- filtering and metrics ---------------------------------------------

const DAY0: u32 = 1_707_696_000;

fn arb_puffs() -> impl Strategy<Value = Vec<PuffWithTemps>> {
    proptest::collection::vec((1u64..20_000, 1u64..300_000, proptest::option::of((0u16..=1024, 0u16..=1024))), 0..30)
        .prop_map(|specs| {
            let mut t = u64::from(DAY0) << 16;
            specs
                .into_iter()
                .map(|(gap, dur, temps)| {
                    let start = t + gap;
                    let end = start + dur;
                    t = end;
                    PuffWithTemps {
                        episode: Episode::puff(
                            DeviceInstant::from_ticks(start).unwrap(),
                            DeviceInstant::from_ticks(end).unwrap(),
                        ),
                        temp_on: temps.map(|p| TemperatureReading::new(p.0).unwrap()),
                        temp_off: temps.map(|p| TemperatureReading::new(p.1).unwrap()),
                    }
                })
                .collect()
        })
}

fn union_len(mut spans: Vec<(u64, u64)>) -> u64 {
    spans.sort();
    let mut total = 0;
    let mut cur: Option<(u64, u64)> = None;
    for (a, b) in spans {
        match cur {
            Some((x, y)) if a <= y => cur = Some((x, y.max(b))),
            Some((x, y)) => {
                total += y - x;
                cur = Some((a, b));
            }
            None => cur = Some((a, b)),
        }
    }
    total + cur.map_or(0, |(x, y)| y - x)
}

proptest! {
    #[test]
    fn raising_display_threshold_never_adds_puffs(puffs in arb_puffs(), a in 0.0f64..5.0, b in 0.0f64..5.0) {
        let eps: Vec<Episode> = puffs.iter().map(|p| p.episode).collect();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(apply_display_filter(&eps, hi).len() <= apply_display_filter(&eps, lo).len());
        prop_assert_eq!(apply_display_filter(&eps, 0.0), eps);
    }

    #[test]
    fn duration_filter_conserves(puffs in arb_puffs(), min_ms in 0.0f64..3000.0) {
        let cfg = FilterConfig { min_puff_ms: min_ms, ..FilterConfig::default() };
        let kept = fuse_and_filter(&puffs, &cfg);
        let removed = puffs.iter().filter(|p| p.episode.duration_ms() <= min_ms).count();
        prop_assert_eq!(kept.len() + removed, puffs.len());
        let before: f64 = puffs.iter().map(|p| p.episode.duration_s()).sum();
        let after: f64 = kept.iter().map(|e| e.duration_s()).sum();
        prop_assert!(after <= before + 1e-9);
    }

    #[test]
    fn thermistor_merge_covers_merged_spans(puffs in arb_puffs()) {
        // No removal: isolate the merge step.
        let cfg = FilterConfig { use_thermistor: true, min_puff_ms: 0.0, ..FilterConfig::default() };
        let out = fuse_and_filter_with_temps(&puffs, &cfg);
        // Reference merge grouping computed independently: a new group
        // starts whenever the next start reading is missing, the previous
        // end reading is missing, or next_on > prev_off.
        let mut groups: Vec<(u64, u64)> = Vec::new();
        let mut prev_off: Option<u16> = None;
        for p in &puffs {
            let joins = matches!((p.temp_on, prev_off), (Some(on), Some(off)) if on.raw_value() <= off);
            let (s, e) = (p.episode.start.as_ticks(), p.episode.end.as_ticks());
            if joins {
                groups.last_mut().unwrap().1 = e;
            } else {
                groups.push((s, e));
            }
            prev_off = p.temp_off.map(|t| t.raw_value());
        }
        let got: Vec<(u64, u64)> = out.iter().map(|p| (p.episode.start.as_ticks(), p.episode.end.as_ticks())).collect();
        // zero-length outputs are dropped by the `> 0 ms` rule; compare coverage
        let expected: Vec<(u64, u64)> = groups.into_iter().filter(|(s, e)| e > s).collect();
        prop_assert_eq!(union_len(got.clone()), union_len(expected.clone()));
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn confidence_ignores_touch_order(puffs in arb_puffs(), touches in arb_puffs(), rot in 0usize..30) {
        let puffs: Vec<Episode> = puffs.iter().map(|p| p.episode).collect();
        let mut touches: Vec<Episode> = touches.iter().map(|p| Episode::touch(p.episode.start, p.episode.end)).collect();
        let a = classify_confidence(&puffs, &touches);
        touches.reverse();
        if !touches.is_empty() {
            let r = rot % touches.len();
            touches.rotate_left(r);
        }
        prop_assert_eq!(a, classify_confidence(&puffs, &touches));
    }

    #[test]
    fn metrics_interval_count(puffs in arb_puffs()) {
        let eps: Vec<Episode> = puffs.iter().map(|p| p.episode).collect();
        for m in compute_pt_metrics(&bucket_by_day(&eps, &ZoneConfig::Utc)) {
            prop_assert_eq!(m.inter_puff_intervals_s.len(), m.puff_count.saturating_sub(1));
        }
    }

    #[test]
    fn drift_of_identical_inputs_is_zero(puffs in arb_puffs()) {
        let pairs: Vec<_> = puffs.iter().map(|p| (p.episode.start, p.episode.end)).collect();
        let r = compute_drift("x", &pairs, &pairs).unwrap();
        prop_assert!(r.offsets_s.iter().all(|o| *o == 0.0));
        prop_assert_eq!(r.approx_time_diff_s, 0.0);
    }
}

#[test]
fn association_never_loses_temperature_records() {
    // Every temperature record is either attached or reported.
    let seq = [
        DecodedEvent::temperature(EventKind::TemperatureOff, TemperatureReading::new(1).unwrap()),
        DecodedEvent::timed(EventKind::PuffOn, DeviceInstant::new(1, 0)),
        DecodedEvent::timed(EventKind::PuffOff, DeviceInstant::new(2, 0)),
        DecodedEvent::temperature(EventKind::TemperatureOn, TemperatureReading::new(2).unwrap()),
        DecodedEvent::temperature(EventKind::TemperatureOff, TemperatureReading::new(3).unwrap()),
        DecodedEvent::temperature(EventKind::TemperatureOff, TemperatureReading::new(4).unwrap()),
    ];
    let a = associate_temperatures(&seq, &pair_episodes(&seq).episodes);
    let attached: usize = a.episodes.iter().map(|e| e.temp_on.is_some() as usize + e.temp_off.is_some() as usize).sum();
    assert_eq!(attached + a.unattached.len(), 4);
}
