//! Per-day three-track timeline: puffs on top, thermistor readings in the
//! middle, touches at the bottom, over a 00:00 to 24:00 axis.

use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::Serialize;

use crate::codec::MAX_TEMPERATURE;
use crate::pipeline::{Confidence, Episode, PuffWithTemps};
use crate::zone::ZoneConfig;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotInterval {
    /// Seconds after local midnight, clipped to the day.
    pub start_s: f64,
    pub end_s: f64,
    pub duration_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confidence: Option<Confidence>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TemperatureEdge {
    On,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemperatureMark {
    pub at_s: f64,
    pub value: u16,
    pub edge: TemperatureEdge,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DayPlot {
    pub date: NaiveDate,
    pub puffs: Vec<PlotInterval>,
    pub temperatures: Vec<TemperatureMark>,
    pub touches: Vec<PlotInterval>,
}

fn clip(s: f64) -> f64 {
    s.clamp(0.0, SECONDS_PER_DAY)
}

fn interval(e: &Episode, date: NaiveDate, zone: &ZoneConfig) -> PlotInterval {
    PlotInterval {
        start_s: clip(zone.seconds_into_day(date, e.start)),
        end_s: clip(zone.seconds_into_day(date, e.end)),
        duration_ms: e.duration_ms(),
        confidence: e.confidence,
    }
}

impl DayPlot {
    /// Track contents for one date. Episodes belong to the date they start
    /// on; anything running past midnight is clipped at 24:00.
    pub fn build(date: NaiveDate, puffs: &[PuffWithTemps], touches: &[Episode], zone: &ZoneConfig) -> Self {
        let mut plot = DayPlot { date, puffs: Vec::new(), temperatures: Vec::new(), touches: Vec::new() };
        for p in puffs.iter().filter(|p| p.episode.date(zone) == date) {
            let iv = interval(&p.episode, date, zone);
            if let Some(t) = p.temp_on {
                plot.temperatures.push(TemperatureMark {
                    at_s: iv.start_s,
                    value: t.raw_value(),
                    edge: TemperatureEdge::On,
                });
            }
            if let Some(t) = p.temp_off {
                plot.temperatures.push(TemperatureMark {
                    at_s: iv.end_s,
                    value: t.raw_value(),
                    edge: TemperatureEdge::Off,
                });
            }
            plot.puffs.push(iv);
        }
        plot.touches = touches.iter().filter(|t| t.date(zone) == date).map(|t| interval(t, date, zone)).collect();
        plot
    }

    pub fn total_puff_duration_s(&self) -> f64 {
        self.puffs.iter().map(|p| p.duration_ms).sum::<f64>() / 1000.0
    }

    pub fn file_name(&self) -> String {
        format!("{}.svg", self.date.format("%Y-%m-%d"))
    }

    pub fn render_svg(&self) -> String {
        render_svg(self)
    }
}

const WIDTH: f64 = 1200.0;
const HEIGHT: f64 = 380.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 20.0;
const PUFF_TRACK: (f64, f64) = (50.0, 130.0);
const TEMP_TRACK: (f64, f64) = (150.0, 250.0);
const TOUCH_TRACK: (f64, f64) = (270.0, 330.0);

fn x_of(seconds: f64) -> f64 {
    LEFT + seconds / SECONDS_PER_DAY * (WIDTH - LEFT - RIGHT)
}

fn rect(out: &mut String, class: &str, iv: &PlotInterval, track: (f64, f64)) {
    let x0 = x_of(iv.start_s);
    let w = (x_of(iv.end_s) - x0).max(1.0);
    let _ = writeln!(
        out,
        r#"<rect class="{class}" x="{x0:.2}" y="{:.2}" width="{w:.2}" height="{:.2}"><title>{:.2} ms</title></rect>"#,
        track.0,
        track.1 - track.0,
        iv.duration_ms,
    );
}

/// Deterministic SVG rendering of a [`DayPlot`].
pub fn render_svg(plot: &DayPlot) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    out.push_str(concat!(
        "<style>",
        ".puff.high{fill:#b03a2e}.puff.standard{fill:#e59866}",
        ".touch{fill:#229954}.temp-on{fill:#7d3c98}.temp-off{fill:#2e86c1}",
        ".track{fill:#f7f9f9;stroke:#d5d8dc}.grid{stroke:#d5d8dc}",
        "</style>\n"
    ));
    let _ = writeln!(
        out,
        r#"<text x="{LEFT}" y="24" font-size="15">{} | puffs: {} | total puff duration: {:.2} s | touches: {}</text>"#,
        plot.date.format("%Y-%m-%d"),
        plot.puffs.len(),
        plot.total_puff_duration_s(),
        plot.touches.len(),
    );

    let x_end = x_of(SECONDS_PER_DAY);
    for (label, (y0, y1)) in [("Puff", PUFF_TRACK), ("Temperature", TEMP_TRACK), ("Touch", TOUCH_TRACK)] {
        let _ = writeln!(
            out,
            r#"<g class="track-{}"><rect class="track" x="{LEFT}" y="{y0}" width="{:.2}" height="{}"/><text x="8" y="{:.1}">{label}</text></g>"#,
            label.to_ascii_lowercase(),
            x_end - LEFT,
            y1 - y0,
            (y0 + y1) / 2.0 + 4.0,
        );
    }
    for hour in 0..=24 {
        let x = x_of(f64::from(hour) * 3600.0);
        let _ = writeln!(
            out,
            r#"<line class="grid" x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}"/>"#,
            PUFF_TRACK.0, TOUCH_TRACK.1,
        );
        if hour % 2 == 0 {
            let _ = writeln!(
                out,
                r#"<text x="{x:.2}" y="{}" text-anchor="middle">{hour:02}:00</text>"#,
                TOUCH_TRACK.1 + 18.0,
            );
        }
    }

    out.push_str("<g id=\"puffs\">\n");
    for p in &plot.puffs {
        let class = match p.confidence {
            Some(Confidence::High) => "puff high",
            _ => "puff standard",
        };
        rect(&mut out, class, p, PUFF_TRACK);
    }
    out.push_str("</g>\n<g id=\"temperatures\">\n");
    let (t0, t1) = TEMP_TRACK;
    for t in &plot.temperatures {
        let y = t1 - f64::from(t.value) / f64::from(MAX_TEMPERATURE) * (t1 - t0);
        let class = match t.edge {
            TemperatureEdge::On => "temp-on",
            TemperatureEdge::Off => "temp-off",
        };
        let _ = writeln!(
            out,
            r#"<circle class="{class}" cx="{:.2}" cy="{y:.2}" r="2.5"><title>{}</title></circle>"#,
            x_of(t.at_s),
            t.value,
        );
    }
    out.push_str("</g>\n<g id=\"touches\">\n");
    for t in &plot.touches {
        rect(&mut out, "touch", t, TOUCH_TRACK);
    }
    out.push_str("</g>\n</svg>\n");
    out
}
