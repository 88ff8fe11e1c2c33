//! Convenience SVG renderer for exported artifacts. The CSVs are the
//! contract; these plots are for eyeballing a run: a spike raster of all
//! logged events and the per-synapse weight trajectories with decision-coded
//! markers (LTP red, LTD blue, no change black).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::hub::{EventRecord, PlasticityRecord};
use crate::plasticity::PlasticityDecision;
use crate::protocol::EventKind;

const WIDTH: f64 = 1000.0;
const HEIGHT: f64 = 300.0;
const MARGIN: f64 = 40.0;

fn x_of(t_ms: u64, t_max_ms: u64) -> f64 {
    if t_max_ms == 0 {
        return MARGIN;
    }
    MARGIN + (t_ms as f64 / t_max_ms as f64) * (WIDTH - 2.0 * MARGIN)
}

pub fn render_raster(events: &[EventRecord], path: &Path) -> std::io::Result<()> {
    let t_max = events.iter().map(|e| e.abs_time_ms).max().unwrap_or(0);
    let mut lanes: BTreeMap<u32, usize> = BTreeMap::new();
    for e in events {
        let next = lanes.len();
        lanes.entry(e.neuron_id).or_insert(next);
    }
    let lane_h = (HEIGHT - 2.0 * MARGIN) / lanes.len().max(1) as f64;

    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        f,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"##
    )?;
    writeln!(f, r##"<rect width="100%" height="100%" fill="white"/>"##)?;
    for (neuron, lane) in &lanes {
        let y = MARGIN + (*lane as f64 + 0.5) * lane_h;
        writeln!(
            f,
            r##"<text x="4" y="{:.1}" font-size="12" fill="#333">n{}</text>"##,
            y + 4.0,
            neuron
        )?;
    }
    for e in events {
        let lane = lanes[&e.neuron_id];
        let y0 = MARGIN + lane as f64 * lane_h + 2.0;
        let y1 = y0 + lane_h - 4.0;
        let color = match e.kind {
            EventKind::Psp => "#bbbbbb",
            EventKind::SpontaneousAp => "#2a9d8f",
            _ => "#222222",
        };
        let x = x_of(e.abs_time_ms, t_max);
        writeln!(
            f,
            r##"<line x1="{x:.1}" y1="{y0:.1}" x2="{x:.1}" y2="{y1:.1}" stroke="{color}" stroke-width="0.6"/>"##
        )?;
    }
    writeln!(f, "</svg>")?;
    f.flush()
}

pub fn render_weights(records: &[PlasticityRecord], path: &Path) -> std::io::Result<()> {
    let t_max = records.iter().map(|r| r.abs_time_ms).max().unwrap_or(0);
    let mut by_syn: BTreeMap<&str, Vec<&PlasticityRecord>> = BTreeMap::new();
    for r in records {
        by_syn.entry(r.synapse_id.as_str()).or_default().push(r);
    }

    let y_of = |w: f64| HEIGHT - MARGIN - w * (HEIGHT - 2.0 * MARGIN);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        f,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"##
    )?;
    writeln!(f, r##"<rect width="100%" height="100%" fill="white"/>"##)?;
    for (si, (syn, rows)) in by_syn.iter().enumerate() {
        let mut points = String::new();
        for r in rows.iter() {
            points.push_str(&format!(
                "{:.1},{:.1} ",
                x_of(r.abs_time_ms, t_max),
                y_of(r.weight_after)
            ));
        }
        writeln!(
            f,
            r##"<polyline fill="none" stroke="#999999" stroke-width="0.8" points="{points}"/>"##
        )?;
        for r in rows.iter() {
            let color = match r.decision {
                PlasticityDecision::Ltp => "#d62728",
                PlasticityDecision::Ltd => "#1f77b4",
                PlasticityDecision::NoChange => "#222222",
            };
            writeln!(
                f,
                r##"<circle cx="{:.1}" cy="{:.1}" r="1.2" fill="{color}"/>"##,
                x_of(r.abs_time_ms, t_max),
                y_of(r.weight_after)
            )?;
        }
        writeln!(
            f,
            r##"<text x="{:.1}" y="{:.1}" font-size="12" fill="#333">{}</text>"##,
            WIDTH - MARGIN + 4.0,
            MARGIN + 14.0 * si as f64,
            syn
        )?;
    }
    writeln!(f, "</svg>")?;
    f.flush()
}
