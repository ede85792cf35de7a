//! Deterministic CSV and SVG emitters.

use std::fmt::Write as _;
use std::path::Path;

use crate::dbn::TrajectoryResult;
use crate::sensitivity::TornadoEntry;

pub const TORNADO_CSV_HEADER: &str = "rank,node,state,parent_config,baseline,low,high,spread";
pub const TRAJECTORY_CSV_HEADER: &str = "step,node,state,probability";

fn csv_text(header: &str, rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header.split(',')).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

pub fn tornado_csv(entries: &[TornadoEntry]) -> String {
    csv_text(
        TORNADO_CSV_HEADER,
        entries.iter().enumerate().map(|(i, e)| {
            vec![
                (i + 1).to_string(),
                e.node.to_string(),
                e.state.clone(),
                e.parent_config.clone(),
                e.baseline.to_string(),
                e.low.to_string(),
                e.high.to_string(),
                e.spread.to_string(),
            ]
        }),
    )
}

/// Rows are step-major, then monitored node, then state.
pub fn trajectory_csv(t: &TrajectoryResult) -> String {
    let rows = (0..t.steps).flat_map(move |step| {
        t.series.iter().flat_map(move |s| {
            s.states.iter().enumerate().map(move |(k, state)| {
                vec![
                    step.to_string(),
                    s.node.to_string(),
                    state.clone(),
                    s.probabilities[step][k].to_string(),
                ]
            })
        })
    });
    csv_text(TRAJECTORY_CSV_HEADER, rows)
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

const WIDTH: f64 = 900.0;
const LABEL_WIDTH: f64 = 330.0;
const MARGIN: f64 = 20.0;
const ROW: f64 = 24.0;
const BAR: f64 = 16.0;
const HEADER: f64 = 40.0;
const AXIS: f64 = 30.0;

/// Horizontal tornado bars in the given order (rank 1 on top), a vertical rule
/// at the baseline posterior and a labelled axis.
pub fn tornado_svg(entries: &[TornadoEntry], title: &str) -> String {
    let baseline = entries.first().map_or(0.0, |e| e.baseline);
    let mut lo = entries.iter().map(|e| e.low).fold(baseline, f64::min);
    let mut hi = entries.iter().map(|e| e.high).fold(baseline, f64::max);
    if hi - lo < 1e-12 {
        lo -= 1e-3;
        hi += 1e-3;
    }
    let pad = (hi - lo) * 0.05;
    let (lo, hi) = (lo - pad, hi + pad);
    let plot_left = LABEL_WIDTH;
    let plot_width = WIDTH - LABEL_WIDTH - MARGIN;
    let x = |v: f64| plot_left + (v - lo) / (hi - lo) * plot_width;
    let height = HEADER + ROW * entries.len() as f64 + AXIS + MARGIN;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" font-size="15" font-weight="bold">{}</text>"#,
        MARGIN,
        xml_escape(title)
    );
    for (i, e) in entries.iter().enumerate() {
        let y = HEADER + ROW * i as f64;
        let (x0, x1) = (x(e.low), x(e.high));
        let name = if e.parent_config.is_empty() {
            e.node.to_string()
        } else {
            format!("{} | {}", e.node, e.parent_config)
        };
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            plot_left - 8.0,
            y + BAR - 3.0,
            xml_escape(&e.node.to_string())
        );
        let _ = writeln!(
            s,
            r##"<rect x="{x0:.2}" y="{y:.2}" width="{:.2}" height="{BAR:.2}" fill="#4a78b5"><title>{} = {}: [{:.6}, {:.6}]</title></rect>"##,
            (x1 - x0).max(0.5),
            xml_escape(&name),
            xml_escape(&e.state),
            e.low,
            e.high
        );
    }
    let axis_y = HEADER + ROW * entries.len() as f64 + 4.0;
    let _ = writeln!(
        s,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        plot_left,
        axis_y,
        plot_left + plot_width,
        axis_y
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{:.4}</text>"#,
            x(v),
            axis_y + 16.0,
            v
        );
    }
    let bx = x(baseline);
    let _ = writeln!(
        s,
        r##"<line x1="{bx:.2}" y1="{:.2}" x2="{bx:.2}" y2="{axis_y:.2}" stroke="#c0392b" stroke-width="1.5"/>"##,
        HEADER - 6.0
    );
    let _ = writeln!(
        s,
        r##"<text x="{bx:.2}" y="{:.2}" text-anchor="middle" fill="#c0392b">baseline {baseline:.4}</text>"##,
        HEADER - 10.0
    );
    s.push_str("</svg>\n");
    s
}

pub fn emit_tornado_svg(entries: &[TornadoEntry], title: &str, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, tornado_svg(entries, title))
}

pub fn emit_trajectory_csv(t: &TrajectoryResult, path: &Path) -> std::io::Result<()> {
    std::fs::write(path, trajectory_csv(t))
}
