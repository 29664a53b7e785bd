//! Static SVG line charts of actual vs predicted flow, one panel per road.

use std::fmt::Write as _;

use super::Prediction;

const WIDTH: f64 = 900.0;
const PANEL: f64 = 220.0;
const PAD: f64 = 40.0;

fn polyline(points: &[(f64, f64)], color: &str) -> String {
    let mut s = String::new();
    for (i, (x, y)) in points.iter().enumerate() {
        let _ = write!(s, "{}{:.1},{:.1}", if i == 0 { "" } else { " " }, x, y);
    }
    format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1\" points=\"{s}\"/>\n")
}

/// At most `max_points` points per road (the first ones in time order).
pub fn svg(preds: &[Prediction], max_points: usize) -> String {
    let mut roads: Vec<&str> = Vec::new();
    for p in preds {
        if !roads.contains(&p.road_id.as_str()) {
            roads.push(&p.road_id);
        }
    }
    let height = PANEL * roads.len().max(1) as f64;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    for (k, road) in roads.iter().enumerate() {
        let rows: Vec<&Prediction> = preds.iter().filter(|p| p.road_id == *road).take(max_points).collect();
        let top = PANEL * k as f64;
        let hi = rows
            .iter()
            .flat_map(|p| [p.actual, p.predicted])
            .fold(1.0f64, f64::max);
        let n = rows.len().max(2) as f64 - 1.0;
        let at = |i: usize, v: f64| {
            (
                PAD + (WIDTH - 2.0 * PAD) * i as f64 / n,
                top + PANEL - PAD + (PANEL - 2.0 * PAD) * -(v.max(0.0) / hi),
            )
        };
        let actual: Vec<(f64, f64)> = rows.iter().enumerate().map(|(i, p)| at(i, p.actual)).collect();
        let predicted: Vec<(f64, f64)> = rows.iter().enumerate().map(|(i, p)| at(i, p.predicted)).collect();
        let _ = writeln!(out, "<text x=\"{PAD}\" y=\"{:.1}\">{road} (actual black, predicted red, max {hi:.0})</text>", top + PAD - 10.0);
        let _ = writeln!(
            out,
            "<rect x=\"{PAD}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#999\"/>",
            top + PAD,
            WIDTH - 2.0 * PAD,
            PANEL - 2.0 * PAD
        );
        out.push_str(&polyline(&actual, "black"));
        out.push_str(&polyline(&predicted, "red"));
    }
    out.push_str("</svg>\n");
    out
}
