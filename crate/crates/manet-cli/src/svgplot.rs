//! Line charts over aggregate sweep CSVs, emitted as standalone SVG:
//! one polyline per protocol, swept parameter on the x-axis, chosen
//! metric on the y-axis. Output is deterministic for identical input.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{bail, Context, Result};

/// Plottable metric columns and their axis labels.
pub const METRICS: [(&str, &str); 6] = [
    ("pdr", "packet delivery ratio"),
    ("avg_delay_s", "average end-to-end delay (s)"),
    ("routing_overhead", "routing overhead (control transmissions)"),
    ("throughput_bps", "throughput (bit/s)"),
    ("data_sent", "data packets sent"),
    ("data_received", "data packets received"),
];

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 520.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 610.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 440.0;

pub fn metric_label(metric: &str) -> Result<&'static str> {
    METRICS
        .iter()
        .find(|(name, _)| *name == metric)
        .map(|(_, label)| *label)
        .with_context(|| {
            let valid: Vec<&str> = METRICS.iter().map(|(name, _)| *name).collect();
            format!(
                "unknown metric {metric:?}; valid metrics: {}",
                valid.join(", ")
            )
        })
}

/// Renders an aggregate CSV (as written by `sweep`) to SVG text.
pub fn render(csv_text: &str, metric: &str) -> Result<String> {
    let label = metric_label(metric)?;
    let mut lines = csv_text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().context("empty CSV")?;
    let columns: Vec<&str> = header.split(',').collect();
    let idx = |name: &str| {
        columns
            .iter()
            .position(|c| *c == name)
            .with_context(|| format!("CSV is missing the {name} column"))
    };
    let param_col = idx("param")?;
    let value_col = idx("value")?;
    let protocol_col = idx("protocol")?;
    let metric_col = idx(&format!("{metric}_mean"))?;

    let mut param_name = String::new();
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    let mut rows = 0usize;
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() {
            bail!(
                "CSV line {}: expected {} columns, found {}",
                i + 2,
                columns.len(),
                cells.len()
            );
        }
        rows += 1;
        param_name = cells[param_col].to_string();
        if cells[metric_col] == "NA" {
            continue;
        }
        let x: f64 = cells[value_col]
            .parse()
            .with_context(|| format!("CSV line {}: non-numeric sweep value", i + 2))?;
        let y: f64 = cells[metric_col]
            .parse()
            .with_context(|| format!("CSV line {}: non-numeric {metric}_mean", i + 2))?;
        series
            .entry(cells[protocol_col].to_string())
            .or_default()
            .push((x, y));
    }
    if rows == 0 {
        bail!("empty CSV: no data rows");
    }
    if series.is_empty() {
        bail!("no plottable values for metric {metric}");
    }
    for points in series.values_mut() {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }

    Ok(draw(&series, &param_name, label))
}

fn draw(series: &BTreeMap<String, Vec<(f64, f64)>>, param: &str, label: &str) -> String {
    let xs: Vec<f64> = series.values().flatten().map(|p| p.0).collect();
    let ys: Vec<f64> = series.values().flatten().map(|p| p.1).collect();
    let (mut x_min, mut x_max) = min_max(&xs);
    if x_min == x_max {
        let pad = (x_min.abs() * 0.05).max(0.5);
        x_min -= pad;
        x_max += pad;
    }
    let y_top = {
        let (_, y_max) = min_max(&ys);
        if y_max > 0.0 {
            y_max * 1.08
        } else {
            1.0
        }
    };
    let sx = |x: f64| LEFT + (x - x_min) / (x_max - x_min) * (RIGHT - LEFT);
    let sy = |y: f64| BOTTOM - (y / y_top) * (BOTTOM - TOP);

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">"
    );
    let _ = writeln!(
        s,
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"28\" font-size=\"16\" text-anchor=\"middle\">{} vs {}</text>",
        (LEFT + RIGHT) / 2.0,
        escape(label),
        escape(param)
    );

    // Gridlines and y ticks.
    for i in 0..=4 {
        let y = y_top * i as f64 / 4.0;
        let py = sy(y);
        let _ = writeln!(
            s,
            "<line x1=\"{LEFT:.2}\" y1=\"{py:.2}\" x2=\"{RIGHT:.2}\" y2=\"{py:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>"
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"end\">{}</text>",
            LEFT - 8.0,
            py + 4.0,
            fmt_tick(y)
        );
    }
    // X ticks: the swept values themselves when few, else a linear scale.
    let mut tick_xs: Vec<f64> = xs.clone();
    tick_xs.sort_by(|a, b| a.total_cmp(b));
    tick_xs.dedup();
    if tick_xs.len() > 8 {
        tick_xs = (0..=4)
            .map(|i| x_min + (x_max - x_min) * i as f64 / 4.0)
            .collect();
    }
    for &x in &tick_xs {
        let px = sx(x);
        let _ = writeln!(
            s,
            "<line x1=\"{px:.2}\" y1=\"{BOTTOM:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" \
             stroke=\"#333333\" stroke-width=\"1\"/>",
            BOTTOM + 5.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{px:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
            BOTTOM + 20.0,
            fmt_tick(x)
        );
    }
    // Axes.
    let _ = writeln!(
        s,
        "<line x1=\"{LEFT:.2}\" y1=\"{TOP:.2}\" x2=\"{LEFT:.2}\" y2=\"{BOTTOM:.2}\" \
         stroke=\"#333333\" stroke-width=\"1.5\"/>"
    );
    let _ = writeln!(
        s,
        "<line x1=\"{LEFT:.2}\" y1=\"{BOTTOM:.2}\" x2=\"{RIGHT:.2}\" y2=\"{BOTTOM:.2}\" \
         stroke=\"#333333\" stroke-width=\"1.5\"/>"
    );
    // Axis labels.
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
        (LEFT + RIGHT) / 2.0,
        BOTTOM + 45.0,
        escape(param)
    );
    let _ = writeln!(
        s,
        "<text x=\"22\" y=\"{:.2}\" font-size=\"14\" text-anchor=\"middle\" \
         transform=\"rotate(-90 22 {:.2})\">{}</text>",
        (TOP + BOTTOM) / 2.0,
        (TOP + BOTTOM) / 2.0,
        escape(label)
    );

    // One polyline (plus markers) per protocol, palette keyed by order.
    for (i, (protocol, points)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut path = String::new();
        for (x, y) in points {
            let _ = write!(path, "{:.2},{:.2} ", sx(*x), sy(*y));
        }
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
            path.trim_end()
        );
        for (x, y) in points {
            let _ = writeln!(
                s,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>",
                sx(*x),
                sy(*y)
            );
        }
        // Legend entry.
        let ly = TOP + 14.0 + i as f64 * 22.0;
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" \
             stroke=\"{color}\" stroke-width=\"2\"/>",
            RIGHT + 20.0,
            RIGHT + 48.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\">{}</text>",
            RIGHT + 54.0,
            ly + 4.0,
            escape(protocol)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in xs {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    (lo, hi)
}

fn fmt_tick(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{:.0}", v.round())
    } else if v.abs() >= 100.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_csv() -> String {
        let mut s = String::from(
            "param,value,protocol,nodes,speed,runs,routing_overhead_mean,routing_overhead_std,\
             data_sent_mean,data_sent_std,data_received_mean,data_received_std,pdr_mean,pdr_std,\
             avg_delay_s_mean,avg_delay_s_std,throughput_bps_mean,throughput_bps_std\n",
        );
        for protocol in ["aodv", "dsr", "dsdv", "tora"] {
            for nodes in [20, 40, 60, 80] {
                s.push_str(&format!(
                    "nodes,{nodes},{protocol},{nodes},5,10,100,1,800,0,700,2,0.875,0.01,0.05,0.002,28000,50\n"
                ));
            }
        }
        s
    }

    #[test]
    fn four_protocols_make_four_polylines_with_four_points() {
        let svg = render(&sample_csv(), "pdr").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 4);
        assert_eq!(svg.matches("<circle").count(), 16);
        for name in ["aodv", "dsr", "dsdv", "tora"] {
            assert!(svg.contains(name), "legend lists {name}");
        }
        assert!(svg.contains("packet delivery ratio"));
    }

    #[test]
    fn identical_input_renders_identical_bytes() {
        let csv = sample_csv();
        assert_eq!(render(&csv, "throughput_bps").unwrap(), render(&csv, "throughput_bps").unwrap());
    }

    #[test]
    fn unknown_metric_lists_the_valid_names() {
        let err = render(&sample_csv(), "latency").unwrap_err().to_string();
        assert!(err.contains("latency"));
        for (name, _) in METRICS {
            assert!(err.contains(name), "error names {name}");
        }
    }

    #[test]
    fn empty_csv_is_an_error() {
        assert!(render("", "pdr").is_err());
        let header_only = sample_csv().lines().next().unwrap().to_string();
        let err = render(&header_only, "pdr").unwrap_err().to_string();
        assert!(err.contains("no data rows"));
    }

    #[test]
    fn na_cells_are_skipped_not_plotted() {
        let mut csv = sample_csv();
        csv.push_str("nodes,100,static,100,5,10,0,0,0,0,0,0,NA,NA,NA,NA,0,0\n");
        let svg = render(&csv, "pdr").unwrap();
        // The NA row contributes no points; four protocols remain.
        assert_eq!(svg.matches("<polyline").count(), 4);
    }
}
