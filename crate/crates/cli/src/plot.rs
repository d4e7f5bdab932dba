use std::collections::BTreeMap;
use std::fmt::Write;

use crate::output::ResultRow;

const PANEL_W: f64 = 520.0;
const PANEL_H: f64 = 220.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_T: f64 = 40.0;
const GAP: f64 = 60.0;
const LEGEND_W: f64 = 190.0;
const COLORS: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

type Series = BTreeMap<String, Vec<(f64, f64)>>;

/// Wall time against horizon, one polyline per strategy, in three stacked
/// panels: total, linear solver, function evaluation. Rows whose timing is
/// not finite are dropped.
pub fn render(rows: &[ResultRow]) -> String {
    let panels: [(&str, fn(&ResultRow) -> f64); 3] = [
        ("total wall time (s)", |r| r.time_total),
        ("linear solver time (s)", |r| r.time_linear),
        ("function evaluation time (s)", |r| r.time_function),
    ];
    let strategies: Vec<String> = {
        let mut s: Vec<String> = rows.iter().map(|r| r.strategy.clone()).collect();
        s.sort();
        s.dedup();
        s
    };
    let width = MARGIN_L + PANEL_W + 30.0 + LEGEND_W;
    let height = MARGIN_T + 3.0 * PANEL_H + 2.0 * GAP + 50.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (xmin, xmax) = range(rows.iter().map(|r| r.horizon as f64));
    for (p, (title, metric)) in panels.iter().enumerate() {
        let top = MARGIN_T + p as f64 * (PANEL_H + GAP);
        let mut series: Series = BTreeMap::new();
        for r in rows {
            let v = metric(r);
            if v.is_finite() {
                series.entry(r.strategy.clone()).or_default().push((r.horizon as f64, v));
            }
        }
        let (_, ymax) = range(series.values().flatten().map(|&(_, y)| y).chain([0.0]));
        panel(&mut svg, top, title, (xmin, xmax), (0.0, ymax), &series, &strategies);
    }
    for (i, s) in strategies.iter().enumerate() {
        let y = MARGIN_T + 10.0 + 20.0 * i as f64;
        let x = MARGIN_L + PANEL_W + 30.0;
        let c = COLORS[i % COLORS.len()];
        let _ = writeln!(
            svg,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{c}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            x + 24.0,
            x + 30.0,
            y + 4.0,
            escape(s)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        let pad = hi.abs().max(1.0) * 0.5;
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn panel(svg: &mut String, top: f64, title: &str, xr: (f64, f64), yr: (f64, f64), series: &Series, order: &[String]) {
    let sx = |x: f64| MARGIN_L + (x - xr.0) / (xr.1 - xr.0) * PANEL_W;
    let sy = |y: f64| top + PANEL_H - (y - yr.0) / (yr.1 - yr.0) * PANEL_H;
    let _ = writeln!(
        svg,
        r##"<rect x="{MARGIN_L}" y="{top}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#444"/><text x="{MARGIN_L}" y="{}" font-weight="bold">{}</text>"##,
        top - 8.0,
        escape(title)
    );
    for i in 0..=4 {
        let y = yr.0 + (yr.1 - yr.0) * i as f64 / 4.0;
        let x = xr.0 + (xr.1 - xr.0) * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r##"<text x="{}" y="{}" text-anchor="end">{}</text><text x="{}" y="{}" text-anchor="middle">{}</text>"##,
            MARGIN_L - 6.0,
            sy(y) + 4.0,
            tick(y),
            sx(x),
            top + PANEL_H + 16.0,
            tick(x)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">horizon T</text>"#,
        MARGIN_L + PANEL_W / 2.0,
        top + PANEL_H + 32.0
    );
    for (i, name) in order.iter().enumerate() {
        let Some(points) = series.get(name) else { continue };
        let mut pts = points.clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let c = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{c}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        for &(x, y) in &pts {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}"/>"#, sx(x), sy(y));
        }
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 100.0 || v.fract() == 0.0 {
        format!("{v:.0}")
    } else if v.abs() >= 0.01 {
        format!("{v:.3}")
    } else {
        format!("{v:.1e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(strategy: &str, horizon: usize, t: f64) -> ResultRow {
        ResultRow {
            instance: "gas".into(),
            horizon,
            strategy: strategy.into(),
            linear_solver: "direct".into(),
            iterator: "gmres".into(),
            k: 4,
            omega: "auto".into(),
            tol: 1e-8,
            max_iter: 1000,
            threads: 1,
            seed: 0,
            variables: 1,
            constraints: 1,
            status: "optimal".into(),
            iterations: 1,
            restorations: 0,
            linear_iterations: 0,
            objective: 0.0,
            kkt_error: 0.0,
            time_total: t,
            time_function: t / 4.0,
            time_linear: t / 2.0,
        }
    }

    #[test]
    fn one_polyline_per_strategy_and_panel() {
        let rows = [row("direct", 12, 1.0), row("direct", 24, 2.0), row("ras-gmres-K4", 12, 1.5)];
        let svg = render(&rows);
        assert_eq!(svg.matches("<polyline").count(), 6);
        assert_eq!(svg.matches("<circle").count(), 9);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn single_row_and_failed_rows_still_render() {
        let mut failed = row("direct", 24, f64::NAN);
        failed.status = "error".into();
        let svg = render(&[row("direct", 12, 0.5), failed]);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(!svg.contains("NaN"));
        assert!(render(&[]).contains("</svg>"));
    }
}
