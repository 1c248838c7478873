//! Minimal SVG line charts of mean importance against sample size.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::results::ResultRow;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 56.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// One chart per (experiment, dgp, d, method, risk): mean psi per variable
/// over the n grid. Returns `(file stem, svg text)` pairs.
pub fn render_charts(rows: &[ResultRow]) -> Vec<(String, String)> {
    type Panel = (String, String, usize, String, String);
    let mut panels: BTreeMap<Panel, BTreeMap<usize, BTreeMap<usize, (f64, usize)>>> = BTreeMap::new();
    for r in rows {
        let key = (r.experiment.name().to_string(), r.dgp.clone(), r.d, r.method.name().to_string(), r.risk.name().to_string());
        let e = panels.entry(key).or_default().entry(r.variable).or_default().entry(r.n).or_insert((0.0, 0));
        e.0 += r.psi;
        e.1 += 1;
    }
    panels
        .into_iter()
        .map(|((exp, dgp, d, method, risk), series)| {
            let stem = format!("{exp}_{dgp}_d{d}_{method}_{risk}");
            let title = format!("{exp}: {method} ({risk}), {dgp}, d = {d}");
            let series: Vec<(usize, Vec<(f64, f64)>)> = series
                .into_iter()
                .map(|(v, pts)| (v, pts.into_iter().map(|(n, (s, c))| (n as f64, s / c as f64)).collect()))
                .collect();
            (stem, svg(&title, &series))
        })
        .collect()
}

fn svg(title: &str, series: &[(usize, Vec<(f64, f64)>)]) -> String {
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x.ln());
        x1 = x1.max(x.ln());
        if y.is_finite() {
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
    }
    if x1 <= x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if !(y1 > y0) {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| PAD + (x.ln() - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{PAD},{PAD} V{} H{}" stroke="black" fill="none"/>"#,
        H - PAD,
        W - PAD
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">n (log scale)</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(s, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">mean psi</text>"#, H / 2.0, H / 2.0);
    for (y, label) in [(y0, y0), (y1, y1)] {
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{label:.3}</text>"#, PAD - 4.0, sy(y) + 4.0);
    }
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(s, r##"<path d="M{PAD},{:.1} H{}" stroke="#bbb" stroke-dasharray="4 3"/>"##, sy(0.0), W - PAD);
    }
    let mut xs: Vec<f64> = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    for x in xs {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{x}</text>"#, sx(x), H - PAD + 16.0);
    }
    for (i, (v, p)) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let d: Vec<String> = p.iter().filter(|q| q.1.is_finite()).map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        if !d.is_empty() {
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#, d.join(" "));
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{colour}">x{}</text>"#,
            W - PAD + 6.0,
            PAD + 14.0 * i as f64,
            v + 1
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Experiment;
    use permucate::{Method, RiskKind};

    #[test]
    fn one_chart_per_method_and_risk() {
        let mut rows = Vec::new();
        for (method, n, psi) in [(Method::Loco, 100, 1.0), (Method::Loco, 200, 2.0), (Method::Permucate, 100, 0.5)] {
            rows.push(ResultRow {
                experiment: Experiment::Fig1LdPower,
                dgp: "ld".into(),
                d: 6,
                n,
                seed: 0,
                fold: 0,
                variable: 1,
                method,
                risk: RiskKind::PoRisk,
                psi,
                wald: None,
                p_value: None,
                delta_beta: None,
                nu_var: None,
                wall_time_ms: None,
            });
        }
        let charts = render_charts(&rows);
        assert_eq!(charts.len(), 2);
        assert_eq!(charts[0].0, "fig1_ld_power_ld_d6_loco_po_risk");
        assert!(charts.iter().all(|(_, s)| s.starts_with("<svg") && s.ends_with("</svg>\n")));
        assert!(charts[0].1.contains("<polyline"));
    }
}
