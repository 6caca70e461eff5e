//! Self-contained SVG line and bar charts. Every data mark carries its
//! exact values in `data-*` attributes.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

pub struct Series {
    pub name: String,
    /// (x, y, L) triples.
    pub points: Vec<(f64, f64, usize)>,
}

pub struct BarGroup {
    pub label: String,
    pub bars: Vec<(String, f64)>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn header(out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>
<text x="{}" y="{}" text-anchor="middle">{}</text>
<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>
"#,
        (LEFT + W - RIGHT) / 2.0,
        esc(title),
        (LEFT + W - RIGHT) / 2.0,
        H - 15.0,
        esc(xlabel),
        (TOP + H - BOTTOM) / 2.0,
        (TOP + H - BOTTOM) / 2.0,
        esc(ylabel)
    );
    let _ = writeln!(
        out,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - LEFT - RIGHT,
        H - TOP - BOTTOM
    );
}

fn y_ticks(out: &mut String, lo: f64, hi: f64, sy: &dyn Fn(f64) -> f64) {
    for i in 0..=5 {
        let v = lo + (hi - lo) * i as f64 / 5.0;
        let y = sy(v);
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" x2="{}" y1="{y:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            W - RIGHT,
            LEFT - 6.0,
            y + 4.0,
            fmt_tick(v)
        );
    }
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else if v.abs() >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 10.0 + i as f64 * 18.0;
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            W - RIGHT + 12.0,
            y,
            COLORS[i % COLORS.len()],
            W - RIGHT + 30.0,
            y + 10.0,
            esc(name)
        );
    }
}

/// One polyline per series, x and y scaled linearly to the data range.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let (x0, x1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let sy = |y: f64| H - BOTTOM - (y - y0) / (y1 - y0) * (H - TOP - BOTTOM);
    let mut out = String::new();
    header(&mut out, title, xlabel, ylabel);
    y_ticks(&mut out, y0, y1, &sy);
    for i in 0..=5 {
        let v = x0 + (x1 - x0) * i as f64 / 5.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            sx(v),
            H - BOTTOM + 16.0,
            fmt_tick(v)
        );
    }
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for &(x, y, l) in &s.points {
            if !(x.is_finite() && y.is_finite()) {
                continue;
            }
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}" data-series="{}" data-key="{l}" data-x="{x:?}" data-y="{y:?}"><title>{} L={l}: ({x}, {y})</title></circle>"#,
                sx(x),
                sy(y),
                esc(&s.name),
                esc(&s.name)
            );
        }
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

/// Grouped vertical bars starting at zero.
pub fn bar_chart(title: &str, ylabel: &str, groups: &[BarGroup]) -> String {
    let top = groups
        .iter()
        .flat_map(|g| g.bars.iter().map(|b| b.1))
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max)
        .max(1e-9)
        * 1.05;
    let sy = |y: f64| H - BOTTOM - y / top * (H - TOP - BOTTOM);
    let mut out = String::new();
    header(&mut out, title, "", ylabel);
    y_ticks(&mut out, 0.0, top, &sy);
    let mut names: Vec<&str> = Vec::new();
    for g in groups {
        for (n, _) in &g.bars {
            if !names.contains(&n.as_str()) {
                names.push(n);
            }
        }
    }
    let gw = (W - LEFT - RIGHT) / groups.len().max(1) as f64;
    let bw = gw * 0.8 / names.len().max(1) as f64;
    for (gi, g) in groups.iter().enumerate() {
        let gx = LEFT + gi as f64 * gw + gw * 0.1;
        for (name, v) in &g.bars {
            let bi = names.iter().position(|n| n == name).unwrap_or(0);
            let y = sy(v.max(0.0));
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{}" data-series="{}" data-key="{}" data-x="{bi}" data-y="{v:?}"><title>{} {}: {v}</title></rect>"#,
                gx + bi as f64 * bw,
                bw,
                H - BOTTOM - y,
                COLORS[bi % COLORS.len()],
                esc(name),
                esc(&g.label),
                esc(name),
                esc(&g.label)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            gx + gw * 0.4,
            H - BOTTOM + 16.0,
            esc(&g.label)
        );
    }
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::plot_values;

    #[test]
    fn marks_carry_exact_values() {
        let s = vec![
            Series {
                name: "A<1>".into(),
                points: vec![(0.5, 120.25, 10), (0.75, 80.0, 20)],
            },
            Series {
                name: "B".into(),
                points: vec![(0.1 + 0.2, 1e-7, 50)],
            },
        ];
        let svg = line_plot("t", "x", "y", &s);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        let v = plot_values(&svg);
        assert_eq!(
            v,
            vec![
                ("A&lt;1&gt;".into(), "10".into(), 0.5, 120.25),
                ("A&lt;1&gt;".into(), "20".into(), 0.75, 80.0),
                ("B".into(), "50".into(), 0.1 + 0.2, 1e-7),
            ]
        );
    }

    #[test]
    fn bars_carry_values() {
        let g = vec![BarGroup {
            label: "L=10".into(),
            bars: vec![("Baseline".into(), 40.5), ("C5".into(), 12.0)],
        }];
        let v = plot_values(&bar_chart("b", "pages", &g));
        assert_eq!(v.len(), 2);
        assert_eq!((v[1].0.as_str(), v[1].3), ("C5", 12.0));
    }
}
