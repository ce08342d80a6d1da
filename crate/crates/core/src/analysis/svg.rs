//! Self-contained SVG figures: group bars with the chick noise band, and
//! the t-SNE scatter.

use std::fmt::Write;

use super::{Metric, Report, TsneReport};

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const CHICK: &str = "#d62728";
const MACHINE: &str = "#1f77b4";

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    s
}

fn y_of(v: f64) -> f64 {
    let plot = H - TOP - BOTTOM;
    TOP + plot * (1.0 - v.clamp(0.0, 100.0) / 100.0)
}

/// Group means with SEM bars and agent dots on a 0 to 100 percent axis;
/// the chick noise band is drawn in red behind them.
pub fn bar_chart(report: &Report, metric: Metric) -> String {
    let (title, band) = match metric {
        Metric::Imprinting => (
            "Imprinting: time with imprinted object vs blank (%)",
            Some(report.reference.imprinting_band),
        ),
        Metric::Recognition => (
            "Recognition: time with imprinted vs unfamiliar object (%)",
            report.reference.recognition_band,
        ),
    };
    let mut s = header(title);
    for tick in [0.0, 25.0, 50.0, 75.0, 100.0] {
        let y = y_of(tick);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y}" x2="{}" y2="{y}" stroke="#dddddd"/><text x="{}" y="{}" text-anchor="end">{tick}</text>"##,
            W - RIGHT,
            LEFT - 6.0,
            y + 4.0
        );
    }
    if let Some(b) = band {
        let (y0, y1) = (y_of(b.center + b.halfwidth), y_of(b.center - b.halfwidth));
        let _ = writeln!(
            s,
            r#"<rect class="noise-band" x="{LEFT}" y="{y0}" width="{}" height="{}" fill="{CHICK}" fill-opacity="0.2"/>"#,
            W - LEFT - RIGHT,
            y1 - y0
        );
        let yc = y_of(b.center);
        let _ = writeln!(
            s,
            r#"<line x1="{LEFT}" y1="{yc}" x2="{}" y2="{yc}" stroke="{CHICK}" stroke-width="2"/>"#,
            W - RIGHT
        );
    } else {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end" fill="{CHICK}">no chick data</text>"#,
            W - RIGHT,
            TOP + 12.0
        );
    }
    let yc = y_of(50.0);
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{yc}" x2="{}" y2="{yc}" stroke="black" stroke-dasharray="4 4"/>"#,
        W - RIGHT
    );

    let groups = &report.population.groups;
    let slot = (W - LEFT - RIGHT) / groups.len().max(1) as f64;
    for (i, g) in groups.iter().enumerate() {
        let m = match metric {
            Metric::Imprinting => &g.imprinting,
            Metric::Recognition => &g.recognition,
        };
        let cx = LEFT + slot * (i as f64 + 0.5);
        let bw = slot * 0.5;
        let top = y_of(m.summary.mean);
        let _ = writeln!(
            s,
            r#"<rect class="bar" x="{}" y="{top}" width="{bw}" height="{}" fill="{MACHINE}" fill-opacity="0.6"/>"#,
            cx - bw / 2.0,
            y_of(0.0) - top
        );
        let (e0, e1) = (
            y_of(m.summary.mean + m.summary.sem),
            y_of(m.summary.mean - m.summary.sem),
        );
        let _ = writeln!(s, r#"<line x1="{cx}" y1="{e0}" x2="{cx}" y2="{e1}" stroke="black"/>"#);
        for a in report
            .agents
            .iter()
            .filter(|a| g.group == "all" || a.algorithm == g.group)
        {
            let v = match metric {
                Metric::Imprinting => a.imprinting,
                Metric::Recognition => a.recognition,
            };
            let _ = writeln!(
                s,
                r#"<circle cx="{cx}" cy="{}" r="2.5" fill="black" fill-opacity="0.6"/>"#,
                y_of(v)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{cx}" y="{}" text-anchor="middle">{} (n={})</text>"#,
            H - BOTTOM + 18.0,
            escape(&g.group),
            g.n_agents
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Chicks in red, machines in blue.
pub fn scatter(tsne: Option<&TsneReport>) -> String {
    let mut s = header("t-SNE of 12-viewpoint recognition behavior");
    let Some(t) = tsne else {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">not enough behavior vectors</text>"#,
            W / 2.0,
            H / 2.0
        );
        s.push_str("</svg>\n");
        return s;
    };
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &t.points {
        for (k, v) in [p.x, p.y].into_iter().enumerate() {
            lo[k] = lo[k].min(v);
            hi[k] = hi[k].max(v);
        }
    }
    let span = |k: usize| (hi[k] - lo[k]).max(1e-12);
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    for p in &t.points {
        let x = LEFT + pw * (p.x - lo[0]) / span(0);
        let y = TOP + ph * (1.0 - (p.y - lo[1]) / span(1));
        let fill = if p.subject == "chick" { CHICK } else { MACHINE };
        let _ = writeln!(
            s,
            r#"<circle class="{}" cx="{x}" cy="{y}" r="4" fill="{fill}"><title>{}</title></circle>"#,
            escape(&p.subject),
            escape(&p.label)
        );
    }
    let ly = H - 18.0;
    let _ = writeln!(
        s,
        r#"<circle cx="{LEFT}" cy="{ly}" r="4" fill="{CHICK}"/><text x="{}" y="{}">chicks ({})</text>"#,
        LEFT + 8.0,
        ly + 4.0,
        t.n_chick
    );
    let _ = writeln!(
        s,
        r#"<circle cx="{}" cy="{ly}" r="4" fill="{MACHINE}"/><text x="{}" y="{}">machines ({})</text>"#,
        LEFT + 140.0,
        LEFT + 148.0,
        ly + 4.0,
        t.n_machine
    );
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_markup() {
        assert_eq!(escape("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
    }

    #[test]
    fn empty_scatter_is_closed() {
        let s = scatter(None);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(!s.contains("href"));
    }
}
