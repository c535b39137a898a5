//! Static SVG charts: the ablation grid (one panel per archetype, median
//! line and IQR band per adaptation level) and a single run's cost trace.

use crate::adapt::{AblationResults, AdaptationLevel, RunLog};
use std::fmt::Write;

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 220.0;
const MARGIN: f64 = 44.0;

fn level_colour(level: AdaptationLevel) -> &'static str {
    match level {
        AdaptationLevel::SpaceTime => "#1b9e77",
        AdaptationLevel::Space => "#d95f02",
        AdaptationLevel::Time => "#7570b3",
        AdaptationLevel::None => "#666666",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Maps data coordinates into one panel.
struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Frame {
    fn new(x0: f64, y0: f64, w: f64, h: f64, xmax: f64, lo: f64, hi: f64) -> Self {
        let pad = ((hi - lo) * 0.05).max(1e-6);
        Self {
            x0,
            y0,
            w,
            h,
            xmax: xmax.max(1.0),
            ymin: lo - pad,
            ymax: hi + pad,
        }
    }

    fn px(&self, x: f64) -> f64 {
        self.x0 + x / self.xmax * self.w
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + self.h - (y - self.ymin) / (self.ymax - self.ymin) * self.h
    }

    fn axes(&self, out: &mut String, title: &str, xlabel: &str) {
        let (x1, y1) = (self.x0 + self.w, self.y0 + self.h);
        let _ = writeln!(
            out,
            r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#999"/>"##,
            self.x0, self.y0, self.w, self.h
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">{}</text>"#,
            self.x0 + self.w / 2.0,
            self.y0 - 8.0,
            escape(title)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#,
            self.x0 + self.w / 2.0,
            y1 + 30.0,
            escape(xlabel)
        );
        for k in 0..=4 {
            let v = self.ymin + (self.ymax - self.ymin) * k as f64 / 4.0;
            let y = self.py(v);
            let _ = writeln!(
                out,
                r##"<line x1="{:.1}" y1="{y:.1}" x2="{x1:.1}" y2="{y:.1}" stroke="#eee"/><text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{v:.2}</text>"##,
                self.x0,
                self.x0 - 4.0,
                y + 3.0
            );
        }
        let ticks = self.xmax.round().max(1.0) as usize;
        let every = ticks.div_ceil(8).max(1);
        for k in (0..=ticks).step_by(every) {
            let x = self.px(k as f64);
            let _ = writeln!(
                out,
                r#"<text x="{x:.1}" y="{:.1}" font-size="10" text-anchor="middle">{k}</text>"#,
                y1 + 14.0
            );
        }
    }
}

fn polyline(out: &mut String, pts: &[(f64, f64)], colour: &str, dash: bool) {
    if pts.is_empty() {
        return;
    }
    let d: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
    let style = if dash { r#" stroke-dasharray="4 3""# } else { "" };
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.8"{style}/>"#,
        d.join(" ")
    );
}

fn svg_open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

/// Grid of panels, one per archetype, x = cycle, y = plan cost.
pub fn ablation_svg(results: &AblationResults) -> String {
    let archetypes = &results.config.archetypes;
    let cols = archetypes.len().clamp(1, 2);
    let rows = archetypes.len().div_ceil(cols).max(1);
    let cell_w = PANEL_W + 2.0 * MARGIN;
    let cell_h = PANEL_H + 2.0 * MARGIN;
    let legend_h = 30.0;
    let mut out = svg_open(cell_w * cols as f64, cell_h * rows as f64 + legend_h);

    for (k, &a) in archetypes.iter().enumerate() {
        let cells: Vec<_> = results.cells.iter().filter(|c| c.archetype == a).collect();
        let values = cells
            .iter()
            .flat_map(|c| c.per_cycle.iter().flat_map(|s| [s.q1, s.q3, s.median]))
            .filter(|v| v.is_finite());
        let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
        let cycles = cells.iter().map(|c| c.per_cycle.len()).max().unwrap_or(1);
        let f = Frame::new(
            (k % cols) as f64 * cell_w + MARGIN,
            (k / cols) as f64 * cell_h + MARGIN,
            PANEL_W,
            PANEL_H,
            cycles.saturating_sub(1) as f64,
            lo,
            hi,
        );
        f.axes(&mut out, &a.to_string(), "cycle");
        for c in &cells {
            let colour = level_colour(c.level);
            let stats: Vec<_> = c.per_cycle.iter().filter(|s| s.q1.is_finite() && s.q3.is_finite()).collect();
            if !stats.is_empty() {
                let mut band: Vec<String> = stats
                    .iter()
                    .map(|s| format!("{:.1},{:.1}", f.px(s.cycle as f64), f.py(s.q3)))
                    .collect();
                band.extend(
                    stats
                        .iter()
                        .rev()
                        .map(|s| format!("{:.1},{:.1}", f.px(s.cycle as f64), f.py(s.q1))),
                );
                let _ = writeln!(
                    out,
                    r#"<polygon points="{}" fill="{colour}" fill-opacity="0.15" stroke="none"/>"#,
                    band.join(" ")
                );
            }
            let line: Vec<(f64, f64)> = c
                .per_cycle
                .iter()
                .filter(|s| s.median.is_finite())
                .map(|s| (f.px(s.cycle as f64), f.py(s.median)))
                .collect();
            polyline(&mut out, &line, colour, false);
        }
    }

    let y = cell_h * rows as f64 + 12.0;
    for (k, l) in results.config.levels.iter().enumerate() {
        let x = MARGIN + k as f64 * 120.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="14" height="4" fill="{}"/><text x="{:.1}" y="{:.1}" font-size="12">{}</text>"#,
            y - 4.0,
            level_colour(*l),
            x + 20.0,
            y + 2.0,
            escape(l.name())
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Per-cycle costs of one run: reference plan cost (solid), planned cost
/// (dashed) and realised makespan (dotted grey).
pub fn run_svg(log: &RunLog, title: &str) -> String {
    let series: [(Vec<(f64, f64)>, &str, bool); 3] = [
        (
            log.records
                .iter()
                .filter_map(|r| r.reference.map(|c| (r.cycle as f64, c.cost)))
                .collect(),
            "#1b9e77",
            false,
        ),
        (
            log.records
                .iter()
                .filter_map(|r| r.planned_cost.map(|c| (r.cycle as f64, c)))
                .collect(),
            "#d95f02",
            true,
        ),
        (
            log.records
                .iter()
                .filter_map(|r| r.observation.as_ref().map(|o| (r.cycle as f64, o.makespan)))
                .collect(),
            "#888888",
            true,
        ),
    ];
    let all = series.iter().flat_map(|s| s.0.iter().map(|p| p.1)).filter(|v| v.is_finite());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    let xmax = log.records.last().map_or(1.0, |r| r.cycle as f64);
    let mut out = svg_open(PANEL_W + 2.0 * MARGIN, PANEL_H + 2.0 * MARGIN + 24.0);
    let f = Frame::new(MARGIN, MARGIN, PANEL_W, PANEL_H, xmax, lo, hi);
    f.axes(&mut out, title, "cycle");
    for (pts, colour, dash) in &series {
        let mapped: Vec<(f64, f64)> = pts.iter().map(|(x, y)| (f.px(*x), f.py(*y))).collect();
        polyline(&mut out, &mapped, colour, *dash);
    }
    let y = PANEL_H + 2.0 * MARGIN + 10.0;
    for (k, (name, colour)) in [("reference", "#1b9e77"), ("planned", "#d95f02"), ("realised makespan", "#888888")]
        .iter()
        .enumerate()
    {
        let x = MARGIN + k as f64 * 110.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="14" height="4" fill="{colour}"/><text x="{:.1}" y="{:.1}" font-size="11">{name}</text>"#,
            y - 4.0,
            x + 20.0,
            y + 2.0
        );
    }
    out.push_str("</svg>\n");
    out
}
