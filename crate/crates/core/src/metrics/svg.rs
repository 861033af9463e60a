use std::fmt::Write as _;
use std::io::Write;

use super::{EgoTrack, MetricsError};
use crate::data::{Dataset, Lane, Road};

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 640.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 110.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLOR_STEPS: usize = 12;

/// Time and position ranges of a diagram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub t: [f64; 2],
    pub x: [f64; 2],
}

impl Window {
    fn contains(&self, t: f64, x: f64) -> bool {
        t >= self.t[0] && t <= self.t[1] && x >= self.x[0] && x <= self.x[1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    pub window: Window,
    /// Only recorded samples in this lane; all lanes when `None`.
    pub lane: Option<Lane>,
    /// Recorded trajectories from this road; all roads when `None`.
    pub road: Option<Road>,
    /// Top of the colour scale, m/s.
    pub free_flow: f64,
}

struct Frame {
    window: Window,
}

impl Frame {
    fn px(&self, t: f64) -> f64 {
        let [a, b] = self.window.t;
        LEFT + (t - a) / (b - a) * (WIDTH - LEFT - RIGHT)
    }

    // direction of travel points up
    fn py(&self, x: f64) -> f64 {
        let [a, b] = self.window.x;
        TOP + (b - x) / (b - a) * (HEIGHT - TOP - BOTTOM)
    }
}

/// Red at standstill through yellow to green at free flow.
fn speed_color(frac: f64) -> String {
    let f = frac.clamp(0.0, 1.0);
    let (r, g) = if f < 0.5 {
        (220.0, 40.0 + 360.0 * f)
    } else {
        (220.0 - 400.0 * (f - 0.5), 220.0)
    };
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, 60)
}

fn bucket(vel: f64, free_flow: f64) -> usize {
    let f = (vel / free_flow).clamp(0.0, 1.0);
    ((f * COLOR_STEPS as f64) as usize).min(COLOR_STEPS - 1)
}

fn bucket_color(b: usize) -> String {
    speed_color((b as f64 + 0.5) / COLOR_STEPS as f64)
}

fn nice_step(span: f64, target_ticks: f64) -> f64 {
    let raw = span / target_ticks;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag)
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn polyline(out: &mut String, pts: &[(f64, f64)], stroke: &str, width: f64) {
    let _ = write!(
        out,
        r#"<polyline fill="none" stroke="{stroke}" stroke-width="{width}" points=""#
    );
    for (i, (x, y)) in pts.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{x:.2},{y:.2}");
    }
    out.push_str("\"/>\n");
}

/// Time-space diagram: time runs to the right, position up. Recorded
/// trajectories are drawn as speed-coloured polylines and the simulated ego
/// as a heavy dark overlay.
pub fn render_time_space<W: Write>(
    ego: &EgoTrack,
    dataset: &Dataset,
    opts: &RenderOptions,
    mut w: W,
) -> Result<(), MetricsError> {
    let win = opts.window;
    if !(win.t[1] > win.t[0] && win.x[1] > win.x[0]) {
        return Err(MetricsError::EmptyWindow);
    }
    let ego_pts: Vec<(f64, f64)> = ego
        .points
        .iter()
        .filter(|p| win.contains(p.t, p.x))
        .map(|p| (p.t, p.x))
        .collect();
    if ego_pts.is_empty() {
        return Err(MetricsError::EmptyWindow);
    }
    let frame = Frame { window: win };
    let free_flow = if opts.free_flow > 0.0 {
        opts.free_flow
    } else {
        30.0
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let (pl, pr, pt, pb) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        out,
        r#"<rect x="{pl}" y="{pt}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        pr - pl,
        pb - pt
    );

    // axes
    let t_step = nice_step(win.t[1] - win.t[0], 8.0);
    for k in (0..).map(|i| i as f64 * t_step) {
        if k > win.t[1] - win.t[0] + 1e-9 {
            break;
        }
        let x = frame.px(win.t[0] + k);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{pb}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            pb + 5.0,
            pb + 20.0,
            tick_label(k)
        );
    }
    let x_step = nice_step(win.x[1] - win.x[0], 8.0);
    let first = (win.x[0] / x_step).ceil();
    for xv in (0..).map(|i| (first + i as f64) * x_step) {
        if xv > win.x[1] + 1e-9 {
            break;
        }
        let y = frame.py(xv);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{pl}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            pl - 5.0,
            pl - 8.0,
            y + 4.0,
            tick_label(xv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">time since {} (s)</text>"#,
        0.5 * (pl + pr),
        HEIGHT - 15.0,
        win.t[0]
    );
    let _ = writeln!(
        out,
        r#"<text transform="translate(20 {:.2}) rotate(-90)" text-anchor="middle">position along road (m)</text>"#,
        0.5 * (pt + pb)
    );

    // recorded trajectories, split into runs of equal colour bucket
    let _ = writeln!(out, r#"<g stroke-linecap="round">"#);
    for tr in dataset.tracks() {
        if opts.road.is_some_and(|r| r != tr.road) {
            continue;
        }
        let mut run: Vec<(f64, f64)> = Vec::new();
        let mut run_bucket = usize::MAX;
        for pair in tr.samples.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let keep = win.contains(a.t, a.x)
                && win.contains(b.t, b.x)
                && opts.lane.is_none_or(|l| a.lane == l && b.lane == l);
            let bk = bucket(0.5 * (a.vel + b.vel), free_flow);
            if !keep || bk != run_bucket {
                if run.len() >= 2 {
                    polyline(&mut out, &run, &bucket_color(run_bucket), 1.0);
                }
                run.clear();
            }
            if keep {
                if run.is_empty() {
                    run.push((frame.px(a.t), frame.py(a.x)));
                }
                run.push((frame.px(b.t), frame.py(b.x)));
                run_bucket = bk;
            }
        }
        if run.len() >= 2 {
            polyline(&mut out, &run, &bucket_color(run_bucket), 1.0);
        }
    }
    out.push_str("</g>\n");

    // simulated ego
    let pts: Vec<(f64, f64)> = ego_pts
        .iter()
        .map(|&(t, x)| (frame.px(t), frame.py(x)))
        .collect();
    if pts.len() == 1 {
        let (x, y) = pts[0];
        let _ = writeln!(
            out,
            r##"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="#1a1a80"/>"##
        );
    }
    polyline(&mut out, &pts, "#1a1a80", 3.0);

    // colour bar
    let bar_x = pr + 25.0;
    let bar_h = (pb - pt) / COLOR_STEPS as f64;
    for b in 0..COLOR_STEPS {
        let y = pb - (b + 1) as f64 * bar_h;
        let _ = writeln!(
            out,
            r#"<rect x="{bar_x:.2}" y="{y:.2}" width="16" height="{bar_h:.2}" fill="{}"/>"#,
            bucket_color(b)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}">0 m/s</text><text x="{:.2}" y="{:.2}">{free_flow} m/s</text>"#,
        bar_x + 20.0,
        pb,
        bar_x + 20.0,
        pt + 10.0
    );
    let _ = writeln!(
        out,
        r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#1a1a80" stroke-width="3"/><text x="{:.2}" y="{:.2}">simulated ego {}</text>"##,
        pl,
        pt - 15.0,
        pl + 30.0,
        pt - 15.0,
        pl + 36.0,
        pt - 11.0,
        xml_escape(&ego.id)
    );
    out.push_str("</svg>\n");
    w.write_all(out.as_bytes())?;
    Ok(())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
