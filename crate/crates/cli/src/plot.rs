//! SVG rendering of one playback episode.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};

use navigan_core::playback::{read_episode_dump, EpisodeResult};
use navigan_core::Point;

const PANEL: f64 = 480.0;
const MARGIN: f64 = 24.0;

/// A panel to draw: the episode and a caption.
pub struct Panel<'a> {
    pub title: String,
    pub episode: &'a EpisodeResult,
}

/// Loads `dump`, picks episode `id` (its position in the dump), and renders
/// it at `step` (the final step when `None`). With `dagger`, the same
/// episode from a second dump is drawn alongside.
pub fn cmd_plot(dump: &Path, id: usize, dagger: Option<&Path>, step: Option<usize>, out: &Path) -> Result<()> {
    let main = load(dump)?;
    let ep = pick(&main, id, dump)?;
    let mut panels = vec![Panel {
        title: format!("{} agent {} from frame {}", ep.scene, ep.target_id, ep.start_frame),
        episode: ep,
    }];
    let other;
    if let Some(d) = dagger {
        other = load(d)?;
        let second = pick(&other, id, d)?;
        if (second.scene.as_str(), second.target_id, second.start_frame) != (ep.scene.as_str(), ep.target_id, ep.start_frame) {
            bail!("episode {id} differs between {} and {}", dump.display(), d.display());
        }
        panels[0].title = "full model".into();
        panels.push(Panel {
            title: "intention only \u{2020}".into(),
            episode: second,
        });
    }
    let svg = render(&panels, step)?;
    std::fs::write(out, svg).with_context(|| format!("writing {}", out.display()))
}

fn load(path: &Path) -> Result<Vec<EpisodeResult>> {
    read_episode_dump(path).with_context(|| format!("reading {}", path.display()))
}

fn pick<'a>(eps: &'a [EpisodeResult], id: usize, path: &Path) -> Result<&'a EpisodeResult> {
    let ep = eps
        .get(id)
        .with_context(|| format!("unknown episode {id}: {} holds {} episodes", path.display(), eps.len()))?;
    if ep.path.is_none() {
        bail!("{} has no per-step positions; evaluate with --dump-paths", path.display());
    }
    Ok(ep)
}

struct View {
    min: Point,
    scale: f64,
}

impl View {
    fn fit(points: impl Iterator<Item = Point>) -> View {
        let (mut lo, mut hi) = (Point::new(f64::INFINITY, f64::INFINITY), Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for p in points {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let span = (hi.x - lo.x).max(hi.y - lo.y).max(1.0) + 1.0;
        View {
            min: lo - Point::new(0.5, 0.5),
            scale: (PANEL - 2.0 * MARGIN) / span,
        }
    }

    /// SVG y grows downwards.
    fn map(&self, p: Point, x0: f64) -> (f64, f64) {
        (
            x0 + MARGIN + (p.x - self.min.x) * self.scale,
            PANEL - MARGIN - (p.y - self.min.y) * self.scale,
        )
    }
}

/// Renders the panels side by side. The target's executed footprints are
/// drawn solid red; others at the chosen step are grey with their two
/// preceding states dotted; the goal is a green cross.
pub fn render(panels: &[Panel<'_>], step: Option<usize>) -> Result<String> {
    let mut all = Vec::new();
    for p in panels {
        let path = p.episode.path.as_deref().unwrap_or_default();
        all.push(p.episode.goal);
        all.push(p.episode.start);
        all.extend(path.iter().map(|s| s.target));
        all.extend(path.iter().flat_map(|s| s.others.iter().map(|o| o.1)));
    }
    let view = View::fit(all.into_iter());
    let width = PANEL * panels.len() as f64;
    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{PANEL}\" viewBox=\"0 0 {width} {PANEL}\">"
    )?;
    writeln!(svg, "<rect width=\"{width}\" height=\"{PANEL}\" fill=\"white\"/>")?;
    for (k, panel) in panels.iter().enumerate() {
        let x0 = k as f64 * PANEL;
        draw_panel(&mut svg, panel, &view, x0, step)?;
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn draw_panel(svg: &mut String, panel: &Panel<'_>, view: &View, x0: f64, step: Option<usize>) -> Result<()> {
    let ep = panel.episode;
    let path = ep.path.as_deref().unwrap_or_default();
    if path.is_empty() {
        bail!("episode has no recorded steps");
    }
    let t = step.unwrap_or(path.len() - 1);
    if t >= path.len() {
        bail!("step {t} out of range: episode has {} snapshots", path.len());
    }
    writeln!(
        svg,
        "<rect x=\"{x0}\" y=\"0\" width=\"{PANEL}\" height=\"{PANEL}\" fill=\"none\" stroke=\"#888\"/>"
    )?;
    writeln!(
        svg,
        "<text x=\"{}\" y=\"16\" font-family=\"sans-serif\" font-size=\"13\">{} (step {t})</text>",
        x0 + 8.0,
        escape(&panel.title)
    )?;

    // Other agents: current state solid, two previous states dotted.
    let mut history: BTreeMap<i64, Vec<Point>> = BTreeMap::new();
    for snap in &path[t.saturating_sub(2)..=t] {
        for &(id, p) in &snap.others {
            history.entry(id).or_default().push(p);
        }
    }
    let now: BTreeMap<i64, Point> = path[t].others.iter().copied().collect();
    for (id, trail) in &history {
        let Some(&cur) = now.get(id) else { continue };
        if trail.len() > 1 {
            let pts: Vec<String> = trail
                .iter()
                .map(|&p| {
                    let (x, y) = view.map(p, x0);
                    format!("{x:.1},{y:.1}")
                })
                .collect();
            writeln!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"#777\" stroke-dasharray=\"2,3\"/>",
                pts.join(" ")
            )?;
            for &p in &trail[..trail.len() - 1] {
                let (x, y) = view.map(p, x0);
                writeln!(
                    svg,
                    "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"3\" fill=\"none\" stroke=\"#777\" stroke-dasharray=\"1,2\"/>"
                )?;
            }
        }
        let (x, y) = view.map(cur, x0);
        writeln!(svg, "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"4\" fill=\"#777\"/>")?;
    }

    // Target footprints up to the chosen step.
    let mut target = vec![ep.start];
    target.extend(path[..=t].iter().map(|s| s.target));
    let pts: Vec<String> = target
        .iter()
        .map(|&p| {
            let (x, y) = view.map(p, x0);
            format!("{x:.1},{y:.1}")
        })
        .collect();
    writeln!(
        svg,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\"/>",
        pts.join(" ")
    )?;
    for &p in &target {
        let (x, y) = view.map(p, x0);
        writeln!(svg, "<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"3.5\" fill=\"#d62728\"/>")?;
    }

    let (gx, gy) = view.map(ep.goal, x0);
    writeln!(
        svg,
        "<path d=\"M{:.1},{:.1} L{:.1},{:.1} M{:.1},{:.1} L{:.1},{:.1}\" stroke=\"#2ca02c\" stroke-width=\"2.5\"/>",
        gx - 6.0,
        gy - 6.0,
        gx + 6.0,
        gy + 6.0,
        gx - 6.0,
        gy + 6.0,
        gx + 6.0,
        gy - 6.0
    )?;
    Ok(())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
