//! Hand-rolled SVG rendering for the three figure styles the experiments
//! need: reward curves per iteration, visit-frequency bars, and state
//! trajectories. Plotting only reads metrics files, never writes them.

use std::path::{Path, PathBuf};

use super::metrics::{moving_average, read_metrics_csv, visit_frequency, MetricsRow};
use super::{HarnessError, Result};
use crate::envs::EnvId;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 50.0;
const MARGIN_B: f64 = 60.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Reward,
    Visits,
    Trajectory,
}

impl PlotKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "reward" => Some(PlotKind::Reward),
            "visits" => Some(PlotKind::Visits),
            "trajectory" => Some(PlotKind::Trajectory),
            _ => None,
        }
    }
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn around(points: impl Iterator<Item = (f64, f64)>) -> Frame {
        let mut f = Frame {
            x_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_min: f64::INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for (x, y) in points {
            f.x_min = f.x_min.min(x);
            f.x_max = f.x_max.max(x);
            f.y_min = f.y_min.min(y);
            f.y_max = f.y_max.max(y);
        }
        if !f.x_min.is_finite() {
            (f.x_min, f.x_max, f.y_min, f.y_max) = (0.0, 1.0, 0.0, 1.0);
        }
        if f.x_min == f.x_max {
            f.x_max += 1.0;
        }
        if f.y_min == f.y_max {
            f.y_max += 1.0;
        }
        f
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B
            - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn svg_header(title: &str, xlabel: &str, ylabel: &str, frame: &Frame) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"28\" text-anchor=\"middle\" font-size=\"18\">{}</text>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n\
         <text x=\"18\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\" \
         transform=\"rotate(-90 18 {})\">{}</text>\n",
        WIDTH / 2.0,
        escape(title),
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 18.0,
        escape(xlabel),
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(ylabel),
    );
    // axes
    s.push_str(&format!(
        "<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"black\"/>\n",
        l = MARGIN_L,
        r = WIDTH - MARGIN_R,
        t = MARGIN_T,
        b = HEIGHT - MARGIN_B,
    ));
    // extreme tick labels
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{:.6}</text>\n\
         <text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{:.6}</text>\n\
         <text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{:.6}</text>\n\
         <text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{:.6}</text>\n",
        MARGIN_L,
        HEIGHT - MARGIN_B + 16.0,
        frame.x_min,
        WIDTH - MARGIN_R,
        HEIGHT - MARGIN_B + 16.0,
        frame.x_max,
        MARGIN_L - 6.0,
        HEIGHT - MARGIN_B,
        frame.y_min,
        MARGIN_L - 6.0,
        MARGIN_T + 10.0,
        frame.y_max,
    ));
    s
}

fn legend(names: &[&str]) -> String {
    let mut s = String::new();
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN_T + 16.0 * i as f64;
        s.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"4\" fill=\"{}\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"12\">{}</text>\n",
            WIDTH - MARGIN_R - 150.0,
            y,
            PALETTE[i % PALETTE.len()],
            WIDTH - MARGIN_R - 132.0,
            y + 6.0,
            escape(name),
        ));
    }
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render_line_plot(series: &[Series], title: &str, xlabel: &str, ylabel: &str) -> String {
    let frame = Frame::around(series.iter().flat_map(|s| s.points.iter().copied()));
    let mut svg = svg_header(title, xlabel, ylabel, &frame);
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            pts.join(" "),
            PALETTE[i % PALETTE.len()],
        ));
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    svg.push_str(&legend(&names));
    svg.push_str("</svg>\n");
    svg
}

/// Grouped bars: one group per x position, one bar per series.
pub fn render_bar_chart(series: &[Series], title: &str, xlabel: &str, ylabel: &str) -> String {
    let frame = {
        let mut f = Frame::around(series.iter().flat_map(|s| s.points.iter().copied()));
        f.y_min = f.y_min.min(0.0);
        f.x_min -= 0.5;
        f.x_max += 0.5;
        f
    };
    let mut svg = svg_header(title, xlabel, ylabel, &frame);
    let k = series.len().max(1) as f64;
    let group_width = 0.8;
    let bar_width = group_width / k;
    for (i, s) in series.iter().enumerate() {
        for &(x, y) in &s.points {
            let left = x - group_width / 2.0 + i as f64 * bar_width;
            let x0 = frame.px(left);
            let x1 = frame.px(left + bar_width);
            let y0 = frame.py(y.max(0.0));
            let y1 = frame.py(0.0f64.min(y).max(frame.y_min));
            svg.push_str(&format!(
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>\n",
                x0,
                y0,
                (x1 - x0).max(0.5),
                (y1 - y0).abs().max(0.5),
                PALETTE[i % PALETTE.len()],
            ));
        }
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    svg.push_str(&legend(&names));
    svg.push_str("</svg>\n");
    svg
}

pub fn render_scatter(series: &[Series], title: &str, xlabel: &str, ylabel: &str) -> String {
    let frame = Frame::around(series.iter().flat_map(|s| s.points.iter().copied()));
    let mut svg = svg_header(title, xlabel, ylabel, &frame);
    for (i, s) in series.iter().enumerate() {
        for &(x, y) in &s.points {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{}\" fill-opacity=\"0.7\"/>\n",
                frame.px(x),
                frame.py(y),
                PALETTE[i % PALETTE.len()],
            ));
        }
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    svg.push_str(&legend(&names));
    svg.push_str("</svg>\n");
    svg
}

fn run_label(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Renders one figure over the metrics of the given run directories and
/// writes it to `out`.
pub fn emit_plot(runs: &[PathBuf], kind: PlotKind, out: &Path) -> Result<()> {
    let mut loaded: Vec<(String, Vec<MetricsRow>)> = Vec::with_capacity(runs.len());
    for dir in runs {
        let rows = read_metrics_csv(&dir.join("metrics.csv"))?;
        loaded.push((run_label(dir), rows));
    }
    let svg = match kind {
        PlotKind::Reward => {
            let series: Vec<Series> = loaded
                .iter()
                .map(|(name, rows)| {
                    let raw: Vec<f64> = rows.iter().map(|r| r.plotted_reward).collect();
                    let smooth = moving_average(&raw, 20);
                    Series {
                        name: name.clone(),
                        // one iteration = 20 episodes
                        points: smooth
                            .iter()
                            .enumerate()
                            .map(|(i, &y)| ((i + 1) as f64 / 20.0, y))
                            .collect(),
                    }
                })
                .collect();
            render_line_plot(&series, "reward (20-episode moving average)", "iteration", "reward")
        }
        PlotKind::Visits => {
            let mut series = Vec::with_capacity(loaded.len());
            for (name, rows) in &loaded {
                let n = rows
                    .first()
                    .and_then(|r| r.visit_bitmap.as_ref())
                    .map(|b| b.len())
                    .ok_or_else(|| HarnessError::NoVisitBitmaps(EnvId::CartPole))?;
                let freq = visit_frequency(EnvId::Chain(n), rows, rows.len().max(1))?;
                series.push(Series {
                    name: name.clone(),
                    points: freq
                        .iter()
                        .enumerate()
                        .map(|(i, &f)| ((i + 1) as f64, f))
                        .collect(),
                });
            }
            render_bar_chart(&series, "state visit frequency", "state", "frequency")
        }
        PlotKind::Trajectory => {
            let series: Vec<Series> = loaded
                .iter()
                .map(|(name, rows)| Series {
                    name: name.clone(),
                    points: rows
                        .iter()
                        .filter_map(|r| r.max_state.map(|s| (r.episode as f64, s as f64)))
                        .collect(),
                })
                .collect();
            render_scatter(&series, "deepest state per episode", "episode", "state")
        }
    };
    std::fs::write(out, svg)?;
    Ok(())
}
