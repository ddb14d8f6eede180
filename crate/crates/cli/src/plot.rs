//! SVG figures drawn from the CSV files the experiments write. Every
//! function here reads only its input files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use plotters::coord::Shift;
use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use doa_core::dynamics::PassingRule;
use doa_core::env::trace::EpisodeTrace;
use doa_core::harness::aggregate::{read_curve_csv, CurvePoint};
use doa_core::predictor::{EpochRecord, HorizonQuantiles};

const SIZE: (u32, u32) = (900, 600);
const FONT: &str = "sans-serif";
const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

/// The figure sibling of a data file: same stem, `.svg`.
pub fn svg_sibling(csv: &Path) -> PathBuf {
    csv.with_extension("svg")
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    if rows.is_empty() {
        bail!("{} has no data rows", path.display());
    }
    Ok(rows)
}

/// Padded `(min, max)` of the values; a degenerate range is widened.
fn span(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo {
        0.05 * (hi - lo)
    } else {
        lo.abs().max(1.0) * 0.1
    };
    (lo - pad, hi + pad)
}

fn canvas(path: &Path) -> DrawingArea<SVGBackend<'_>, Shift> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).expect("filling an in-memory svg");
    root
}

fn legend_line(color: RGBColor) -> impl Fn((i32, i32)) -> PathElement<(i32, i32)> {
    move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2))
}

/// Predictor training and validation loss per epoch, log scale.
pub fn plot_loss(csv: &Path, svg: &Path) -> Result<()> {
    let rows: Vec<EpochRecord> = read_rows(csv)?;
    let floor = 1e-12;
    let (lo, hi) = span(
        rows.iter()
            .flat_map(|r| [r.train_mse, r.validation_mse])
            .map(|v| v.max(floor)),
    );
    let x_max = rows.last().map_or(1, |r| r.epoch).max(1) as f64;
    let root = canvas(svg);
    let mut chart = ChartBuilder::on(&root)
        .caption("Predictor training", (FONT, 22))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(0.0..x_max, (lo.max(floor)..hi.max(floor * 10.0)).log_scale())?;
    chart.configure_mesh().x_desc("epoch").y_desc("MSE (m²)").draw()?;
    for (k, (name, pick)) in [
        ("train", (|r: &EpochRecord| r.train_mse) as fn(&EpochRecord) -> f64),
        ("validation", |r: &EpochRecord| r.validation_mse),
    ]
    .into_iter()
    .enumerate()
    {
        let color = PALETTE[k];
        chart
            .draw_series(LineSeries::new(
                rows.iter().map(|r| (r.epoch as f64, pick(r).max(floor))),
                color.stroke_width(2),
            ))?
            .label(name)
            .legend(legend_line(color));
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.8))
        .draw()?;
    root.present()?;
    Ok(())
}

/// RMSE quantile curves over the forecast horizon.
pub fn plot_rmse(csv: &Path, svg: &Path) -> Result<()> {
    let rows: Vec<HorizonQuantiles> = read_rows(csv)?;
    let (_, hi) = span(rows.iter().map(|r| r.q90));
    let x_max = rows.last().map_or(1, |r| r.horizon) as f64;
    let root = canvas(svg);
    let mut chart = ChartBuilder::on(&root)
        .caption("Forecast RMSE by horizon", (FONT, 22))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..x_max, 0.0..hi.max(1e-9))?;
    chart
        .configure_mesh()
        .x_desc("forecast horizon (steps)")
        .y_desc("RMSE (m)")
        .draw()?;
    type Pick = fn(&HorizonQuantiles) -> f64;
    let series: [(&str, Pick); 4] = [
        ("25%", |r| r.q25),
        ("50%", |r| r.q50),
        ("75%", |r| r.q75),
        ("90%", |r| r.q90),
    ];
    for (k, (name, pick)) in series.into_iter().enumerate() {
        let color = PALETTE[k];
        chart
            .draw_series(LineSeries::new(
                rows.iter().map(|r| (r.horizon as f64, pick(r))),
                color.stroke_width(2),
            ))?
            .label(format!("{name} quantile"))
            .legend(legend_line(color));
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.8))
        .draw()?;
    root.present()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
pub struct OverlayRow {
    pub trajectory: usize,
    pub kind: String,
    pub t_step: usize,
    pub x: f64,
    pub y: f64,
}

/// Observed window, true continuation and forecast for each trajectory.
pub fn plot_overlay(csv: &Path, svg: &Path) -> Result<()> {
    let rows: Vec<OverlayRow> = read_rows(csv)?;
    let mut groups: BTreeMap<(usize, String), Vec<(f64, f64)>> = BTreeMap::new();
    for r in &rows {
        groups
            .entry((r.trajectory, r.kind.clone()))
            .or_default()
            .push((r.x, r.y));
    }
    let (x0, x1) = span(rows.iter().map(|r| r.x));
    let (y0, y1) = span(rows.iter().map(|r| r.y));
    let root = canvas(svg);
    let mut chart = ChartBuilder::on(&root)
        .caption("Forecast vs. truth", (FONT, 22))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)?;
    chart.configure_mesh().x_desc("x (m)").y_desc("y (m)").draw()?;
    let mut labelled = [false; 3];
    for ((traj, kind), pts) in &groups {
        let color = PALETTE[traj % PALETTE.len()];
        let (slot, style) = match kind.as_str() {
            "observed" => (0, color.stroke_width(4)),
            "truth" => (1, color.mix(0.5).stroke_width(2)),
            "predicted" => (2, color.stroke_width(1)),
            other => bail!("unknown overlay kind `{other}`"),
        };
        let anno = if slot == 2 {
            chart.draw_series(pts.iter().map(|&p| Circle::new(p, 2, color.filled())))?
        } else {
            chart.draw_series(LineSeries::new(pts.iter().copied(), style))?
        };
        if !labelled[slot] {
            labelled[slot] = true;
            let gray = RGBColor(90, 90, 90);
            match slot {
                0 => anno
                    .label("observed")
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], gray.stroke_width(4))),
                1 => anno
                    .label("truth")
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], gray.mix(0.5).stroke_width(2))),
                _ => anno
                    .label("predicted")
                    .legend(move |(x, y)| Circle::new((x + 10, y), 2, gray.filled())),
            };
        }
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.8))
        .draw()?;
    root.present()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
pub struct ProfileRow {
    pub obstacle_id: usize,
    pub j: i64,
    pub raw_distance: f64,
    pub smoothed_distance: f64,
}

/// Raw and smoothed distance curves with the CPA (minimum of the smoothed
/// curve, first on ties) marked. Uses the first obstacle in the file.
pub fn plot_profile(csv: &Path, svg: &Path) -> Result<()> {
    let all: Vec<ProfileRow> = read_rows(csv)?;
    let id = all[0].obstacle_id;
    let rows: Vec<&ProfileRow> = all.iter().filter(|r| r.obstacle_id == id).collect();
    let cpa = rows.iter().fold(rows[0], |best, r| {
        if r.smoothed_distance < best.smoothed_distance {
            r
        } else {
            best
        }
    });
    let (x0, x1) = span(rows.iter().map(|r| r.j as f64));
    let (_, hi) = span(rows.iter().flat_map(|r| [r.raw_distance, r.smoothed_distance]));
    let root = canvas(svg);
    let mut chart = ChartBuilder::on(&root)
        .caption("Distance to obstacle", (FONT, 22))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, 0.0..hi)?;
    chart
        .configure_mesh()
        .x_desc("relative step j")
        .y_desc("distance (m)")
        .draw()?;
    chart
        .draw_series(LineSeries::new(
            rows.iter().map(|r| (r.j as f64, r.raw_distance)),
            PALETTE[0].stroke_width(1),
        ))?
        .label("raw")
        .legend(legend_line(PALETTE[0]));
    chart
        .draw_series(LineSeries::new(
            rows.iter().map(|r| (r.j as f64, r.smoothed_distance)),
            PALETTE[1].stroke_width(2),
        ))?
        .label("smoothed")
        .legend(legend_line(PALETTE[1]));
    chart
        .draw_series(std::iter::once(Cross::new(
            (cpa.j as f64, cpa.smoothed_distance),
            8,
            BLACK.stroke_width(2),
        )))?
        .label(format!("CPA: j = {}, d = {:.1} m", cpa.j, cpa.smoothed_distance))
        .legend(|(x, y)| Cross::new((x + 10, y), 5, BLACK.stroke_width(2)));
    chart.draw_series(LineSeries::new([(0.0, 0.0), (0.0, hi)], BLACK.mix(0.3)))?;
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.8))
        .draw()?;
    root.present()?;
    Ok(())
}

/// Turns a variant directory name such as `sl-td3-stochastic` into the
/// legend label `SL-LSTM-TD3`.
pub fn variant_label(variant_id: &str) -> String {
    let (prefix, rest) = match variant_id.strip_prefix("sl-") {
        Some(rest) => ("SL-", rest),
        None => ("", variant_id),
    };
    let algo = rest.split('-').next().unwrap_or(rest).to_uppercase();
    format!("{prefix}LSTM-{algo}")
}

/// One row of a multi-variant learning-curve file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub variant: String,
    pub env_step: usize,
    pub mean_return: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_runs: usize,
}

/// Stacks labelled curves into one file, first-seen variant order.
pub fn write_combined_curves(csv: &Path, curves: &[(String, Vec<CurvePoint>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(csv).with_context(|| format!("writing {}", csv.display()))?;
    for (label, curve) in curves {
        for p in curve {
            w.serialize(CurveRow {
                variant: label.clone(),
                env_step: p.env_step,
                mean_return: p.mean_return,
                ci_low: p.ci_low,
                ci_high: p.ci_high,
                n_runs: p.n_runs,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_combined_curves(csv: &Path) -> Result<Vec<(String, Vec<CurvePoint>)>> {
    let rows: Vec<CurveRow> = read_rows(csv)?;
    let mut out: Vec<(String, Vec<CurvePoint>)> = Vec::new();
    for r in rows {
        let point = CurvePoint {
            env_step: r.env_step,
            mean_return: r.mean_return,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            n_runs: r.n_runs,
        };
        match out.iter_mut().find(|(v, _)| *v == r.variant) {
            Some((_, c)) => c.push(point),
            None => out.push((r.variant, vec![point])),
        }
    }
    Ok(out)
}

/// Mean evaluation return with its 95% band, one series per variant.
pub fn plot_learning_curves(data: &[(String, Vec<CurvePoint>)], svg: &Path) -> Result<()> {
    if data.is_empty() {
        bail!("no learning curves given");
    }
    let (x0, x1) = span(data.iter().flat_map(|(_, c)| c.iter().map(|p| p.env_step as f64)));
    let (y0, y1) = span(
        data.iter()
            .flat_map(|(_, c)| c.iter().flat_map(|p| [p.ci_low, p.ci_high])),
    );
    let root = canvas(svg);
    let mut chart = ChartBuilder::on(&root)
        .caption("Evaluation return", (FONT, 22))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0.max(0.0)..x1, y0..y1)?;
    chart
        .configure_mesh()
        .x_desc("environment steps")
        .y_desc("mean test return")
        .draw()?;
    for (k, (label, curve)) in data.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let band: Vec<(f64, f64)> = curve
            .iter()
            .map(|p| (p.env_step as f64, p.ci_high))
            .chain(curve.iter().rev().map(|p| (p.env_step as f64, p.ci_low)))
            .collect();
        chart.draw_series(std::iter::once(Polygon::new(band, color.mix(0.2).filled())))?;
        let n = curve.iter().map(|p| p.n_runs).max().unwrap_or(0);
        chart
            .draw_series(LineSeries::new(
                curve.iter().map(|p| (p.env_step as f64, p.mean_return)),
                color.stroke_width(2),
            ))?
            .label(format!("{label} (N = {n})"))
            .legend(legend_line(color));
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::LowerRight)
        .border_style(BLACK)
        .background_style(WHITE.mix(0.8))
        .draw()?;
    root.present()?;
    Ok(())
}

/// Top-down episode view: agent path, obstacle paths colored by passing
/// rule, black squares where the agent violated a rule.
pub fn plot_trace(csv: &Path, svg: &Path) -> Result<()> {
    let trace = EpisodeTrace::read_csv(csv)?;
    if trace.rows.is_empty() {
        bail!("{} has no data rows", csv.display());
    }
    // one path per (slot, generation)
    type Polyline = Vec<(f64, f64)>;
    let mut paths: BTreeMap<(usize, u64), (PassingRule, Polyline)> = BTreeMap::new();
    for row in &trace.rows {
        for (slot, o) in row.obstacles.iter().enumerate() {
            paths
                .entry((slot, o.generation))
                .or_insert_with(|| (o.rule, Vec::new()))
                .1
                .push((o.position.x, o.position.y));
        }
    }
    let agent: Vec<(f64, f64)> = trace
        .rows
        .iter()
        .map(|r| (r.agent.position.x, r.agent.position.y))
        .collect();
    let violations: Vec<(f64, f64)> = trace
        .rows
        .iter()
        .filter(|r| r.violations > 0)
        .map(|r| (r.agent.position.x, r.agent.position.y))
        .collect();
    let (x0, x1) = span(agent.iter().map(|p| p.0));
    let (y0, y1) = span(
        agent.iter().map(|p| p.1).chain(
            paths
                .values()
                .flat_map(|(_, pts)| pts.iter().filter(|p| p.0 >= x0 && p.0 <= x1).map(|p| p.1)),
        ),
    );
    let right = PALETTE[3];
    let left = PALETTE[0];
    let root = canvas(svg);
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("Episode, return {}", trace.total_reward()), (FONT, 22))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)?;
    chart.configure_mesh().x_desc("x (m)").y_desc("y (m)").draw()?;
    let mut seen = [false; 2];
    for (rule, pts) in paths.values() {
        let (color, idx, name) = match rule {
            PassingRule::Right => (right, 0, "obstacle, pass on right"),
            PassingRule::Left => (left, 1, "obstacle, pass on left"),
        };
        let visible: Vec<(f64, f64)> = pts.iter().copied().filter(|p| p.0 >= x0 && p.0 <= x1).collect();
        if visible.is_empty() {
            continue;
        }
        let anno = chart.draw_series(LineSeries::new(visible, color.mix(0.7).stroke_width(1)))?;
        if !seen[idx] {
            seen[idx] = true;
            anno.label(name).legend(legend_line(color));
        }
    }
    chart
        .draw_series(LineSeries::new(agent, BLACK.stroke_width(2)))?
        .label("agent")
        .legend(legend_line(BLACK));
    let n: usize = trace.rows.iter().map(|r| r.violations).sum();
    chart
        .draw_series(
            violations
                .into_iter()
                .map(|p| EmptyElement::at(p) + Rectangle::new([(-5, -5), (5, 5)], BLACK.filled())),
        )?
        .label(format!("violation ({n})"))
        .legend(|(x, y)| Rectangle::new([(x + 5, y - 5), (x + 15, y + 5)], BLACK.filled()));
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.8))
        .draw()?;
    root.present()?;
    Ok(())
}

/// Data files the `plot` subcommand recognizes, by header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    Loss,
    Rmse,
    Overlay,
    Profile,
    LearningCurve,
    /// Several labelled curves in one file.
    LearningCurves,
    Trace,
}

pub fn detect_kind(csv: &Path) -> Result<FigureKind> {
    let mut r = csv::Reader::from_path(csv).with_context(|| format!("reading {}", csv.display()))?;
    let headers = r.headers()?.clone();
    let first = headers.get(0).unwrap_or_default();
    Ok(match first {
        "epoch" => FigureKind::Loss,
        "horizon" => FigureKind::Rmse,
        "trajectory" => FigureKind::Overlay,
        "obstacle_id" => FigureKind::Profile,
        "env_step" if headers.iter().any(|h| h == "ci_low") => FigureKind::LearningCurve,
        "variant" => FigureKind::LearningCurves,
        "step" => FigureKind::Trace,
        _ => bail!("{}: unrecognized data file", csv.display()),
    })
}

/// Draws the figure for one data file next to it; returns the SVG path.
pub fn plot_file(csv: &Path) -> Result<PathBuf> {
    let svg = svg_sibling(csv);
    match detect_kind(csv)? {
        FigureKind::Loss => plot_loss(csv, &svg)?,
        FigureKind::Rmse => plot_rmse(csv, &svg)?,
        FigureKind::Overlay => plot_overlay(csv, &svg)?,
        FigureKind::Profile => plot_profile(csv, &svg)?,
        FigureKind::Trace => plot_trace(csv, &svg)?,
        FigureKind::LearningCurve => plot_learning_curves(&[(curve_label(csv), read_curve_csv(csv)?)], &svg)?,
        FigureKind::LearningCurves => plot_learning_curves(&read_combined_curves(csv)?, &svg)?,
    }
    Ok(svg)
}

/// Legend label of a learning curve stored as `<variant>/learning-curve.csv`.
pub fn curve_label(csv: &Path) -> String {
    csv.parent()
        .and_then(|p| p.file_name())
        .and_then(|n| n.to_str())
        .map(variant_label)
        .unwrap_or_else(|| "curve".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_from_variant_ids() {
        assert_eq!(variant_label("sl-td3-stochastic"), "SL-LSTM-TD3");
        assert_eq!(variant_label("sac-periodic"), "LSTM-SAC");
    }

    #[test]
    fn span_pads_and_widens() {
        assert_eq!(span([1.0, 1.0]), (0.9, 1.1));
        let (lo, hi) = span([0.0, 10.0, f64::NAN]);
        assert!(lo < 0.0 && hi > 10.0);
    }
}
