use std::path::Path;

use plotters::prelude::*;

use super::config::Algorithm;
use super::experiment::SummaryRow;
use super::HarnessError;

const COLORS: [RGBColor; 4] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
];

fn series(rows: &[SummaryRow], value: impl Fn(&SummaryRow) -> f64) -> Vec<(Algorithm, Vec<(f64, f64)>)> {
    let mut out: Vec<(Algorithm, Vec<(f64, f64)>)> = Vec::new();
    for r in rows {
        let v = value(r);
        if !v.is_finite() {
            continue;
        }
        match out.iter_mut().find(|(a, _)| *a == r.algorithm) {
            Some((_, pts)) => pts.push((r.n as f64, v)),
            None => out.push((r.algorithm, vec![(r.n as f64, v)])),
        }
    }
    for (_, pts) in &mut out {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    out
}

fn x_range(rows: &[SummaryRow]) -> std::ops::Range<f64> {
    let lo = rows.iter().map(|r| r.n).min().unwrap_or(1) as f64;
    let hi = rows.iter().map(|r| r.n).max().unwrap_or(2) as f64;
    (lo - 0.5)..(hi + 0.5)
}

fn plot_error(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Runtime(format!("plot: {e}"))
}

/// Mean total relative error against N on a logarithmic axis.
pub fn plot_errors(path: &Path, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    let data = series(rows, |r| r.mean_error.max(f64::MIN_POSITIVE));
    let values = data.iter().flat_map(|(_, p)| p.iter().map(|q| q.1));
    let lo = values.clone().fold(f64::INFINITY, f64::min);
    let hi = values.fold(0.0, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > 0.0 {
        (lo / 2.0, hi * 2.0)
    } else {
        (1e-12, 1.0)
    };
    let root = SVGBackend::new(path, (800, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_error)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Total relative error", ("sans-serif", 22))
        .margin(16)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(x_range(rows), (lo..hi).log_scale())
        .map_err(plot_error)?;
    chart
        .configure_mesh()
        .x_desc("N")
        .y_desc("mean total relative error")
        .y_label_formatter(&|v| format!("{v:.0e}"))
        .draw()
        .map_err(plot_error)?;
    draw_series(&mut chart, &data)?;
    root.present().map_err(plot_error)?;
    Ok(())
}

/// Mean selection time against N.
pub fn plot_times(path: &Path, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    let data = series(rows, |r| r.mean_seconds);
    let hi = data
        .iter()
        .flat_map(|(_, p)| p.iter().map(|q| q.1))
        .fold(0.0, f64::max)
        .max(1e-3);
    let root = SVGBackend::new(path, (800, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_error)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Selection time", ("sans-serif", 22))
        .margin(16)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(x_range(rows), 0.0..hi * 1.1)
        .map_err(plot_error)?;
    chart
        .configure_mesh()
        .x_desc("N")
        .y_desc("mean seconds")
        .draw()
        .map_err(plot_error)?;
    draw_series(&mut chart, &data)?;
    root.present().map_err(plot_error)?;
    Ok(())
}

fn draw_series<'a, DB, CT>(
    chart: &mut ChartContext<'a, DB, CT>,
    data: &[(Algorithm, Vec<(f64, f64)>)],
) -> Result<(), HarnessError>
where
    DB: DrawingBackend + 'a,
    CT: CoordTranslate<From = (f64, f64)>,
{
    for (algorithm, pts) in data {
        let color = COLORS[Algorithm::ALL.iter().position(|a| a == algorithm).unwrap_or(0)];
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(plot_error)?
            .label(algorithm.name())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        chart
            .draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled())))
            .map_err(plot_error)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(plot_error)?;
    Ok(())
}
