//! SVG learning curves: success rate and achieved-goal entropy per epoch,
//! one mean line per labeled curve set with a shaded ±1 std band.

use std::path::Path;

use plotters::prelude::*;

use crate::error::{MepError, Result};
use crate::trainer::{MeanStd, MetricCurves};

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(255, 127, 14),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

fn plot_err<E: std::fmt::Display>(e: E) -> MepError {
    MepError::Plot(e.to_string())
}

fn panel<DB: DrawingBackend>(
    area: &DrawingArea<DB, plotters::coord::Shift>,
    title: &str,
    y_label: &str,
    curves: &[(String, MetricCurves)],
    pick: fn(&MetricCurves) -> &[MeanStd],
) -> Result<()>
where
    DB::ErrorType: 'static,
{
    let x_max = curves
        .iter()
        .flat_map(|(_, c)| c.epochs.iter().copied())
        .fold(1.0f64, f64::max);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, c) in curves {
        for m in pick(c) {
            y_min = y_min.min(m.mean - m.std);
            y_max = y_max.max(m.mean + m.std);
        }
    }
    if !y_min.is_finite() || !y_max.is_finite() {
        return Err(MepError::Plot(format!("{title}: no finite values")));
    }
    let pad = ((y_max - y_min) * 0.05).max(0.01);
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(0.0..x_max, (y_min - pad)..(y_max + pad))
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("epoch")
        .y_desc(y_label)
        .draw()
        .map_err(plot_err)?;
    for (i, (label, c)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let series = pick(c);
        let band: Vec<(f64, f64)> = c
            .epochs
            .iter()
            .zip(series)
            .map(|(x, m)| (*x, m.mean + m.std))
            .chain(c.epochs.iter().zip(series).rev().map(|(x, m)| (*x, m.mean - m.std)))
            .collect();
        chart
            .draw_series(std::iter::once(Polygon::new(band, color.mix(0.2).filled())))
            .map_err(plot_err)?;
        chart
            .draw_series(LineSeries::new(
                c.epochs.iter().zip(series).map(|(x, m)| (*x, m.mean)),
                color.stroke_width(2),
            ))
            .map_err(plot_err)?
            .label(label.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .position(SeriesLabelPosition::LowerRight)
        .draw()
        .map_err(plot_err)?;
    Ok(())
}

/// Writes a two-panel SVG (success rate, goal entropy) to `out`.
pub fn render_curves(curves: &[(String, MetricCurves)], out: &Path) -> Result<()> {
    if curves.is_empty() {
        return Err(MepError::Plot("nothing to plot".into()));
    }
    for (label, c) in curves {
        if c.epochs.is_empty() || c.success.len() != c.epochs.len() || c.entropy.len() != c.epochs.len() {
            return Err(MepError::Plot(format!("curve `{label}` is empty or ragged")));
        }
    }
    let root = SVGBackend::new(out, (1100, 440)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let (left, right) = root.split_horizontally(550);
    panel(&left, "Success rate", "success rate", curves, |c| &c.success)?;
    panel(&right, "Achieved-goal entropy", "entropy (nats)", curves, |c| &c.entropy)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(offset: f64) -> MetricCurves {
        let m = |v: f64| MeanStd { mean: v, std: 0.1 };
        MetricCurves {
            epochs: vec![0.0, 1.0, 2.0],
            success: vec![m(0.1 + offset), m(0.4 + offset), m(0.5 + offset)],
            entropy: vec![m(1.0), m(1.5), m(2.0 + offset)],
        }
    }

    #[test]
    fn renders_labeled_curves() {
        let dir = std::env::temp_dir().join(format!("mep-plot-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let out = dir.join("two.svg");
        render_curves(
            &[("ddpg_her".into(), curve(0.0)), ("ddpg_her_mep".into(), curve(0.2))],
            &out,
        )
        .unwrap();
        let svg = std::fs::read_to_string(&out).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("ddpg_her_mep"));
        assert!(svg.contains("Achieved-goal entropy"));
        assert!(render_curves(&[], &out).is_err());
    }
}
