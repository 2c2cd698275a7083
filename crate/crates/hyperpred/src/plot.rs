//! Static SVG plots. They are drawn from the CSV already on disk, never from
//! solver state, so plotting cannot change the numbers.

use std::error::Error;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::output::Table;

type PlotResult<T> = Result<T, Box<dyn Error>>;

const PALETTE: [RGBColor; 3] = [RGBColor(31, 119, 180), RGBColor(214, 39, 40), RGBColor(44, 160, 44)];

/// Draws `series` (label, values) against `t` into one chart.
pub fn line_chart(path: &Path, title: &str, t: &[f64], series: &[(&str, &[f64])]) -> PlotResult<()> {
    let finite = |s: &[f64]| -> Vec<(f64, f64)> {
        t.iter()
            .zip(s)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .map(|(&a, &b)| (a, b))
            .collect()
    };
    let data: Vec<Vec<(f64, f64)>> = series.iter().map(|(_, s)| finite(s)).collect();
    let all = data.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let pad = 0.05 * (y1 - y0).max(1e-12);
    let (y0, y1) = (y0 - pad, y1 + pad);

    let root = SVGBackend::new(path, (800, 450)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(x0..x1, y0..y1)?;
    chart.configure_mesh().x_desc("t").draw()?;
    for (k, ((label, _), pts)) in series.iter().zip(data).enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(pts, color.stroke_width(2)))?
            .label(*label)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    root.present()?;
    Ok(())
}

/// Norms, ODE state (with the reference, if any) and input from a
/// `scalars.csv` table.
pub fn render_all(table: &Table, dir: &Path) -> PlotResult<Vec<PathBuf>> {
    let col = |name: &str| {
        table
            .column(name)
            .ok_or_else(|| format!("scalars.csv has no column `{name}`"))
    };
    let t = col("t")?;
    let mut files = Vec::new();

    let path = dir.join("norms.svg");
    line_chart(
        &path,
        "state norms",
        t,
        &[("|w|inf", col("norm_w_inf")?), ("|X|inf", col("norm_X_inf")?)],
    )?;
    files.push(path);

    let path = dir.join("ode_state.svg");
    let mut series = vec![("X_1", col("X_1")?)];
    if let Some(r) = table.column("X_ref") {
        series.push(("X_ref", r));
    }
    line_chart(&path, "ODE state", t, &series)?;
    files.push(path);

    let path = dir.join("input.svg");
    line_chart(&path, "boundary input U", t, &[("U", col("U")?)])?;
    files.push(path);
    Ok(files)
}
