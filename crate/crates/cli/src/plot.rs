//! SVG figures from training histories and rank tallies.

use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::commands::{HISTORY_FILE, RANKS_FILE};
use crate::error::{io_err, CliError, CliResult};

pub const QUALITY_FIGURE: &str = "quality_vs_sequences.svg";
pub const RANK_FIGURE: &str = "rank_histogram.svg";
pub const CDF_FIGURE: &str = "rank_cdf.svg";

type Table = (Vec<String>, Vec<Vec<Option<f64>>>);

fn read_table(path: &Path) -> CliResult<Table> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| CliError::Data(format!("{} is empty", path.display())))?
        .split('\t')
        .map(str::to_string)
        .collect();
    let rows = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let row: Vec<Option<f64>> = l.split('\t').map(|c| c.parse().ok()).collect();
            if row.len() == header.len() {
                Ok(row)
            } else {
                Err(CliError::Data(format!("ragged row in {}", path.display())))
            }
        })
        .collect::<CliResult<_>>()?;
    Ok((header, rows))
}

fn draw_err<E: std::fmt::Debug>(e: E) -> CliError {
    CliError::Data(format!("cannot draw figure: {e:?}"))
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// One panel per metric against the number of generator training sequences.
pub fn quality_curve(history: &Path, out: &Path) -> CliResult<()> {
    let (header, rows) = read_table(history)?;
    let x_col = header
        .iter()
        .position(|h| h == "g_sequences")
        .ok_or_else(|| CliError::Data("history has no g_sequences column".into()))?;
    let metrics: Vec<usize> = (0..header.len())
        .filter(|&c| !matches!(header[c].as_str(), "g_sequences" | "step"))
        .filter(|&c| rows.iter().any(|r| r[c].is_some()))
        .collect();
    let root = SVGBackend::new(out, (900, 260 * metrics.len().div_ceil(2).max(1) as u32)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let panels = root.split_evenly((metrics.len().div_ceil(2).max(1), 2));
    let xs: Vec<f64> = rows.iter().filter_map(|r| r[x_col]).collect();
    let (x0, x1) = range(xs.iter().copied());
    for (panel, &c) in panels.iter().zip(&metrics) {
        let pts: Vec<(f64, f64)> = rows.iter().filter_map(|r| Some((r[x_col]?, r[c]?))).collect();
        let (y0, y1) = range(pts.iter().map(|p| p.1));
        let mut chart = ChartBuilder::on(panel)
            .caption(&header[c], ("sans-serif", 16))
            .margin(8)
            .x_label_area_size(30)
            .y_label_area_size(50)
            .build_cartesian_2d(x0..x1, y0..y1)
            .map_err(draw_err)?;
        chart
            .configure_mesh()
            .x_desc("generator training sequences")
            .draw()
            .map_err(draw_err)?;
        chart.draw_series(LineSeries::new(pts.clone(), &BLUE)).map_err(draw_err)?;
        chart
            .draw_series(pts.iter().map(|&p| Circle::new(p, 3, BLUE.filled())))
            .map_err(draw_err)?;
    }
    root.present().map_err(draw_err)
}

fn rank_frequencies(ranks: &Path) -> CliResult<Vec<f64>> {
    let (header, rows) = read_table(ranks)?;
    let c = header
        .iter()
        .position(|h| h == "frequency")
        .ok_or_else(|| CliError::Data("rank table has no frequency column".into()))?;
    let f: Vec<f64> = rows.iter().map(|r| r[c].unwrap_or(0.0)).collect();
    if f.len() < 2 {
        return Err(CliError::Data("rank table needs at least two bins".into()));
    }
    Ok(f)
}

/// Occurrence of normalized ranks `k / N_p`, with the uniform level marked.
pub fn rank_histogram(ranks: &Path, out: &Path) -> CliResult<()> {
    let f = rank_frequencies(ranks)?;
    let n = f.len();
    let root = SVGBackend::new(out, (640, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let top = f.iter().copied().fold(1.0 / n as f64, f64::max) * 1.1;
    let mut chart = ChartBuilder::on(&root)
        .caption("normalized rank histogram", ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(55)
        .build_cartesian_2d(0.0..1.0, 0.0..top)
        .map_err(draw_err)?;
    chart
        .configure_mesh()
        .x_desc("normalized rank")
        .y_desc("frequency")
        .draw()
        .map_err(draw_err)?;
    let width = 1.0 / n as f64;
    chart
        .draw_series(f.iter().enumerate().map(|(k, &v)| {
            let x = k as f64 * width;
            Rectangle::new([(x, 0.0), (x + width, v)], BLUE.mix(0.6).filled())
        }))
        .map_err(draw_err)?;
    chart
        .draw_series(LineSeries::new([(0.0, 1.0 / n as f64), (1.0, 1.0 / n as f64)], &BLACK))
        .map_err(draw_err)?;
    root.present().map_err(draw_err)
}

/// Cumulative distribution of normalized ranks against the uniform one.
pub fn rank_cdf(ranks: &Path, out: &Path) -> CliResult<()> {
    let f = rank_frequencies(ranks)?;
    let n_p = (f.len() - 1) as f64;
    let root = SVGBackend::new(out, (520, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("normalized rank CDF", ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(45)
        .build_cartesian_2d(0.0..1.0, 0.0..1.0)
        .map_err(draw_err)?;
    chart
        .configure_mesh()
        .x_desc("normalized rank")
        .y_desc("cumulative frequency")
        .draw()
        .map_err(draw_err)?;
    let mut pts = vec![(0.0, 0.0)];
    let mut acc = 0.0;
    for (k, v) in f.iter().enumerate() {
        acc += v;
        pts.push((k as f64 / n_p, pts.last().expect("non-empty").1));
        pts.push((k as f64 / n_p, acc));
    }
    pts.push((1.0, acc));
    chart.draw_series(LineSeries::new(pts, &BLUE)).map_err(draw_err)?;
    chart
        .draw_series(LineSeries::new([(0.0, 0.0), (1.0, 1.0)], &BLACK))
        .map_err(draw_err)?;
    root.present().map_err(draw_err)
}

/// Draws every figure whose input exists in `input`; returns the files.
pub fn plot_dir(input: &Path, out: &Path) -> CliResult<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let mut made = Vec::new();
    let history = input.join(HISTORY_FILE);
    if history.exists() {
        let p = out.join(QUALITY_FIGURE);
        quality_curve(&history, &p)?;
        made.push(p);
    }
    let ranks = input.join(RANKS_FILE);
    if ranks.exists() {
        for (name, draw) in [(RANK_FIGURE, rank_histogram as fn(&Path, &Path) -> CliResult<()>), (CDF_FIGURE, rank_cdf)] {
            let p = out.join(name);
            draw(&ranks, &p)?;
            made.push(p);
        }
    }
    if made.is_empty() {
        return Err(CliError::Data(format!(
            "{} holds neither {HISTORY_FILE} nor {RANKS_FILE}",
            input.display()
        )));
    }
    Ok(made)
}
