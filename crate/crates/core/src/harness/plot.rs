//! Line figures from result records (SVG).

use std::collections::BTreeMap;
use std::path::Path;

use plotters::prelude::*;

use super::results::{ResultRecord, CATEGORICAL_FIELDS, NUMERIC_FIELDS};
use crate::error::{Error, Result};

const SIZE: (u32, u32) = (720, 480);

/// Axis label with units where the field has them.
pub fn axis_label(field: &str) -> String {
    match field {
        "comm_snr_db" => "communication SNR (dB)".into(),
        "sense_snr_db" => "sensing SNR (dB)".into(),
        "psnr_db" => "PSNR (dB)".into(),
        "ssim" => "SSIM".into(),
        "sensing_accuracy" => "sensing accuracy".into(),
        "semantic_accuracy" => "semantic accuracy".into(),
        "latent_size" => "encoder output size".into(),
        "num_ranges" => "number of range bins".into(),
        "w_sen" => "sensing loss weight".into(),
        other => other.replace('_', " "),
    }
}

/// Points per group, sorted by x. Failed records and records without both
/// coordinates are skipped.
pub fn series(
    records: &[ResultRecord],
    x: &str,
    y: &str,
    group_by: &[&str],
) -> Result<BTreeMap<String, Vec<(f64, f64)>>> {
    let available = || format!("{}, {}", NUMERIC_FIELDS.join(", "), CATEGORICAL_FIELDS.join(", "));
    let Some(first) = records.first() else {
        return Err(Error::Plot(format!("no records to plot; record fields are: {}", available())));
    };
    first.numeric(x)?;
    first.numeric(y)?;
    for g in group_by {
        first.category(g)?;
    }
    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.is_failed()) {
        let (Some(xv), Some(yv)) = (r.numeric(x)?, r.numeric(y)?) else {
            continue;
        };
        let key = group_by
            .iter()
            .map(|g| Ok(format!("{g}={}", r.category(g)?)))
            .collect::<Result<Vec<_>>>()?
            .join(", ");
        groups.entry(key).or_default().push((xv, yv));
    }
    if groups.is_empty() {
        return Err(Error::Plot(format!(
            "no record has both {x} and {y}; record fields are: {}",
            available()
        )));
    }
    for pts in groups.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    }
    Ok(groups)
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    let pad = if span > 0.0 { 0.05 * span } else { 0.5_f64.max(lo.abs() * 0.05) };
    (lo - pad, hi + pad)
}

fn draw_error(e: impl std::fmt::Display) -> Error {
    Error::Plot(e.to_string())
}

/// Writes one line per group to an SVG file; returns the number of lines.
pub fn plot(records: &[ResultRecord], x: &str, y: &str, group_by: &[&str], out: &Path) -> Result<usize> {
    match out.extension().and_then(|e| e.to_str()) {
        Some("svg") => {}
        _ => return Err(Error::Plot(format!("{}: output must be an .svg file", out.display()))),
    }
    let groups = series(records, x, y, group_by)?;
    let all = groups.values().flatten();
    let (x_lo, x_hi) = all.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (y_lo, y_hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let (x_lo, x_hi) = padded(x_lo, x_hi);
    let (y_lo, y_hi) = padded(y_lo, y_hi);

    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let root = SVGBackend::new(out, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(draw_error)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(16)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .caption(format!("{} vs {}", axis_label(y), axis_label(x)), ("sans-serif", 18))
        .build_cartesian_2d(x_lo..x_hi, y_lo..y_hi)
        .map_err(draw_error)?;
    chart
        .configure_mesh()
        .x_desc(axis_label(x))
        .y_desc(axis_label(y))
        .draw()
        .map_err(draw_error)?;
    for (i, (name, pts)) in groups.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
            .map_err(draw_error)?
            .label(if name.is_empty() { y.to_string() } else { name.clone() })
            .legend(move |(lx, ly)| PathElement::new(vec![(lx, ly), (lx + 16, ly)], color.stroke_width(2)));
        chart
            .draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled())))
            .map_err(draw_error)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(draw_error)?;
    root.present().map_err(draw_error)?;
    Ok(groups.len())
}
