//! PNG export: spectrogram grids, training curves, saliency overlays and
//! accuracy bars. Everything is rasterized by hand onto `image` buffers, so
//! a re-export from the same inputs is byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, Rgb, RgbImage};

use super::saliency::{grad_cam, SaliencyMap};
use super::ResultTable;
use crate::dataset::{read_dataset, Manifest};
use crate::dsp::Spectrogram;
use crate::error::{Error, Result};
use crate::experiment::RunDir;
use crate::model::ModelState;
use crate::train::TrainReport;

const GAP: u32 = 2;
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([0, 0, 0]);
const PALETTE: [Rgb<u8>; 6] = [
    Rgb([31, 119, 180]),
    Rgb([214, 39, 40]),
    Rgb([44, 160, 44]),
    Rgb([255, 127, 14]),
    Rgb([148, 103, 189]),
    Rgb([140, 86, 75]),
];

/// Tiles `panels` row by row, `columns` per row. Returns the panel count.
pub fn spectrogram_grid(panels: &[&Spectrogram], columns: usize, path: &Path) -> Result<usize> {
    if panels.is_empty() || columns == 0 {
        return Err(Error::Contract("a grid needs at least one panel and one column".into()));
    }
    let ph = panels.iter().map(|s| s.rows).max().unwrap_or(0) as u32;
    let pw = panels.iter().map(|s| s.cols).max().unwrap_or(0) as u32;
    let grid_rows = panels.len().div_ceil(columns) as u32;
    let cols = columns.min(panels.len()) as u32;
    let mut img = GrayImage::from_pixel(cols * (pw + GAP) - GAP, grid_rows * (ph + GAP) - GAP, Luma([255]));
    for (i, s) in panels.iter().enumerate() {
        let x0 = (i % columns) as u32 * (pw + GAP);
        let y0 = (i / columns) as u32 * (ph + GAP);
        let tile = s.to_gray_image();
        for (x, y, p) in tile.enumerate_pixels() {
            img.put_pixel(x0 + x, y0 + y, *p);
        }
    }
    img.save(path)?;
    Ok(panels.len())
}

fn draw_line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// One stacked panel per series, each scaled to its own range.
pub fn line_chart(series: &[(&str, Vec<f64>)], path: &Path) -> Result<()> {
    const W: u32 = 480;
    const H: u32 = 140;
    const M: i64 = 10;
    let mut img = RgbImage::from_pixel(W, H * series.len().max(1) as u32, BACKGROUND);
    for (k, (_, ys)) in series.iter().enumerate() {
        let top = k as i64 * H as i64;
        let (left, right, y_top, y_bot) = (M, W as i64 - M, top + M, top + H as i64 - M);
        draw_line(&mut img, (left, y_bot), (right, y_bot), AXIS);
        draw_line(&mut img, (left, y_top), (left, y_bot), AXIS);
        let finite: Vec<f64> = ys.iter().copied().filter(|v| v.is_finite()).collect();
        if finite.len() < 2 {
            continue;
        }
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let px = |i: usize| left + ((right - left) as f64 * i as f64 / (ys.len() - 1) as f64).round() as i64;
        let py = |v: f64| y_bot - ((y_bot - y_top) as f64 * (v - lo) / span).round() as i64;
        for i in 1..ys.len() {
            if ys[i - 1].is_finite() && ys[i].is_finite() {
                draw_line(&mut img, (px(i - 1), py(ys[i - 1])), (px(i), py(ys[i])), PALETTE[k % PALETTE.len()]);
            }
        }
    }
    img.save(path)?;
    Ok(())
}

/// The spectrogram in gray with saliency blended into the red channel,
/// magnified `scale` times.
pub fn saliency_overlay(s: &Spectrogram, map: &SaliencyMap, scale: u32, path: &Path) -> Result<()> {
    if (map.rows, map.cols) != (s.rows, s.cols) {
        return Err(Error::Contract("saliency map and spectrogram differ in size".into()));
    }
    let gray = s.to_gray_image();
    let scale = scale.max(1);
    let mut img = RgbImage::new(s.cols as u32 * scale, s.rows as u32 * scale);
    for (x, y, p) in img.enumerate_pixels_mut() {
        let (c, r) = (x / scale, y / scale);
        let g = gray.get_pixel(c, r)[0] as f64;
        // the gray image flips rows so the highest Doppler row is on top
        let h = map.get(s.rows - 1 - r as usize, c as usize);
        let blend = |base: f64, tint: f64| (base * (1.0 - 0.6 * h) + tint * 0.6 * h).round() as u8;
        *p = Rgb([blend(g, 255.0), blend(g, 0.0), blend(g, 0.0)]);
    }
    img.save(path)?;
    Ok(())
}

/// One bar per table row, height = row average in percent.
pub fn bar_chart(table: &ResultTable, path: &Path) -> Result<()> {
    const BAR: u32 = 40;
    const H: u32 = 200;
    let n = table.rows.len() as u32;
    let mut img = RgbImage::from_pixel((n * (BAR + 10) + 10).max(20), H + 20, BACKGROUND);
    let width = img.width() as i64;
    draw_line(&mut img, (0, (H + 10) as i64), (width - 1, (H + 10) as i64), AXIS);
    for r in 0..table.rows.len() {
        let avg = table.average(r).clamp(0.0, 100.0);
        let height = (avg / 100.0 * H as f64).round() as u32;
        let x0 = 10 + r as u32 * (BAR + 10);
        for x in x0..x0 + BAR {
            for y in (H + 10 - height)..(H + 10) {
                img.put_pixel(x, y, PALETTE[r % PALETTE.len()]);
            }
        }
    }
    img.save(path)?;
    Ok(())
}

fn report_series(report: &TrainReport) -> Vec<(&'static str, Vec<f64>)> {
    let mut series = vec![
        ("loss", report.records.iter().map(|r| r.losses.total).collect()),
        ("mask_rate", report.records.iter().map(|r| r.mask_rate).collect()),
        ("source_acc", report.records.iter().map(|r| r.source_acc).collect()),
    ];
    if report.records.iter().any(|r| r.target_acc.is_some()) {
        series.push(("target_acc", report.records.iter().map(|r| r.target_acc.unwrap_or(f64::NAN)).collect()));
    }
    series
}

/// Curves for every named report and bars for every named table. Nothing is
/// written, and `out_dir` is not created, when both lists are empty.
pub fn export_plots(reports: &[(String, TrainReport)], tables: &[(String, ResultTable)], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if reports.is_empty() && tables.is_empty() {
        return Ok(written);
    }
    fs::create_dir_all(out_dir)?;
    for (name, report) in reports {
        if report.records.is_empty() {
            continue;
        }
        let path = out_dir.join(format!("{name}_curves.png"));
        line_chart(&report_series(report), &path)?;
        written.push(path);
    }
    for (name, table) in tables {
        let path = out_dir.join(format!("{name}_bars.png"));
        bar_chart(table, &path)?;
        written.push(path);
    }
    Ok(written)
}

/// Every figure a run directory supports: the subject x (domain, day)
/// spectrogram grid, curves for `reports/*.jsonl`, bars for
/// `reports/*.table.json` and saliency overlays of the newest stage-2 (or
/// stage-1) checkpoint on a few test-domain samples.
pub fn export_run_plots(run: &RunDir, saliency_samples: usize) -> Result<Vec<PathBuf>> {
    let out_dir = run.plots();
    let mut written = Vec::new();

    let mut reports = Vec::new();
    let mut tables = Vec::new();
    if run.reports().is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(run.reports())?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
        entries.sort();
        for path in entries {
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            if let Some(stem) = name.strip_suffix(".table.json") {
                tables.push((stem.to_string(), ResultTable::load(&path)?));
            } else if let Some(stem) = name.strip_suffix(".jsonl") {
                reports.push((stem.to_string(), TrainReport::read(&path)?));
            }
        }
    }
    written.extend(export_plots(&reports, &tables, &out_dir)?);

    if !run.root.join(crate::dataset::MANIFEST_FILE).exists() {
        return Ok(written);
    }
    let manifest = Manifest::load(&run.root)?;
    let samples = read_dataset(&manifest, &run.root)?;
    fs::create_dir_all(&out_dir)?;

    // first recording of every (subject, domain, day), subjects as grid rows
    let mut first: BTreeMap<(usize, String, u32), usize> = BTreeMap::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        first.entry((e.subject, e.domain.clone(), e.day)).or_insert(i);
    }
    let per_subject = first.keys().filter(|k| k.0 == 0).count().max(1);
    let panels: Vec<&Spectrogram> = first.values().map(|&i| &samples[i]).collect();
    let grid = out_dir.join("spectrogram_grid.png");
    spectrogram_grid(&panels, per_subject, &grid)?;
    written.push(grid);

    let checkpoint = ["stage2", "stage1"].iter().map(|n| run.checkpoint(n)).find(|p| p.exists());
    if let (Some(ckpt), Ok(cfg)) = (checkpoint, run.config()) {
        let model = ModelState::load(&ckpt)?;
        let picks = manifest
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.domain == cfg.split.target_domain)
            .take(saliency_samples);
        for (i, e) in picks {
            let map = grad_cam(&model, &samples[i], e.subject.min(model.num_classes - 1))?;
            let path = out_dir.join(format!("saliency_{i:04}.png"));
            saliency_overlay(&samples[i], &map, 4, &path)?;
            written.push(path);
        }
    }
    Ok(written)
}
