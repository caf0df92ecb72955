//! Minimal self-contained bar charts, rendered straight into a PNG.
//!
//! No display server, no font files: labels use a built-in 3x5 pixel font.
//! Output is deterministic for fixed input.

use std::path::Path;

use super::CliError;
use crate::imaging::{write_png, Raster};

const BG: [f32; 3] = [1.0, 1.0, 1.0];
const INK: [f32; 3] = [0.13, 0.13, 0.13];
const GRID: [f32; 3] = [0.85, 0.85, 0.85];
const BAR: [f32; 3] = [0.24, 0.42, 0.69];

/// 3x5 glyphs as five row masks (bit 2 = left pixel).
fn glyph(c: char) -> [u8; 5] {
    match c.to_ascii_uppercase() {
        '0' | 'O' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 7, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' | 'S' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 2, 2],
        '8' | 'B' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        'A' => [2, 5, 7, 5, 5],
        'C' => [7, 4, 4, 4, 7],
        'D' => [6, 5, 5, 5, 6],
        'E' => [7, 4, 7, 4, 7],
        'F' => [7, 4, 7, 4, 4],
        'G' => [7, 4, 5, 5, 7],
        'H' => [5, 5, 7, 5, 5],
        'I' => [7, 2, 2, 2, 7],
        'J' => [1, 1, 1, 5, 7],
        'K' => [5, 6, 4, 6, 5],
        'L' => [4, 4, 4, 4, 7],
        'M' => [5, 7, 7, 5, 5],
        'N' => [6, 5, 5, 5, 5],
        'P' => [7, 5, 7, 4, 4],
        'Q' => [7, 5, 5, 7, 1],
        'R' => [7, 5, 6, 5, 5],
        'T' => [7, 2, 2, 2, 2],
        'U' => [5, 5, 5, 5, 7],
        'V' => [5, 5, 5, 5, 2],
        'W' => [5, 5, 7, 7, 5],
        'X' => [5, 5, 2, 5, 5],
        'Y' => [5, 5, 2, 2, 2],
        'Z' => [7, 1, 2, 4, 7],
        '.' => [0, 0, 0, 0, 2],
        '-' => [0, 0, 7, 0, 0],
        '=' => [0, 7, 0, 7, 0],
        ':' => [0, 2, 0, 2, 0],
        '_' => [0, 0, 0, 0, 7],
        '%' => [5, 1, 2, 4, 5],
        _ => [0, 0, 0, 0, 0],
    }
}

fn fill_rect(img: &mut Raster, x0: i64, y0: i64, w: i64, h: i64, rgb: [f32; 3]) {
    let (iw, ih) = img.dims();
    for y in y0.max(0)..(y0 + h).min(ih as i64) {
        for x in x0.max(0)..(x0 + w).min(iw as i64) {
            for c in 0..3 {
                img.set(x as usize, y as usize, c, rgb[c]);
            }
        }
    }
}

/// Draw `text` with its top-left corner at (x, y); returns the advance.
fn draw_text(img: &mut Raster, text: &str, x: i64, y: i64, scale: i64, rgb: [f32; 3]) -> i64 {
    let mut cx = x;
    for ch in text.chars() {
        let rows = glyph(ch);
        for (ry, mask) in rows.iter().enumerate() {
            for rx in 0..3 {
                if mask & (4 >> rx) != 0 {
                    fill_rect(
                        img,
                        cx + rx as i64 * scale,
                        y + ry as i64 * scale,
                        scale,
                        scale,
                        rgb,
                    );
                }
            }
        }
        cx += 4 * scale;
    }
    cx - x
}

fn text_width(text: &str, scale: i64) -> i64 {
    text.chars().count() as i64 * 4 * scale
}

/// Compact value formatting for tick and bar labels.
fn fmt_value(v: f64, span: f64) -> String {
    if span >= 50.0 {
        format!("{v:.0}")
    } else if span >= 5.0 {
        format!("{v:.1}")
    } else if span >= 0.5 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

/// Render one bar per label/value pair into a PNG at `path`.
///
/// Values must be finite; negative values clamp to the baseline. The canvas
/// grows with the number of bars, so any count fits.
pub fn render_bar_chart(
    title: &str,
    labels: &[String],
    values: &[f64],
    path: &Path,
) -> Result<(), CliError> {
    if labels.is_empty() || labels.len() != values.len() {
        return Err(CliError::Usage(format!(
            "chart needs matching non-empty labels and values ({} vs {})",
            labels.len(),
            values.len()
        )));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(CliError::Usage(format!("non-finite chart value {v}")));
    }
    let scale = 2i64;
    let n = labels.len() as i64;
    let slot = (28 + labels.iter().map(|l| text_width(l, scale)).max().unwrap_or(0)).max(56);
    let left = 58i64;
    let right = 16i64;
    let top = 30i64;
    let bottom = 26i64;
    let plot_h = 170i64;
    let width = (left + right + n * slot).max(text_width(title, scale) + 24) as usize;
    let height = (top + plot_h + bottom) as usize;

    let mut img = Raster::constant(width, height, 3, 1.0).map_err(CliError::run)?;
    fill_rect(&mut img, 0, 0, width as i64, height as i64, BG);
    draw_text(&mut img, title, 12, 8, scale, INK);

    let vmax = values.iter().cloned().fold(0.0f64, f64::max);
    let top_val = if vmax <= 0.0 { 1.0 } else { vmax * 1.08 };
    let y_of = |v: f64| -> i64 {
        let f = (v.max(0.0) / top_val).clamp(0.0, 1.0);
        top + plot_h - (f * plot_h as f64).round() as i64
    };

    // Horizontal gridlines with tick labels at 5 levels.
    for i in 0..=4 {
        let v = top_val * i as f64 / 4.0;
        let y = y_of(v);
        fill_rect(&mut img, left, y, n * slot, 1, GRID);
        let label = fmt_value(v, top_val);
        let lw = text_width(&label, 1);
        draw_text(&mut img, &label, left - 6 - lw, y - 2, 1, INK);
    }

    for (i, (label, &v)) in labels.iter().zip(values).enumerate() {
        let x0 = left + i as i64 * slot;
        let bar_w = (slot * 3) / 5;
        let bx = x0 + (slot - bar_w) / 2;
        let y = y_of(v);
        fill_rect(&mut img, bx, y, bar_w, top + plot_h - y, BAR);
        // Value on top of the bar, label beneath the axis.
        let vtext = fmt_value(v, top_val);
        let vx = x0 + (slot - text_width(&vtext, 1)) / 2;
        draw_text(&mut img, &vtext, vx, y - 8, 1, INK);
        let lx = x0 + (slot - text_width(label, scale)) / 2;
        draw_text(&mut img, label, lx, top + plot_h + 8, scale, INK);
    }

    // Axes drawn last so bars cannot overpaint them.
    fill_rect(&mut img, left, top + plot_h, n * slot, 1, INK);
    fill_rect(&mut img, left - 1, top - 4, 1, plot_h + 5, INK);

    write_png(&img, path).map_err(CliError::run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::read_png;

    #[test]
    fn chart_renders_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let labels: Vec<String> = ["K=1", "K=3", "K=5"].map(String::from).to_vec();
        let values = [14.8, 19.2, 21.5];
        let p1 = dir.path().join("a.png");
        let p2 = dir.path().join("b.png");
        render_bar_chart("PSNR BY PRIOR COUNT", &labels, &values, &p1).unwrap();
        render_bar_chart("PSNR BY PRIOR COUNT", &labels, &values, &p2).unwrap();
        let b1 = std::fs::read(&p1).unwrap();
        let b2 = std::fs::read(&p2).unwrap();
        assert_eq!(b1, b2);

        let img = read_png(&p1).unwrap();
        let (w, h) = img.dims();
        assert!(w > 0 && h > 0);
        // Some pixels carry the bar color.
        let mut bar_pixels = 0;
        for y in 0..h {
            for x in 0..w {
                let px = img.pixel_rgb(x, y);
                if (px[0] - BAR[0]).abs() < 0.02
                    && (px[1] - BAR[1]).abs() < 0.02
                    && (px[2] - BAR[2]).abs() < 0.02
                {
                    bar_pixels += 1;
                }
            }
        }
        assert!(bar_pixels > 300, "expected visible bars, got {bar_pixels}");
    }

    #[test]
    fn taller_values_make_taller_bars() {
        let dir = tempfile::tempdir().unwrap();
        let labels: Vec<String> = ["A", "B"].map(String::from).to_vec();
        let p = dir.path().join("c.png");
        render_bar_chart("T", &labels, &[1.0, 3.0], &p).unwrap();
        let img = read_png(&p).unwrap();
        let (w, h) = img.dims();
        let is_bar = |x: usize, y: usize| {
            let px = img.pixel_rgb(x, y);
            (px[0] - BAR[0]).abs() < 0.02 && (px[1] - BAR[1]).abs() < 0.02
        };
        let col_height = |x: usize| (0..h).filter(|&y| is_bar(x, y)).count();
        // Scan left and right halves for their tallest bar columns.
        let tallest_left = (0..w / 2).map(col_height).max().unwrap();
        let tallest_right = (w / 2..w).map(col_height).max().unwrap();
        assert!(tallest_right > tallest_left * 2);
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.png");
        assert!(render_bar_chart("T", &[], &[], &p).is_err());
        assert!(
            render_bar_chart("T", &["A".to_string()], &[f64::NAN], &p).is_err()
        );
    }
}
