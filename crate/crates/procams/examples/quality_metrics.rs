//! The capture-quality metric suite on pairs with known answers.
//!
//! PSNR/RMSE, windowed SSIM, and CIEDE2000 color difference are the
//! numbers every benchmark table in this crate reports. This example
//! evaluates them on hand-built image pairs where the right answer is
//! known in closed form, then scores a realistic noisy pair with the
//! combined `metric_block`.
//!
//! Run with:
//!
//! ```text
//! cargo run --release -p procams --example quality_metrics
//! ```

use std::error::Error;

use procams::imaging::Raster;
use procams::metrics::{ciede2000, de00, metric_block, psnr_rmse, ssim};

fn main() -> Result<(), Box<dyn Error>> {
    // --- Closed-form PSNR/RMSE -------------------------------------------
    // A constant offset of 0.1 has rmse exactly 0.1 and psnr exactly 20 dB.
    let a = Raster::constant(64, 64, 3, 0.5)?;
    let b = Raster::constant(64, 64, 3, 0.6)?;
    let (psnr, rmse) = psnr_rmse(&a, &b, None)?;
    println!("constant offset 0.1 : psnr {psnr:.4} dB, rmse {rmse:.6}");

    // --- SSIM -------------------------------------------------------------
    let texture = Raster::from_fn(96, 96, 3, |x, y| {
        let v = 0.5 + 0.3 * (0.21 * x as f32).sin() * (0.13 * y as f32).cos();
        [v, v, v]
    })?;
    println!("ssim(x, x)          : {:.6}", ssim(&texture, &texture, None)?);
    let dimmed = texture.map(|v| 0.6 * v);
    println!("ssim(x, 0.6x)       : {:.6}", ssim(&texture, &dimmed, None)?);

    // --- CIEDE2000 ---------------------------------------------------------
    // Identical colors differ by 0; a just-noticeable difference is ~1.
    let gray = [53.0, 0.0, 0.0];
    let reddish = [53.0, 3.0, 1.0];
    println!("dE00(gray, gray)    : {:.6}", ciede2000(gray, gray));
    println!("dE00(gray, reddish) : {:.4}", ciede2000(gray, reddish));

    // --- Combined block on a noisy pair ------------------------------------
    let noisy = Raster::from_fn(96, 96, 3, |x, y| {
        let v = texture.get(x, y, 0) + 0.03 * (0.9 * (x * 7 + y * 13) as f32).sin();
        [v, v * 0.995, v * 1.005]
    })?;
    let m = metric_block(&noisy, &texture, None)?;
    println!(
        "noisy vs clean      : psnr {:.2} dB, rmse {:.5}, ssim {:.4}, mean dE00 {:.3} \
         over {} pixels",
        m.psnr, m.rmse, m.ssim, m.de00_mean, m.valid_pixel_count
    );

    // Per-pixel color-difference statistics, restricted to a center mask.
    let mut mask = Raster::constant(96, 96, 1, 0.0)?;
    for y in 24..72 {
        for x in 24..72 {
            mask.set(x, y, 0, 1.0);
        }
    }
    let stats = de00(
        &procams::imaging::lab_image(&noisy),
        &procams::imaging::lab_image(&texture),
        Some(&mask),
    )?;
    println!(
        "center-masked dE00  : mean {:.3}, max {:.3}",
        stats.mean, stats.max
    );
    Ok(())
}
