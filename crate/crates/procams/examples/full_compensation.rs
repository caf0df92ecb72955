//! End-to-end projector compensation on a textured, nonlinear rig.
//!
//! Calibrates geometry with Gray codes and photometry with five gray
//! probes, then solves for the drive image whose capture looks like the
//! requested picture. The same picture projected unmodified serves as the
//! baseline; the printed gain is the whole point of compensation.
//!
//! Run with:
//!
//! ```text
//! cargo run --release -p procams --example full_compensation
//! ```

use std::error::Error;
use std::path::PathBuf;

use procams::dataset::{generate_setup, procedural_image, Difficulty};
use procams::imaging::write_png;
use procams::metrics::MetricBlock;
use procams::pipeline::{calibrate, evaluate_real, CalibrationMethod, SimulatorRig};

fn out_dir() -> PathBuf {
    let dir = PathBuf::from("target/example-output/full_compensation");
    std::fs::create_dir_all(&dir).expect("create output directory");
    dir
}

fn print_row(label: &str, m: &MetricBlock) {
    println!(
        "  {label:<13} psnr {:6.2} dB   rmse {:.5}   ssim {:.4}   dE00 {:6.3}",
        m.psnr, m.rmse, m.ssim, m.de00_mean
    );
}

fn main() -> Result<(), Box<dyn Error>> {
    let dir = out_dir();

    // Textured surface, oblique projector, mild sensor noise.
    let setup = generate_setup(12, Difficulty::Textured);
    let rig = SimulatorRig::new(setup)?;

    println!("calibrating (Gray codes + 5 gray probes)...");
    let bundle = calibrate(&rig, CalibrationMethod::Graycode, 5)?;
    println!(
        "  {} captures, rect {}x{} inside a {}x{} crop",
        bundle.timing.captures,
        bundle.rect.w,
        bundle.rect.h,
        bundle.crop_size.0,
        bundle.crop_size.1
    );

    // Ask the wall to show a picture it has never seen.
    let (pw, ph) = rig.setup().projector_size;
    let wanted = procedural_image(2, pw, ph);
    let result = evaluate_real(&wanted, &bundle, &rig)?;

    println!("capture quality against the desired appearance:");
    print_row("compensated", &result.metrics);
    let baseline = result.baseline.expect("evaluate_real scores the baseline");
    print_row("uncompensated", &baseline);
    println!(
        "  gain          {:+.2} dB psnr, {:+.1}% dE00, drive clipped {:.2}%",
        result.metrics.psnr - baseline.psnr,
        100.0 * (result.metrics.de00_mean - baseline.de00_mean) / baseline.de00_mean,
        100.0 * result.clip.fraction
    );

    write_png(&wanted, &dir.join("wanted.png"))?;
    write_png(&result.drive, &dir.join("drive.png"))?;
    write_png(&result.desired, &dir.join("desired_crop.png"))?;
    if let Some(captured) = &result.captured {
        write_png(captured, &dir.join("captured.png"))?;
    }
    println!("wrote wanted/drive/desired/captured PNGs to {}", dir.display());
    Ok(())
}
