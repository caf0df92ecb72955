//! Render synthetic projector-camera captures.
//!
//! Builds one generated setup (textured surface, oblique projector,
//! nonlinear responses), drives it with a procedural test image, and
//! writes what the camera sees — both noiseless and with sensor noise —
//! next to the surface reflectance and the field-of-view mask.
//!
//! Run with:
//!
//! ```text
//! cargo run --release -p procams --example simulate_capture
//! ```

use std::error::Error;
use std::path::PathBuf;

use procams::dataset::{procedural_image, Difficulty};
use procams::imaging::write_png;
use procams::sim::{render_capture, render_fov_masks};

fn out_dir() -> PathBuf {
    let dir = PathBuf::from("target/example-output/simulate_capture");
    std::fs::create_dir_all(&dir).expect("create output directory");
    dir
}

fn main() -> Result<(), Box<dyn Error>> {
    let dir = out_dir();

    // A seeded, randomly generated scene: every run reproduces the same rig.
    let setup = procams::dataset::generate_setup(42, Difficulty::Wavy);
    println!("camera    : {}x{}", setup.camera_size.0, setup.camera_size.1);
    println!(
        "projector : {}x{}",
        setup.projector_size.0, setup.projector_size.1
    );
    println!(
        "gammas    : projector {:.3}, camera {:.3}",
        setup.projector_gamma, setup.camera_gamma
    );
    println!("noise     : sigma = {:.4}", setup.noise_sigma);

    // Drive the projector with a procedural test image.
    let (pw, ph) = setup.projector_size;
    let input = procedural_image(0, pw, ph);
    let clean = render_capture(&input, &setup, false)?;
    let noisy = render_capture(&input, &setup, true)?;

    // The field-of-view mask marks camera pixels the projector reaches.
    let masks = render_fov_masks(&setup)?;
    let lit: usize = masks
        .camera
        .samples()
        .iter()
        .filter(|&&v| v > 0.5)
        .count();
    let total = setup.camera_size.0 * setup.camera_size.1;
    println!(
        "coverage  : {lit} of {total} camera pixels lit ({:.1}%)",
        100.0 * lit as f64 / total as f64
    );

    // Same seed, same noise field: the difference below is pure sensor noise.
    let mut noise_rms = 0.0f64;
    for (a, b) in clean.samples().iter().zip(noisy.samples()) {
        noise_rms += ((a - b) as f64).powi(2);
    }
    noise_rms = (noise_rms / clean.samples().len() as f64).sqrt();
    println!("noise rms : {noise_rms:.5} (configured sigma {:.5})", setup.noise_sigma);

    write_png(&input, &dir.join("input.png"))?;
    write_png(&clean, &dir.join("capture_clean.png"))?;
    write_png(&noisy, &dir.join("capture_noisy.png"))?;
    write_png(&setup.reflectance, &dir.join("reflectance.png"))?;
    write_png(&masks.camera, &dir.join("fov_mask.png"))?;
    println!("wrote input/capture/reflectance/mask PNGs to {}", dir.display());
    Ok(())
}
