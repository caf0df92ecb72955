//! Projector-camera simulation, calibration, and compensation.
//!
//! A projector drives a scene with an image `x`; a camera observes the
//! distorted, shaded result `x~`. This crate simulates that forward process,
//! calibrates its geometric and photometric behaviour from structured
//! captures, and inverts it so that the camera sees what you asked for.
//!
//! The pieces, bottom to top:
//!
//! - [`imaging`]: float rasters, color conversions, resampling, PNG/PFM I/O
//! - [`sim`]: the configurable projector-camera rig (the "physical" system)
//! - [`geometry`]: flow fields, warping, Gray-code decoding, pyramidal
//!   Lucas-Kanade flow, inscribed-rectangle fitting
//! - [`photometric`]: per-pixel response models fitted from uniform-level
//!   surface captures, their pseudo-inverse, and iterative refinement
//! - [`metrics`]: PSNR / RMSE / SSIM / CIEDE2000
//! - [`pipeline`]: end-to-end calibration and compensation
//! - [`dataset`]: seeded benchmark dataset generation and loading
//! - [`cli`]: the command layer behind the `procams` binary
//!
//! Runnable walkthroughs live in `examples/` (one per major capability):
//!
//! ```text
//! cargo run --release -p procams --example simulate_capture
//! cargo run --release -p procams --example graycode_calibration
//! cargo run --release -p procams --example optical_flow
//! cargo run --release -p procams --example photometric_fit
//! cargo run --release -p procams --example full_compensation
//! cargo run --release -p procams --example surface_prior_ablation
//! cargo run --release -p procams --example nayar_refinement
//! cargo run --release -p procams --example quality_metrics
//! ```

pub mod cli;
pub mod dataset;
pub mod geometry;
pub mod imaging;
pub mod metrics;
pub mod photometric;
pub mod pipeline;
pub mod sim;

use std::sync::OnceLock;

static THREAD_POOL_INIT: OnceLock<()> = OnceLock::new();

/// Cap rayon's global pool from `PROCAMS_THREADS` (positive integer).
///
/// First call wins; later calls (and an unset or invalid variable) leave the
/// default pool alone. Safe to call from every entry point.
pub fn init_thread_pool() {
    THREAD_POOL_INIT.get_or_init(|| {
        if let Ok(v) = std::env::var("PROCAMS_THREADS") {
            if let Ok(n) = v.trim().parse::<usize>() {
                if n > 0 {
                    // Ignore the error: a pool may already exist in tests.
                    let _ = rayon::ThreadPoolBuilder::new()
                        .num_threads(n)
                        .build_global();
                }
            }
        }
    });
}
