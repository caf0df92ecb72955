//! How many gray probes does the photometric model need?
//!
//! Runs the full compensation pipeline on several generated rigs while
//! varying only the number of uniform probe captures (one, three, five),
//! and averages capture quality over a shared set of test images. On
//! gamma-nonlinear rigs the ranking is strict: more knots, better capture.
//!
//! Run with:
//!
//! ```text
//! cargo run --release -p procams --example surface_prior_ablation
//! ```

use std::error::Error;
use std::time::Instant;

use procams::dataset::{generate_setup, procedural_image, Difficulty};
use procams::pipeline::ablate_priors;

fn main() -> Result<(), Box<dyn Error>> {
    procams::init_thread_pool();

    // Three rigs of increasing geometric difficulty; all have nonlinear
    // response curves, which is what the probe count actually pays for.
    let setups: Vec<_> = [
        (21u64, Difficulty::Textured),
        (22, Difficulty::Wavy),
        (23, Difficulty::Sharp),
    ]
    .into_iter()
    .map(|(seed, d)| generate_setup(seed, d))
    .collect();

    let (pw, ph) = setups[0].projector_size;
    let images: Vec<_> = (0..3).map(|i| procedural_image(i, pw, ph)).collect();

    println!(
        "ablating prior counts over {} rigs x {} images...",
        setups.len(),
        images.len()
    );
    let t0 = Instant::now();
    let table = ablate_priors(&setups, &[1, 3, 5], &images)?;
    let secs = t0.elapsed().as_secs_f64();

    println!("  k   psnr (dB)   rmse      ssim     dE00    clipped");
    for row in &table.rows {
        println!(
            "  {}   {:7.2}     {:.5}   {:.4}   {:5.2}   {:6.2}%",
            row.k,
            row.psnr,
            row.rmse,
            row.ssim,
            row.de00,
            100.0 * row.clip_fraction
        );
    }
    println!(
        "mean psnr strictly increases with prior count: {}",
        if table.psnr_ordering_holds() { "yes" } else { "no" }
    );
    println!("({} compensations in {secs:.1} s)", table.rows.len() * setups.len() * images.len());
    Ok(())
}
