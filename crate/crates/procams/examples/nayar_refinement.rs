//! Model-free compensation by projecting and correcting in a loop.
//!
//! When the rig is available live, no fitted model is needed: project the
//! current drive, measure the capture, add the residual, repeat. For a
//! scalar system with capture gain g and step 1 the iterates have the
//! closed form x_t = (target/g) * (1 - (1-g)^t), checked below for
//! g = 0.5. The second part refines a full image against the simulator and
//! prints the shrinking residual trace.
//!
//! Run with:
//!
//! ```text
//! cargo run --release -p procams --example nayar_refinement
//! ```

use std::error::Error;

use procams::imaging::{ColorTriple, Raster};
use procams::photometric::{nayar_refine, nayar_refine_values, NayarParams, PhotometricError};
use procams::sim::{render_capture, SetupConfig};

fn main() -> Result<(), Box<dyn Error>> {
    // --- Scalar feedback loop vs its closed form -------------------------
    // capture(x) = 0.5 x, target 0.4, so the fixed point is x = 0.8.
    let gain_half = |x: &[f64]| Ok(x.iter().map(|v| 0.5 * v).collect());
    println!("scalar loop, capture = 0.5*drive, target 0.4:");
    println!("  t   drive x_t      closed form     diff");
    for t in 1..=8usize {
        let params = NayarParams {
            tol: 0.0,
            max_iters: t,
            ..NayarParams::default()
        };
        let (x, _, _) = nayar_refine_values(&[0.4], gain_half, params)?;
        // The initial drive is iterate 1, so t captures yield iterate t+1.
        let closed = 0.8 * (1.0 - 0.5f64.powi(t as i32 + 1));
        println!("  {t}   {:.9}    {closed:.9}    {:.1e}", x[0], (x[0] - closed).abs());
    }

    // --- Image refinement against the simulated rig ----------------------
    // Identity geometry, linear response, dark vignetted surface: the
    // in-gamut target is reachable, so the residual collapses geometrically.
    let mut setup = SetupConfig::identity((64, 64), 9);
    setup.reflectance = Raster::from_fn(64, 64, 3, |x, y| {
        let dx = (x as f32 - 31.5) / 31.5;
        let dy = (y as f32 - 31.5) / 31.5;
        let v = 0.85 - 0.25 * (dx * dx + dy * dy);
        [v, v * 0.95, v * 0.9]
    })?;
    setup.ambient = ColorTriple::linear(0.02, 0.02, 0.02);

    let target = Raster::from_fn(64, 64, 3, |x, y| {
        let v = 0.30 + 0.20 * ((0.2 * x as f32).sin() * (0.15 * y as f32).cos() + 1.0) * 0.5;
        [v, 0.55 - v * 0.4, (0.1 + v) * 0.8]
    })?;

    let capture_fn = |drive: &Raster| {
        render_capture(drive, &setup, false).map_err(|e| PhotometricError::Capture {
            message: e.to_string(),
        })
    };
    let outcome = nayar_refine(&target, capture_fn, NayarParams::default())?;
    println!("\nimage refinement on a 64x64 vignetted rig:");
    let shown: Vec<String> = outcome
        .residual_trace
        .iter()
        .take(6)
        .map(|r| format!("{r:.2e}"))
        .collect();
    println!("  residual trace : {} ...", shown.join("  "));
    println!(
        "  final residual : {:.2e} after {} captures (converged: {})",
        outcome.residual_trace.last().copied().unwrap_or(f64::NAN),
        outcome.iterations,
        outcome.converged
    );
    Ok(())
}
