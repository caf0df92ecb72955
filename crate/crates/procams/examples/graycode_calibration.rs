//! Calibrate projector-to-camera geometry with Gray-code patterns.
//!
//! Projects the structured-light stack (white, black, then one pattern and
//! its inverse per bit and axis), decodes a dense correspondence map, and
//! compares the decoded flow against the simulator's ground truth. On a
//! noiseless rig the decoded map is exact: every valid camera pixel names
//! the precise projector pixel that illuminates it.
//!
//! Run with:
//!
//! ```text
//! cargo run --release -p procams --example graycode_calibration
//! ```

use std::error::Error;

use procams::dataset::{generate_setup, Difficulty};
use procams::geometry::FlowField;
use procams::pipeline::{calibrate, CalibrationBundle, CalibrationMethod, SimulatorRig};
use procams::sim::true_correspondence;

/// Ground-truth correspondence restated on the bundle's crop window.
fn truth_on_crop(
    bundle: &CalibrationBundle,
    truth_camera: &FlowField,
) -> FlowField {
    let (off, size) = (bundle.crop_offset, bundle.crop_size);
    let mut out = FlowField::invalid(size.0, size.1, bundle.projector_size);
    for y in 0..size.1 {
        for x in 0..size.0 {
            if let Some((dx, dy)) = truth_camera.get(x + off.0, y + off.1) {
                // Same projector target, re-expressed from the crop origin.
                out.set(x, y, dx + off.0 as f32, dy + off.1 as f32);
            }
        }
    }
    out
}

fn main() -> Result<(), Box<dyn Error>> {
    // A noiseless bent-surface rig; Gray codes do not need smoothness.
    let setup = generate_setup(7, Difficulty::Sharp).noiseless();
    let rig = SimulatorRig::new(setup)?;

    let bundle = calibrate(&rig, CalibrationMethod::Graycode, 5)?;
    println!("patterns projected : {}", bundle.timing.captures);
    println!(
        "crop window        : {}x{} at ({}, {})",
        bundle.crop_size.0, bundle.crop_size.1, bundle.crop_offset.0, bundle.crop_offset.1
    );
    println!(
        "inscribed rectangle: {}x{} at ({}, {})",
        bundle.rect.w, bundle.rect.h, bundle.rect.x, bundle.rect.y
    );
    println!(
        "flow validity      : {:.2}% of crop pixels decoded",
        100.0 * bundle.back_flow.valid_fraction()
    );

    // Score the decoded map against the rig's true optics.
    let truth = truth_on_crop(&bundle, &true_correspondence(rig.setup())?);
    let stats = bundle.back_flow.epe_vs(&truth)?;
    println!(
        "endpoint error     : mean {:.6} px, max {:.6} px over {} pixels",
        stats.mean, stats.max, stats.compared
    );
    assert_eq!(stats.max, 0.0, "noiseless Gray-code decoding is exact");
    println!("decoded correspondence matches the simulator optics exactly");
    Ok(())
}
