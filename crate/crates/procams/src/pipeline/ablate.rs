use super::{
    calibrate, evaluate_real, CalibrationMethod, PipelineError, ProjectCapture, SimulatorRig,
};
use crate::imaging::resample_bilinear;
use crate::imaging::Raster;
use crate::sim::SetupConfig;

/// Mean scores for one surface-prior count, averaged over every
/// setup/test-image pair.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub k: usize,
    pub psnr: f64,
    pub rmse: f64,
    pub ssim: f64,
    pub de00: f64,
    pub clip_fraction: f64,
    /// Number of (setup, image) pairs averaged into this row.
    pub samples: usize,
}

/// Ablation results, one row per prior count, ascending.
#[derive(Debug, Clone)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// True when mean PSNR strictly increases with the prior count.
    pub fn psnr_ordering_holds(&self) -> bool {
        self.rows.windows(2).all(|w| {
            debug_assert!(w[0].k < w[1].k);
            w[1].psnr > w[0].psnr
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,psnr,rmse,ssim,de00,clip_fraction,samples\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{:.8},{:.6},{:.6},{:.6},{}\n",
                r.k, r.psnr, r.rmse, r.ssim, r.de00, r.clip_fraction, r.samples
            ));
        }
        out
    }
}

/// Sweep the surface-prior count: calibrate each setup once with the full
/// prior set, refit the response from each requested subset, and score full
/// compensation of every test image against the simulator. Rows come back in
/// ascending prior-count order.
pub fn ablate_priors(
    setups: &[SetupConfig],
    ks: &[usize],
    test_images: &[Raster],
) -> Result<AblationTable, PipelineError> {
    if setups.is_empty() || ks.is_empty() || test_images.is_empty() {
        return Err(PipelineError::BadInput {
            what: "ablation needs at least one setup, one prior count, and one test image".into(),
        });
    }
    let mut ks_sorted: Vec<usize> = ks.to_vec();
    ks_sorted.sort_unstable();
    ks_sorted.dedup();

    struct Acc {
        psnr: f64,
        rmse: f64,
        ssim: f64,
        de00: f64,
        clip: f64,
        n: usize,
    }
    let mut acc: Vec<Acc> = ks_sorted
        .iter()
        .map(|_| Acc {
            psnr: 0.0,
            rmse: 0.0,
            ssim: 0.0,
            de00: 0.0,
            clip: 0.0,
            n: 0,
        })
        .collect();

    for setup in setups {
        let rig = SimulatorRig::new(setup.clone())?;
        // Calibrate once with the full prior set; smaller counts reuse the
        // subset of those captures instead of re-running the projector.
        let full = calibrate(&rig, CalibrationMethod::Graycode, 5)?;
        let (pw, ph) = rig.projector_size();
        for (slot, &k) in ks_sorted.iter().enumerate() {
            let bundle = if k == 5 { full.clone() } else { full.refit_with_k(k)? };
            for image in test_images {
                let x = if image.dims() == (pw, ph) && image.channels() == 3 {
                    image.clone()
                } else {
                    resample_bilinear(&image.to_rgb(), pw, ph)?
                };
                let result = evaluate_real(&x, &bundle, &rig)?;
                acc[slot].psnr += result.metrics.psnr;
                acc[slot].rmse += result.metrics.rmse;
                acc[slot].ssim += result.metrics.ssim;
                acc[slot].de00 += result.metrics.de00_mean;
                acc[slot].clip += result.clip.fraction;
                acc[slot].n += 1;
            }
        }
    }

    let rows = ks_sorted
        .iter()
        .zip(acc)
        .map(|(&k, a)| {
            let n = a.n as f64;
            AblationRow {
                k,
                psnr: a.psnr / n,
                rmse: a.rmse / n,
                ssim: a.ssim / n,
                de00: a.de00 / n,
                clip_fraction: a.clip / n,
                samples: a.n,
            }
        })
        .collect();
    Ok(AblationTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::ColorTriple;
    use crate::metrics::PSNR_CAP_DB;
    use crate::sim::{DisplacementField, GeometryWarp, Mat3, SetupConfig};

    fn test_image(w: usize, h: usize, seed: u64) -> Raster {
        let p = seed as f64;
        Raster::from_fn(w, h, 3, |x, y| {
            let u = x as f64 * 0.3 + p;
            let v = y as f64 * 0.23;
            [
                (0.5 + 0.3 * (u + v).sin()) as f32,
                (0.5 + 0.28 * (u - 0.7 * v).cos()) as f32,
                (0.5 + 0.25 * (0.4 * u + 1.3 * v).sin()) as f32,
            ]
        })
        .unwrap()
    }

    fn nonlinear_setup(size: usize, seed: u64) -> SetupConfig {
        let mut setup = SetupConfig::identity((size, size), seed);
        setup.geometry = GeometryWarp::new(
            Mat3([[0.85, 0.0, 3.0], [0.0, 0.85, 3.0], [0.0, 0.0, 1.0]]),
            DisplacementField::zero(),
        )
        .unwrap();
        setup.reflectance = Raster::from_fn(size, size, 3, |x, y| {
            let s = 0.55 + 0.3 * ((x as f64 * 0.17 + seed as f64).sin() * (y as f64 * 0.21).cos());
            [s as f32, (s * 0.92) as f32, (s * 1.05).min(1.0) as f32]
        })
        .unwrap();
        setup.projector_gamma = 2.0 + 0.05 * (seed % 5) as f64;
        setup.camera_gamma = 1.0;
        setup.ambient = ColorTriple::gray_linear(0.03);
        setup
    }

    #[test]
    fn single_setup_single_image_gives_three_finite_rows() {
        let setups = vec![nonlinear_setup(40, 1)];
        let images = vec![test_image(40, 40, 1)];
        let table = ablate_priors(&setups, &[1, 3, 5], &images).unwrap();
        assert_eq!(table.rows.len(), 3);
        assert_eq!(
            table.rows.iter().map(|r| r.k).collect::<Vec<_>>(),
            vec![1, 3, 5]
        );
        for row in &table.rows {
            assert_eq!(row.samples, 1);
            assert!(row.psnr.is_finite() && row.psnr > 0.0);
            assert!(row.rmse.is_finite());
            assert!(row.ssim.is_finite());
            assert!(row.de00.is_finite());
        }
        let csv = table.to_csv();
        assert!(csv.starts_with("k,psnr,"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn linear_setups_make_all_prior_counts_tie() {
        // Matched unity gammas with no ambient: the response is already
        // linear through the origin, so one prior pins it as well as five.
        let mut setup = SetupConfig::identity((32, 32), 2);
        setup.geometry = GeometryWarp::new(
            Mat3([[0.9, 0.0, 2.0], [0.0, 0.9, 2.0], [0.0, 0.0, 1.0]]),
            DisplacementField::zero(),
        )
        .unwrap();
        let images = vec![test_image(32, 32, 3)];
        let table = ablate_priors(&[setup], &[1, 3, 5], &images).unwrap();
        for row in &table.rows {
            assert!((row.psnr - PSNR_CAP_DB).abs() < 1e-6, "k={} psnr={}", row.k, row.psnr);
        }
        assert!(!table.psnr_ordering_holds());
    }

    #[test]
    fn richer_priors_win_on_nonlinear_setups() {
        let setups: Vec<_> = (0..3).map(|s| nonlinear_setup(40, 10 + s)).collect();
        let images: Vec<_> = (0..2).map(|s| test_image(40, 40, 20 + s)).collect();
        let table = ablate_priors(&setups, &[1, 3, 5], &images).unwrap();
        assert!(
            table.psnr_ordering_holds(),
            "psnr by k: {:?}",
            table.rows.iter().map(|r| (r.k, r.psnr)).collect::<Vec<_>>()
        );
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let images = vec![test_image(16, 16, 1)];
        assert!(matches!(
            ablate_priors(&[], &[1], &images),
            Err(PipelineError::BadInput { .. })
        ));
        let setups = vec![nonlinear_setup(16, 1)];
        assert!(matches!(
            ablate_priors(&setups, &[], &images),
            Err(PipelineError::BadInput { .. })
        ));
        assert!(matches!(
            ablate_priors(&setups, &[1], &[]),
            Err(PipelineError::BadInput { .. })
        ));
    }
}
