use super::PhotometricError;
use crate::imaging::Raster;

#[derive(Clone, Copy, Debug)]
pub struct NayarParams {
    /// Feedback step size.
    pub alpha: f64,
    pub max_iters: usize,
    /// Mean-absolute residual below which the loop stops.
    pub tol: f64,
}

impl Default for NayarParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            max_iters: 50,
            tol: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NayarOutcome {
    /// Final drive image, clamped to `[0, 1]`.
    pub drive: Raster,
    /// Mean-absolute residual measured at each capture, in order.
    pub residual_trace: Vec<f64>,
    /// Whether the trace dropped below `tol` within the iteration budget.
    pub converged: bool,
    /// Number of captures evaluated.
    pub iterations: usize,
}

/// Fixed-point capture feedback on raw f64 values: starting from the
/// target itself, each step adds `alpha` times the capture residual and
/// clamps to `[0, 1]`. Stops when the mean-absolute residual falls below
/// `tol`; aborts with a diagnostic if it grows three captures in a row.
/// On a plateau (e.g. out-of-gamut targets pinned at full drive) the loop
/// runs out the budget and reports `converged = false` with the floor
/// residual left in the trace.
pub fn nayar_refine_values<F>(
    target: &[f64],
    capture_fn: F,
    params: NayarParams,
) -> Result<(Vec<f64>, Vec<f64>, bool), PhotometricError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, PhotometricError>,
{
    if target.is_empty() || params.max_iters == 0 || !(params.alpha > 0.0) || !(params.tol >= 0.0)
    {
        return Err(PhotometricError::BadPriors {
            what: "refinement needs a non-empty target, alpha > 0, tol >= 0, iters > 0".into(),
        });
    }
    let mut x: Vec<f64> = target.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let mut trace = Vec::new();
    let mut rising = 0;
    for iter in 1..=params.max_iters {
        let captured = capture_fn(&x)?;
        if captured.len() != target.len() {
            return Err(PhotometricError::Capture {
                message: format!(
                    "capture returned {} values for a {}-value drive",
                    captured.len(),
                    target.len()
                ),
            });
        }
        let mut abs_sum = 0.0;
        for (&t, &c) in target.iter().zip(&captured) {
            abs_sum += (t - c).abs();
        }
        let mean = abs_sum / target.len() as f64;
        if !mean.is_finite() {
            return Err(PhotometricError::Capture {
                message: "capture produced non-finite values".into(),
            });
        }
        if let Some(&prev) = trace.last() {
            rising = if mean > prev { rising + 1 } else { 0 };
        }
        trace.push(mean);
        if rising >= 3 {
            return Err(PhotometricError::Diverged {
                iterations: iter,
                last: mean,
            });
        }
        if mean < params.tol {
            return Ok((x, trace, true));
        }
        for (xi, (&t, &c)) in x.iter_mut().zip(target.iter().zip(&captured)) {
            *xi = (*xi + params.alpha * (t - c)).clamp(0.0, 1.0);
        }
    }
    Ok((x, trace, false))
}

/// [`nayar_refine_values`] over images: the drive iterate is kept at full
/// precision and rendered to a raster for each capture call.
pub fn nayar_refine<F>(
    target: &Raster,
    capture_fn: F,
    params: NayarParams,
) -> Result<NayarOutcome, PhotometricError>
where
    F: Fn(&Raster) -> Result<Raster, PhotometricError>,
{
    let (w, h) = target.dims();
    let ch = target.channels();
    let values: Vec<f64> = target.samples().iter().map(|&v| v as f64).collect();
    let to_raster = |v: &[f64]| {
        Raster::from_samples(w, h, ch, v.iter().map(|&x| x as f32).collect())
            .expect("drive buffer matches target shape")
    };
    let (drive, residual_trace, converged) = nayar_refine_values(
        &values,
        |v| {
            let cap = capture_fn(&to_raster(v))?;
            if cap.dims() != (w, h) || cap.channels() != ch {
                return Err(PhotometricError::Capture {
                    message: format!(
                        "capture shape {} does not match target {}",
                        cap.shape_string(),
                        target.shape_string()
                    ),
                });
            }
            Ok(cap.samples().iter().map(|&x| x as f64).collect())
        },
        params,
    )?;
    let iterations = residual_trace.len();
    Ok(NayarOutcome {
        drive: to_raster(&drive),
        residual_trace,
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gain_capture(g: f64) -> impl Fn(&[f64]) -> Result<Vec<f64>, PhotometricError> {
        move |x| Ok(x.iter().map(|&v| g * v).collect())
    }

    #[test]
    fn identity_capture_converges_immediately() {
        let target = Raster::constant(6, 6, 3, 0.62).unwrap();
        let out = nayar_refine(&target, |x| Ok(x.clone()), NayarParams::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
        assert_eq!(out.drive.samples(), target.samples());
        assert!(out.residual_trace[0] < 1e-9);
    }

    #[test]
    fn gain_half_iterates_match_closed_form() {
        // x_{t+1} = x_t + (0.4 - 0.5 x_t) from x_1 = 0.4 has the closed
        // form x_t = 0.8 (1 - 0.5^t); the f64 loop must reproduce it.
        for t in 1..=12usize {
            let params = NayarParams {
                tol: 0.0,
                max_iters: t,
                ..NayarParams::default()
            };
            let (x, trace, converged) =
                nayar_refine_values(&[0.4], gain_capture(0.5), params).unwrap();
            assert!(!converged);
            assert_eq!(trace.len(), t);
            let closed = 0.8 * (1.0 - 0.5f64.powi(t as i32 + 1));
            assert!(
                (x[0] - closed).abs() < 1e-9,
                "t={t}: {} vs {}",
                x[0],
                closed
            );
        }
    }

    #[test]
    fn gain_half_converges_to_double_drive() {
        let target = Raster::constant(4, 4, 3, 0.4).unwrap();
        let out = nayar_refine(
            &target,
            |x| Ok(x.map(|v| 0.5 * v)),
            NayarParams {
                tol: 1e-6,
                ..NayarParams::default()
            },
        )
        .unwrap();
        assert!(out.converged);
        for &v in out.drive.samples() {
            assert!((v - 0.8).abs() < 1e-5);
        }
    }

    #[test]
    fn residual_trace_is_monotone_for_contractive_captures() {
        // Unit-alpha feedback on monotone responses with slope <= 1.
        let funcs: Vec<Box<dyn Fn(f64) -> f64>> = vec![
            Box::new(|v: f64| 0.9 * v),
            Box::new(|v: f64| 0.2 + 0.7 * v),
            Box::new(|v: f64| 0.7 * v.powf(1.3)),
        ];
        for (i, f) in funcs.iter().enumerate() {
            let params = NayarParams {
                tol: 0.0,
                max_iters: 30,
                ..NayarParams::default()
            };
            let (_, trace, _) =
                nayar_refine_values(&[0.55], |x| Ok(x.iter().map(|&v| f(v)).collect()), params)
                    .unwrap();
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "capture {i}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn out_of_gamut_target_plateaus_without_diverging() {
        let target = Raster::constant(4, 4, 3, 0.9).unwrap();
        let out = nayar_refine(
            &target,
            |x| Ok(x.map(|v| 0.5 * v)),
            NayarParams::default(),
        )
        .unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 50);
        for &v in out.drive.samples() {
            assert_eq!(v, 1.0);
        }
        // Residual floor: the unreachable 0.4 gap.
        let last = *out.residual_trace.last().unwrap();
        assert!((last - 0.4).abs() < 1e-6);
    }

    #[test]
    fn overshooting_step_aborts_with_divergence() {
        // alpha 2.5 on slope 0.9 scales the residual by -1.25 each step:
        // the magnitude rises every capture, tripping the three-rise guard.
        let res = nayar_refine_values(
            &[0.45],
            gain_capture(0.9),
            NayarParams {
                alpha: 2.5,
                tol: 0.0,
                ..NayarParams::default()
            },
        );
        match res {
            Err(PhotometricError::Diverged { iterations, .. }) => assert_eq!(iterations, 4),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn capture_shape_mismatch_is_reported() {
        let target = Raster::constant(4, 4, 3, 0.5).unwrap();
        let res = nayar_refine(
            &target,
            |_| Ok(Raster::constant(3, 4, 3, 0.5).unwrap()),
            NayarParams::default(),
        );
        assert!(matches!(res, Err(PhotometricError::Capture { .. })));
    }

    #[test]
    fn bad_params_are_rejected() {
        let t = [0.5];
        assert!(nayar_refine_values(
            &t,
            gain_capture(1.0),
            NayarParams {
                alpha: 0.0,
                ..NayarParams::default()
            }
        )
        .is_err());
        assert!(nayar_refine_values(
            &t,
            gain_capture(1.0),
            NayarParams {
                max_iters: 0,
                ..NayarParams::default()
            }
        )
        .is_err());
    }
}
