use super::MetricsError;
use crate::imaging::Raster;

/// Masked CIEDE2000 statistics over an image pair.
#[derive(Clone, Debug)]
pub struct De00Stats {
    pub mean: f64,
    pub max: f64,
    /// Per-pixel ΔE map (1 channel); unmasked pixels are 0.
    pub map: Raster,
}

/// CIEDE2000 color difference between two Lab triples.
///
/// Full formula including the G chroma rescaling, hue-dependent weighting
/// T, and the rotation term R_T.
pub fn ciede2000(lab1: [f64; 3], lab2: [f64; 3]) -> f64 {
    let (l1, a1, b1) = (lab1[0], lab1[1], lab1[2]);
    let (l2, a2, b2) = (lab2[0], lab2[1], lab2[2]);

    let c1 = (a1 * a1 + b1 * b1).sqrt();
    let c2 = (a2 * a2 + b2 * b2).sqrt();
    let c_bar = 0.5 * (c1 + c2);
    let c_bar7 = c_bar.powi(7);
    const P25_7: f64 = 6_103_515_625.0; // 25^7
    let g = 0.5 * (1.0 - (c_bar7 / (c_bar7 + P25_7)).sqrt());

    let a1p = (1.0 + g) * a1;
    let a2p = (1.0 + g) * a2;
    let c1p = (a1p * a1p + b1 * b1).sqrt();
    let c2p = (a2p * a2p + b2 * b2).sqrt();

    let h1p = hue_deg(b1, a1p);
    let h2p = hue_deg(b2, a2p);

    let dl = l2 - l1;
    let dc = c2p - c1p;
    let dh_angle = if c1p * c2p == 0.0 {
        0.0
    } else {
        let d = h2p - h1p;
        if d.abs() <= 180.0 {
            d
        } else if d > 180.0 {
            d - 360.0
        } else {
            d + 360.0
        }
    };
    let dh = 2.0 * (c1p * c2p).sqrt() * (dh_angle.to_radians() / 2.0).sin();

    let l_bar = 0.5 * (l1 + l2);
    let cp_bar = 0.5 * (c1p + c2p);
    let h_bar = if c1p * c2p == 0.0 {
        h1p + h2p
    } else {
        let sum = h1p + h2p;
        if (h1p - h2p).abs() <= 180.0 {
            0.5 * sum
        } else if sum < 360.0 {
            0.5 * (sum + 360.0)
        } else {
            0.5 * (sum - 360.0)
        }
    };

    let t = 1.0 - 0.17 * (h_bar - 30.0).to_radians().cos()
        + 0.24 * (2.0 * h_bar).to_radians().cos()
        + 0.32 * (3.0 * h_bar + 6.0).to_radians().cos()
        - 0.20 * (4.0 * h_bar - 63.0).to_radians().cos();

    let d_theta = 30.0 * (-((h_bar - 275.0) / 25.0).powi(2)).exp();
    let cp_bar7 = cp_bar.powi(7);
    let r_c = 2.0 * (cp_bar7 / (cp_bar7 + P25_7)).sqrt();
    let l_off = l_bar - 50.0;
    let s_l = 1.0 + 0.015 * l_off * l_off / (20.0 + l_off * l_off).sqrt();
    let s_c = 1.0 + 0.045 * cp_bar;
    let s_h = 1.0 + 0.015 * cp_bar * t;
    let r_t = -(2.0 * d_theta).to_radians().sin() * r_c;

    let tl = dl / s_l;
    let tc = dc / s_c;
    let th = dh / s_h;
    (tl * tl + tc * tc + th * th + r_t * tc * th).sqrt()
}

fn hue_deg(b: f64, ap: f64) -> f64 {
    if b == 0.0 && ap == 0.0 {
        return 0.0;
    }
    let h = b.atan2(ap).to_degrees();
    if h < 0.0 {
        h + 360.0
    } else {
        h
    }
}

/// Per-pixel CIEDE2000 between two Lab images (3 channels: L*, a*, b*),
/// with masked mean and max.
pub fn de00(
    a_lab: &Raster,
    b_lab: &Raster,
    mask: Option<&Raster>,
) -> Result<De00Stats, MetricsError> {
    if !a_lab.same_shape(b_lab) || a_lab.channels() != 3 {
        return Err(MetricsError::ShapeMismatch {
            a: a_lab.shape_string(),
            b: b_lab.shape_string(),
        });
    }
    if let Some(m) = mask {
        if m.channels() != 1 || m.dims() != a_lab.dims() {
            return Err(MetricsError::BadMask);
        }
    }
    let (w, h) = a_lab.dims();
    let mut map = Raster::new(w, h, 1).expect("valid dims");
    let mut sum = 0.0f64;
    let mut max = 0.0f64;
    let mut count = 0usize;
    for y in 0..h {
        for x in 0..w {
            if let Some(m) = mask {
                if m.get(x, y, 0) <= 0.5 {
                    continue;
                }
            }
            let pa = a_lab.pixel(x, y);
            let pb = b_lab.pixel(x, y);
            let de = ciede2000(
                [pa[0] as f64, pa[1] as f64, pa[2] as f64],
                [pb[0] as f64, pb[1] as f64, pb[2] as f64],
            );
            map.set(x, y, 0, de as f32);
            sum += de;
            max = max.max(de);
            count += 1;
        }
    }
    if count == 0 {
        return Err(MetricsError::EmptyMask);
    }
    Ok(De00Stats {
        mean: sum / count as f64,
        max,
        map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_labs_give_zero() {
        assert_eq!(ciede2000([50.0, 10.0, -20.0], [50.0, 10.0, -20.0]), 0.0);
    }

    #[test]
    fn unit_lightness_step_near_mid_gray_is_about_one() {
        // S_L ~ 1.0008 at L_bar = 50.5, so ΔE is just under 1.
        let de = ciede2000([50.0, 0.0, 0.0], [51.0, 0.0, 0.0]);
        assert!((de - 0.9992).abs() < 1e-3, "ΔE {de}");
    }

    #[test]
    fn matches_published_reference_pairs() {
        // (lab1, lab2, expected) from the standard CIEDE2000 test set.
        let cases: [([f64; 3], [f64; 3], f64); 7] = [
            ([50.0, 2.6772, -79.7751], [50.0, 0.0, -82.7485], 2.0425),
            ([50.0, 3.1571, -77.2803], [50.0, 0.0, -82.7485], 2.8615),
            ([50.0, 2.8361, -74.0200], [50.0, 0.0, -82.7485], 3.4412),
            ([50.0, -1.3802, -84.2814], [50.0, 0.0, -82.7485], 1.0000),
            ([50.0, -1.1848, -84.8006], [50.0, 0.0, -82.7485], 1.0000),
            ([50.0, 2.5, 0.0], [73.0, 25.0, -18.0], 27.1492),
            ([35.0831, -44.1164, 3.7933], [35.0232, -40.0716, 1.5901], 1.8645),
        ];
        for (lab1, lab2, expected) in cases {
            let got = ciede2000(lab1, lab2);
            assert!(
                (got - expected).abs() < 1e-4,
                "{lab1:?} vs {lab2:?}: got {got}, expected {expected}"
            );
        }
    }

    #[test]
    fn symmetric_in_its_arguments() {
        let pairs = [
            ([61.0, -20.0, 35.0], [58.0, -15.0, 41.0]),
            ([12.0, 5.0, -40.0], [14.0, 8.0, -38.0]),
            ([50.0, 2.5, 0.0], [61.0, -5.0, 29.0]),
        ];
        for (p, q) in pairs {
            let d1 = ciede2000(p, q);
            let d2 = ciede2000(q, p);
            assert!((d1 - d2).abs() < 1e-12, "{p:?}/{q:?}: {d1} vs {d2}");
        }
    }

    #[test]
    fn image_level_stats_respect_the_mask() {
        let mut a = Raster::new(4, 4, 3).unwrap();
        let mut b = Raster::new(4, 4, 3).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                a.set(x, y, 0, 50.0);
                b.set(x, y, 0, 50.0);
            }
        }
        b.set(0, 0, 0, 60.0); // large difference outside the mask
        let mut mask = Raster::new(4, 4, 1).unwrap();
        for y in 2..4 {
            for x in 0..4 {
                mask.set(x, y, 0, 1.0);
            }
        }
        let stats = de00(&a, &b, Some(&mask)).unwrap();
        assert_eq!(stats.mean, 0.0);
        assert_eq!(stats.max, 0.0);
    }
}
