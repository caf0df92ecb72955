use super::MetricsError;
use crate::imaging::Raster;

/// Windowed-SSIM parameters; defaults are the standard constants.
#[derive(Clone, Copy, Debug)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Average per-channel scores instead of comparing Rec. 709 luma.
    pub per_channel: bool,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            per_channel: false,
        }
    }
}

/// SSIM with default parameters (11-pixel Gaussian window, σ = 1.5,
/// K1 = 0.01, K2 = 0.03, dynamic range 1, scored on luma).
pub fn ssim(a: &Raster, b: &Raster, mask: Option<&Raster>) -> Result<f64, MetricsError> {
    ssim_with(a, b, mask, SsimParams::default())
}

/// Mean SSIM over all windows that fit fully inside the image (and, when a
/// mask is given, whose every pixel is masked in).
pub fn ssim_with(
    a: &Raster,
    b: &Raster,
    mask: Option<&Raster>,
    params: SsimParams,
) -> Result<f64, MetricsError> {
    if !a.same_shape(b) {
        return Err(MetricsError::ShapeMismatch {
            a: a.shape_string(),
            b: b.shape_string(),
        });
    }
    let (w, h) = a.dims();
    if w < params.window || h < params.window {
        return Err(MetricsError::WindowTooLarge {
            width: w,
            height: h,
            window: params.window,
        });
    }
    if let Some(m) = mask {
        if m.channels() != 1 || m.dims() != a.dims() {
            return Err(MetricsError::BadMask);
        }
    }

    if params.per_channel && a.channels() == 3 {
        let mut total = 0.0;
        for c in 0..3 {
            total += ssim_plane(&plane(a, c), &plane(b, c), w, h, mask, &params)?;
        }
        Ok(total / 3.0)
    } else {
        let la = plane(&a.luma(), 0);
        let lb = plane(&b.luma(), 0);
        ssim_plane(&la, &lb, w, h, mask, &params)
    }
}

fn plane(r: &Raster, c: usize) -> Vec<f64> {
    let c = c.min(r.channels() - 1);
    let mut out = Vec::with_capacity(r.width() * r.height());
    for y in 0..r.height() {
        for x in 0..r.width() {
            out.push(r.get(x, y, c) as f64);
        }
    }
    out
}

fn gaussian_kernel(window: usize, sigma: f64) -> Vec<f64> {
    let half = (window - 1) as f64 / 2.0;
    let mut k: Vec<f64> = (0..window)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

// Separable Gaussian filter evaluated only where the window fits.
fn filter_valid(src: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    let win = kernel.len();
    let out_w = width - win + 1;
    let out_h = height - win + 1;
    let mut tmp = vec![0.0f64; out_w * height];
    for y in 0..height {
        for x in 0..out_w {
            let mut acc = 0.0;
            for (i, &k) in kernel.iter().enumerate() {
                acc += k * src[y * width + x + i];
            }
            tmp[y * out_w + x] = acc;
        }
    }
    let mut out = vec![0.0f64; out_w * out_h];
    for y in 0..out_h {
        for x in 0..out_w {
            let mut acc = 0.0;
            for (i, &k) in kernel.iter().enumerate() {
                acc += k * tmp[(y + i) * out_w + x];
            }
            out[y * out_w + x] = acc;
        }
    }
    out
}

fn ssim_plane(
    a: &[f64],
    b: &[f64],
    width: usize,
    height: usize,
    mask: Option<&Raster>,
    params: &SsimParams,
) -> Result<f64, MetricsError> {
    let kernel = gaussian_kernel(params.window, params.sigma);
    let sq_a: Vec<f64> = a.iter().map(|&v| v * v).collect();
    let sq_b: Vec<f64> = b.iter().map(|&v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| x * y).collect();

    let mu_a = filter_valid(a, width, height, &kernel);
    let mu_b = filter_valid(b, width, height, &kernel);
    let m_aa = filter_valid(&sq_a, width, height, &kernel);
    let m_bb = filter_valid(&sq_b, width, height, &kernel);
    let m_ab = filter_valid(&ab, width, height, &kernel);
    let out_w = width - params.window + 1;
    let out_h = height - params.window + 1;

    let window_ok = |wx: usize, wy: usize| -> bool {
        match mask {
            None => true,
            Some(m) => {
                for y in wy..wy + params.window {
                    for x in wx..wx + params.window {
                        if m.get(x, y, 0) <= 0.5 {
                            return false;
                        }
                    }
                }
                true
            }
        }
    };

    let c1 = params.k1 * params.k1;
    let c2 = params.k2 * params.k2;
    let mut total = 0.0f64;
    let mut count = 0usize;
    for wy in 0..out_h {
        for wx in 0..out_w {
            if !window_ok(wx, wy) {
                continue;
            }
            let i = wy * out_w + wx;
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = m_aa[i] - ma * ma;
            let var_b = m_bb[i] - mb * mb;
            let cov = m_ab[i] - ma * mb;
            let s = ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
            total += s;
            count += 1;
        }
    }
    if count == 0 {
        return Err(MetricsError::EmptyMask);
    }
    Ok(total / count as f64)
}
