use super::ImagingError;

/// Row-major interleaved float image, 1 (gray) or 3 (RGB) channels.
///
/// Values are nominally in `[0, 1]`; constructors only enforce finiteness so
/// intermediates (flow magnitudes, normalized ratios) can live here too. Use
/// [`Raster::validate_unit_range`] at contract boundaries that require
/// normalized data.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    samples: Vec<f32>,
}

impl Raster {
    /// All-zero raster. `channels` must be 1 or 3 and the area non-empty.
    pub fn new(width: usize, height: usize, channels: usize) -> Result<Self, ImagingError> {
        Self::check_dims(width, height, channels)?;
        Ok(Self {
            width,
            height,
            channels,
            samples: vec![0.0; width * height * channels],
        })
    }

    /// Raster filled with a single value.
    pub fn constant(
        width: usize,
        height: usize,
        channels: usize,
        value: f32,
    ) -> Result<Self, ImagingError> {
        let mut r = Self::new(width, height, channels)?;
        r.samples.fill(value);
        Ok(r)
    }

    /// Wrap an existing sample buffer (row-major, interleaved).
    pub fn from_samples(
        width: usize,
        height: usize,
        channels: usize,
        samples: Vec<f32>,
    ) -> Result<Self, ImagingError> {
        Self::check_dims(width, height, channels)?;
        let expected = width * height * channels;
        if samples.len() != expected {
            return Err(ImagingError::SampleCount {
                got: samples.len(),
                expected,
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            samples,
        })
    }

    /// Build per-pixel: `f(x, y) -> [f32; C]` with C == channels.
    pub fn from_fn<F>(
        width: usize,
        height: usize,
        channels: usize,
        mut f: F,
    ) -> Result<Self, ImagingError>
    where
        F: FnMut(usize, usize) -> [f32; 3],
    {
        let mut r = Self::new(width, height, channels)?;
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                let base = (y * width + x) * channels;
                r.samples[base..base + channels].copy_from_slice(&v[..channels]);
            }
        }
        Ok(r)
    }

    fn check_dims(width: usize, height: usize, channels: usize) -> Result<(), ImagingError> {
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
            return Err(ImagingError::InvalidDimensions {
                width,
                height,
                channels,
            });
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f32] {
        &mut self.samples
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        self.samples[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        self.samples[(y * self.width + x) * self.channels + c] = v;
    }

    /// Interleaved components of one pixel.
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let base = (y * self.width + x) * self.channels;
        &self.samples[base..base + self.channels]
    }

    /// Pixel as an RGB triple; gray broadcasts to all three components.
    #[inline]
    pub fn pixel_rgb(&self, x: usize, y: usize) -> [f32; 3] {
        let p = self.pixel(x, y);
        if self.channels == 1 {
            [p[0], p[0], p[0]]
        } else {
            [p[0], p[1], p[2]]
        }
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.channels == other.channels
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}", self.width, self.height, self.channels)
    }

    pub fn require_same_shape(
        &self,
        other: &Raster,
        what: &'static str,
    ) -> Result<(), ImagingError> {
        if !self.same_shape(other) {
            return Err(ImagingError::Mismatch {
                a: self.shape_string(),
                b: other.shape_string(),
                what,
            });
        }
        Ok(())
    }

    /// Error if any sample is non-finite or outside `[0, 1]`.
    pub fn validate_unit_range(&self) -> Result<(), ImagingError> {
        for (i, &v) in self.samples.iter().enumerate() {
            if !v.is_finite() {
                return Err(ImagingError::NonFinite { index: i });
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(ImagingError::OutOfRange { value: v });
            }
        }
        Ok(())
    }

    /// Clamp all samples into `[0, 1]` in place.
    pub fn clamp_unit(&mut self) {
        for v in &mut self.samples {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn map<F: FnMut(f32) -> f32>(&self, mut f: F) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            channels: self.channels,
            samples: self.samples.iter().map(|&v| f(v)).collect::<Vec<_>>(),
        }
    }

    /// Samplewise combination; shapes must match.
    pub fn zip_map<F: Fn(f32, f32) -> f32>(
        &self,
        other: &Raster,
        f: F,
    ) -> Result<Raster, ImagingError> {
        self.require_same_shape(other, "zip_map")?;
        Ok(Raster {
            width: self.width,
            height: self.height,
            channels: self.channels,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn min_max(&self) -> (f32, f32) {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for &v in &self.samples {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    pub fn mean(&self) -> f64 {
        let sum: f64 = self.samples.iter().map(|&v| v as f64).sum();
        sum / self.samples.len() as f64
    }

    /// Mean absolute difference over all samples; shapes must match.
    pub fn mean_abs_diff(&self, other: &Raster) -> Result<f64, ImagingError> {
        self.require_same_shape(other, "mean_abs_diff")?;
        let sum: f64 = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .sum();
        Ok(sum / self.samples.len() as f64)
    }

    /// Copy a rectangular window. The window must lie inside the raster.
    pub fn crop(
        &self,
        x0: usize,
        y0: usize,
        w: usize,
        h: usize,
    ) -> Result<Raster, ImagingError> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(ImagingError::InvalidDimensions {
                width: w,
                height: h,
                channels: self.channels,
            });
        }
        let mut out = Raster::new(w, h, self.channels)?;
        for y in 0..h {
            let src = ((y0 + y) * self.width + x0) * self.channels;
            let dst = y * w * self.channels;
            out.samples[dst..dst + w * self.channels]
                .copy_from_slice(&self.samples[src..src + w * self.channels]);
        }
        Ok(out)
    }

    /// Bilinear sample at continuous pixel-center coordinates.
    ///
    /// Integer coordinates hit pixel centers. Returns `None` when the
    /// position falls outside `[0, w-1] x [0, h-1]`.
    pub fn sample_bilinear(&self, x: f32, y: f32) -> Option<[f32; 3]> {
        let wm = (self.width - 1) as f32;
        let hm = (self.height - 1) as f32;
        if !(x.is_finite() && y.is_finite()) || x < 0.0 || y < 0.0 || x > wm || y > hm {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width - 1);
        let y0 = (y.floor() as usize).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f32;
        let fy = y - y0 as f32;
        let p00 = self.pixel_rgb(x0, y0);
        let p10 = self.pixel_rgb(x1, y0);
        let p01 = self.pixel_rgb(x0, y1);
        let p11 = self.pixel_rgb(x1, y1);
        let mut out = [0.0f32; 3];
        for c in 0..3 {
            let top = p00[c] + (p10[c] - p00[c]) * fx;
            let bot = p01[c] + (p11[c] - p01[c]) * fx;
            out[c] = top + (bot - top) * fy;
        }
        Some(out)
    }

    /// Per-pixel luma (Rec. 709 weights); identity copy for gray rasters.
    pub fn luma(&self) -> Raster {
        if self.channels == 1 {
            return self.clone();
        }
        let mut out = Raster::new(self.width, self.height, 1).expect("valid dims");
        for (i, px) in self.samples.chunks_exact(3).enumerate() {
            out.samples[i] = 0.2126 * px[0] + 0.7152 * px[1] + 0.0722 * px[2];
        }
        out
    }

    /// Gray raster expanded to 3 channels (no-op copy for RGB).
    pub fn to_rgb(&self) -> Raster {
        if self.channels == 3 {
            return self.clone();
        }
        let mut samples = Vec::with_capacity(self.samples.len() * 3);
        for &v in &self.samples {
            samples.extend_from_slice(&[v, v, v]);
        }
        Raster {
            width: self.width,
            height: self.height,
            channels: 3,
            samples,
        }
    }
}
