//! Float rasters, color conversions, resampling, and image file I/O.
//!
//! Everything downstream works on [`Raster`]: row-major interleaved `f32`
//! samples, 1 or 3 channels, nominally in `[0, 1]`. PNG is the 8-bit
//! interchange format (sRGB-coded storage; a write/read round trip returns
//! the in-memory values up to quantization). PFM carries raw floats for
//! flow fields and linear intermediates.

mod color;
mod io;
mod raster;
mod resample;

pub use color::{
    lab_image, linear_to_srgb, luma_image, rgb_to_lab, srgb_decode_clamped, srgb_to_linear,
    ColorSpace, ColorTriple,
};
pub use io::{png_quantized, read_pfm, read_png, write_pfm, write_png};
pub use raster::Raster;
pub use resample::resample_bilinear;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("invalid raster dimensions {width}x{height}x{channels}")]
    InvalidDimensions {
        width: usize,
        height: usize,
        channels: usize,
    },
    #[error("sample buffer holds {got} values, expected {expected}")]
    SampleCount { got: usize, expected: usize },
    #[error("rasters disagree: {a} vs {b} ({what})")]
    Mismatch {
        a: String,
        b: String,
        what: &'static str,
    },
    #[error("component {value} outside [0, 1]")]
    OutOfRange { value: f32 },
    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("png {context}: {message}")]
    Png { context: String, message: String },
    #[error("pfm {context}: {message}")]
    Pfm { context: String, message: String },
}
