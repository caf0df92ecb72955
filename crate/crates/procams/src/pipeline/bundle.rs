use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::geometry::{AffineMap, FlowField, Rect};
use crate::imaging::{read_pfm, write_pfm, Raster};
use crate::photometric::{
    fit_from_priors, levels_for_k, PhotometricModel, SurfacePriorSet,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationMethod {
    /// Structured-light decode; exact integer correspondences.
    Graycode,
    /// Dense optical flow against a single textured reference projection.
    Flow,
}

/// Cost accounting for the calibration run that produced a bundle.
///
/// Wall-clock numbers are in-memory diagnostics only; `save` persists just
/// the capture count so stored bundles stay bit-reproducible across runs.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct CalibrationTiming {
    /// Number of projected-and-captured frames consumed.
    pub captures: usize,
    #[serde(skip)]
    pub capture_ms: f64,
    #[serde(skip)]
    pub solve_ms: f64,
    #[serde(skip)]
    pub total_ms: f64,
}

/// Everything a setup needs for per-frame compensation, computed once.
///
/// Frames: the projector grid P, the camera grid C, and the crop B (the
/// bounding box of the camera's lit region). `flow` lives on P and points
/// into B; `back_flow` lives on B and points into P; both are densely
/// filled, with `projector_mask` recording which P pixels were genuinely
/// observed. The photometric model and warped priors live on P.
#[derive(Clone)]
pub struct CalibrationBundle {
    pub method: CalibrationMethod,
    pub camera_size: (usize, usize),
    pub projector_size: (usize, usize),
    /// Origin of B inside the camera frame.
    pub crop_offset: (usize, usize),
    pub crop_size: (usize, usize),
    /// Lit-region mask on B (1 channel, 0/1).
    pub camera_mask: Raster,
    /// Observed-correspondence mask on P (1 channel, 0/1).
    pub projector_mask: Raster,
    /// P -> B, dense.
    pub flow: FlowField,
    /// B -> P, dense.
    pub back_flow: FlowField,
    /// Largest axis-aligned rectangle inscribed in the lit region (B coords).
    pub rect: Rect,
    /// Projector frame onto `rect`, used to build desired targets.
    pub affine: AffineMap,
    /// Probe captures warped onto P; the model is fitted from these alone.
    pub priors_warped: SurfacePriorSet,
    pub model: PhotometricModel,
    pub timing: CalibrationTiming,
}

#[derive(Serialize, Deserialize)]
struct BundleHeader {
    method: CalibrationMethod,
    camera_size: (usize, usize),
    projector_size: (usize, usize),
    crop_offset: (usize, usize),
    crop_size: (usize, usize),
    rect: Rect,
    affine: AffineMap,
    timing: CalibrationTiming,
    prior_levels: Vec<u8>,
}

fn io_err(context: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io {
        context: context.display().to_string(),
        source,
    }
}

impl CalibrationBundle {
    /// Binary mask of the inscribed rectangle on B; the region metrics and
    /// desired targets are defined over.
    pub fn rect_mask(&self) -> Raster {
        let (w, h) = self.crop_size;
        Raster::from_fn(w, h, 1, |x, y| {
            [if self.rect.contains(x, y) { 1.0 } else { 0.0 }; 3]
        })
        .expect("crop dims are valid")
    }

    /// Rebuild the photometric model from a subset of the stored priors.
    /// Only works toward smaller prior counts; geometry is shared as-is.
    pub fn refit_with_k(&self, k: usize) -> Result<Self, PipelineError> {
        let levels = levels_for_k(k).ok_or_else(|| PipelineError::BadInput {
            what: format!("unsupported prior count {k}"),
        })?;
        let mut priors = Vec::with_capacity(k);
        for &level in levels {
            let prior = self
                .priors_warped
                .prior_at(level)
                .ok_or_else(|| PipelineError::BadInput {
                    what: format!(
                        "bundle holds priors {:?}; cannot refit for level {level}",
                        self.priors_warped.levels()
                    ),
                })?;
            priors.push(prior.clone());
        }
        let set = SurfacePriorSet::new(levels.to_vec(), priors)?;
        let mut model = fit_from_priors(&set)?;
        model.set_mixing(self.model.mixing().cloned());
        Ok(Self {
            priors_warped: set,
            model,
            ..self.clone()
        })
    }

    pub fn save(&self, dir: &Path) -> Result<(), PipelineError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let header = BundleHeader {
            method: self.method,
            camera_size: self.camera_size,
            projector_size: self.projector_size,
            crop_offset: self.crop_offset,
            crop_size: self.crop_size,
            rect: self.rect,
            affine: self.affine,
            timing: self.timing,
            prior_levels: self.priors_warped.levels().to_vec(),
        };
        let path = dir.join("bundle.json");
        let json = serde_json::to_string_pretty(&header).expect("header serializes");
        fs::write(&path, json).map_err(|e| io_err(&path, e))?;
        self.flow.save(&dir.join("flow.pfm"))?;
        self.back_flow.save(&dir.join("back_flow.pfm"))?;
        write_pfm(&self.camera_mask, &dir.join("camera_mask.pfm"))?;
        write_pfm(&self.projector_mask, &dir.join("projector_mask.pfm"))?;
        for (&level, prior) in self
            .priors_warped
            .levels()
            .iter()
            .zip(self.priors_warped.priors())
        {
            write_pfm(prior, &dir.join(format!("prior_{level:03}.pfm")))?;
        }
        self.model.save(&dir.join("model"))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        let path = dir.join("bundle.json");
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let header: BundleHeader =
            serde_json::from_str(&text).map_err(|e| PipelineError::Json {
                context: path.display().to_string(),
                message: e.to_string(),
            })?;
        let flow = FlowField::load(&dir.join("flow.pfm"))?;
        let back_flow = FlowField::load(&dir.join("back_flow.pfm"))?;
        let camera_mask = read_pfm(&dir.join("camera_mask.pfm"))?;
        let projector_mask = read_pfm(&dir.join("projector_mask.pfm"))?;
        let mut priors = Vec::new();
        for &level in &header.prior_levels {
            priors.push(read_pfm(&dir.join(format!("prior_{level:03}.pfm")))?);
        }
        let priors_warped = SurfacePriorSet::new(header.prior_levels.clone(), priors)?;
        let model = PhotometricModel::load(&dir.join("model"))?;
        let bundle = Self {
            method: header.method,
            camera_size: header.camera_size,
            projector_size: header.projector_size,
            crop_offset: header.crop_offset,
            crop_size: header.crop_size,
            camera_mask,
            projector_mask,
            flow,
            back_flow,
            rect: header.rect,
            affine: header.affine,
            priors_warped,
            model,
            timing: header.timing,
        };
        bundle.check_aligned()?;
        Ok(bundle)
    }

    /// All stored frames must agree on the P and B grids.
    pub fn check_aligned(&self) -> Result<(), PipelineError> {
        let misaligned = |what: &str| PipelineError::Misaligned { what: what.into() };
        let p = self.projector_size;
        let b = self.crop_size;
        if self.flow.dims() != p || self.flow.source_size() != b {
            return Err(misaligned("flow frame does not match P -> B"));
        }
        if self.back_flow.dims() != b || self.back_flow.source_size() != p {
            return Err(misaligned("back flow frame does not match B -> P"));
        }
        if self.camera_mask.dims() != b || self.camera_mask.channels() != 1 {
            return Err(misaligned("camera mask is not a 1-channel crop frame"));
        }
        if self.projector_mask.dims() != p || self.projector_mask.channels() != 1 {
            return Err(misaligned("projector mask is not a 1-channel P frame"));
        }
        if self.priors_warped.dims() != p {
            return Err(misaligned("warped priors do not live on P"));
        }
        if self.model.dims() != p {
            return Err(misaligned("model does not live on P"));
        }
        if self.crop_offset.0 + b.0 > self.camera_size.0
            || self.crop_offset.1 + b.1 > self.camera_size.1
        {
            return Err(misaligned("crop escapes the camera frame"));
        }
        if self.rect.x + self.rect.w > b.0 || self.rect.y + self.rect.h > b.1 {
            return Err(misaligned("inscribed rectangle escapes the crop"));
        }
        Ok(())
    }
}
