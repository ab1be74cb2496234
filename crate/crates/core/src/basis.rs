//! Modal bases of the coupled problem and the gap field they induce.

use crate::beam::{build_beam_modes, BeamModes};
use crate::config::DeviceConfig;
use crate::error::{ContactPoint, Error, Result};
use crate::squeeze::{build_squeeze_modes, SqueezeMode};

#[derive(Debug, Clone, PartialEq)]
pub struct ModalBasis {
    pub beam: BeamModes,
    pub squeeze: Vec<SqueezeMode>,
}

impl ModalBasis {
    pub fn new(cfg: &DeviceConfig) -> Result<Self> {
        Ok(ModalBasis { beam: build_beam_modes(cfg)?, squeeze: build_squeeze_modes(cfg)? })
    }

    pub fn n_beam(&self) -> usize {
        self.beam.len()
    }

    pub fn n_squeeze(&self) -> usize {
        self.squeeze.len()
    }
}

/// Gap and its axial derivatives at one point of the film.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapSample {
    pub g: f64,
    pub gx: f64,
    pub gxx: f64,
}

/// `G = G0 - sum_j x_j psi_j`. A non-positive gap is reported as [`Error::Contact`].
pub fn gap_field(
    basis: &ModalBasis,
    cfg: &DeviceConfig,
    coords: &[f64],
    point: (f64, f64),
) -> Result<GapSample> {
    let (u, du, ddu) = basis.beam.deflection(coords, point.0);
    let g = cfg.gap - u;
    if g <= 0.0 || g.is_nan() {
        return Err(Error::Contact(ContactPoint { x: point.0, y: point.1, gap: g }));
    }
    Ok(GapSample { g, gx: -du, gxx: -ddu })
}

/// `Laplacian(G^{3/2})` from the gap sample; `G` varies along the beam axis only.
#[inline]
pub fn laplacian_g32_from(sample: GapSample) -> f64 {
    let sq = sample.g.sqrt();
    1.5 * sq * sample.gxx + 0.75 * sample.gx * sample.gx / sq
}

pub fn laplacian_g32(
    basis: &ModalBasis,
    cfg: &DeviceConfig,
    coords: &[f64],
    point: (f64, f64),
) -> Result<f64> {
    gap_field(basis, cfg, coords, point).map(laplacian_g32_from)
}
