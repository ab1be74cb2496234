//! Device description of the actuated microbeam and its squeeze film.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry, material, fluid and ambient parameters, SI units throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    /// Beam length (m).
    #[serde(rename = "L")]
    pub length: f64,
    /// Beam width (m), also the film width.
    #[serde(rename = "w")]
    pub width: f64,
    /// Beam thickness (m).
    #[serde(rename = "h")]
    pub thickness: f64,
    /// Nominal gap at rest (m).
    #[serde(rename = "G0")]
    pub gap: f64,
    #[serde(rename = "E")]
    pub youngs_modulus: f64,
    #[serde(rename = "rho")]
    pub density: f64,
    /// Residual axial stress (Pa), negative when compressive.
    #[serde(rename = "sigma_res", default)]
    pub residual_stress: f64,
    /// Effective viscosity of the gas (Pa s).
    #[serde(rename = "mu")]
    pub viscosity: f64,
    /// Ambient pressure (Pa).
    #[serde(rename = "P0")]
    pub ambient_pressure: f64,
    #[serde(rename = "eps0", default = "default_eps0")]
    pub permittivity: f64,
    /// Number of mechanical modes.
    #[serde(rename = "Nm")]
    pub n_beam_modes: usize,
    /// Squeeze mode indices `(k_x, k_y)`.
    pub squeeze_mode_indices: Vec<(u32, u32)>,
}

fn default_eps0() -> f64 {
    8.854_187_812_8e-12
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self::microswitch()
    }
}

impl DeviceConfig {
    /// Fixed-fixed polysilicon microswitch at atmospheric pressure.
    ///
    /// Geometry and material of the classic 610 um bridge, with a 1.9 um gap so
    /// that steps of 9 to 10.5 V are all past dynamic pull-in.
    pub fn microswitch() -> Self {
        DeviceConfig {
            length: 610e-6,
            width: 40e-6,
            thickness: 2.2e-6,
            gap: 1.9e-6,
            youngs_modulus: 149e9,
            density: 2330.0,
            residual_stress: -3.7e6,
            viscosity: 1.8e-5,
            ambient_pressure: 1.013e5,
            permittivity: default_eps0(),
            n_beam_modes: 3,
            squeeze_mode_indices: vec![(0, 1), (0, 3), (2, 1), (2, 3)],
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: DeviceConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("L", self.length),
            ("w", self.width),
            ("h", self.thickness),
            ("G0", self.gap),
            ("E", self.youngs_modulus),
            ("rho", self.density),
            ("mu", self.viscosity),
            ("P0", self.ambient_pressure),
            ("eps0", self.permittivity),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {value}")));
            }
        }
        if !self.residual_stress.is_finite() {
            return Err(Error::Config("sigma_res must be finite".into()));
        }
        // thin-film regime
        if self.gap * 10.0 > self.length.min(self.width) {
            return Err(Error::Config(format!(
                "G0 = {} m is not small compared to the lateral dimensions",
                self.gap
            )));
        }
        if self.n_beam_modes == 0 {
            return Err(Error::Config("Nm must be >= 1".into()));
        }
        if self.squeeze_mode_indices.is_empty() {
            return Err(Error::Config("squeeze_mode_indices must not be empty".into()));
        }
        for (i, &(kx, ky)) in self.squeeze_mode_indices.iter().enumerate() {
            if ky < 1 {
                return Err(Error::Config(format!("squeeze mode ({kx},{ky}): k_y must be >= 1")));
            }
            if self.squeeze_mode_indices[..i].contains(&(kx, ky)) {
                return Err(Error::Config(format!("duplicate squeeze mode ({kx},{ky})")));
            }
        }
        Ok(())
    }

    /// Second moment of area `w h^3 / 12`.
    pub fn inertia(&self) -> f64 {
        self.width * self.thickness.powi(3) / 12.0
    }

    pub fn area(&self) -> f64 {
        self.width * self.thickness
    }

    pub fn n_squeeze_modes(&self) -> usize {
        self.squeeze_mode_indices.len()
    }

    /// Length of the full state `(x, v, s)`.
    pub fn state_len(&self) -> usize {
        2 * self.n_beam_modes + self.n_squeeze_modes()
    }
}
