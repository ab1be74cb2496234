//! Pressure eigenmodes of the film: `c cos(k_x pi x / L) sin(k_y pi (y + w/2) / w)`.
//!
//! Zero normal flux at the clamped ends, ambient pressure along the two vented
//! long edges. Modes are orthonormal on the film domain.

use std::f64::consts::PI;

use crate::config::DeviceConfig;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct SqueezeMode {
    pub kx: u32,
    pub ky: u32,
    /// Normalization constant (1/m).
    pub norm: f64,
    /// Eigenvalue `lambda^2` of `-Laplacian` (1/m^2).
    pub lambda2: f64,
    /// `k_x pi / L`
    pub ax: f64,
    /// `k_y pi / w`
    pub ay: f64,
    half_width: f64,
}

impl SqueezeMode {
    #[inline]
    pub fn x_factor(&self, x: f64) -> f64 {
        (self.ax * x).cos()
    }

    #[inline]
    pub fn y_factor(&self, y: f64) -> f64 {
        (self.ay * (y + self.half_width)).sin()
    }

    #[inline]
    pub fn value(&self, x: f64, y: f64) -> f64 {
        self.norm * self.x_factor(x) * self.y_factor(y)
    }

    /// Analytic Laplacian of the mode.
    pub fn laplacian(&self, x: f64, y: f64) -> f64 {
        -(self.ax * self.ax + self.ay * self.ay) * self.value(x, y)
    }

    /// `int_{-w/2}^{w/2} sin(k_y pi (y + w/2)/w) dy`
    pub fn y_mean_integral(&self) -> f64 {
        let w = 2.0 * self.half_width;
        if self.ky % 2 == 1 {
            2.0 * w / (self.ky as f64 * PI)
        } else {
            0.0
        }
    }
}

pub fn build_squeeze_modes(cfg: &DeviceConfig) -> Result<Vec<SqueezeMode>> {
    cfg.validate()?;
    let (l, w) = (cfg.length, cfg.width);
    Ok(cfg
        .squeeze_mode_indices
        .iter()
        .map(|&(kx, ky)| {
            let ax = kx as f64 * PI / l;
            let ay = ky as f64 * PI / w;
            let x_norm = if kx == 0 { l } else { 0.5 * l };
            SqueezeMode {
                kx,
                ky,
                norm: (1.0 / (x_norm * 0.5 * w)).sqrt(),
                lambda2: ax * ax + ay * ay,
                ax,
                ay,
                half_width: 0.5 * w,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::QuadratureGrid;

    #[test]
    fn orthonormal_on_domain() {
        let cfg = DeviceConfig::microswitch();
        let modes = build_squeeze_modes(&cfg).unwrap();
        let grid = QuadratureGrid::new(&cfg, 32, 32);
        for (k, a) in modes.iter().enumerate() {
            for (l, b) in modes.iter().enumerate() {
                let v = grid.integrate(|x, y| a.value(x, y) * b.value(x, y)).unwrap();
                let expect = if k == l { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-10, "({k},{l}) = {v}");
            }
        }
    }

    #[test]
    fn eigenvalue_formula_and_vented_edges() {
        let cfg = DeviceConfig::microswitch();
        let modes = build_squeeze_modes(&cfg).unwrap();
        let m01 = &modes[0];
        assert_eq!((m01.kx, m01.ky), (0, 1));
        let expect = (PI / cfg.width).powi(2);
        assert!((m01.lambda2 - expect).abs() <= 1e-15 * expect);
        for m in &modes {
            for i in 0..=10 {
                let x = cfg.length * i as f64 / 10.0;
                let scale = m.norm;
                assert!(m.value(x, 0.5 * cfg.width).abs() < 1e-12 * scale);
                assert!(m.value(x, -0.5 * cfg.width).abs() < 1e-12 * scale);
            }
        }
    }

    #[test]
    fn eigenrelation_by_finite_differences() {
        let cfg = DeviceConfig::microswitch();
        let modes = build_squeeze_modes(&cfg).unwrap();
        for m in &modes {
            let mut worst: f64 = 0.0;
            let mut peak: f64 = 0.0;
            for i in 0..20 {
                for j in 0..20 {
                    let x = cfg.length * (i as f64 + 0.5) / 20.0;
                    let y = cfg.width * ((j as f64 + 0.5) / 20.0 - 0.5);
                    worst = worst.max((m.laplacian(x, y) + m.lambda2 * m.value(x, y)).abs());
                    peak = peak.max(m.value(x, y).abs());
                    // analytic Laplacian vs a 5-point stencil
                    let (hx, hy) = (cfg.length * 1e-4, cfg.width * 1e-4);
                    let fd = (m.value(x + hx, y) - 2.0 * m.value(x, y) + m.value(x - hx, y)) / (hx * hx)
                        + (m.value(x, y + hy) - 2.0 * m.value(x, y) + m.value(x, y - hy)) / (hy * hy);
                    assert!((fd - m.laplacian(x, y)).abs() < 1e-5 * m.lambda2 * m.norm);
                }
            }
            assert!(worst < 1e-8 * m.lambda2 * peak);
        }
    }
}
