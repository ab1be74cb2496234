//! Clamped-clamped Euler-Bernoulli beam modes.
//!
//! Shapes are `cosh(bx) - cos(bx) - s (sinh(bx) - sin(bx))` with `bL` a root of
//! `cos(bL) cosh(bL) = 1`, rescaled so that `int_0^L psi^2 dx = L`. Deflection is
//! positive toward the substrate.

use nalgebra::DMatrix;

use crate::config::DeviceConfig;
use crate::error::{Error, Result};
use crate::quadrature::GaussRule;

#[derive(Debug, Clone, PartialEq)]
pub struct BeamMode {
    /// Wavenumber `beta_j` (1/m).
    pub beta: f64,
    pub sigma: f64,
    /// `(1 + sigma) / 2` and `(1 - sigma) / 2`, the latter computed without cancellation.
    a: f64,
    b: f64,
    /// Normalization factor applied to the raw shape.
    scale: f64,
    /// Modal angular frequency including residual stress (rad/s).
    pub omega: f64,
}

impl BeamMode {
    /// `(psi, psi', psi'')` at axial position `x`.
    #[inline]
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let t = self.beta * x;
        let em = (-t).exp();
        let ep = t.exp();
        let (s, c) = t.sin_cos();
        let ae = self.a * em;
        let be = self.b * ep;
        let v = ae + be - c + self.sigma * s;
        let d = -ae + be + s + self.sigma * c;
        let dd = ae + be + c - self.sigma * s;
        (
            self.scale * v,
            self.scale * self.beta * d,
            self.scale * self.beta * self.beta * dd,
        )
    }

    pub fn value(&self, x: f64) -> f64 {
        self.eval(x).0
    }
}

/// Mode set together with the modal integrals needed for mass and stiffness.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamModes {
    pub length: f64,
    pub modes: Vec<BeamMode>,
    /// `int psi_j dx` (m).
    pub mean: Vec<f64>,
    /// `int psi_i' psi_j' dx` (1/m).
    pub slope_gram: DMatrix<f64>,
    /// `int psi_i'' psi_j'' dx` (1/m^3).
    pub curvature_gram: DMatrix<f64>,
    /// `int psi_i psi_j dx` (m), `L` times identity up to quadrature error.
    pub mass_gram: DMatrix<f64>,
}

/// Root of `cos(t) cosh(t) = 1` in `(j pi, (j+1) pi)`, `j >= 1`.
pub fn clamped_root(j: usize) -> Result<f64> {
    use std::f64::consts::PI;
    let f = |t: f64| t.cos() - 1.0 / t.cosh();
    let mut lo = j as f64 * PI;
    let mut hi = (j + 1) as f64 * PI;
    let mut flo = f(lo);
    if flo * f(hi) > 0.0 {
        return Err(Error::RootFinding(format!("no sign change for clamped root {j}")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-14 * mid {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(Error::RootFinding(format!("bisection for clamped root {j} stalled")))
}

pub fn build_beam_modes(cfg: &DeviceConfig) -> Result<BeamModes> {
    cfg.validate()?;
    let l = cfg.length;
    let rule = GaussRule::composite(16, 8 * cfg.n_beam_modes.max(2), 0.0, l);
    let mut modes = Vec::with_capacity(cfg.n_beam_modes);
    for j in 1..=cfg.n_beam_modes {
        let bl = clamped_root(j)?;
        let beta = bl / l;
        let (sb, cb) = bl.sin_cos();
        let denom = bl.sinh() - sb;
        let sigma = (bl.cosh() - cb) / denom;
        let one_minus_sigma = (-(-bl).exp() - sb + cb) / denom;
        let mut mode = BeamMode {
            beta,
            sigma,
            a: 0.5 * (1.0 + sigma),
            b: 0.5 * one_minus_sigma,
            scale: 1.0,
            omega: 0.0,
        };
        let norm = rule.integrate(|x| mode.value(x).powi(2));
        mode.scale = (l / norm).sqrt();
        modes.push(mode);
    }

    let n = modes.len();
    let mut mean = vec![0.0; n];
    let mut slope_gram = DMatrix::<f64>::zeros(n, n);
    let mut curvature_gram = DMatrix::zeros(n, n);
    let mut mass_gram = DMatrix::zeros(n, n);
    for (&x, &wt) in rule.nodes.iter().zip(&rule.weights) {
        let vals: Vec<(f64, f64, f64)> = modes.iter().map(|m| m.eval(x)).collect();
        for i in 0..n {
            mean[i] += wt * vals[i].0;
            for j in 0..n {
                mass_gram[(i, j)] += wt * vals[i].0 * vals[j].0;
                slope_gram[(i, j)] += wt * vals[i].1 * vals[j].1;
                curvature_gram[(i, j)] += wt * vals[i].2 * vals[j].2;
            }
        }
    }

    let ei = cfg.youngs_modulus * cfg.inertia();
    let rho_a = cfg.density * cfg.area();
    for (j, mode) in modes.iter_mut().enumerate() {
        let bending = ei * mode.beta.powi(4) / rho_a;
        let stress = cfg.residual_stress * slope_gram[(j, j)] / l / cfg.density;
        let omega2 = bending + stress;
        if omega2 <= 0.0 {
            return Err(Error::Config(format!(
                "mode {} is buckled by the residual stress (omega^2 = {omega2:.3e})",
                j + 1
            )));
        }
        mode.omega = omega2.sqrt();
    }

    Ok(BeamModes { length: l, modes, mean, slope_gram, curvature_gram, mass_gram })
}

impl BeamModes {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Deflection `sum_j x_j psi_j(xi)` and its first two derivatives.
    pub fn deflection(&self, coords: &[f64], xi: f64) -> (f64, f64, f64) {
        let mut out = (0.0, 0.0, 0.0);
        for (m, &c) in self.modes.iter().zip(coords) {
            if c != 0.0 {
                let (v, d, dd) = m.eval(xi);
                out.0 += c * v;
                out.1 += c * d;
                out.2 += c * dd;
            }
        }
        out
    }

    /// `psi_j(L/2)` for every mode.
    pub fn midpoint_values(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.value(0.5 * self.length)).collect()
    }

    /// Midpoint deflection `sum_j x_j psi_j(L/2)`.
    pub fn midpoint_deflection(&self, coords: &[f64]) -> f64 {
        self.deflection(coords, 0.5 * self.length).0
    }
}
