//! Finite-difference clamped-clamped Euler-Bernoulli beam with midplane
//! stretching, on equally spaced nodes including both clamps.

use nalgebra::{DMatrix, DVector};

use crate::config::DeviceConfig;
use crate::error::{ContactPoint, Error, Result};

#[derive(Debug, Clone)]
pub struct FdBeam {
    pub nodes: usize,
    pub length: f64,
    pub width: f64,
    pub gap: f64,
    ei: f64,
    rho_a: f64,
    /// Residual axial force `sigma h w` (negative in compression).
    axial0: f64,
    /// `E h w / (2 L)`
    stretch: f64,
    permittivity: f64,
    /// Fourth-difference operator on interior nodes, clamps by mirror ghosts.
    d4: DMatrix<f64>,
    /// Second-difference operator on interior nodes.
    d2: DMatrix<f64>,
}

impl FdBeam {
    pub fn new(cfg: &DeviceConfig, nodes: usize) -> Result<Self> {
        if nodes < 9 || nodes.is_multiple_of(2) {
            return Err(Error::Config(format!("beam grid needs an odd node count >= 9, got {nodes}")));
        }
        let m = nodes - 2;
        let h = cfg.length / (nodes - 1) as f64;
        let mut d4 = DMatrix::zeros(m, m);
        let mut d2 = DMatrix::zeros(m, m);
        let stencil4 = [1.0, -4.0, 6.0, -4.0, 1.0];
        for r in 0..m {
            // node index k = r + 1; neighbours k-2..k+2, with w_0 = w_{n-1} = 0
            // and ghosts w_{-1} = w_1, w_n = w_{n-2}
            for (o, c) in stencil4.iter().enumerate() {
                let k = r as isize + 1 + o as isize - 2;
                let k = if k == -1 {
                    1
                } else if k == nodes as isize {
                    nodes as isize - 2
                } else {
                    k
                };
                if k == 0 || k == nodes as isize - 1 {
                    continue;
                }
                d4[(r, k as usize - 1)] += c / h.powi(4);
            }
            d2[(r, r)] = -2.0 / (h * h);
            if r > 0 {
                d2[(r, r - 1)] = 1.0 / (h * h);
            }
            if r + 1 < m {
                d2[(r, r + 1)] = 1.0 / (h * h);
            }
        }
        Ok(FdBeam {
            nodes,
            length: cfg.length,
            width: cfg.width,
            gap: cfg.gap,
            ei: cfg.youngs_modulus * cfg.inertia(),
            rho_a: cfg.density * cfg.area(),
            axial0: cfg.residual_stress * cfg.area(),
            stretch: cfg.youngs_modulus * cfg.area() / (2.0 * cfg.length),
            permittivity: cfg.permittivity,
            d4,
            d2,
        })
    }

    pub fn spacing(&self) -> f64 {
        self.length / (self.nodes - 1) as f64
    }

    pub fn interior(&self) -> usize {
        self.nodes - 2
    }

    /// Node positions including the clamps.
    pub fn positions(&self) -> Vec<f64> {
        (0..self.nodes).map(|k| k as f64 * self.spacing()).collect()
    }

    /// Full nodal profile from interior values.
    pub fn with_clamps(&self, w: &DVector<f64>) -> Vec<f64> {
        let mut out = vec![0.0; self.nodes];
        out[1..self.nodes - 1].copy_from_slice(w.as_slice());
        out
    }

    /// `int w'^2 dx` from forward differences.
    pub fn slope_energy(&self, w: &DVector<f64>) -> f64 {
        let full = self.with_clamps(w);
        let h = self.spacing();
        full.windows(2).map(|p| (p[1] - p[0]).powi(2) / h).sum()
    }

    /// Electrostatic line load `eps0 V^2 w / (2 G^2)` and its derivative in `w`.
    pub fn electrostatic(&self, w: &DVector<f64>, volts: f64) -> Result<(DVector<f64>, DVector<f64>)> {
        let c = 0.5 * self.permittivity * volts * volts * self.width;
        let mut q = DVector::zeros(w.len());
        let mut dq = DVector::zeros(w.len());
        for (r, &wr) in w.iter().enumerate() {
            let g = self.gap - wr;
            if !(g > 0.0) {
                return Err(Error::Contact(ContactPoint { x: (r + 1) as f64 * self.spacing(), y: 0.0, gap: g }));
            }
            q[r] = c / (g * g);
            dq[r] = 2.0 * c / (g * g * g);
        }
        Ok((q, dq))
    }

    /// Elastic restoring load `EI w'''' - (N0 + N(w)) w''`.
    pub fn elastic(&self, w: &DVector<f64>) -> DVector<f64> {
        let axial = self.axial0 + self.stretch * self.slope_energy(w);
        &self.d4 * w * self.ei - &self.d2 * w * axial
    }

    /// Implicit Euler step of `rho A w_tt + elastic(w) = q_e(w) + q`, where
    /// the extra load is `q = q_star - damping (u' - u_star)` with `u'` the new
    /// velocity. Returns the new interior displacement and velocity.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &self,
        w: &DVector<f64>,
        u: &DVector<f64>,
        volts: f64,
        dt: f64,
        q_star: &DVector<f64>,
        damping: &DVector<f64>,
        u_star: &DVector<f64>,
        guess: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let m = self.interior();
        let h = self.spacing();
        let mut wn = guess.clone();
        let scale = self.ei * self.gap / self.length.powi(4);
        let mut trace = Vec::new();
        for it in 0..30 {
            let un = (&wn - w) / dt;
            let (qe, dqe) = self.electrostatic(&wn, volts)?;
            let accel = (&un - u) * (self.rho_a / dt);
            let film = q_star - damping.component_mul(&(&un - u_star));
            let r = accel + self.elastic(&wn) - qe - film;
            let norm = r.amax() / scale;
            trace.push(norm);
            if norm < 1e-9 && it > 0 {
                return Ok((wn.clone(), un));
            }
            let energy = self.slope_energy(&wn);
            let axial = self.axial0 + self.stretch * energy;
            // d(int w'^2)/dw = -2 h d2 w in the interior
            let de = &self.d2 * &wn * (-2.0 * h);
            let d2w = &self.d2 * &wn;
            let mut jac = &self.d4 * self.ei - &self.d2 * axial - d2w * de.transpose() * self.stretch;
            for k in 0..m {
                jac[(k, k)] += self.rho_a / (dt * dt) + damping[k] / dt - dqe[k];
            }
            let dw = jac.lu().solve(&(-r)).ok_or(Error::Singular("fd beam jacobian"))?;
            wn += &dw;
            // residual floor is set by round-off in the inertia term
            if dw.amax() < 1e-13 * self.gap {
                let un = (&wn - w) / dt;
                return Ok((wn, un));
            }
        }
        Err(Error::Newton { iterations: 30, trace })
    }
}
