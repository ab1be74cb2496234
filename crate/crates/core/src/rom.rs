//! Assembly of the coupled reduced-order model.
//!
//! With `z = (x, v, s)` the model reads `d/dt g(z) = f(z)` where
//!
//! ```text
//! g(z) = ( x ; M v ; A(x) s - f(x) )
//! f(z) = ( v ; -K(x) x + B(x) s + p_e(x, V) ; H(x) s )
//! ```
//!
//! and the film pressure is recovered as `p = G^{-3/2} sum_k s_k phi_k`.
//! Every coefficient depends on `x` only.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::ModalBasis;
use crate::config::DeviceConfig;
use crate::error::{ContactPoint, Error, Result};
use crate::matrix_serde;
use crate::quadrature::QuadratureGrid;
use crate::state::StateVector;

/// The `x`-dependent blocks of the model at one mechanical configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    /// `A_kl = int G^-2 phi_k phi_l`
    #[serde(with = "matrix_serde::matrix")]
    pub a: DMatrix<f64>,
    /// `H_kl = -(P0 / 12 mu) (lambda_k^2 delta_kl + int (Lap G^{3/2} / G^{3/2}) phi_k phi_l)`
    #[serde(with = "matrix_serde::matrix")]
    pub h: DMatrix<f64>,
    /// `f_l = 2 P0 int phi_l G^{-1/2}`
    #[serde(with = "matrix_serde::vector")]
    pub f: DVector<f64>,
    /// `B_jk = -int psi_j phi_k G^{-3/2}`
    #[serde(with = "matrix_serde::matrix")]
    pub b: DMatrix<f64>,
    /// Secant stiffness: the elastic force is `-K(x) x`.
    #[serde(with = "matrix_serde::matrix")]
    pub k: DMatrix<f64>,
}

/// Anything that can produce the `x`-dependent blocks: exact assembly or an
/// interpolating surrogate.
pub trait CoefficientSource {
    fn coefficients_at(&self, x: &DVector<f64>) -> Result<Coefficients>;
}

impl CoefficientSource for RomSystem {
    fn coefficients_at(&self, x: &DVector<f64>) -> Result<Coefficients> {
        self.coefficients(x)
    }
}

impl Coefficients {
    pub fn zeros(nm: usize, ms: usize) -> Self {
        Coefficients {
            a: DMatrix::zeros(ms, ms),
            h: DMatrix::zeros(ms, ms),
            f: DVector::zeros(ms),
            b: DMatrix::zeros(nm, ms),
            k: DMatrix::zeros(nm, nm),
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Coefficients) {
        self.a += &other.a * alpha;
        self.h += &other.h * alpha;
        self.f.axpy(alpha, &other.f, 1.0);
        self.b += &other.b * alpha;
        self.k += &other.k * alpha;
    }

    /// `(self - other) / step`, used for difference quotients.
    pub fn difference(&self, other: &Coefficients, step: f64) -> Coefficients {
        let inv = 1.0 / step;
        Coefficients {
            a: (&self.a - &other.a) * inv,
            h: (&self.h - &other.h) * inv,
            f: (&self.f - &other.f) * inv,
            b: (&self.b - &other.b) * inv,
            k: (&self.k - &other.k) * inv,
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = f64> + '_ {
        self.a
            .iter()
            .chain(self.h.iter())
            .chain(self.f.iter())
            .chain(self.b.iter())
            .chain(self.k.iter())
            .copied()
    }

    /// `g(z)` given these coefficients.
    pub fn g(&self, z: &StateVector, mass: &DVector<f64>) -> DVector<f64> {
        let nm = z.x.len();
        let ms = z.s.len();
        let mut out = DVector::zeros(2 * nm + ms);
        out.rows_mut(0, nm).copy_from(&z.x);
        out.rows_mut(nm, nm).copy_from(&z.v.component_mul(mass));
        out.rows_mut(2 * nm, ms).copy_from(&(&self.a * &z.s - &self.f));
        out
    }

    /// Right-hand side without the electrostatic load.
    pub fn rhs(&self, z: &StateVector) -> DVector<f64> {
        let nm = z.x.len();
        let ms = z.s.len();
        let mut out = DVector::zeros(2 * nm + ms);
        out.rows_mut(0, nm).copy_from(&z.v);
        out.rows_mut(nm, nm).copy_from(&(&self.b * &z.s - &self.k * &z.x));
        out.rows_mut(2 * nm, ms).copy_from(&(&self.h * &z.s));
        out
    }
}

/// Basis values cached at the axial quadrature nodes.
#[derive(Debug, Clone)]
struct NodeCache {
    /// `[node][mode] -> (psi, psi', psi'')`
    psi: Vec<Vec<(f64, f64, f64)>>,
    /// `[node][squeeze] -> c_k cos(k_x pi x / L)`
    sx: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct RomSystem {
    pub cfg: DeviceConfig,
    pub basis: ModalBasis,
    pub grid: QuadratureGrid,
    /// Diagonal modal mass `rho h w L`.
    pub mass: DVector<f64>,
    /// Linear stiffness: bending plus residual stress.
    pub k_lin: DMatrix<f64>,
    cache: NodeCache,
    /// `int sin_k sin_l dy` by the transverse rule.
    y_gram: DMatrix<f64>,
    /// `int sin_k dy` by the transverse rule.
    y_mean: DVector<f64>,
}

impl RomSystem {
    pub fn new(cfg: &DeviceConfig) -> Result<Self> {
        Self::with_quadrature(cfg, false)
    }

    pub fn with_quadrature(cfg: &DeviceConfig, refine: bool) -> Result<Self> {
        let grid = QuadratureGrid::default_for(cfg, refine);
        Self::with_grid(cfg, grid)
    }

    pub fn with_grid(cfg: &DeviceConfig, grid: QuadratureGrid) -> Result<Self> {
        cfg.validate()?;
        let basis = ModalBasis::new(cfg)?;
        let nm = basis.n_beam();
        let ms = basis.n_squeeze();

        let m = cfg.density * cfg.area() * cfg.length;
        let mass = DVector::from_element(nm, m);
        let ei = cfg.youngs_modulus * cfg.inertia();
        let n0 = cfg.residual_stress * cfg.area();
        let mut k_lin = DMatrix::zeros(nm, nm);
        for i in 0..nm {
            // bending modes are orthogonal in curvature; keep the exact diagonal
            k_lin[(i, i)] = ei * basis.beam.curvature_gram[(i, i)];
            for j in 0..nm {
                k_lin[(i, j)] += n0 * basis.beam.slope_gram[(i, j)];
            }
        }

        let psi = grid
            .x
            .nodes
            .iter()
            .map(|&x| basis.beam.modes.iter().map(|m| m.eval(x)).collect())
            .collect();
        let sx = grid
            .x
            .nodes
            .iter()
            .map(|&x| basis.squeeze.iter().map(|q| q.norm * q.x_factor(x)).collect())
            .collect();
        let mut y_gram = DMatrix::zeros(ms, ms);
        let mut y_mean = DVector::zeros(ms);
        for (&y, &wy) in grid.y.nodes.iter().zip(&grid.y.weights) {
            for k in 0..ms {
                let sk = basis.squeeze[k].y_factor(y);
                y_mean[k] += wy * sk;
                for l in 0..ms {
                    y_gram[(k, l)] += wy * sk * basis.squeeze[l].y_factor(y);
                }
            }
        }

        Ok(RomSystem {
            cfg: cfg.clone(),
            basis,
            grid,
            mass,
            k_lin,
            cache: NodeCache { psi, sx },
            y_gram,
            y_mean,
        })
    }

    pub fn n_beam(&self) -> usize {
        self.basis.n_beam()
    }

    pub fn n_squeeze(&self) -> usize {
        self.basis.n_squeeze()
    }

    pub fn state_len(&self) -> usize {
        2 * self.n_beam() + self.n_squeeze()
    }

    pub fn zero_state(&self) -> StateVector {
        StateVector::zeros(self.n_beam(), self.n_squeeze())
    }

    /// First modal angular frequency (rad/s).
    pub fn omega1(&self) -> f64 {
        self.basis.beam.modes[0].omega
    }

    /// `psi_1(L/2)`.
    pub fn psi1_mid(&self) -> f64 {
        self.basis.beam.modes[0].value(0.5 * self.cfg.length)
    }

    pub fn midpoint_deflection(&self, x: &DVector<f64>) -> f64 {
        self.basis.beam.midpoint_deflection(x.as_slice())
    }

    /// Gap and derivatives at every axial quadrature node.
    fn node_gaps(&self, x: &DVector<f64>) -> Result<Vec<(f64, f64, f64)>> {
        let g0 = self.cfg.gap;
        self.cache
            .psi
            .iter()
            .zip(&self.grid.x.nodes)
            .map(|(row, &xn)| {
                let mut u = (0.0, 0.0, 0.0);
                for (p, &c) in row.iter().zip(x.iter()) {
                    u.0 += c * p.0;
                    u.1 += c * p.1;
                    u.2 += c * p.2;
                }
                let g = g0 - u.0;
                if g <= 0.0 || g.is_nan() {
                    return Err(Error::Contact(ContactPoint { x: xn, y: self.grid.y.nodes[0], gap: g }));
                }
                Ok((g, -u.1, -u.2))
            })
            .collect()
    }

    /// All `x`-dependent blocks in a single quadrature pass.
    pub fn coefficients(&self, x: &DVector<f64>) -> Result<Coefficients> {
        let nm = self.n_beam();
        let ms = self.n_squeeze();
        let cfg = &self.cfg;
        let gaps = self.node_gaps(x)?;
        let mut c = Coefficients::zeros(nm, ms);
        let mut hint = DMatrix::<f64>::zeros(ms, ms);
        for (i, &(g, gx, gxx)) in gaps.iter().enumerate() {
            let wx = self.grid.x.weights[i];
            let sx = &self.cache.sx[i];
            let psi = &self.cache.psi[i];
            let sq = g.sqrt();
            let g32 = g * sq;
            let lap = 1.5 * sq * gxx + 0.75 * gx * gx / sq;
            let ratio = lap / g32;
            let inv_g2 = 1.0 / (g * g);
            for k in 0..ms {
                for l in k..ms {
                    let yk = self.y_gram[(k, l)];
                    if yk == 0.0 {
                        continue;
                    }
                    let base = wx * sx[k] * sx[l] * yk;
                    c.a[(k, l)] += base * inv_g2;
                    hint[(k, l)] += base * ratio;
                }
                let line = wx * sx[k] * self.y_mean[k];
                c.f[k] += 2.0 * cfg.ambient_pressure * line / sq;
                for j in 0..nm {
                    c.b[(j, k)] -= psi[j].0 * line / g32;
                }
            }
        }
        let pref = -cfg.ambient_pressure / (12.0 * cfg.viscosity);
        for k in 0..ms {
            for l in 0..k {
                c.a[(k, l)] = c.a[(l, k)];
                hint[(k, l)] = hint[(l, k)];
            }
        }
        for k in 0..ms {
            for l in 0..ms {
                let diag = if k == l { self.basis.squeeze[k].lambda2 } else { 0.0 };
                c.h[(k, l)] = pref * (diag + hint[(k, l)]);
            }
        }
        c.k = self.stiffness(x);
        Ok(c)
    }

    pub fn assemble_a(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.coefficients(x)?.a)
    }

    pub fn assemble_h(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.coefficients(x)?.h)
    }

    pub fn assemble_f(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.coefficients(x)?.f)
    }

    pub fn assemble_b(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.coefficients(x)?.b)
    }

    /// Midplane strain `T(x) = (1/2L) int (sum_j x_j psi_j')^2 dx`.
    pub fn stretch_strain(&self, x: &DVector<f64>) -> f64 {
        let s = &self.basis.beam.slope_gram;
        (x.transpose() * s * x)[(0, 0)] / (2.0 * self.cfg.length)
    }

    /// Secant stiffness `K(x) = K_lin + E h w T(x) S` with `S_ij = int psi_i' psi_j' dx`.
    ///
    /// `K(x) x` is the gradient of the bending, prestress and immovable-end
    /// stretching energy `E h w L T(x)^2 / 2`, all for dimensional coordinates.
    pub fn stiffness(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let t = self.stretch_strain(x);
        let ehw = self.cfg.youngs_modulus * self.cfg.area();
        &self.k_lin + &self.basis.beam.slope_gram * (ehw * t)
    }

    /// Elastic restoring force `K(x) x`.
    pub fn assemble_k_force(&self, x: &DVector<f64>) -> DVector<f64> {
        self.stiffness(x) * x
    }

    /// `(p_e)_j = (eps0 V^2 w / 2) int psi_j / G^2 dx`, positive toward the substrate.
    pub fn electrostatic_force(&self, x: &DVector<f64>, volts: f64) -> Result<DVector<f64>> {
        let nm = self.n_beam();
        let mut out = DVector::zeros(nm);
        if volts == 0.0 {
            // still refuse a contacted configuration
            self.node_gaps(x)?;
            return Ok(out);
        }
        let gaps = self.node_gaps(x)?;
        let pref = 0.5 * self.cfg.permittivity * volts * volts * self.cfg.width;
        for (i, &(g, _, _)) in gaps.iter().enumerate() {
            let wt = self.grid.x.weights[i] * pref / (g * g);
            for j in 0..nm {
                out[j] += wt * self.cache.psi[i][j].0;
            }
        }
        Ok(out)
    }

    /// Electrostatic load embedded in a full-state vector `(0 ; p_e ; 0)`.
    pub fn electrostatic_state(&self, x: &DVector<f64>, volts: f64) -> Result<DVector<f64>> {
        let nm = self.n_beam();
        let mut out = DVector::zeros(self.state_len());
        out.rows_mut(nm, nm).copy_from(&self.electrostatic_force(x, volts)?);
        Ok(out)
    }

    /// `(g(z), f_rhs(z))` including the electrostatic load at voltage `volts`.
    pub fn residual_pair(&self, z: &StateVector, volts: f64) -> Result<(DVector<f64>, DVector<f64>)> {
        let c = self.coefficients(&z.x)?;
        let g = c.g(z, &self.mass);
        let f = c.rhs(z) + self.electrostatic_state(&z.x, volts)?;
        Ok((g, f))
    }

    /// `(g(z), f_rhs(z))` without the electrostatic load.
    pub fn split_pair(&self, z: &StateVector) -> Result<(DVector<f64>, DVector<f64>)> {
        let c = self.coefficients(&z.x)?;
        Ok((c.g(z, &self.mass), c.rhs(z)))
    }

    /// Total film force `int p dOmega` (N), positive pushing the beam away.
    pub fn film_force(&self, x: &DVector<f64>, s: &DVector<f64>) -> Result<f64> {
        let gaps = self.node_gaps(x)?;
        let mut total = 0.0;
        for (i, &(g, _, _)) in gaps.iter().enumerate() {
            let line: f64 = (0..self.n_squeeze())
                .map(|k| s[k] * self.cache.sx[i][k] * self.y_mean[k])
                .sum();
            total += self.grid.x.weights[i] * line / (g * g.sqrt());
        }
        Ok(total)
    }

    /// Pressure `p = G^{-3/2} sum_k s_k phi_k` at a point.
    pub fn pressure(&self, x: &DVector<f64>, s: &DVector<f64>, point: (f64, f64)) -> Result<f64> {
        let gap = crate::basis::gap_field(&self.basis, &self.cfg, x.as_slice(), point)?;
        let phi: f64 =
            self.basis.squeeze.iter().zip(s.iter()).map(|(q, &sk)| sk * q.value(point.0, point.1)).sum();
        Ok(phi / gap.g.powf(1.5))
    }

    /// Characteristic pressure coordinate: 1% of ambient pressure under a uniform gap.
    pub fn s_scale(&self) -> f64 {
        let cfg = &self.cfg;
        0.01 * cfg.ambient_pressure * cfg.gap.powf(1.5) * (cfg.length * cfg.width).sqrt()
    }

    /// Characteristic magnitude of each state coordinate.
    pub fn state_scales(&self) -> DVector<f64> {
        let nm = self.n_beam();
        let g0 = self.cfg.gap;
        let mut out = DVector::zeros(self.state_len());
        for j in 0..nm {
            out[j] = g0;
            out[nm + j] = g0 * self.omega1();
        }
        for k in 0..self.n_squeeze() {
            out[2 * nm + k] = self.s_scale();
        }
        out
    }

    /// Characteristic magnitude of each component of `g`.
    pub fn residual_scales(&self) -> DVector<f64> {
        let nm = self.n_beam();
        let g0 = self.cfg.gap;
        let mut out = self.state_scales();
        for j in 0..nm {
            out[nm + j] *= self.mass[j];
        }
        for k in 0..self.n_squeeze() {
            out[2 * nm + k] /= g0 * g0;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::gap_field;

    fn rom() -> RomSystem {
        RomSystem::new(&DeviceConfig::microswitch()).unwrap()
    }

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.iter().fold(0.0_f64, |a, &b| a.max(b.abs()))
    }

    #[test]
    fn undeflected_blocks() {
        let rom = rom();
        let cfg = &rom.cfg;
        let c = rom.coefficients(&DVector::zeros(3)).unwrap();
        let ident = DMatrix::<f64>::identity(4, 4) / (cfg.gap * cfg.gap);
        assert!(max_abs(&(&c.a - &ident)) < 1e-10 * max_abs(&ident));
        for (k, q) in rom.basis.squeeze.iter().enumerate() {
            let expect = -cfg.ambient_pressure * q.lambda2 / (12.0 * cfg.viscosity);
            assert!((c.h[(k, k)] - expect).abs() < 1e-10 * expect.abs());
            assert!(c.h[(k, k)] < 0.0);
        }
        assert!(max_abs(&(c.h.clone() - DMatrix::from_diagonal(&c.h.diagonal()))) < 1e-10 * max_abs(&c.h));
    }

    #[test]
    fn h_entry_for_first_mode() {
        let rom = rom();
        let h = rom.assemble_h(&DVector::zeros(3)).unwrap();
        let pi = std::f64::consts::PI;
        let expect = -(1.013e5 / (12.0 * 1.8e-5)) * (pi / 40e-6).powi(2);
        assert!((h[(0, 0)] / expect - 1.0).abs() < 1e-10);
    }

    #[test]
    fn undeflected_f_closed_form() {
        let rom = rom();
        let cfg = &rom.cfg;
        let f = rom.assemble_f(&DVector::zeros(3)).unwrap();
        let q = &rom.basis.squeeze[0];
        let w = cfg.width;
        let expect = 2.0 * cfg.ambient_pressure / cfg.gap.sqrt() * q.norm * cfg.length * (2.0 * w / std::f64::consts::PI);
        assert!((f[0] / expect - 1.0).abs() < 1e-12);
        // mode (2,1): cosine averages out
        assert!(f[2].abs() < 1e-10 * f[0].abs());
    }

    #[test]
    fn f_is_continuous() {
        let rom = rom();
        let x = DVector::from_vec(vec![0.3e-6, 0.0, 0.02e-6]);
        let mut xd = x.clone();
        xd[0] += 1e-9 * rom.cfg.gap;
        let f0 = rom.assemble_f(&x).unwrap();
        let f1 = rom.assemble_f(&xd).unwrap();
        assert!((f1 - &f0).norm() / f0.norm() < 1e-6);
    }

    /// Dense midpoint-rule oracle for the assembly integrals.
    fn midpoint_oracle(rom: &RomSystem, x: &[f64], n: usize, f: impl Fn(f64, f64, f64) -> f64) -> f64 {
        let cfg = &rom.cfg;
        let (hx, hy) = (cfg.length / n as f64, cfg.width / n as f64);
        let mut acc = 0.0;
        for i in 0..n {
            let px = (i as f64 + 0.5) * hx;
            let g = gap_field(&rom.basis, cfg, x, (px, 0.0)).unwrap().g;
            for j in 0..n {
                let py = -0.5 * cfg.width + (j as f64 + 0.5) * hy;
                acc += f(px, py, g) * hx * hy;
            }
        }
        acc
    }

    #[test]
    fn a_matches_dense_grid_for_large_deflection() {
        let rom = rom();
        let x1 = 0.3 * rom.cfg.gap / rom.psi1_mid();
        let xv = DVector::from_vec(vec![x1, 0.0, 0.0]);
        let a = rom.assemble_a(&xv).unwrap();
        let q = rom.basis.squeeze.clone();
        for (k, l) in [(0, 0), (0, 2), (1, 3), (2, 2)] {
            let oracle = midpoint_oracle(&rom, xv.as_slice(), 200, |px, py, g| {
                q[k].value(px, py) * q[l].value(px, py) / (g * g)
            });
            let scale = a[(0, 0)];
            assert!((a[(k, l)] - oracle).abs() < 1e-6 * scale, "A[{k}{l}] {} vs {oracle}", a[(k, l)]);
            if k == l {
                assert!((a[(k, l)] / oracle - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn b_matches_dense_grid_and_parity() {
        let rom = rom();
        let zero = DVector::zeros(3);
        let b = rom.assemble_b(&zero).unwrap();
        let q = rom.basis.squeeze.clone();
        let psi = rom.basis.beam.modes.clone();
        let integrand = |px: f64, py: f64, g: f64| -psi[0].value(px) * q[2].value(px, py) / g.powf(1.5);
        // the transverse sine has non-zero end slopes, so extrapolate the midpoint rule
        let coarse = midpoint_oracle(&rom, zero.as_slice(), 200, integrand);
        let fine = midpoint_oracle(&rom, zero.as_slice(), 400, integrand);
        let oracle = (4.0 * fine - coarse) / 3.0;
        assert!((b[(0, 2)] - oracle).abs() < 1e-6 * b[(0, 2)].abs(), "{} vs {oracle}", b[(0, 2)]);
        // odd beam mode against an x-even squeeze mode
        assert!(b[(1, 0)].abs() < 1e-10 * b[(0, 0)].abs());
        // positive film pressure pushes away from the substrate
        let s = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        assert!((b * s)[0] < 0.0);
    }

    #[test]
    fn symmetric_and_positive_definite_under_random_deflection() {
        let rom = rom();
        let mut state = 12345_u64;
        let mut rnd = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for _ in 0..50 {
            let scale = 0.5 * rom.cfg.gap / 1.6;
            let x = DVector::from_vec(vec![rnd() * scale, rnd() * 0.3 * scale, rnd() * 0.3 * scale]);
            let c = rom.coefficients(&x).unwrap();
            assert_eq!(c.a, c.a.transpose());
            assert!(max_abs(&(&c.h - c.h.transpose())) <= 1e-12 * max_abs(&c.h));
            assert!(c.a.clone().cholesky().is_some());
        }
    }

    #[test]
    fn stiffness_consistency_and_parity() {
        let rom = rom();
        let k0 = rom.stiffness(&DVector::zeros(3));
        let w1 = rom.omega1();
        assert!((k0[(0, 0)] / rom.mass[0] / (w1 * w1) - 1.0).abs() < 1e-8);
        let x = DVector::from_vec(vec![1e-6, 0.0, 0.0]);
        let force = rom.assemble_k_force(&x);
        assert!(force[1].abs() < 1e-12 * force[0].abs());
    }

    #[test]
    fn stretching_is_cubic_and_stiffening() {
        let rom = rom();
        let unit = DVector::from_vec(vec![rom.cfg.gap / rom.psi1_mid(), 0.0, 0.0]);
        let lin = (&rom.k_lin * &unit)[0];
        // F(alpha) / alpha - lin = c alpha^2
        let coef: Vec<f64> = [0.1, 0.2, 0.4]
            .iter()
            .map(|&al| ((rom.assemble_k_force(&(&unit * al))[0] / al) - lin) / (al * al))
            .collect();
        assert!(coef[0] > 0.0);
        assert!((coef[1] / coef[0] - 1.0).abs() < 1e-9 && (coef[2] / coef[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn electrostatic_scaling_and_parity() {
        let rom = rom();
        let cfg = rom.cfg.clone();
        let zero = DVector::zeros(3);
        assert_eq!(rom.electrostatic_force(&zero, 0.0).unwrap(), DVector::zeros(3));
        let pe = rom.electrostatic_force(&zero, 5.0).unwrap();
        let pref = cfg.permittivity * 25.0 * cfg.width / (2.0 * cfg.gap * cfg.gap);
        for j in 0..3 {
            let expect = pref * rom.basis.beam.mean[j];
            assert!((pe[j] - expect).abs() < 1e-10 * pe[0].abs());
        }
        assert!(pe[1].abs() < 1e-10 * pe[0]);
        let x = DVector::from_vec(vec![0.5e-6, 0.0, 0.1e-6]);
        let p1 = rom.electrostatic_force(&x, 3.0).unwrap();
        let p2 = rom.electrostatic_force(&x, 6.0).unwrap();
        assert_eq!(p2, &p1 * 4.0);
    }

    #[test]
    fn contact_is_reported() {
        let rom = rom();
        let x = DVector::from_vec(vec![1.1 * rom.cfg.gap / rom.psi1_mid(), 0.0, 0.0]);
        assert!(rom.coefficients(&x).unwrap_err().is_contact());
        assert!(rom.electrostatic_force(&x, 1.0).unwrap_err().is_contact());
    }

    #[test]
    fn rest_state_is_equilibrium() {
        let rom = rom();
        let z = rom.zero_state();
        let (g, f) = rom.residual_pair(&z, 0.0).unwrap();
        let f0 = rom.assemble_f(&z.x).unwrap();
        assert_eq!(g.rows(6, 4).into_owned(), -f0);
        assert_eq!(f, DVector::zeros(10));
    }

    #[test]
    fn quadrature_refinement_is_converged() {
        let cfg = DeviceConfig::microswitch();
        let coarse = RomSystem::new(&cfg).unwrap();
        let fine = RomSystem::with_quadrature(&cfg, true).unwrap();
        let x = DVector::from_vec(vec![0.5 * cfg.gap / coarse.psi1_mid(), 0.0, -0.02e-6]);
        let a = coarse.coefficients(&x).unwrap();
        let b = fine.coefficients(&x).unwrap();
        for (name, u, v) in [
            ("A", a.a.as_slice(), b.a.as_slice()),
            ("H", a.h.as_slice(), b.h.as_slice()),
            ("f", a.f.as_slice(), b.f.as_slice()),
            ("B", a.b.as_slice(), b.b.as_slice()),
        ] {
            let scale = v.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
            for (p, q) in u.iter().zip(v) {
                assert!((p - q).abs() < 1e-8 * scale, "{name}: {p} vs {q}");
            }
        }
    }
}
