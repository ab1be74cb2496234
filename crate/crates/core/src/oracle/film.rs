//! Finite-volume solver for the small-pressure Reynolds equation
//!
//! ```text
//! div( G^3 / (12 mu) grad p ) = d/dt ( G (1 + p / P0) )
//! ```
//!
//! on a vertex-centred grid over `[0, L] x [-w/2, w/2]`. Boundary nodes at
//! the clamped ends carry half control volumes and no flux; the long edges
//! are vented (`p = 0`). Time stepping is implicit Euler.

use crate::error::{ContactPoint, Error, Result};
use crate::oracle::banded::Banded;

/// How the long edges `y = +-w/2` are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeCondition {
    /// Ambient pressure on the edge.
    Vented,
    /// No flux through the edge; used to check conservation.
    Closed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilmGrid {
    pub nx: usize,
    pub ny: usize,
    pub length: f64,
    pub width: f64,
    pub viscosity: f64,
    pub ambient_pressure: f64,
    pub edges: EdgeCondition,
}

impl FilmGrid {
    pub fn new(nx: usize, ny: usize, length: f64, width: f64, viscosity: f64, ambient_pressure: f64) -> Result<Self> {
        if nx < 8 || ny < 8 {
            return Err(Error::Config(format!("film grid must be at least 8x8, got {nx}x{ny}")));
        }
        Ok(FilmGrid { nx, ny, length, width, viscosity, ambient_pressure, edges: EdgeCondition::Vented })
    }

    pub fn with_edges(mut self, edges: EdgeCondition) -> Self {
        self.edges = edges;
        self
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hx(&self) -> f64 {
        self.length / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        self.width / (self.ny - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.hx()
    }

    pub fn y(&self, j: usize) -> f64 {
        -0.5 * self.width + j as f64 * self.hy()
    }

    /// Flat index of node `(i, j)`, `j` fastest.
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    /// Control-volume extent along x.
    pub fn cv_x(&self, i: usize) -> f64 {
        if i == 0 || i == self.nx - 1 {
            0.5 * self.hx()
        } else {
            self.hx()
        }
    }

    /// Control-volume extent along y.
    pub fn cv_y(&self, j: usize) -> f64 {
        if j == 0 || j == self.ny - 1 {
            0.5 * self.hy()
        } else {
            self.hy()
        }
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.edges == EdgeCondition::Vented && (j == 0 || j == self.ny - 1)
    }

    fn free_rows(&self) -> (usize, usize) {
        match self.edges {
            EdgeCondition::Vented => (1, self.ny - 2),
            EdgeCondition::Closed => (0, self.ny),
        }
    }

    /// Trapezoidal `int int field` over the film.
    pub fn integrate(&self, field: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.nx {
            for j in 0..self.ny {
                total += self.cv_x(i) * self.cv_y(j) * field[self.idx(i, j)];
            }
        }
        total
    }

    /// `int p dy` at every x node.
    pub fn line_integral(&self, field: &[f64]) -> Vec<f64> {
        (0..self.nx)
            .map(|i| (0..self.ny).map(|j| self.cv_y(j) * field[self.idx(i, j)]).sum())
            .collect()
    }

    /// Gap field on the grid from a deflection profile along x.
    pub fn gap_from(&self, gap0: f64, deflection: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut g = vec![0.0; self.len()];
        for i in 0..self.nx {
            let gi = gap0 - deflection(self.x(i));
            for j in 0..self.ny {
                g[self.idx(i, j)] = gi;
            }
        }
        g
    }

    fn check_gap(&self, g: &[f64]) -> Result<()> {
        for i in 0..self.nx {
            for j in 0..self.ny {
                let v = g[self.idx(i, j)];
                if !(v > 0.0) {
                    return Err(Error::Contact(ContactPoint { x: self.x(i), y: self.y(j), gap: v }));
                }
            }
        }
        Ok(())
    }
}

/// One implicit Euler step from `p` with the gap moving from `g` to
/// `g + dt gt`. Fields are flat in [`FilmGrid::idx`] order.
pub fn fd_reynolds_step(grid: &FilmGrid, p: &[f64], g: &[f64], gt: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = grid.len();
    if p.len() != n || g.len() != n || gt.len() != n {
        return Err(Error::Config("film field sizes do not match the grid".into()));
    }
    let g_next: Vec<f64> = g.iter().zip(gt).map(|(a, b)| a + dt * b).collect();
    grid.check_gap(g)?;
    grid.check_gap(&g_next)?;

    let (j0, nyu) = grid.free_rows();
    let unknown = |i: usize, j: usize| i * nyu + (j - j0);
    let mut m = Banded::zeros(grid.nx * nyu, nyu, nyu);
    let mut rhs = vec![0.0; grid.nx * nyu];
    let p0 = grid.ambient_pressure;
    let coef = |a: f64, b: f64| 0.5 * (a.powi(3) + b.powi(3)) / (12.0 * grid.viscosity);
    let (hx, hy) = (grid.hx(), grid.hy());

    for i in 0..grid.nx {
        for j in j0..j0 + nyu {
            let r = unknown(i, j);
            let k = grid.idx(i, j);
            let vol = grid.cv_x(i) * grid.cv_y(j);
            m.add(r, r, vol * g_next[k] / (dt * p0));
            rhs[r] = vol / dt * (g[k] * p[k] / p0 - (g_next[k] - g[k]));
            let link = |ii: usize, jj: usize, t: f64, m: &mut Banded| {
                m.add(r, r, t);
                if !grid.is_fixed(jj) {
                    m.add(r, unknown(ii, jj), -t);
                }
            };
            if i > 0 {
                let t = coef(g_next[k], g_next[grid.idx(i - 1, j)]) * grid.cv_y(j) / hx;
                link(i - 1, j, t, &mut m);
            }
            if i + 1 < grid.nx {
                let t = coef(g_next[k], g_next[grid.idx(i + 1, j)]) * grid.cv_y(j) / hx;
                link(i + 1, j, t, &mut m);
            }
            if j > 0 {
                let t = coef(g_next[k], g_next[grid.idx(i, j - 1)]) * grid.cv_x(i) / hy;
                link(i, j - 1, t, &mut m);
            }
            if j + 1 < grid.ny {
                let t = coef(g_next[k], g_next[grid.idx(i, j + 1)]) * grid.cv_x(i) / hy;
                link(i, j + 1, t, &mut m);
            }
        }
    }
    let sol = m.factor()?.solve(&rhs);
    let mut out = vec![0.0; n];
    for i in 0..grid.nx {
        for j in j0..j0 + nyu {
            out[grid.idx(i, j)] = sol[unknown(i, j)];
        }
    }
    if let Some(k) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { x: grid.x(k / grid.ny), y: grid.y(k % grid.ny), value: out[k] });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MU: f64 = 1.8e-5;
    const P0: f64 = 1.013e5;

    fn strip(nx: usize, ny: usize) -> FilmGrid {
        FilmGrid::new(nx, ny, 610e-6, 40e-6, MU, P0).unwrap()
    }

    #[test]
    fn rest_is_a_fixed_point() {
        let grid = strip(16, 16);
        let g = vec![2e-6; grid.len()];
        let z = vec![0.0; grid.len()];
        let p = fd_reynolds_step(&grid, &z, &g, &z, 1e-7).unwrap();
        assert!(p.iter().all(|&v| v == 0.0));
    }

    /// Steady incompressible strip: `p = (6 mu Gt / G^3)(y^2 - w^2/4)`.
    fn parabola_error(grid: &FilmGrid) -> f64 {
        let g0 = 2e-6;
        let gt = -1e-4;
        let g = vec![g0; grid.len()];
        let rate = vec![gt; grid.len()];
        let mut p = vec![0.0; grid.len()];
        // the gap is held while the squeeze rate acts, so the film reaches
        // the steady profile after a few diffusion times
        for _ in 0..200 {
            p = fd_reynolds_step(grid, &p, &g, &rate, 1e-7).unwrap();
        }
        let w = grid.width;
        let mut worst: f64 = 0.0;
        let peak = 6.0 * MU * gt / g0.powi(3) * (-w * w / 4.0);
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                let y = grid.y(j);
                let exact = 6.0 * MU * gt / g0.powi(3) * (y * y - w * w / 4.0);
                worst = worst.max((p[grid.idx(i, j)] - exact).abs() / peak.abs());
            }
        }
        worst
    }

    #[test]
    fn rigid_squeeze_gives_parabolic_profile() {
        let err = parabola_error(&strip(64, 64));
        assert!(err < 0.02, "relative error {err}");
    }

    #[test]
    fn refinement_is_second_order() {
        // fine-grid reference, with node sets nested so samples coincide
        let at_centre = |ny: usize| {
            let grid = strip(8, ny);
            let g = vec![2e-6; grid.len()];
            let rate = vec![-1e-4; grid.len()];
            let mut p = vec![0.0; grid.len()];
            for _ in 0..3 {
                p = fd_reynolds_step(&grid, &p, &g, &rate, 2e-8).unwrap();
            }
            // pressure a quarter width in from the edge
            p[grid.idx(4, (ny - 1) / 4)]
        };
        let reference = at_centre(129);
        let e1 = (at_centre(9) - reference).abs();
        let e2 = (at_centre(17) - reference).abs();
        let e3 = (at_centre(33) - reference).abs();
        let slope1 = (e1 / e2).log2();
        let slope2 = (e2 / e3).log2();
        assert!((slope1 - 2.0).abs() < 0.3, "slopes {slope1} {slope2}");
        assert!((slope2 - 2.0).abs() < 0.3, "slopes {slope1} {slope2}");
    }

    #[test]
    fn closed_film_conserves_mass() {
        let grid = strip(16, 12).with_edges(EdgeCondition::Closed);
        // a bent, static gap and a non-uniform initial pressure
        let g = grid.gap_from(2e-6, |x| 0.5e-6 * (std::f64::consts::PI * x / 610e-6).sin().powi(2));
        let zero = vec![0.0; grid.len()];
        let mut p: Vec<f64> = (0..grid.len()).map(|k| 50.0 * ((k * 37 % 11) as f64 - 5.0)).collect();
        let mass = |p: &[f64]| {
            let field: Vec<f64> = g.iter().zip(p).map(|(gg, pp)| gg * (1.0 + pp / P0)).collect();
            grid.integrate(&field)
        };
        let m0 = mass(&p);
        for _ in 0..20 {
            let next = fd_reynolds_step(&grid, &p, &g, &zero, 1e-7).unwrap();
            let m1 = mass(&next);
            assert!(((m1 - m0) / m0).abs() < 1e-10, "drift {}", (m1 - m0) / m0);
            p = next;
        }
    }

    #[test]
    fn symmetric_data_stays_symmetric() {
        let grid = strip(17, 13);
        let g = grid.gap_from(2e-6, |x| 0.4e-6 * (std::f64::consts::PI * x / 610e-6).sin().powi(2));
        let gt = grid.gap_from(0.0, |x| 0.02 * (std::f64::consts::PI * x / 610e-6).sin().powi(2));
        let mut p = vec![0.0; grid.len()];
        for _ in 0..5 {
            p = fd_reynolds_step(&grid, &p, &g, &gt, 1e-7).unwrap();
        }
        let scale = p.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                let a = p[grid.idx(i, j)];
                let bx = p[grid.idx(grid.nx - 1 - i, j)];
                let by = p[grid.idx(i, grid.ny - 1 - j)];
                assert!((a - bx).abs() <= 1e-12 * scale && (a - by).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn contact_is_reported() {
        let grid = strip(8, 8);
        let g = vec![1e-7; grid.len()];
        let gt = vec![-1.0; grid.len()];
        let z = vec![0.0; grid.len()];
        assert!(fd_reynolds_step(&grid, &z, &g, &gt, 1e-6).unwrap_err().is_contact());
    }
}
