//! Full-order finite-difference reference solver.
//!
//! The film is solved on its own grid by [`film`], the beam by [`beam`]; no
//! assembly code is shared with the reduced model. Each time step alternates
//! beam and film solves until the beam position stops changing. The beam
//! sees the film through the last film load plus a local squeeze-damping
//! correction `-c (u' - u*)` with `c = mu w^3 / G^3`, reduced by
//! `1 / (1 + tau / dt)` where `tau` is the film relaxation time. The
//! correction vanishes at convergence and keeps the iteration contractive
//! when the gap is small.

pub mod banded;
pub mod beam;
pub mod film;
pub mod snapshot;

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::config::DeviceConfig;
use crate::error::{Error, Result};
use crate::basis::ModalBasis;
use crate::sim::{Drive, Termination, Trajectory};
use crate::state::StateVector;

use self::beam::FdBeam;
use self::film::{fd_reynolds_step, FilmGrid};
use self::snapshot::SnapshotWriter;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    /// Film nodes along the beam.
    pub nx: usize,
    /// Film nodes across the width.
    pub ny: usize,
    /// Beam nodes including both clamps (odd, so the midpoint is a node).
    pub n_beam: usize,
    pub dt: f64,
    pub pullin_fraction: f64,
    pub max_sweeps: usize,
    /// Sweep convergence: largest change of the beam position over `G0`.
    pub sweep_tol: f64,
}

impl FdConfig {
    pub fn new(dt: f64) -> Self {
        FdConfig { nx: 64, ny: 32, n_beam: 81, dt, pullin_fraction: 0.9, max_sweeps: 60, sweep_tol: 1e-8 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 8 || self.ny < 8 {
            return Err(Error::Config(format!("film grid must be at least 8x8, got {}x{}", self.nx, self.ny)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.pullin_fraction > 0.0 && self.pullin_fraction < 1.0) {
            return Err(Error::Config(format!("kappa must lie in (0, 1), got {}", self.pullin_fraction)));
        }
        Ok(())
    }
}

/// Piecewise-linear interpolation of nodal values `f` on `xs`.
fn interp(xs: &[f64], f: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let h = xs[1] - xs[0];
    let k = ((x - xs[0]) / h).floor().clamp(0.0, (n - 2) as f64) as usize;
    let t = (x - xs[k]) / h;
    f[k] * (1.0 - t) + f[k + 1] * t
}

/// Film load per unit length on the film x nodes: `-int p dy`.
fn film_line_load(grid: &FilmGrid, p: &[f64]) -> Vec<f64> {
    grid.line_integral(p).into_iter().map(|v| -v).collect()
}

struct Projector {
    basis: ModalBasis,
    beam_x: Vec<f64>,
}

impl Projector {
    fn new(cfg: &DeviceConfig, beam: &FdBeam) -> Result<Self> {
        Ok(Projector { basis: ModalBasis::new(cfg)?, beam_x: beam.positions() })
    }

    /// `(1/L) int w psi_j dx` by the trapezoidal rule.
    fn modal(&self, w: &[f64]) -> DVector<f64> {
        let h = self.beam_x[1] - self.beam_x[0];
        let n = self.beam_x.len();
        let l = self.basis.beam.length;
        DVector::from_iterator(
            self.basis.beam.modes.len(),
            self.basis.beam.modes.iter().map(|m| {
                (0..n)
                    .map(|k| {
                        let wt = if k == 0 || k == n - 1 { 0.5 * h } else { h };
                        wt * w[k] * m.value(self.beam_x[k])
                    })
                    .sum::<f64>()
                    / l
            }),
        )
    }

    /// `int int p G^{3/2} phi_k`
    fn squeeze(&self, grid: &FilmGrid, p: &[f64], g: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.basis.squeeze.len(),
            self.basis.squeeze.iter().map(|m| {
                let field: Vec<f64> = (0..grid.len())
                    .map(|k| {
                        let (i, j) = (k / grid.ny, k % grid.ny);
                        p[k] * g[k].powf(1.5) * m.value(grid.x(i), grid.y(j))
                    })
                    .collect();
                grid.integrate(&field)
            }),
        )
    }
}

/// Coupled full-order run from rest. Pressure frames are written to
/// `snapshots` after every step when given.
pub fn fd_coupled_simulate<W: Write>(
    cfg: &DeviceConfig,
    fd: &FdConfig,
    drive: &Drive,
    t_end: f64,
    mut snapshots: Option<&mut SnapshotWriter<W>>,
) -> Result<Trajectory> {
    cfg.validate()?;
    fd.validate()?;
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::Config(format!("t_end must be > 0, got {t_end}")));
    }
    let beam = FdBeam::new(cfg, fd.n_beam)?;
    let grid = FilmGrid::new(fd.nx, fd.ny, cfg.length, cfg.width, cfg.viscosity, cfg.ambient_pressure)?;
    let proj = Projector::new(cfg, &beam)?;
    let beam_x = beam.positions();
    let film_x: Vec<f64> = (0..grid.nx).map(|i| grid.x(i)).collect();
    let m = beam.interior();
    let mid = (fd.n_beam - 1) / 2;
    let dt = fd.dt;
    let threshold = fd.pullin_fraction * cfg.gap;
    let n_steps = ((t_end / dt) - 1e-9).ceil().max(1.0) as usize;
    let mu_w3 = cfg.viscosity * cfg.width.powi(3);

    let mut w = DVector::zeros(m);
    let mut u = DVector::zeros(m);
    let mut p = vec![0.0; grid.len()];
    let mut g = vec![cfg.gap; grid.len()];

    let sample = |w: &DVector<f64>, u: &DVector<f64>, p: &[f64], g: &[f64]| -> (StateVector, f64) {
        let wf = beam.with_clamps(w);
        let uf = beam.with_clamps(u);
        let st = StateVector { x: proj.modal(&wf), v: proj.modal(&uf), s: proj.squeeze(&grid, p, g) };
        (st, wf[mid])
    };
    let (s0, u0) = sample(&w, &u, &p, &g);
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![s0],
        midpoint: vec![u0],
        pull_in_time: None,
        termination: Termination::EndTime,
    };

    for n in 0..n_steps {
        let t_next = (n + 1) as f64 * dt;
        let volts = drive.voltage(t_next);
        let step = (|| -> Result<(DVector<f64>, DVector<f64>, Vec<f64>, Vec<f64>)> {
            let mut q_star = DVector::from_vec(
                beam_x[1..fd.n_beam - 1]
                    .iter()
                    .map(|&x| interp(&film_x, &film_line_load(&grid, &p), x))
                    .collect(),
            );
            let mut u_star = u.clone();
            let mut w_guess = &w + &u * dt;
            let mut last_change = f64::INFINITY;
            for _ in 0..fd.max_sweeps {
                let damping = DVector::from_iterator(
                    m,
                    w_guess.iter().map(|&wk| {
                        let gk = (cfg.gap - wk).max(1e-3 * cfg.gap);
                        // film relaxation time across the width; over one step a
                        // slow film responds as a spring rather than a damper
                        let tau = 12.0 * cfg.viscosity * cfg.width.powi(2)
                            / (std::f64::consts::PI.powi(2) * gk * gk * cfg.ambient_pressure);
                        mu_w3 / gk.powi(3) / (1.0 + tau / dt)
                    }),
                );
                let (wn, un) = beam.step(&w, &u, volts, dt, &q_star, &damping, &u_star, &w_guess)?;
                let wf = beam.with_clamps(&wn);
                let g_next = grid.gap_from(cfg.gap, |x| interp(&beam_x, &wf, x));
                let gt: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| (a - b) / dt).collect();
                let pn = fd_reynolds_step(&grid, &p, &g, &gt, dt)?;
                let load = film_line_load(&grid, &pn);
                let q_new = DVector::from_vec(beam_x[1..fd.n_beam - 1].iter().map(|&x| interp(&film_x, &load, x)).collect());
                last_change = (&wn - &w_guess).amax() / cfg.gap;
                let converged = last_change < fd.sweep_tol;
                w_guess = wn.clone();
                u_star = un.clone();
                q_star = q_new;
                if converged {
                    return Ok((wn, un, pn, g_next));
                }
            }
            Err(Error::FixedPoint { sweeps: fd.max_sweeps, correction: last_change })
        })();
        let (wn, un, pn, gn) = match step {
            Ok(v) => v,
            Err(Error::Contact(_)) => {
                traj.pull_in_time = Some(t_next);
                traj.termination = Termination::Contact;
                return Ok(traj);
            }
            Err(e) => return Err(e),
        };
        w = wn;
        u = un;
        p = pn;
        g = gn;
        if let Some(sink) = snapshots.as_deref_mut() {
            sink.write_frame(&p)?;
        }
        let (st, umid) = sample(&w, &u, &p, &g);
        traj.times.push(t_next);
        traj.states.push(st);
        traj.midpoint.push(umid);
        if umid >= threshold {
            traj.pull_in_time = traj.crossing_time(threshold);
            traj.termination = Termination::PullIn;
            return Ok(traj);
        }
    }
    Ok(traj)
}

/// Film response to a prescribed deflection `deflection(t, x)`; returns
/// `(t, int int p)` samples.
pub fn fd_film_prescribed(
    cfg: &DeviceConfig,
    fd: &FdConfig,
    deflection: impl Fn(f64, f64) -> f64,
    t_end: f64,
) -> Result<Vec<(f64, f64)>> {
    fd.validate()?;
    let grid = FilmGrid::new(fd.nx, fd.ny, cfg.length, cfg.width, cfg.viscosity, cfg.ambient_pressure)?;
    let n_steps = ((t_end / fd.dt) - 1e-9).ceil() as usize;
    let mut g = grid.gap_from(cfg.gap, |x| deflection(0.0, x));
    let mut p = vec![0.0; grid.len()];
    let mut out = vec![(0.0, 0.0)];
    for n in 0..n_steps {
        let t = (n + 1) as f64 * fd.dt;
        let gn = grid.gap_from(cfg.gap, |x| deflection(t, x));
        let gt: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| (a - b) / fd.dt).collect();
        p = fd_reynolds_step(&grid, &p, &g, &gt, fd.dt)?;
        g = gn;
        out.push((t, grid.integrate(&p)));
    }
    Ok(out)
}
