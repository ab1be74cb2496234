//! Time integration of the coupled model: implicit Euler with Newton,
//! pull-in detection, the single-point linear baseline and voltage sweeps.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::newton::{self, fd_jacobian_columns, NewtonOptions, NonlinearSystem};
use crate::rom::{CoefficientSource, RomSystem};
use crate::state::StateVector;
use crate::tpwl::LinearizationPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianMode {
    /// Central differences on every column.
    FiniteDifference,
    /// Velocity and squeeze columns in closed form, mechanical columns by differences.
    AnalyticWhereAvailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    /// Time step (s).
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub jacobian_mode: JacobianMode,
    /// Pull-in threshold as a fraction of the nominal gap.
    pub pullin_fraction: f64,
    /// Number of times a failing step may be split in two.
    pub max_halvings: u32,
}

impl IntegratorSettings {
    /// `dt` is 1/200 of the first mechanical period.
    pub fn for_rom(rom: &RomSystem) -> Self {
        let period = 2.0 * std::f64::consts::PI / rom.omega1();
        IntegratorSettings {
            dt: period / 200.0,
            newton_tol: 1e-10,
            newton_max_iter: 25,
            jacobian_mode: JacobianMode::AnalyticWhereAvailable,
            pullin_fraction: 0.9,
            max_halvings: 4,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.pullin_fraction > 0.0 && self.pullin_fraction < 1.0) {
            return Err(Error::Config(format!("kappa must lie in (0, 1), got {}", self.pullin_fraction)));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return Err(Error::Config("newton tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }

    pub fn newton(&self) -> NewtonOptions {
        NewtonOptions { tol: self.newton_tol, max_iter: self.newton_max_iter }
    }
}

/// Drive voltage as a function of time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Drive {
    /// `V` for every `t > 0`.
    Step { volts: f64 },
    /// `dc + amplitude sin(2 pi frequency t)`.
    Sine { dc: f64, amplitude: f64, frequency: f64 },
}

impl Drive {
    pub fn step(volts: f64) -> Self {
        Drive::Step { volts }
    }

    pub fn voltage(&self, t: f64) -> f64 {
        match *self {
            Drive::Step { volts } => volts,
            Drive::Sine { dc, amplitude, frequency } => {
                dc + amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    EndTime,
    PullIn,
    /// The gap closed somewhere before the midpoint threshold was crossed.
    Contact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    /// Midpoint deflection `sum_j x_j psi_j(L/2)` (m).
    pub midpoint: Vec<f64>,
    pub pull_in_time: Option<f64>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &StateVector {
        self.states.last().expect("trajectory has the initial sample")
    }

    /// Time at which a midpoint level is first reached, by linear interpolation.
    pub fn crossing_time(&self, level: f64) -> Option<f64> {
        let u = &self.midpoint;
        (1..u.len()).find(|&n| u[n] >= level && u[n - 1] < level).map(|n| {
            let (t0, t1) = (self.times[n - 1], self.times[n]);
            t0 + (level - u[n - 1]) / (u[n] - u[n - 1]) * (t1 - t0)
        })
    }
}

/// One time step of some model, `z(t) -> z(t + dt)` under voltage `volts`.
pub trait Stepper {
    fn step(&mut self, z: &StateVector, t: f64, dt: f64, volts: f64) -> Result<StateVector>;
}

fn retryable(e: &Error) -> bool {
    matches!(e, Error::Newton { .. } | Error::Singular(_))
}

fn advance(
    stepper: &mut dyn Stepper,
    drive: &Drive,
    z: &StateVector,
    t: f64,
    dt: f64,
    halvings_left: u32,
) -> Result<StateVector> {
    match stepper.step(z, t, dt, drive.voltage(t + dt)) {
        Ok(next) => Ok(next),
        Err(e) if halvings_left > 0 && retryable(&e) => {
            let half = 0.5 * dt;
            let mid = advance(stepper, drive, z, t, half, halvings_left - 1)?;
            advance(stepper, drive, &mid, t + half, half, halvings_left - 1)
        }
        Err(e) => Err(e),
    }
}

/// Integrate from rest until `t_end` or until the midpoint deflection reaches
/// `kappa G0`. Samples are recorded on the uniform grid `n dt`.
pub fn integrate(
    stepper: &mut dyn Stepper,
    rom: &RomSystem,
    drive: &Drive,
    t_end: f64,
    settings: &IntegratorSettings,
) -> Result<Trajectory> {
    integrate_from(stepper, rom, rom.zero_state(), drive, t_end, settings)
}

pub fn integrate_from(
    stepper: &mut dyn Stepper,
    rom: &RomSystem,
    initial: StateVector,
    drive: &Drive,
    t_end: f64,
    settings: &IntegratorSettings,
) -> Result<Trajectory> {
    settings.validate()?;
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::Config(format!("t_end must be > 0, got {t_end}")));
    }
    let dt = settings.dt;
    let threshold = settings.pullin_fraction * rom.cfg.gap;
    let n_steps = ((t_end / dt) - 1e-9).ceil().max(1.0) as usize;
    let mut traj = Trajectory {
        times: vec![0.0],
        midpoint: vec![rom.midpoint_deflection(&initial.x)],
        states: vec![initial],
        pull_in_time: None,
        termination: Termination::EndTime,
    };
    for n in 0..n_steps {
        let t = n as f64 * dt;
        let z = traj.final_state().clone();
        let next = match advance(stepper, drive, &z, t, dt, settings.max_halvings) {
            Ok(next) => next,
            Err(Error::Contact(_)) => {
                traj.pull_in_time = Some(t + dt);
                traj.termination = Termination::Contact;
                return Ok(traj);
            }
            Err(e) => return Err(e),
        };
        if !next.is_finite() {
            return Err(Error::Newton { iterations: 0, trace: vec![f64::NAN] });
        }
        let u = rom.midpoint_deflection(&next.x);
        traj.times.push((n + 1) as f64 * dt);
        traj.states.push(next);
        traj.midpoint.push(u);
        if u >= threshold {
            traj.pull_in_time = traj.crossing_time(threshold);
            traj.termination = Termination::PullIn;
            return Ok(traj);
        }
    }
    Ok(traj)
}

/// Implicit Euler residual `g(z') - g(z) - dt f(z')` for a model whose
/// blocks come from `src` and whose electrostatic load is exact.
struct ImplicitStepSystem<'a, C: CoefficientSource> {
    src: &'a C,
    rom: &'a RomSystem,
    g_prev: DVector<f64>,
    dt: f64,
    volts: f64,
    scales: DVector<f64>,
    mode: JacobianMode,
}

impl<C: CoefficientSource> ImplicitStepSystem<'_, C> {
    fn eval(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let st = StateVector::from_flat(z, self.rom.n_beam());
        let c = self.src.coefficients_at(&st.x)?;
        let g = c.g(&st, &self.rom.mass);
        let f = c.rhs(&st) + self.rom.electrostatic_state(&st.x, self.volts)?;
        Ok(g - &self.g_prev - f * self.dt)
    }
}

impl<C: CoefficientSource> NonlinearSystem for ImplicitStepSystem<'_, C> {
    fn residual(&mut self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.eval(z)
    }

    fn variable_scales(&self) -> &DVector<f64> {
        &self.scales
    }

    fn jacobian(&mut self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        let nm = self.rom.n_beam();
        let ms = self.rom.n_squeeze();
        let scales = self.scales.clone();
        match self.mode {
            JacobianMode::FiniteDifference => {
                fd_jacobian_columns(&mut |zz| self.eval(zz), z, &scales, 0..z.len(), 1e-8)
            }
            JacobianMode::AnalyticWhereAvailable => {
                let mut jac = fd_jacobian_columns(&mut |zz| self.eval(zz), z, &scales, 0..nm, 1e-8)?;
                let x = z.rows(0, nm).into_owned();
                let c = self.src.coefficients_at(&x)?;
                let dt = self.dt;
                for j in 0..nm {
                    let col = nm + j;
                    jac.column_mut(col).fill(0.0);
                    jac[(j, col)] = -dt;
                    jac[(nm + j, col)] = self.rom.mass[j];
                }
                for k in 0..ms {
                    let col = 2 * nm + k;
                    jac.column_mut(col).fill(0.0);
                    for j in 0..nm {
                        jac[(nm + j, col)] = -dt * c.b[(j, k)];
                    }
                    for l in 0..ms {
                        jac[(2 * nm + l, col)] = c.a[(l, k)] - dt * c.h[(l, k)];
                    }
                }
                Ok(jac)
            }
        }
    }
}

/// Fully implicit Euler step of `d/dt g(z) = f(z)` with blocks from `src`.
pub fn implicit_step<C: CoefficientSource>(
    src: &C,
    rom: &RomSystem,
    z: &StateVector,
    volts: f64,
    dt: f64,
    settings: &IntegratorSettings,
) -> Result<StateVector> {
    let g_prev = src.coefficients_at(&z.x)?.g(z, &rom.mass);
    let res_scales = rom.residual_scales();
    let reference = newton::scaled_inf_norm(&g_prev, &res_scales);
    let mut system = ImplicitStepSystem {
        src,
        rom,
        g_prev,
        dt,
        volts,
        scales: rom.state_scales(),
        mode: settings.jacobian_mode,
    };
    let report = newton::solve(&mut system, z.to_flat(), &res_scales, reference, settings.newton())?;
    Ok(StateVector::from_flat(&report.solution, rom.n_beam()))
}

pub struct FullStepper<'a> {
    pub rom: &'a RomSystem,
    pub settings: IntegratorSettings,
}

impl Stepper for FullStepper<'_> {
    fn step(&mut self, z: &StateVector, _t: f64, dt: f64, volts: f64) -> Result<StateVector> {
        step_full(self.rom, z, volts, dt, &self.settings)
    }
}

/// One implicit Euler step of the full model.
pub fn step_full(
    rom: &RomSystem,
    z: &StateVector,
    volts: f64,
    dt: f64,
    settings: &IntegratorSettings,
) -> Result<StateVector> {
    implicit_step(rom, rom, z, volts, dt, settings)
}

/// Full nonlinear reduced model from rest.
pub fn simulate(rom: &RomSystem, drive: &Drive, t_end: f64, settings: &IntegratorSettings) -> Result<Trajectory> {
    let mut stepper = FullStepper { rom, settings: settings.clone() };
    integrate(&mut stepper, rom, drive, t_end, settings)
}

struct StaticSystem<'a> {
    rom: &'a RomSystem,
    volts: f64,
    scales: DVector<f64>,
}

impl NonlinearSystem for StaticSystem<'_> {
    fn residual(&mut self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.rom.assemble_k_force(x) - self.rom.electrostatic_force(x, self.volts)?)
    }

    fn variable_scales(&self) -> &DVector<f64> {
        &self.scales
    }
}

/// Static equilibrium at constant voltage, by continuation in `V^2` from rest.
/// The film carries no pressure at rest, so `s = 0` and `v = 0`.
pub fn static_equilibrium(rom: &RomSystem, volts: f64) -> Result<StateVector> {
    let nm = rom.n_beam();
    let g0 = rom.cfg.gap;
    let mut sys = StaticSystem { rom, volts: 0.0, scales: DVector::from_element(nm, g0) };
    let res_scales = DVector::from_element(nm, rom.k_lin[(0, 0)] * g0);
    let opts = NewtonOptions { tol: 1e-13, max_iter: 40 };
    let mut x = DVector::zeros(nm);
    let ramps = 10;
    for i in 1..=ramps {
        sys.volts = volts * (i as f64 / ramps as f64).sqrt();
        x = newton::solve(&mut sys, x, &res_scales, 0.0, opts)?.solution;
    }
    let mut z = rom.zero_state();
    z.x = x;
    Ok(z)
}

/// Single linearization of the model at rest, forced by the rest-state
/// electrostatic load scaled with `V^2`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub point: LinearizationPoint,
    /// `(0 ; p_e(0, 1 V) ; 0)`
    pub unit_forcing: DVector<f64>,
}

pub fn linearized_model(rom: &RomSystem) -> Result<LinearModel> {
    let point = LinearizationPoint::new(rom, &rom.zero_state())?;
    let unit_forcing = rom.electrostatic_state(&DVector::zeros(rom.n_beam()), 1.0)?;
    if point.jg.clone().lu().try_inverse().is_none() {
        return Err(Error::Singular("linear model mass-side jacobian"));
    }
    Ok(LinearModel { point, unit_forcing })
}

pub struct LinearStepper<'a> {
    model: &'a LinearModel,
    rom: &'a RomSystem,
}

impl<'a> LinearStepper<'a> {
    pub fn new(model: &'a LinearModel, rom: &'a RomSystem) -> Self {
        LinearStepper { model, rom }
    }
}

impl Stepper for LinearStepper<'_> {
    fn step(&mut self, z: &StateVector, _t: f64, dt: f64, volts: f64) -> Result<StateVector> {
        let p = &self.model.point;
        let zf = z.to_flat();
        // affine terms relative to the linearization point
        let offset = &p.f - &p.jf * &p.z;
        let lhs = &p.jg - &p.jf * dt;
        let rhs = &p.jg * &zf + (offset + &self.model.unit_forcing * (volts * volts)) * dt;
        let next = newton::scaled_solve(&lhs, &rhs, &self.rom.residual_scales(), &self.rom.state_scales())
            .ok_or(Error::Singular("linear model step"))?;
        Ok(StateVector::from_flat(&next, self.rom.n_beam()))
    }
}

pub fn simulate_linear(
    rom: &RomSystem,
    model: &LinearModel,
    drive: &Drive,
    t_end: f64,
    settings: &IntegratorSettings,
) -> Result<Trajectory> {
    let mut stepper = LinearStepper::new(model, rom);
    integrate(&mut stepper, rom, drive, t_end, settings)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepStatus {
    PullIn,
    NoPullIn,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub volts: f64,
    pub pull_in_time: Option<f64>,
    pub status: SweepStatus,
}

impl SweepRow {
    pub fn from_result(volts: f64, result: Result<Trajectory>) -> Self {
        match result {
            Ok(traj) => SweepRow {
                volts,
                pull_in_time: traj.pull_in_time,
                status: if traj.pull_in_time.is_some() { SweepStatus::PullIn } else { SweepStatus::NoPullIn },
            },
            Err(e) => SweepRow { volts, pull_in_time: None, status: SweepStatus::Failed(e.to_string()) },
        }
    }
}

/// Independent runs per voltage, returned in input order. Runs execute on the
/// current rayon pool.
pub fn sweep_with<F>(voltages: &[f64], run: F) -> Vec<SweepRow>
where
    F: Fn(f64) -> Result<Trajectory> + Sync,
{
    voltages.par_iter().map(|&v| SweepRow::from_result(v, run(v))).collect()
}

pub fn pullin_sweep(
    rom: &RomSystem,
    voltages: &[f64],
    t_end: f64,
    settings: &IntegratorSettings,
) -> Result<Vec<SweepRow>> {
    if voltages.is_empty() {
        return Err(Error::Config("voltage list is empty".into()));
    }
    Ok(sweep_with(voltages, |v| simulate(rom, &Drive::step(v), t_end, settings)))
}

/// Film response to a prescribed beam motion: returns `(t, s, int p dOmega)` samples.
pub fn simulate_film_prescribed(
    rom: &RomSystem,
    motion: impl Fn(f64) -> DVector<f64>,
    t_end: f64,
    dt: f64,
) -> Result<Vec<(f64, DVector<f64>, f64)>> {
    let n_steps = ((t_end / dt) - 1e-9).ceil() as usize;
    let x0 = motion(0.0);
    let mut c = rom.coefficients(&x0)?;
    let mut s = DVector::zeros(rom.n_squeeze());
    let mut out = vec![(0.0, s.clone(), rom.film_force(&x0, &s)?)];
    for n in 0..n_steps {
        let t = (n + 1) as f64 * dt;
        let xn = motion(t);
        let cn = rom.coefficients(&xn)?;
        let lhs = &cn.a - &cn.h * dt;
        let rhs = &c.a * &s - &c.f + &cn.f;
        s = lhs.lu().solve(&rhs).ok_or(Error::Singular("prescribed film step"))?;
        out.push((t, s.clone(), rom.film_force(&xn, &s)?));
        c = cn;
    }
    Ok(out)
}
