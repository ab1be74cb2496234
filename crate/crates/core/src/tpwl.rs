//! Trajectory piecewise-linear (TPWL) model.
//!
//! Linearization points are harvested from a full-model training run. The
//! model integrated is
//!
//! ```text
//! d/dt [ sum_i w_i(z) (g_i + JG_i (z - z_i)) ] = sum_i w_i(z) (f_i + JF_i (z - z_i)) + F_elec(z)
//! ```
//!
//! with the weights frozen at the start of each step and the electrostatic
//! load evaluated at the start state, so every step is a single linear solve.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::DeviceConfig;
use crate::error::{Error, Result};
use crate::matrix_serde;
use crate::newton::{fd_jacobian_columns, scaled_solve};
use crate::rom::RomSystem;
use crate::sim::{integrate, simulate, Drive, IntegratorSettings, Stepper, Trajectory};
use crate::state::StateVector;
use crate::weights::{exponential_weights, scaled_distance};

/// Default weighting sharpness.
pub const DEFAULT_BETA: f64 = 25.0;

/// Relative central-difference step for cached Jacobians.
const JACOBIAN_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizationPoint {
    #[serde(with = "matrix_serde::vector")]
    pub z: DVector<f64>,
    #[serde(with = "matrix_serde::vector")]
    pub g: DVector<f64>,
    /// Right-hand side without the electrostatic load.
    #[serde(with = "matrix_serde::vector")]
    pub f: DVector<f64>,
    #[serde(with = "matrix_serde::matrix")]
    pub jg: DMatrix<f64>,
    #[serde(with = "matrix_serde::matrix")]
    pub jf: DMatrix<f64>,
}

impl LinearizationPoint {
    pub fn new(rom: &RomSystem, z: &StateVector) -> Result<Self> {
        let nm = rom.n_beam();
        let (g, f) = rom.split_pair(z)?;
        let zf = z.to_flat();
        let n = zf.len();
        let scales = rom.state_scales();
        // g and f stacked so both Jacobians come from one sweep
        let mut stacked = |zz: &DVector<f64>| -> Result<DVector<f64>> {
            let (gg, ff) = rom.split_pair(&StateVector::from_flat(zz, nm))?;
            let mut out = DVector::zeros(2 * n);
            out.rows_mut(0, n).copy_from(&gg);
            out.rows_mut(n, n).copy_from(&ff);
            Ok(out)
        };
        let jac = fd_jacobian_columns(&mut stacked, &zf, &scales, 0..n, JACOBIAN_STEP)?;
        let jg = jac.rows(0, n).into_owned();
        let jf = jac.rows(n, n).into_owned();
        if jg.iter().chain(jf.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { x: f64::NAN, y: f64::NAN, value: f64::NAN });
        }
        Ok(LinearizationPoint { z: zf, g, f, jg, jf })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub training_voltage: f64,
    pub dt: f64,
    pub t_end: f64,
    pub pullin_fraction: f64,
    pub config: DeviceConfig,
    /// Full integrator settings of the training run.
    pub settings: IntegratorSettings,
    /// Gauss points `(n_x, n_y)` of the assembly quadrature.
    pub quadrature: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpwlModel {
    pub points: Vec<LinearizationPoint>,
    /// Per-coordinate normalization used for distances.
    #[serde(with = "matrix_serde::vector")]
    pub scales: DVector<f64>,
    pub delta: f64,
    pub beta: f64,
    pub provenance: Provenance,
}

/// `max |z_c|` over the trajectory, floored at `1e-30` and at `1e-8` of the
/// largest scale within the same block (x, v or s).
pub fn trajectory_scales(states: &[StateVector]) -> DVector<f64> {
    let first = &states[0];
    let nm = first.x.len();
    let ms = first.s.len();
    let mut scales = DVector::<f64>::zeros(first.len());
    for st in states {
        let z = st.to_flat();
        for (s, c) in scales.iter_mut().zip(z.iter()) {
            *s = s.max(c.abs());
        }
    }
    for (start, len) in [(0, nm), (nm, nm), (2 * nm, ms)] {
        let block_max = scales.rows(start, len).max();
        let floor = (1e-8 * block_max).max(1e-30);
        for s in scales.rows_mut(start, len).iter_mut() {
            *s = s.max(floor);
        }
    }
    scales
}

/// Greedy selection: the first state, then every state whose normalized
/// distance to all points chosen so far exceeds `delta`.
pub fn select_points(states: &[DVector<f64>], scales: &DVector<f64>, delta: f64) -> Vec<usize> {
    let mut chosen = vec![0usize];
    for (n, z) in states.iter().enumerate().skip(1) {
        let far = chosen
            .iter()
            .all(|&c| scaled_distance(z.as_slice(), states[c].as_slice(), scales.as_slice()) > delta);
        if far {
            chosen.push(n);
        }
    }
    chosen
}

/// Point-count target for δ search.
fn delta_for_count(states: &[DVector<f64>], scales: &DVector<f64>, target: usize) -> Result<f64> {
    if target == 0 {
        return Err(Error::Config("target point count must be >= 1".into()));
    }
    if target > states.len() {
        return Err(Error::Config(format!(
            "target {target} exceeds the {} training samples",
            states.len()
        )));
    }
    let span = states
        .iter()
        .map(|z| scaled_distance(z.as_slice(), states[0].as_slice(), scales.as_slice()))
        .fold(0.0_f64, f64::max);
    let (mut lo, mut hi) = (0.0, 2.0 * span + 1.0);
    if select_points(states, scales, hi).len() == target {
        return Ok(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let count = select_points(states, scales, mid).len();
        if count == target {
            return Ok(mid);
        }
        if count > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Config(format!("no threshold yields exactly {target} linearization points")))
}

/// How the distance threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointSelection {
    Threshold(f64),
    Count(usize),
}

/// Simulate the full model at `training_voltage` and harvest linearization points.
pub fn train(
    rom: &RomSystem,
    training_voltage: f64,
    t_end: f64,
    settings: &IntegratorSettings,
    selection: PointSelection,
    beta: f64,
) -> Result<TpwlModel> {
    if !(beta > 0.0) {
        return Err(Error::Config(format!("beta must be > 0, got {beta}")));
    }
    let traj = simulate(rom, &Drive::step(training_voltage), t_end, settings)?;
    train_from_trajectory(rom, &traj, training_voltage, t_end, settings, selection, beta)
}

pub fn train_from_trajectory(
    rom: &RomSystem,
    traj: &Trajectory,
    training_voltage: f64,
    t_end: f64,
    settings: &IntegratorSettings,
    selection: PointSelection,
    beta: f64,
) -> Result<TpwlModel> {
    let scales = trajectory_scales(&traj.states);
    let flat: Vec<DVector<f64>> = traj.states.iter().map(StateVector::to_flat).collect();
    let delta = match selection {
        PointSelection::Threshold(d) if d > 0.0 => d,
        PointSelection::Threshold(d) => return Err(Error::Config(format!("delta must be > 0, got {d}"))),
        PointSelection::Count(n) => delta_for_count(&flat, &scales, n)?,
    };
    let chosen = select_points(&flat, &scales, delta);
    let points = chosen
        .iter()
        .map(|&n| LinearizationPoint::new(rom, &traj.states[n]))
        .collect::<Result<Vec<_>>>()?;
    Ok(TpwlModel {
        points,
        scales,
        delta,
        beta,
        provenance: Provenance {
            training_voltage,
            dt: settings.dt,
            t_end,
            pullin_fraction: settings.pullin_fraction,
            config: rom.cfg.clone(),
            settings: settings.clone(),
            quadrature: (rom.grid.n_x(), rom.grid.n_y()),
        },
    })
}

impl TpwlModel {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn weights(&self, z: &DVector<f64>) -> Vec<f64> {
        let d: Vec<f64> = self
            .points
            .iter()
            .map(|p| scaled_distance(z.as_slice(), p.z.as_slice(), self.scales.as_slice()))
            .collect();
        exponential_weights(&d, self.beta)
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let model: TpwlModel = serde_json::from_str(&text)?;
        if model.points.is_empty() {
            return Err(Error::Config("model has no linearization points".into()));
        }
        Ok(model)
    }
}

/// One semi-implicit step: weights and electrostatic load from `z`, implicit
/// Euler on the frozen affine model.
pub fn step_tpwl(model: &TpwlModel, rom: &RomSystem, z: &StateVector, volts: f64, dt: f64) -> Result<StateVector> {
    let zf = z.to_flat();
    let w = model.weights(&zf);
    let n = zf.len();
    let mut gbar = DMatrix::zeros(n, n);
    let mut fbar_mat = DMatrix::zeros(n, n);
    let mut fbar = DVector::zeros(n);
    for (p, &wi) in model.points.iter().zip(&w) {
        if wi == 0.0 {
            continue;
        }
        gbar += &p.jg * wi;
        fbar_mat += &p.jf * wi;
        fbar += (&p.f - &p.jf * &p.z) * wi;
    }
    let elec = rom.electrostatic_state(&z.x, volts)?;
    let lhs = &gbar - &fbar_mat * dt;
    let rhs = &gbar * &zf + (fbar + elec) * dt;
    let next = scaled_solve(&lhs, &rhs, &rom.residual_scales(), &rom.state_scales())
        .ok_or(Error::Singular("tpwl frozen-weight system"))?;
    Ok(StateVector::from_flat(&next, rom.n_beam()))
}

pub struct TpwlStepper<'a> {
    pub model: &'a TpwlModel,
    pub rom: &'a RomSystem,
}

impl Stepper for TpwlStepper<'_> {
    fn step(&mut self, z: &StateVector, _t: f64, dt: f64, volts: f64) -> Result<StateVector> {
        step_tpwl(self.model, self.rom, z, volts, dt)
    }
}

pub fn simulate_tpwl(
    rom: &RomSystem,
    model: &TpwlModel,
    drive: &Drive,
    t_end: f64,
    settings: &IntegratorSettings,
) -> Result<Trajectory> {
    if model.points.is_empty() {
        return Err(Error::Config("tpwl model has no points".into()));
    }
    let mut stepper = TpwlStepper { model, rom };
    integrate(&mut stepper, rom, drive, t_end, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwl_mech::compare_trajectories;
    use crate::sim::step_full;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const T_END: f64 = 6e-4;

    fn setup() -> (RomSystem, IntegratorSettings, Trajectory) {
        let rom = RomSystem::new(&DeviceConfig::microswitch()).unwrap();
        let set = IntegratorSettings::for_rom(&rom);
        let traj = simulate(&rom, &Drive::step(9.5), T_END, &set).unwrap();
        (rom, set, traj)
    }

    fn model(rom: &RomSystem, set: &IntegratorSettings, traj: &Trajectory, sel: PointSelection) -> TpwlModel {
        train_from_trajectory(rom, traj, 9.5, T_END, set, sel, DEFAULT_BETA).unwrap()
    }

    #[test]
    fn huge_threshold_keeps_only_the_initial_state() {
        let (rom, set, traj) = setup();
        let m = model(&rom, &set, &traj, PointSelection::Threshold(1e300));
        assert_eq!(m.len(), 1);
        assert!(m.points[0].z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn count_target_is_hit_exactly() {
        let (rom, set, traj) = setup();
        for n in [1, 2, 21] {
            assert_eq!(model(&rom, &set, &traj, PointSelection::Count(n)).len(), n);
        }
        let too_many = train_from_trajectory(&rom, &traj, 9.5, T_END, &set, PointSelection::Count(traj.len() + 1), 25.0);
        assert!(matches!(too_many, Err(Error::Config(_))));
    }

    #[test]
    fn cached_values_are_the_exact_pair() {
        let (rom, set, traj) = setup();
        let m = model(&rom, &set, &traj, PointSelection::Count(21));
        for p in &m.points {
            let (g, f) = rom.split_pair(&StateVector::from_flat(&p.z, rom.n_beam())).unwrap();
            assert_eq!(p.g, g);
            assert_eq!(p.f, f);
        }
    }

    #[test]
    fn cached_jacobians_match_directional_probes() {
        let (rom, set, traj) = setup();
        let m = model(&rom, &set, &traj, PointSelection::Count(7));
        let scales = rom.state_scales();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in &m.points {
            for _ in 0..4 {
                let d = DVector::from_fn(p.z.len(), |i, _| rng.gen_range(-1.0..1.0) * scales[i]);
                let eps = 1e-6;
                let pair = |z: DVector<f64>| rom.split_pair(&StateVector::from_flat(&z, rom.n_beam())).unwrap();
                let (gp, fp) = pair(&p.z + &d * eps);
                let (gm, fm) = pair(&p.z - &d * eps);
                for (probe, jac) in [((gp - gm) / (2.0 * eps), &p.jg), ((fp - fm) / (2.0 * eps), &p.jf)] {
                    let lin = jac * &d;
                    let err = (&probe - &lin).norm() / probe.norm().max(1e-300);
                    assert!(err < 1e-5, "relative mismatch {err:e}");
                }
            }
        }
    }

    #[test]
    fn weights_are_a_partition_of_unity_with_indicators() {
        let (rom, set, traj) = setup();
        let base = model(&rom, &set, &traj, PointSelection::Count(21));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for beta in [10.0, 25.0, 50.0] {
            let m = base.clone().with_beta(beta);
            for p in &m.points[..3] {
                let w = m.weights(&p.z);
                assert_eq!(w.iter().filter(|&&v| v == 1.0).count(), 1);
                assert_eq!(w.iter().filter(|&&v| v == 0.0).count(), m.len() - 1);
            }
            for _ in 0..1000 {
                let z = DVector::from_fn(m.scales.len(), |i, _| rng.gen_range(-1.5..1.5) * m.scales[i]);
                let w = m.weights(&z);
                assert!(w.iter().all(|&v| v >= 0.0));
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn equidistant_points_share_the_weight() {
        let (rom, set, traj) = setup();
        let mut m = model(&rom, &set, &traj, PointSelection::Count(2));
        let mid = (&m.points[0].z + &m.points[1].z) * 0.5;
        let w = m.weights(&mid);
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12, "{w:?}");
        m.points.swap(0, 1);
        assert_eq!(m.weights(&mid).len(), 2);
    }

    #[test]
    fn rest_is_a_fixed_point_of_a_one_point_model() {
        let (rom, set, traj) = setup();
        let m = model(&rom, &set, &traj, PointSelection::Count(1));
        let z = step_tpwl(&m, &rom, &rom.zero_state(), 0.0, set.dt).unwrap();
        assert!(z.to_flat().iter().all(|&v| v.abs() < 1e-300));
    }

    #[test]
    fn step_at_a_point_solves_the_linearized_implicit_equation() {
        let (rom, set, traj) = setup();
        let m = model(&rom, &set, &traj, PointSelection::Count(21));
        let p = &m.points[12];
        let z = StateVector::from_flat(&p.z, rom.n_beam());
        let next = step_tpwl(&m, &rom, &z, 9.5, set.dt).unwrap().to_flat();
        let elec = rom.electrostatic_state(&z.x, 9.5).unwrap();
        let lhs = &p.jg * (&next - &p.z);
        let rhs = (&p.f + &p.jf * (&next - &p.z) + elec) * set.dt;
        let scales = rom.residual_scales();
        let res = (lhs - rhs).component_div(&scales).amax();
        assert!(res < 1e-10, "{res:e}");
    }

    #[test]
    fn step_at_a_point_is_close_to_the_full_step() {
        let (rom, set, traj) = setup();
        let m = model(&rom, &set, &traj, PointSelection::Count(21));
        let scales = rom.state_scales();
        let rel = |z: &StateVector, dt: f64| {
            let a = step_tpwl(&m, &rom, z, 9.5, dt).unwrap().to_flat();
            let b = step_full(&rom, z, 9.5, dt, &set).unwrap().to_flat();
            (&a - &b).component_div(&scales).amax() / b.component_div(&scales).amax()
        };
        for p in &m.points {
            let z = StateVector::from_flat(&p.z, rom.n_beam());
            let half = rel(&z, 0.5 * set.dt);
            assert!(half < 1e-3, "{half:e}");
        }
        // the gap is linearization error, second order in the step
        let z = StateVector::from_flat(&m.points[20].z, rom.n_beam());
        let ratio = rel(&z, set.dt) / rel(&z, 0.5 * set.dt);
        assert!(ratio > 2.5, "{ratio}");
    }

    #[test]
    fn replay_at_the_training_voltage_reproduces_pull_in() {
        let (rom, set, traj) = setup();
        let m = model(&rom, &set, &traj, PointSelection::Count(21));
        let replay = simulate_tpwl(&rom, &m, &Drive::step(9.5), T_END, &set).unwrap();
        let (_, pullin) = compare_trajectories(&traj, &replay, rom.cfg.gap).unwrap();
        assert!(pullin < 2.0, "{pullin}%");
    }

    #[test]
    fn more_points_reduce_replay_error() {
        let (rom, set, traj) = setup();
        let errs: Vec<f64> = [11, 21, 41]
            .iter()
            .map(|&n| {
                let m = model(&rom, &set, &traj, PointSelection::Count(n));
                let replay = simulate_tpwl(&rom, &m, &Drive::step(9.5), T_END, &set).unwrap();
                compare_trajectories(&traj, &replay, rom.cfg.gap).unwrap().0
            })
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let (rom, set, traj) = setup();
        let m = model(&rom, &set, &traj, PointSelection::Count(5));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        let back = TpwlModel::load(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json(), m.to_json());
    }

    #[test]
    fn non_positive_parameters_are_rejected() {
        let (rom, set, traj) = setup();
        assert!(train_from_trajectory(&rom, &traj, 9.5, T_END, &set, PointSelection::Threshold(0.0), 25.0).is_err());
        assert!(train(&rom, 9.5, T_END, &set, PointSelection::Count(3), 0.0).is_err());
        assert!(train_from_trajectory(&rom, &traj, 9.5, T_END, &set, PointSelection::Count(0), 25.0).is_err());
    }
}
