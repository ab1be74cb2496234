//! Piecewise-linear model over the mechanical coordinates.
//!
//! Instead of linearizing the whole state along a training run, only the
//! `x`-dependent blocks `A, H, f, B, K` are cached on a grid of mechanical
//! configurations together with their slopes along every mechanical
//! coordinate.
//! Between grid points the blocks are blended with the same exponential
//! weights as the trajectory model, evaluated on the gridded coordinates.
//!
//! The model needs no training run, and it is integrated fully implicitly: the
//! weights are functions of the unknown `x'` inside the Newton solve. The
//! electrostatic load is evaluated exactly at `x'`.

use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::DeviceConfig;
use crate::error::{Error, Result};
use crate::matrix_serde;
use crate::rom::{CoefficientSource, Coefficients, RomSystem};
use crate::sim::{implicit_step, integrate, simulate, Drive, IntegratorSettings, Stepper, Trajectory};
use crate::state::StateVector;
use crate::weights::exponential_weights;

/// Fraction of the coordinate that collapses the midpoint, used for slopes.
const SLOPE_STEP: f64 = 1e-5;

/// Default weighting sharpness. Neighbouring tangent maps are blended over a
/// whole cell instead of switching near its middle; sharper blends leave an
/// error that only falls like the grid spacing.
pub const DEFAULT_BETA: f64 = 1.0;

/// One gridded mechanical coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    /// Beam mode index (0 is the fundamental).
    pub mode: usize,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl GridAxis {
    pub fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.min];
        }
        let h = (self.max - self.min) / (self.n - 1) as f64;
        (0..self.n).map(|i| self.min + i as f64 * h).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridNode {
    #[serde(with = "matrix_serde::vector")]
    pub x: DVector<f64>,
    pub value: Coefficients,
    /// Central-difference slope along every mechanical coordinate.
    pub slopes: Vec<Coefficients>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechGridModel {
    pub axes: Vec<GridAxis>,
    pub nodes: Vec<GridNode>,
    /// Distance normalization per axis.
    pub scales: Vec<f64>,
    pub beta: f64,
    pub config: DeviceConfig,
}

/// `[0, 0.9 G0 / psi_1(L/2)]`, the fundamental-mode range swept by a pull-in.
pub fn default_range(rom: &RomSystem) -> (f64, f64) {
    (0.0, 0.9 * rom.cfg.gap / rom.psi1_mid())
}

/// Uniform 1-D grid of `n_points` (the rest point included) over the
/// fundamental-mode coordinate.
pub fn build_grid_model(rom: &RomSystem, n_points: usize, range: (f64, f64)) -> Result<MechGridModel> {
    build_tensor_model(
        rom,
        &[GridAxis { mode: 0, min: range.0, max: range.1, n: n_points }],
        DEFAULT_BETA,
    )
}

/// Tensor-product grid over several mechanical coordinates.
pub fn build_tensor_model(rom: &RomSystem, axes: &[GridAxis], beta: f64) -> Result<MechGridModel> {
    if axes.is_empty() {
        return Err(Error::Config("grid needs at least one axis".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::Config(format!("beta must be > 0, got {beta}")));
    }
    let nm = rom.n_beam();
    let mid = rom.basis.beam.midpoint_values();
    for (i, ax) in axes.iter().enumerate() {
        if ax.n < 2 {
            return Err(Error::Config(format!("grid axis needs >= 2 points, got {}", ax.n)));
        }
        if ax.mode >= nm {
            return Err(Error::Config(format!("grid axis mode {} exceeds {} beam modes", ax.mode, nm)));
        }
        if !(ax.min.is_finite() && ax.max.is_finite() && ax.max > ax.min) {
            return Err(Error::Config(format!("grid axis range [{}, {}] is empty", ax.min, ax.max)));
        }
        if axes[..i].iter().any(|o| o.mode == ax.mode) {
            return Err(Error::Config(format!("mode {} gridded twice", ax.mode)));
        }
        let reach = ax.min.abs().max(ax.max.abs()) * mid[ax.mode].abs();
        if reach >= rom.cfg.gap {
            return Err(Error::Config(format!(
                "grid over mode {} reaches the substrate (|u_mid| = {reach:.3e} m)",
                ax.mode
            )));
        }
    }
    let scales: Vec<f64> = axes.iter().map(|a| a.max - a.min).collect();
    let h = SLOPE_STEP * rom.cfg.gap / rom.psi1_mid();

    let mut positions = vec![DVector::<f64>::zeros(nm)];
    for ax in axes {
        let vals = ax.values();
        positions = positions
            .into_iter()
            .flat_map(|p| {
                vals.iter().map(move |&v| {
                    let mut q = p.clone();
                    q[ax.mode] = v;
                    q
                })
            })
            .collect();
    }
    let nodes = positions
        .into_par_iter()
        .map(|x| {
            let value = rom.coefficients(&x)?;
            let slopes = (0..nm)
                .map(|j| {
                    let mut up = x.clone();
                    let mut dn = x.clone();
                    up[j] += h;
                    dn[j] -= h;
                    Ok(rom.coefficients(&up)?.difference(&rom.coefficients(&dn)?, 2.0 * h))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(GridNode { x, value, slopes })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MechGridModel { axes: axes.to_vec(), nodes, scales, beta, config: rom.cfg.clone() })
}

impl MechGridModel {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn distance(&self, x: &DVector<f64>, node: &GridNode) -> f64 {
        self.axes
            .iter()
            .zip(&self.scales)
            .map(|(ax, s)| ((x[ax.mode] - node.x[ax.mode]) / s).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Blending weights over the grid, from the gridded coordinates of `x`.
    pub fn weights(&self, x: &DVector<f64>) -> Vec<f64> {
        let d: Vec<f64> = self.nodes.iter().map(|n| self.distance(x, n)).collect();
        exponential_weights(&d, self.beta)
    }

    /// `sum_i w_i(x) (C_i + sum_j D_ij (x_j - x_ij))`; the weights see only
    /// the gridded coordinates, the affine maps see all of them.
    pub fn interpolate(&self, x: &DVector<f64>) -> Result<Coefficients> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { x: f64::NAN, y: f64::NAN, value: f64::NAN });
        }
        let w = self.weights(x);
        let first = &self.nodes[0].value;
        let mut out = Coefficients::zeros(first.b.nrows(), first.a.nrows());
        for (node, &wi) in self.nodes.iter().zip(&w) {
            if wi == 0.0 {
                continue;
            }
            out.axpy(wi, &node.value);
            for (j, slope) in node.slopes.iter().enumerate() {
                out.axpy(wi * (x[j] - node.x[j]), slope);
            }
        }
        Ok(out)
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
        let model: MechGridModel = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if model.nodes.is_empty() {
            return Err(Error::Config("grid model has no nodes".into()));
        }
        Ok(model)
    }
}

impl CoefficientSource for MechGridModel {
    fn coefficients_at(&self, x: &DVector<f64>) -> Result<Coefficients> {
        self.interpolate(x)
    }
}

/// One fully implicit Euler step of the grid model.
pub fn step_pwl_mech(
    model: &MechGridModel,
    rom: &RomSystem,
    z: &StateVector,
    volts: f64,
    dt: f64,
    settings: &IntegratorSettings,
) -> Result<StateVector> {
    implicit_step(model, rom, z, volts, dt, settings)
}

pub struct PwlMechStepper<'a> {
    pub model: &'a MechGridModel,
    pub rom: &'a RomSystem,
    pub settings: IntegratorSettings,
}

impl Stepper for PwlMechStepper<'_> {
    fn step(&mut self, z: &StateVector, _t: f64, dt: f64, volts: f64) -> Result<StateVector> {
        step_pwl_mech(self.model, self.rom, z, volts, dt, &self.settings)
    }
}

pub fn simulate_pwl_mech(
    rom: &RomSystem,
    model: &MechGridModel,
    drive: &Drive,
    t_end: f64,
    settings: &IntegratorSettings,
) -> Result<Trajectory> {
    let mut stepper = PwlMechStepper { model, rom, settings: settings.clone() };
    integrate(&mut stepper, rom, drive, t_end, settings)
}

/// Accuracy of an approximate trajectory against a reference one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub n_points: usize,
    /// `max_t |u_mid - u_mid,ref| / G0` in percent, up to the earlier pull-in.
    pub displacement_error_pct: f64,
    /// `|t_pi - t_pi,ref| / t_pi,ref` in percent.
    pub pullin_error_pct: f64,
}

/// Compare two runs sampled on the same uniform time grid.
pub fn compare_trajectories(reference: &Trajectory, approx: &Trajectory, gap: f64) -> Result<(f64, f64)> {
    let (t_ref, t_apx) = match (reference.pull_in_time, approx.pull_in_time) {
        (Some(a), Some(b)) => (a, b),
        (None, _) => return Err(Error::Incomparable("reference run did not pull in".into())),
        (_, None) => return Err(Error::Incomparable("approximate run did not pull in".into())),
    };
    let horizon = t_ref.min(t_apx);
    let disp = reference
        .times
        .iter()
        .zip(&reference.midpoint)
        .zip(&approx.midpoint)
        .take_while(|((t, _), _)| **t <= horizon)
        .map(|((_, a), b)| (a - b).abs())
        .fold(0.0_f64, f64::max);
    Ok((100.0 * disp / gap, 100.0 * (t_apx - t_ref).abs() / t_ref))
}

/// Grid model with `n_points` over the default range, compared with the full
/// model under a voltage step.
pub fn error_report(
    rom: &RomSystem,
    model: &MechGridModel,
    volts: f64,
    t_end: f64,
    settings: &IntegratorSettings,
) -> Result<ErrorReport> {
    let full = simulate(rom, &Drive::step(volts), t_end, settings)?;
    error_report_against(rom, model, &full, volts, t_end, settings)
}

pub fn error_report_against(
    rom: &RomSystem,
    model: &MechGridModel,
    full: &Trajectory,
    volts: f64,
    t_end: f64,
    settings: &IntegratorSettings,
) -> Result<ErrorReport> {
    let approx = simulate_pwl_mech(rom, model, &Drive::step(volts), t_end, settings)?;
    let (disp, pullin) = compare_trajectories(full, &approx, rom.cfg.gap)?;
    Ok(ErrorReport { n_points: model.len(), displacement_error_pct: disp, pullin_error_pct: pullin })
}

/// Error reports for several grid sizes, sorted by point count.
pub fn point_count_study(
    rom: &RomSystem,
    counts: &[usize],
    volts: f64,
    t_end: f64,
    settings: &IntegratorSettings,
    beta: f64,
) -> Result<Vec<ErrorReport>> {
    if counts.is_empty() {
        return Err(Error::Config("point-count list is empty".into()));
    }
    let mut counts = counts.to_vec();
    counts.sort_unstable();
    counts.dedup();
    let full = simulate(rom, &Drive::step(volts), t_end, settings)?;
    let range = default_range(rom);
    counts
        .par_iter()
        .map(|&n| {
            let model = build_grid_model(rom, n, range)?.with_beta(beta);
            error_report_against(rom, &model, &full, volts, t_end, settings)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rom() -> RomSystem {
        RomSystem::new(&DeviceConfig::microswitch()).unwrap()
    }

    fn block_error(a: &Coefficients, e: &Coefficients) -> f64 {
        [
            (&a.a - &e.a).norm() / e.a.norm(),
            (&a.h - &e.h).norm() / e.h.norm(),
            (&a.f - &e.f).norm() / e.f.norm(),
            (&a.b - &e.b).norm() / e.b.norm(),
            (&a.k - &e.k).norm() / e.k.norm(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    #[test]
    fn nodes_hold_the_exact_blocks() {
        let rom = rom();
        let m = build_grid_model(&rom, 5, default_range(&rom)).unwrap();
        assert_eq!(m.len(), 5);
        assert!(m.nodes[0].x.iter().all(|&v| v == 0.0));
        for node in &m.nodes {
            assert_eq!(node.value, rom.coefficients(&node.x).unwrap());
            assert_eq!(m.interpolate(&node.x).unwrap(), node.value);
        }
    }

    #[test]
    fn slopes_match_the_assembled_blocks() {
        let rom = rom();
        let m = build_grid_model(&rom, 4, default_range(&rom)).unwrap();
        let node = &m.nodes[2];
        let h = 1e-3 * rom.cfg.gap;
        for j in 0..rom.n_beam() {
            let mut up = node.x.clone();
            let mut dn = node.x.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = rom.coefficients(&up).unwrap().difference(&rom.coefficients(&dn).unwrap(), 2.0 * h);
            let s = &node.slopes[j];
            let v = &node.value;
            // per block, against the slope itself and the value per gap
            let blocks = [
                ((&fd.a - &s.a).amax(), fd.a.amax(), v.a.amax()),
                ((&fd.h - &s.h).amax(), fd.h.amax(), v.h.amax()),
                ((&fd.f - &s.f).amax(), fd.f.amax(), v.f.amax()),
                ((&fd.b - &s.b).amax(), fd.b.amax(), v.b.amax()),
                ((&fd.k - &s.k).amax(), fd.k.amax(), v.k.amax()),
            ];
            for (n, (err, slope, value)) in blocks.into_iter().enumerate() {
                assert!(err <= 1e-4 * slope + 1e-6 * value / rom.cfg.gap, "mode {j} block {n}: {err:e}");
            }
        }
    }

    #[test]
    fn interpolation_is_second_order_in_the_spacing() {
        let rom = rom();
        let range = default_range(&rom);
        let coarse = build_grid_model(&rom, 30, range).unwrap();
        let fine = build_grid_model(&rom, 59, range).unwrap();
        let step = (range.1 - range.0) / 29.0;
        for cell in [3, 12, 20] {
            let mut x = DVector::zeros(rom.n_beam());
            x[0] = range.0 + (cell as f64 + 0.5) * step;
            let exact = rom.coefficients(&x).unwrap();
            let e1 = block_error(&coarse.interpolate(&x).unwrap(), &exact);
            let e2 = block_error(&fine.interpolate(&x).unwrap(), &exact);
            let order = (e1 / e2).log2();
            assert!(order > 1.7, "cell {cell}: {e1:e} -> {e2:e}");
        }
    }

    #[test]
    fn weights_depend_on_the_gridded_coordinate_only() {
        let rom = rom();
        let m = build_grid_model(&rom, 15, default_range(&rom)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for beta in [0.5, 1.0, 25.0] {
            let m = m.clone().with_beta(beta);
            for _ in 0..1000 {
                let x = DVector::from_fn(rom.n_beam(), |_, _| rng.gen_range(-0.2..1.2) * m.scales[0]);
                let w = m.weights(&x);
                assert!(w.iter().all(|&v| v >= 0.0));
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                let mut y = x.clone();
                y[1] += 1e-8;
                y[2] -= 3e-9;
                assert_eq!(m.weights(&y), w);
            }
            let w = m.weights(&m.nodes[7].x);
            assert_eq!(w[7], 1.0);
            assert_eq!(w.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn builds_do_not_depend_on_earlier_work() {
        let rom = rom();
        let a = build_grid_model(&rom, 6, default_range(&rom)).unwrap();
        let set = IntegratorSettings::for_rom(&rom);
        simulate(&rom, &Drive::step(9.5), 2e-5, &set).unwrap();
        let b = build_grid_model(&rom, 6, default_range(&rom)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let rom = rom();
        let m = build_grid_model(&rom, 3, default_range(&rom)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.json");
        m.save(&path).unwrap();
        assert_eq!(MechGridModel::load(&path).unwrap(), m);
    }

    #[test]
    fn invalid_grids_are_rejected() {
        let rom = rom();
        let r = default_range(&rom);
        assert!(build_grid_model(&rom, 1, r).is_err());
        assert!(build_grid_model(&rom, 5, (0.0, 1.01 * rom.cfg.gap / rom.psi1_mid())).is_err());
        assert!(build_grid_model(&rom, 5, (r.1, r.0)).is_err());
        let ax = GridAxis { mode: 0, min: r.0, max: r.1, n: 3 };
        assert!(build_tensor_model(&rom, &[ax, ax], 1.0).is_err());
        assert!(build_tensor_model(&rom, &[GridAxis { mode: 7, ..ax }], 1.0).is_err());
        assert!(build_tensor_model(&rom, &[ax], 0.0).is_err());
    }

    #[test]
    fn rest_is_a_fixed_point() {
        let rom = rom();
        let m = build_grid_model(&rom, 10, default_range(&rom)).unwrap();
        let set = IntegratorSettings::for_rom(&rom);
        let z = step_pwl_mech(&m, &rom, &rom.zero_state(), 0.0, set.dt, &set).unwrap();
        assert!(z.to_flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_point_model_matches_small_signal_response() {
        let rom = rom();
        let set = IntegratorSettings::for_rom(&rom);
        let m = build_grid_model(&rom, 2, (0.0, 2e-3 * rom.cfg.gap / rom.psi1_mid())).unwrap();
        let full = simulate(&rom, &Drive::step(0.5), 1e-4, &set).unwrap();
        let approx = simulate_pwl_mech(&rom, &m, &Drive::step(0.5), 1e-4, &set).unwrap();
        let peak = full.midpoint.iter().cloned().fold(0.0, f64::max);
        assert!(peak > 5e-4 * rom.cfg.gap && peak < 2e-3 * rom.cfg.gap);
        let err = full.midpoint.iter().zip(&approx.midpoint).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 5e-3 * peak, "{err:e} vs {peak:e}");
    }

    #[test]
    fn early_response_tracks_the_full_model() {
        let rom = rom();
        let set = IntegratorSettings::for_rom(&rom);
        let m = build_grid_model(&rom, 15, default_range(&rom)).unwrap();
        let full = simulate(&rom, &Drive::step(9.1), 6e-4, &set).unwrap();
        let approx = simulate_pwl_mech(&rom, &m, &Drive::step(9.1), 6e-4, &set).unwrap();
        let quarter = 0.25 * full.pull_in_time.unwrap();
        let mut peak = 0.0_f64;
        let mut err = 0.0_f64;
        for ((t, a), b) in full.times.iter().zip(&full.midpoint).zip(&approx.midpoint) {
            if *t <= quarter {
                peak = peak.max(*a);
                err = err.max((a - b).abs());
            }
        }
        assert!(err < 0.01 * peak, "{err:e} vs {peak:e}");
    }

    #[test]
    fn self_comparison_is_exact_and_missing_pull_in_is_incomparable() {
        let rom = rom();
        let set = IntegratorSettings::for_rom(&rom);
        let full = simulate(&rom, &Drive::step(10.0), 6e-4, &set).unwrap();
        assert_eq!(compare_trajectories(&full, &full, rom.cfg.gap).unwrap(), (0.0, 0.0));
        let slow = simulate(&rom, &Drive::step(5.0), 1e-4, &set).unwrap();
        assert!(matches!(compare_trajectories(&full, &slow, rom.cfg.gap), Err(Error::Incomparable(_))));
        assert!(matches!(compare_trajectories(&slow, &full, rom.cfg.gap), Err(Error::Incomparable(_))));
    }

    #[test]
    fn study_rows_are_sorted_by_count() {
        let rom = rom();
        let set = IntegratorSettings::for_rom(&rom).clone();
        let set = set.clone().with_dt(4.0 * set.dt);
        let a = point_count_study(&rom, &[12, 6], 9.5, 6e-4, &set, DEFAULT_BETA).unwrap();
        let b = point_count_study(&rom, &[6, 12, 6], 9.5, 6e-4, &set, DEFAULT_BETA).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|r| r.n_points).collect::<Vec<_>>(), vec![6, 12]);
        assert!(point_count_study(&rom, &[], 9.5, 6e-4, &set, DEFAULT_BETA).is_err());
    }
}
