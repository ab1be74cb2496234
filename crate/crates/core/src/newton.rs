//! Damped Newton iteration with scaled convergence tests and
//! central-difference Jacobians.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A square nonlinear system `r(z) = 0`.
pub trait NonlinearSystem {
    fn residual(&mut self, z: &DVector<f64>) -> Result<DVector<f64>>;

    /// Characteristic magnitude of each unknown; sets finite-difference steps.
    fn variable_scales(&self) -> &DVector<f64>;

    fn jacobian(&mut self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        let scales = self.variable_scales().clone();
        fd_jacobian(|zz| self.residual(zz), z, &scales)
    }
}

/// Central differences with step `max(1e-8 scale_i, 1e-14)` per column.
pub fn fd_jacobian(
    mut f: impl FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    z: &DVector<f64>,
    scales: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    fd_jacobian_columns(&mut f, z, scales, 0..z.len(), 1e-8)
}

/// Central-difference columns `cols` only; the remaining columns are zero.
pub fn fd_jacobian_columns(
    f: &mut impl FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    z: &DVector<f64>,
    scales: &DVector<f64>,
    cols: impl Iterator<Item = usize>,
    rel_step: f64,
) -> Result<DMatrix<f64>> {
    let mut jac: Option<DMatrix<f64>> = None;
    let mut zp = z.clone();
    for i in cols {
        let h = (rel_step * scales[i]).max(1e-14);
        zp[i] = z[i] + h;
        let fp = f(&zp)?;
        zp[i] = z[i] - h;
        let fm = f(&zp)?;
        zp[i] = z[i];
        let jac = jac.get_or_insert_with(|| DMatrix::zeros(fp.len(), z.len()));
        jac.set_column(i, &((fp - fm) / (2.0 * h)));
    }
    Ok(jac.unwrap_or_else(|| DMatrix::zeros(z.len(), z.len())))
}

/// Solve `m y = rhs` after equilibrating rows by `row_scales` and columns by
/// `col_scales`, so that partial pivoting sees entries of comparable size.
pub fn scaled_solve(
    m: &DMatrix<f64>,
    rhs: &DVector<f64>,
    row_scales: &DVector<f64>,
    col_scales: &DVector<f64>,
) -> Option<DVector<f64>> {
    let mut scaled = m.clone();
    for ((i, j), v) in scaled.iter_mut().enumerate().map(|(k, v)| ((k % m.nrows(), k / m.nrows()), v)) {
        *v *= col_scales[j] / row_scales[i];
    }
    let b = rhs.component_div(row_scales);
    scaled.lu().solve(&b).map(|y| y.component_mul(col_scales))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Relative tolerance on the scaled residual.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-10, max_iter: 25 }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonReport {
    pub solution: DVector<f64>,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

fn scaled_norm(r: &DVector<f64>, scales: &DVector<f64>) -> f64 {
    r.iter().zip(scales.iter()).fold(0.0_f64, |m, (a, s)| m.max((a / s).abs()))
}

/// Solve `r(z) = 0` from `z0`. Converged when
/// `max_i |r_i / res_scale_i| < tol (1 + reference)`.
pub fn solve(
    system: &mut impl NonlinearSystem,
    z0: DVector<f64>,
    res_scales: &DVector<f64>,
    reference: f64,
    opts: NewtonOptions,
) -> Result<NewtonReport> {
    let target = opts.tol * (1.0 + reference);
    let mut z = z0;
    let mut r = system.residual(&z)?;
    let mut norm = scaled_norm(&r, res_scales);
    let mut trace = vec![norm];
    for it in 0..opts.max_iter {
        if norm < target {
            return Ok(NewtonReport { solution: z, iterations: it, trace });
        }
        if !norm.is_finite() {
            break;
        }
        let jac = system.jacobian(&z)?;
        let col_scales = system.variable_scales().clone();
        let dz = scaled_solve(&jac, &(-&r), res_scales, &col_scales).ok_or(Error::Singular("newton jacobian"))?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            let trial = &z + &dz * lambda;
            match system.residual(&trial) {
                Ok(rt) if rt.iter().all(|v| v.is_finite()) => {
                    accepted = Some((trial, rt));
                    break;
                }
                Ok(_) | Err(Error::Contact(_)) => lambda *= 0.5,
                Err(e) => return Err(e),
            }
        }
        let Some((zt, rt)) = accepted else {
            return Err(Error::Newton { iterations: it + 1, trace });
        };
        z = zt;
        r = rt;
        norm = scaled_norm(&r, res_scales);
        trace.push(norm);
    }
    if norm < target {
        let iterations = trace.len() - 1;
        return Ok(NewtonReport { solution: z, iterations, trace });
    }
    Err(Error::Newton { iterations: trace.len() - 1, trace })
}

pub(crate) fn scaled_inf_norm(r: &DVector<f64>, scales: &DVector<f64>) -> f64 {
    scaled_norm(r, scales)
}
