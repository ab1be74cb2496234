//! Tensor-product Gauss-Legendre quadrature over the film domain
//! `[0, L] x [-w/2, w/2]`.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

use crate::config::DeviceConfig;
use crate::error::{Error, Result};

/// Default number of Gauss points per axis.
pub const DEFAULT_POINTS: usize = 32;

/// A one-dimensional Gauss-Legendre rule mapped onto `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize, a: f64, b: f64) -> Self {
        let n = NonZeroUsize::new(n).expect("at least one quadrature point");
        let rule = GaussLegendre::new(n);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let mut pairs: Vec<(f64, f64)> = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(t, wt)| (mid + half * t, half * wt))
            .collect();
        pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
        let (nodes, weights) = pairs.into_iter().unzip();
        GaussRule { nodes, weights }
    }

    /// Composite rule: `panels` equal sub-intervals with `n` points each.
    pub fn composite(n: usize, panels: usize, a: f64, b: f64) -> Self {
        let h = (b - a) / panels as f64;
        let mut nodes = Vec::with_capacity(n * panels);
        let mut weights = Vec::with_capacity(n * panels);
        for p in 0..panels {
            let sub = GaussRule::new(n, a + h * p as f64, a + h * (p + 1) as f64);
            nodes.extend(sub.nodes);
            weights.extend(sub.weights);
        }
        GaussRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub x: GaussRule,
    pub y: GaussRule,
}

impl QuadratureGrid {
    pub fn new(cfg: &DeviceConfig, n_x: usize, n_y: usize) -> Self {
        QuadratureGrid {
            x: GaussRule::new(n_x, 0.0, cfg.length),
            y: GaussRule::new(n_y, -0.5 * cfg.width, 0.5 * cfg.width),
        }
    }

    /// `refine` doubles the point counts (the `--quad-refine` switch).
    pub fn default_for(cfg: &DeviceConfig, refine: bool) -> Self {
        let n = if refine { 2 * DEFAULT_POINTS } else { DEFAULT_POINTS };
        Self::new(cfg, n, n)
    }

    pub fn n_x(&self) -> usize {
        self.x.len()
    }

    pub fn n_y(&self) -> usize {
        self.y.len()
    }

    /// Tensor Gauss-Legendre sum of `f(x, y)`; a non-finite sample is an error.
    pub fn integrate(&self, mut f: impl FnMut(f64, f64) -> f64) -> Result<f64> {
        let mut total = 0.0;
        for (&x, &wx) in self.x.nodes.iter().zip(&self.x.weights) {
            for (&y, &wy) in self.y.nodes.iter().zip(&self.y.weights) {
                let value = f(x, y);
                if !value.is_finite() {
                    return Err(Error::NonFinite { x, y, value });
                }
                total += wx * wy * value;
            }
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn weights_positive_and_sum_to_area() {
        let cfg = DeviceConfig::microswitch();
        let grid = QuadratureGrid::default_for(&cfg, false);
        assert!(grid.x.weights.iter().chain(&grid.y.weights).all(|&w| w > 0.0));
        let area: f64 = grid.x.weights.iter().sum::<f64>() * grid.y.weights.iter().sum::<f64>();
        let exact = cfg.length * cfg.width;
        assert!(((area - exact) / exact).abs() < 1e-12);
        assert!(grid.x.nodes.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn constant_and_cosine_squared() {
        let cfg = DeviceConfig::microswitch();
        let grid = QuadratureGrid::default_for(&cfg, false);
        let lw = cfg.length * cfg.width;
        let one = grid.integrate(|_, _| 1.0).unwrap();
        assert!(((one - lw) / lw).abs() < 1e-12);
        let l = cfg.length;
        let c2 = grid.integrate(|x, _| (2.0 * PI * x / l).cos().powi(2)).unwrap();
        assert!(((c2 - 0.5 * lw) / lw).abs() < 1e-12);
    }

    #[test]
    fn non_finite_names_node() {
        let cfg = DeviceConfig::microswitch();
        let grid = QuadratureGrid::new(&cfg, 4, 4);
        let x0 = grid.x.nodes[2];
        let err = grid
            .integrate(|x, _| if x == x0 { f64::NAN } else { 1.0 })
            .unwrap_err();
        match err {
            Error::NonFinite { x, .. } => assert_eq!(x, x0),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn composite_rule_integrates_polynomial() {
        let rule = GaussRule::composite(4, 5, 0.0, 2.0);
        let v = rule.integrate(|x| x.powi(7));
        assert!((v - 2f64.powi(8) / 8.0).abs() < 1e-11);
    }
}
