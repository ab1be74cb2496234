/// Normalized exponential weights `exp(-beta d_i / min_j d_j)`.
///
/// A zero distance selects the (first) closest point exclusively.
pub fn exponential_weights(distances: &[f64], beta: f64) -> Vec<f64> {
    let (imin, dmin) = distances
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bd), (i, d)| if d < bd { (i, d) } else { (bi, bd) });
    let mut w = vec![0.0; distances.len()];
    if dmin == 0.0 || !dmin.is_finite() {
        w[imin] = 1.0;
        return w;
    }
    // shifted by the minimum ratio (1) so the closest point has weight exp(0)
    let mut total = 0.0;
    for (wi, &d) in w.iter_mut().zip(distances) {
        *wi = (-beta * (d / dmin - 1.0)).exp();
        total += *wi;
    }
    for wi in &mut w {
        *wi /= total;
    }
    w
}

/// Euclidean distance between `a` and `b` after dividing by `scales`.
pub fn scaled_distance(a: &[f64], b: &[f64], scales: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(scales)
        .map(|((p, q), s)| ((p - q) / s).powi(2))
        .sum::<f64>()
        .sqrt()
}
