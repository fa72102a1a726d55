//! Central-difference gradient verification.

use rand::seq::SliceRandom;

use super::seeded_rng;

/// Probe at most this many coordinates for large tensors.
const MAX_PROBED_COORDS: usize = 512;
const SAMPLING_THRESHOLD: usize = 1000;

/// Central differences of a scalar function at `point`, one coordinate at
/// a time: (f(x+h·e_i) − f(x−h·e_i)) / 2h.
pub fn central_diff_grad<F: FnMut(&[f64]) -> f64>(mut f: F, point: &[f64], h: f64) -> Vec<f64> {
    let mut probe = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        probe[i] = point[i] + h;
        let plus = f(&probe);
        probe[i] = point[i] - h;
        let minus = f(&probe);
        probe[i] = point[i];
        grad.push((plus - minus) / (2.0 * h));
    }
    grad
}

/// Max over coordinates of |a_i − b_i| / max(1e-8, |a_i| + |b_i|).
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Compare an analytic gradient against central differences of `loss_fn`
/// at `point`, returning the max relative error over probed coordinates.
///
/// Tensors above 10^3 entries are probed at a deterministic sample of
/// coordinates instead of all of them.
pub fn grad_check<F: FnMut(&[f64]) -> f64>(
    mut loss_fn: F,
    point: &[f64],
    analytic: &[f64],
    h: f64,
) -> f64 {
    assert_eq!(point.len(), analytic.len());
    let coords: Vec<usize> = if point.len() > SAMPLING_THRESHOLD {
        let mut idx: Vec<usize> = (0..point.len()).collect();
        let mut rng = seeded_rng(0x6f6c_6163);
        idx.shuffle(&mut rng);
        idx.truncate(MAX_PROBED_COORDS);
        idx
    } else {
        (0..point.len()).collect()
    };
    let mut probe = point.to_vec();
    let mut worst = 0.0f64;
    for &i in &coords {
        probe[i] = point[i] + h;
        let plus = loss_fn(&probe);
        probe[i] = point[i] - h;
        let minus = loss_fn(&probe);
        probe[i] = point[i];
        let fd = (plus - minus) / (2.0 * h);
        let a = analytic[i];
        let err = (a - fd).abs() / (a.abs() + fd.abs()).max(1e-8);
        worst = worst.max(err);
    }
    worst
}
