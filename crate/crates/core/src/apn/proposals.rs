//! Proposal Generation Module: boundary candidate selection, start/end
//! pairing under duration constraints, and proposal-level feature sampling.

use crate::nn::Mat;

/// Candidate rule: index t qualifies if p_t > 0.5 * max(p) or p_t is a
/// strict local maximum (sequence ends compare one-sided). Returned sorted
/// ascending.
pub fn select_boundary_candidates(p: &[f64]) -> Vec<usize> {
    if p.is_empty() {
        return Vec::new();
    }
    let maxv = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let half = 0.5 * maxv;
    let n = p.len();
    (0..n)
        .filter(|&t| {
            if p[t] > half {
                return true;
            }
            let left_ok = t == 0 || p[t] > p[t - 1];
            let right_ok = t == n - 1 || p[t] > p[t + 1];
            left_ok && right_ok
        })
        .collect()
}

/// All (start, end) pairs with duration t_e - t_s inside [d_min, d_max].
/// Inputs are candidate index sets sorted strictly ascending; the output
/// is lexicographically sorted.
pub fn generate_proposals(
    starts: &[usize],
    ends: &[usize],
    d_min: usize,
    d_max: usize,
) -> Vec<(usize, usize)> {
    debug_assert!(
        starts.windows(2).all(|w| w[0] < w[1]),
        "starts must be strictly increasing"
    );
    debug_assert!(
        ends.windows(2).all(|w| w[0] < w[1]),
        "ends must be strictly increasing"
    );
    let mut out = Vec::new();
    for &s in starts {
        let lo = s + d_min;
        let hi = match s.checked_add(d_max) {
            Some(v) => v,
            None => usize::MAX,
        };
        let from = ends.partition_point(|&e| e < lo);
        for &e in &ends[from..] {
            if e > hi {
                break;
            }
            out.push((s, e));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpMode {
    Linear,
    Nearest,
}

/// Row reads for the backward scatter: (low row, high row, fraction).
pub struct SampleCache {
    pub taps: Vec<(usize, usize, f64)>,
}

/// Uniformly sample `n` feature rows over the extended window
/// [t_s - d/10, t_e + d/10] (d = t_e - t_s), positions clamped to the
/// grid, values linearly interpolated between neighboring rows.
pub fn sample_proposal_features(
    x: &Mat,
    proposal: (usize, usize),
    n: usize,
    mode: InterpMode,
) -> Mat {
    sample_proposal_features_cached(x, proposal, n, mode).0
}

pub fn sample_proposal_features_cached(
    x: &Mat,
    proposal: (usize, usize),
    n: usize,
    mode: InterpMode,
) -> (Mat, SampleCache) {
    assert!(n >= 2, "need at least the two window endpoints");
    let (t_s, t_e) = proposal;
    debug_assert!(t_s <= t_e && t_e < x.rows);
    let d = (t_e - t_s) as f64;
    let w_start = t_s as f64 - d / 10.0;
    let w_end = t_e as f64 + d / 10.0;
    let t_max = (x.rows - 1) as f64;
    let step = (w_end - w_start) / (n - 1) as f64;

    let mut out = Mat::zeros(n, x.cols);
    let mut taps = Vec::with_capacity(n);
    for i in 0..n {
        let pos = (w_start + step * i as f64).clamp(0.0, t_max);
        let (lo, hi, frac) = match mode {
            InterpMode::Linear => {
                let lo = pos.floor() as usize;
                let hi = pos.ceil() as usize;
                (lo, hi, pos - lo as f64)
            }
            InterpMode::Nearest => {
                let r = pos.round() as usize;
                (r, r, 0.0)
            }
        };
        let row_lo = x.row(lo);
        let row_hi = x.row(hi);
        let orow = out.row_mut(i);
        for c in 0..x.cols {
            orow[c] = (1.0 - frac) * row_lo[c] + frac * row_hi[c];
        }
        taps.push((lo, hi, frac));
    }
    (out, SampleCache { taps })
}

/// Scatter the gradient of the sampled rows back onto the feature grid.
#[allow(clippy::needless_range_loop)]
pub fn sample_proposal_features_scatter(cache: &SampleCache, dout: &Mat, dx: &mut Mat) {
    debug_assert_eq!(dout.rows, cache.taps.len());
    for (i, &(lo, hi, frac)) in cache.taps.iter().enumerate() {
        let drow = dout.row(i);
        if lo == hi {
            let target = dx.row_mut(lo);
            for (t, d) in target.iter_mut().zip(drow) {
                *t += d;
            }
        } else {
            for c in 0..dout.cols {
                dx.data[lo * dx.cols + c] += (1.0 - frac) * drow[c];
                dx.data[hi * dx.cols + c] += frac * drow[c];
            }
        }
    }
}
