//! Pseudo-label generation: constrained k-medoids clustering seeded at the
//! point annotations, background mining by distance thresholding, and the
//! progressive update schedule.
//!
//! Clusters are contiguous index ranges. Each cluster always contains its
//! seeding annotation; split points between consecutive annotations are
//! placed where the summed distance to the two medoids is minimal, and
//! medoids move to the in-cluster frame minimizing total distance to the
//! cluster. The alternation never increases the objective and stops when
//! the assignment is stable.

use thiserror::Error;

use crate::types::{ActionInstance, FeatureSequence, PointAnnotation};

pub const DEFAULT_MAX_ITERS: usize = 100;
/// Background-mining threshold is mean + KAPPA * std of the in-cluster
/// distances to the annotated frame (capped at the distance midrange).
pub const DEFAULT_KAPPA: f64 = 0.5;
/// Pseudo labels refresh every R training iterations.
pub const DEFAULT_UPDATE_PERIOD: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("no point annotations provided")]
    NoPoints,
    #[error("point annotations must be sorted strictly increasing in t_p")]
    UnsortedPoints,
    #[error("point annotation t_p={t_p} out of range for T={t}")]
    PointOutOfRange { t_p: usize, t: usize },
    #[error("empty split range [{lo}, {hi})")]
    EmptySplitRange { lo: usize, hi: usize },
}

/// Converged clustering of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    /// Medoid frame per cluster, in annotation order.
    pub medoids: Vec<usize>,
    /// Inclusive last frame of each cluster; the final entry is T-1.
    pub cluster_ends: Vec<usize>,
    /// Sum over frames of distance to their cluster medoid.
    pub objective: f64,
    /// Objective after every completed split+medoid round.
    pub objective_history: Vec<f64>,
    pub rounds: usize,
}

impl ClusterState {
    pub fn cluster_range(&self, i: usize) -> (usize, usize) {
        let start = if i == 0 {
            0
        } else {
            self.cluster_ends[i - 1] + 1
        };
        (start, self.cluster_ends[i])
    }

    pub fn num_clusters(&self) -> usize {
        self.cluster_ends.len()
    }
}

/// Clustered action instances plus mined background instances.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSet {
    pub actions: Vec<ActionInstance>,
    pub backgrounds: Vec<ActionInstance>,
    pub epoch_tag: u32,
}

/// Cosine distance 1 - cos(a, b). Bitwise-equal inputs are exactly 0;
/// a zero vector is at distance 1 from everything nonzero and 0 from
/// another zero vector.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a == b {
        return 0.0;
    }
    let mut dot = 0.0;
    let mut na2 = 0.0;
    let mut nb2 = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na2 += x * x;
        nb2 += y * y;
    }
    if na2 == 0.0 || nb2 == 0.0 {
        return 1.0;
    }
    let cos = (dot / (na2 * nb2).sqrt()).clamp(-1.0, 1.0);
    1.0 - cos
}

/// Best split b in [lo, hi): frames t <= b join the left medoid's cluster,
/// t > b the right one's. Cost is summed over t in [lo, hi]; running sums
/// make it O(hi - lo). Ties break toward the smallest b.
pub fn optimal_split(
    x: &FeatureSequence,
    m_left: usize,
    m_right: usize,
    lo: usize,
    hi: usize,
) -> Result<usize, ClusterError> {
    if lo >= hi {
        return Err(ClusterError::EmptySplitRange { lo, hi });
    }
    let left_row = x.row(m_left);
    let right_row = x.row(m_right);
    let mut right_sum: f64 = (lo + 1..=hi).map(|t| distance(x.row(t), right_row)).sum();
    let mut left_sum = distance(x.row(lo), left_row);
    let mut best_cost = left_sum + right_sum;
    let mut best_b = lo;
    for b in lo + 1..hi {
        left_sum += distance(x.row(b), left_row);
        right_sum -= distance(x.row(b), right_row);
        let cost = left_sum + right_sum;
        if cost < best_cost {
            best_cost = cost;
            best_b = b;
        }
    }
    Ok(best_b)
}

fn validate_points(x: &FeatureSequence, points: &[PointAnnotation]) -> Result<(), ClusterError> {
    if points.is_empty() {
        return Err(ClusterError::NoPoints);
    }
    for p in points {
        if p.t_p >= x.len() {
            return Err(ClusterError::PointOutOfRange {
                t_p: p.t_p,
                t: x.len(),
            });
        }
    }
    for w in points.windows(2) {
        if w[1].t_p <= w[0].t_p {
            return Err(ClusterError::UnsortedPoints);
        }
    }
    Ok(())
}

/// In-cluster frame minimizing total distance to the cluster's members.
/// Ties prefer the annotated frame, then the smaller index.
fn best_medoid(x: &FeatureSequence, start: usize, end: usize, annotated: usize) -> usize {
    let mut best = start;
    let mut best_cost = f64::INFINITY;
    let mut annotated_cost = f64::INFINITY;
    for cand in start..=end {
        let crow = x.row(cand);
        let cost: f64 = (start..=end).map(|t| distance(x.row(t), crow)).sum();
        if cand == annotated {
            annotated_cost = cost;
        }
        if cost < best_cost {
            best_cost = cost;
            best = cand;
        }
    }
    if annotated_cost == best_cost {
        annotated
    } else {
        best
    }
}

fn total_objective(x: &FeatureSequence, medoids: &[usize], ends: &[usize]) -> f64 {
    let mut obj = 0.0;
    let mut start = 0usize;
    for (i, &end) in ends.iter().enumerate() {
        let mrow = x.row(medoids[i]);
        for t in start..=end {
            obj += distance(x.row(t), mrow);
        }
        start = end + 1;
    }
    obj
}

/// Alternate split-point and medoid updates until the assignment stops
/// changing or `max_iters` rounds elapse. The first cluster starts at 0
/// and the last ends at T-1.
pub fn cluster_video(
    x: &FeatureSequence,
    points: &[PointAnnotation],
    max_iters: usize,
) -> Result<ClusterState, ClusterError> {
    validate_points(x, points)?;
    let k = points.len();
    let t_len = x.len();
    let mut medoids: Vec<usize> = points.iter().map(|p| p.t_p).collect();
    let mut ends = vec![t_len - 1; k];
    let mut history = Vec::new();
    let mut rounds = 0;

    for _ in 0..max_iters.max(1) {
        let prev = (ends.clone(), medoids.clone());
        // (a) split sweep, left to right; the range keeps both the
        // annotation and the current medoid inside their own cluster
        for i in 0..k - 1 {
            let lo = points[i].t_p.max(medoids[i]);
            let hi = points[i + 1].t_p.min(medoids[i + 1]);
            ends[i] = optimal_split(x, medoids[i], medoids[i + 1], lo, hi)?;
        }
        ends[k - 1] = t_len - 1;
        // (b) medoid update per cluster
        let mut start = 0usize;
        for i in 0..k {
            medoids[i] = best_medoid(x, start, ends[i], points[i].t_p);
            start = ends[i] + 1;
        }
        rounds += 1;
        history.push(total_objective(x, &medoids, &ends));
        if (ends.clone(), medoids.clone()) == prev {
            break;
        }
    }

    let objective = *history.last().expect("at least one round runs");
    Ok(ClusterState {
        medoids,
        cluster_ends: ends,
        objective,
        objective_history: history,
        rounds,
    })
}

/// Trim each cluster's temporal ends where the distance to the annotated
/// frame exceeds the threshold theta = mean + kappa * std of the
/// in-cluster distances, capped at the midpoint of the distance range
/// (never trimming past the annotated frame); everything outside the
/// trimmed cores becomes background.
///
/// Distances anchor at the annotation rather than the updated medoid: in
/// background-heavy clusters the in-cluster cost minimizer drifts off the
/// action, and a background-resident anchor would leave the background
/// ends untrimmed. The midrange cap handles the same regime for theta:
/// with mostly-background clusters the distance mean sits inside the
/// background mode and mean + kappa * std alone stops trimming
/// immediately.
#[allow(clippy::needless_range_loop)]
pub fn mine_background(
    x: &FeatureSequence,
    state: &ClusterState,
    points: &[PointAnnotation],
    kappa: f64,
) -> PseudoLabelSet {
    assert_eq!(
        points.len(),
        state.num_clusters(),
        "one cluster per annotation"
    );
    let mut actions = Vec::with_capacity(points.len());
    for i in 0..state.num_clusters() {
        let (start, end) = state.cluster_range(i);
        let anchor_row = x.row(points[i].t_p);
        let dists: Vec<f64> = (start..=end)
            .map(|t| distance(x.row(t), anchor_row))
            .collect();
        let n = dists.len() as f64;
        let mean = dists.iter().sum::<f64>() / n;
        let var = (dists.iter().map(|d| d * d).sum::<f64>() / n - mean * mean).max(0.0);
        let d_lo = dists.iter().cloned().fold(f64::INFINITY, f64::min);
        let d_hi = dists.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let theta = (mean + kappa * var.sqrt()).min((d_lo + d_hi) / 2.0);
        let anchor = points[i].t_p;
        let mut a = start;
        while a < anchor && dists[a - start] > theta {
            a += 1;
        }
        let mut b = end;
        while b > anchor && dists[b - start] > theta {
            b -= 1;
        }
        actions.push(
            ActionInstance::new(a, b, Some(points[i].class_id)).expect("trim preserves a <= b"),
        );
    }

    // Background = complement of the trimmed cores over [0, T-1]; adjacent
    // trims across a cluster boundary merge into one instance.
    let mut backgrounds = Vec::new();
    let mut cursor = 0usize;
    for inst in &actions {
        if inst.t_s > cursor {
            backgrounds.push(ActionInstance::new(cursor, inst.t_s - 1, None).unwrap());
        }
        cursor = inst.t_e + 1;
    }
    if cursor < x.len() {
        backgrounds.push(ActionInstance::new(cursor, x.len() - 1, None).unwrap());
    }

    PseudoLabelSet {
        actions,
        backgrounds,
        epoch_tag: 0,
    }
}

/// Convenience wrapper: cluster then mine, stamping the epoch tag.
pub fn generate_pseudo_labels(
    x: &FeatureSequence,
    points: &[PointAnnotation],
    kappa: f64,
    epoch_tag: u32,
) -> Result<PseudoLabelSet, ClusterError> {
    let state = cluster_video(x, points, DEFAULT_MAX_ITERS)?;
    let mut set = mine_background(x, &state, points, kappa);
    set.epoch_tag = epoch_tag;
    Ok(set)
}

/// True on iterations that refresh the pseudo labels.
pub fn should_update(iteration: usize, r: usize) -> bool {
    assert!(r > 0, "update period must be positive");
    iteration > 0 && iteration.is_multiple_of(r)
}
