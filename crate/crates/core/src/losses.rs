//! Training objectives: class-balanced boundary loss, proposal evaluation
//! loss, fine-grained contrastive loss over start/end/background region
//! features, and the weighted total.
//!
//! Every loss has an exact backward companion; probabilities are clamped
//! to [1e-7, 1 - 1e-7] inside the logs.

use thiserror::Error;

use crate::apn::BoundaryProbabilities;
use crate::nn::Mat;
use crate::pseudo::PseudoLabelSet;
use crate::types::{tiou, FeatureSequence, PointAnnotation};

pub const PROB_CLAMP: f64 = 1e-7;
pub const DEFAULT_CTR_TAU: f64 = 0.1;
pub const DEFAULT_LAMBDA1: f64 = 1.0;
pub const DEFAULT_LAMBDA2: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("annotation {index} has no containing pseudo instance (invariant breach)")]
    MissingPseudoInstance { index: usize },
    #[error("prediction and target lists have lengths {preds} and {targets}")]
    MismatchedLists { preds: usize, targets: usize },
}

// ---------------------------------------------------------------------------
// boundary labels and loss

/// Binary per-snippet supervision for the boundary detector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryLabels {
    pub g_start: Vec<bool>,
    pub g_end: Vec<bool>,
}

/// Starting/ending region of width d_g/5 centered on the boundary,
/// rounded to the snippet grid and clamped; always contains the center.
fn region_on_grid(center: usize, d_g: usize, t: usize) -> (usize, usize) {
    let half = d_g as f64 / 10.0;
    let lo = (center as f64 - half).round().max(0.0) as usize;
    let hi = ((center as f64 + half).round() as usize).min(t - 1);
    (lo.min(center), hi.max(center).min(t - 1))
}

/// Mark every snippet inside some instance's starting region in g_start
/// (ending region in g_end); overlaps union.
pub fn boundary_labels_from_pseudo(pseudo: &PseudoLabelSet, t: usize) -> BoundaryLabels {
    let mut g_start = vec![false; t];
    let mut g_end = vec![false; t];
    for inst in &pseudo.actions {
        let d_g = inst.duration();
        let (lo, hi) = region_on_grid(inst.t_s, d_g, t);
        for g in g_start.iter_mut().take(hi + 1).skip(lo) {
            *g = true;
        }
        let (lo, hi) = region_on_grid(inst.t_e, d_g, t);
        for g in g_end.iter_mut().take(hi + 1).skip(lo) {
            *g = true;
        }
    }
    BoundaryLabels { g_start, g_end }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Class-balanced binary cross-entropy for one probability sequence:
/// -(1/T) sum_t [a+ g_t ln p_t + a- (1-g_t) ln(1-p_t)] with
/// a+ = T/(2 T+), a- = T/(2 T-); a term with zero count is dropped.
fn balanced_bce(probs: &[f64], labels: &[bool]) -> f64 {
    let t = probs.len() as f64;
    let pos = labels.iter().filter(|&&g| g).count() as f64;
    let neg = t - pos;
    let alpha_pos = if pos > 0.0 { t / (2.0 * pos) } else { 0.0 };
    let alpha_neg = if neg > 0.0 { t / (2.0 * neg) } else { 0.0 };
    let mut loss = 0.0;
    for (&p, &g) in probs.iter().zip(labels) {
        let pc = clamp_prob(p);
        if g {
            loss -= alpha_pos * pc.ln();
        } else {
            loss -= alpha_neg * (1.0 - pc).ln();
        }
    }
    loss / t
}

fn balanced_bce_grad(probs: &[f64], labels: &[bool]) -> Vec<f64> {
    let t = probs.len() as f64;
    let pos = labels.iter().filter(|&&g| g).count() as f64;
    let neg = t - pos;
    let alpha_pos = if pos > 0.0 { t / (2.0 * pos) } else { 0.0 };
    let alpha_neg = if neg > 0.0 { t / (2.0 * neg) } else { 0.0 };
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &g)| {
            if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
                return 0.0; // clamped region is flat
            }
            if g {
                -alpha_pos / p / t
            } else {
                alpha_neg / (1.0 - p) / t
            }
        })
        .collect()
}

/// Start-sequence loss plus end-sequence loss.
pub fn bdm_loss(probs: &BoundaryProbabilities, labels: &BoundaryLabels) -> f64 {
    assert_eq!(probs.p_start.len(), labels.g_start.len(), "length mismatch");
    assert_eq!(probs.p_end.len(), labels.g_end.len(), "length mismatch");
    balanced_bce(&probs.p_start, &labels.g_start) + balanced_bce(&probs.p_end, &labels.g_end)
}

pub fn bdm_loss_backward(
    probs: &BoundaryProbabilities,
    labels: &BoundaryLabels,
) -> (Vec<f64>, Vec<f64>) {
    (
        balanced_bce_grad(&probs.p_start, &labels.g_start),
        balanced_bce_grad(&probs.p_end, &labels.g_end),
    )
}

// ---------------------------------------------------------------------------
// proposal targets and PEM loss

/// Supervision for one kept proposal: one-hot class from its single
/// contained annotation, confidence target = tIoU against the pseudo
/// instance seeded by that annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalTarget {
    pub proposal_index: usize,
    pub class_id: usize,
    pub s: f64,
}

/// Keep exactly the proposals containing exactly one point annotation.
pub fn assign_proposal_targets(
    proposals: &[(usize, usize)],
    points: &[PointAnnotation],
    pseudo: &PseudoLabelSet,
) -> Result<Vec<ProposalTarget>, LossError> {
    if pseudo.actions.len() != points.len() {
        return Err(LossError::MissingPseudoInstance {
            index: pseudo.actions.len().min(points.len()),
        });
    }
    for (i, (p, inst)) in points.iter().zip(&pseudo.actions).enumerate() {
        if !inst.contains(p.t_p) {
            return Err(LossError::MissingPseudoInstance { index: i });
        }
    }
    let mut targets = Vec::new();
    for (idx, &(t_s, t_e)) in proposals.iter().enumerate() {
        let mut hit: Option<usize> = None;
        let mut count = 0;
        for (pi, p) in points.iter().enumerate() {
            if t_s <= p.t_p && p.t_p <= t_e {
                count += 1;
                hit = Some(pi);
            }
        }
        if count != 1 {
            continue;
        }
        let pi = hit.unwrap();
        targets.push(ProposalTarget {
            proposal_index: idx,
            class_id: points[pi].class_id,
            s: tiou((t_s, t_e), pseudo.actions[pi].interval()),
        });
    }
    Ok(targets)
}

/// PEM outputs for one proposal: per-class probabilities and confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct PemPrediction {
    pub class_probs: Vec<f64>,
    pub confidence: Vec<f64>,
}

fn bce(p: f64, q: f64) -> f64 {
    let pc = clamp_prob(p);
    -(q * pc.ln() + (1.0 - q) * (1.0 - pc).ln())
}

fn bce_grad(p: f64, q: f64) -> f64 {
    if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
        return 0.0;
    }
    -q / p + (1.0 - q) / (1.0 - p)
}

/// Mean over kept proposals of [class BCE averaged over the M classes +
/// confidence BCE at the target class]. An empty target list contributes 0.
pub fn pem_loss(preds: &[PemPrediction], targets: &[ProposalTarget]) -> Result<f64, LossError> {
    if preds.len() != targets.len() {
        return Err(LossError::MismatchedLists {
            preds: preds.len(),
            targets: targets.len(),
        });
    }
    if targets.is_empty() {
        eprintln!("warning: pem_loss over an empty target list contributes 0");
        return Ok(0.0);
    }
    let n = targets.len() as f64;
    let mut loss = 0.0;
    for (pred, target) in preds.iter().zip(targets) {
        let m = pred.class_probs.len() as f64;
        let class_term: f64 = pred
            .class_probs
            .iter()
            .enumerate()
            .map(|(j, &p)| bce(p, if j == target.class_id { 1.0 } else { 0.0 }))
            .sum::<f64>()
            / m;
        let conf_term = bce(pred.confidence[target.class_id], target.s);
        loss += class_term + conf_term;
    }
    Ok(loss / n)
}

/// Per-proposal gradients (d class_probs, d confidence); the confidence
/// gradient is nonzero only at the target class.
pub fn pem_loss_backward(
    preds: &[PemPrediction],
    targets: &[ProposalTarget],
) -> Vec<(Vec<f64>, Vec<f64>)> {
    if targets.is_empty() {
        return Vec::new();
    }
    let n = targets.len() as f64;
    preds
        .iter()
        .zip(targets)
        .map(|(pred, target)| {
            let m = pred.class_probs.len() as f64;
            let dclass: Vec<f64> = pred
                .class_probs
                .iter()
                .enumerate()
                .map(|(j, &p)| bce_grad(p, if j == target.class_id { 1.0 } else { 0.0 }) / m / n)
                .collect();
            let mut dconf = vec![0.0; pred.confidence.len()];
            dconf[target.class_id] = bce_grad(pred.confidence[target.class_id], target.s) / n;
            (dclass, dconf)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// region features and contrastive loss

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionKind {
    Start,
    End,
    Background,
}

/// L2-normalized mean feature over a boundary or background region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionFeature {
    pub vector: Vec<f64>,
    pub kind: RegionKind,
    pub class_id: Option<usize>,
    pub instance_index: usize,
}

/// What the backward pass needs to push region gradients onto the grid.
pub struct RegionCache {
    spans: Vec<(usize, usize)>,
    raw_means: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

fn normalized_mean(x: &Mat, lo: usize, hi: usize) -> (Vec<f64>, Vec<f64>, f64) {
    let d = x.cols;
    let mut mean = vec![0.0; d];
    for t in lo..=hi {
        for (mv, &v) in mean.iter_mut().zip(x.row(t)) {
            *mv += v;
        }
    }
    let inv = 1.0 / (hi - lo + 1) as f64;
    mean.iter_mut().for_each(|v| *v *= inv);
    let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    let vector = if norm > 1e-12 {
        mean.iter().map(|v| v / norm).collect()
    } else {
        mean.clone()
    };
    (vector, mean, norm)
}

/// Emit, per action instance, the normalized mean feature of its starting
/// and ending regions, and per background instance the normalized mean
/// over the whole span. Order: (start, end) per instance, then backgrounds.
pub fn region_features_cached(
    x: &Mat,
    pseudo: &PseudoLabelSet,
) -> (Vec<RegionFeature>, RegionCache) {
    let t = x.rows;
    let mut features = Vec::new();
    let mut cache = RegionCache {
        spans: Vec::new(),
        raw_means: Vec::new(),
        norms: Vec::new(),
    };
    let push = |features: &mut Vec<RegionFeature>,
                cache: &mut RegionCache,
                lo: usize,
                hi: usize,
                kind: RegionKind,
                class_id: Option<usize>,
                instance_index: usize| {
        let (vector, raw, norm) = normalized_mean(x, lo, hi);
        features.push(RegionFeature {
            vector,
            kind,
            class_id,
            instance_index,
        });
        cache.spans.push((lo, hi));
        cache.raw_means.push(raw);
        cache.norms.push(norm);
    };
    for (i, inst) in pseudo.actions.iter().enumerate() {
        let d_g = inst.duration();
        let (lo, hi) = region_on_grid(inst.t_s, d_g, t);
        push(
            &mut features,
            &mut cache,
            lo,
            hi,
            RegionKind::Start,
            inst.class_id,
            i,
        );
        let (lo, hi) = region_on_grid(inst.t_e, d_g, t);
        push(
            &mut features,
            &mut cache,
            lo,
            hi,
            RegionKind::End,
            inst.class_id,
            i,
        );
    }
    for (k, bg) in pseudo.backgrounds.iter().enumerate() {
        push(
            &mut features,
            &mut cache,
            bg.t_s,
            bg.t_e,
            RegionKind::Background,
            None,
            k,
        );
    }
    (features, cache)
}

pub fn region_features(x: &FeatureSequence, pseudo: &PseudoLabelSet) -> Vec<RegionFeature> {
    let mat = Mat::from_vec(x.len(), x.dim(), x.data().to_vec());
    region_features_cached(&mat, pseudo).0
}

/// Push gradients w.r.t. the normalized region vectors back onto the
/// feature grid (through the normalization and the mean).
pub fn region_features_backward(cache: &RegionCache, dvectors: &[Vec<f64>], dx: &mut Mat) {
    assert_eq!(dvectors.len(), cache.spans.len());
    for (((span, raw), &norm), dy) in cache
        .spans
        .iter()
        .zip(&cache.raw_means)
        .zip(&cache.norms)
        .zip(dvectors)
    {
        if norm <= 1e-12 {
            continue;
        }
        let d = raw.len();
        let vdoty: f64 = raw.iter().zip(dy).map(|(v, g)| v * g).sum();
        let n3 = norm * norm * norm;
        let inv_len = 1.0 / (span.1 - span.0 + 1) as f64;
        for t in span.0..=span.1 {
            let row = dx.row_mut(t);
            for i in 0..d {
                let dmean = dy[i] / norm - raw[i] * vdoty / n3;
                row[i] += dmean * inv_len;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// fine-grained contrastive loss

fn logsumexp(vals: &[f64]) -> f64 {
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

struct AnchorGroup {
    /// Indices into the region list, all same kind and class.
    members: Vec<usize>,
}

fn anchor_groups(regions: &[RegionFeature]) -> Vec<AnchorGroup> {
    let mut classes: Vec<usize> = regions.iter().filter_map(|r| r.class_id).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut groups = Vec::new();
    for kind in [RegionKind::Start, RegionKind::End] {
        for &class in &classes {
            let members: Vec<usize> = regions
                .iter()
                .enumerate()
                .filter(|(_, r)| r.kind == kind && r.class_id == Some(class))
                .map(|(i, _)| i)
                .collect();
            // the contrast needs at least two instances of the class
            if members.len() >= 2 {
                groups.push(AnchorGroup { members });
            }
        }
    }
    groups
}

/// Fine-grained InfoNCE: each start (end) anchor contrasts against the
/// other start (end) anchors of its class, with all background features as
/// negatives. Returns 0 when no class has two instances; anchors with no
/// backgrounds contribute exactly 0.
pub fn ctr_loss(regions: &[RegionFeature], tau: f64) -> f64 {
    assert!(tau > 0.0, "temperature must be positive");
    let backgrounds: Vec<usize> = regions
        .iter()
        .enumerate()
        .filter(|(_, r)| r.kind == RegionKind::Background)
        .map(|(i, _)| i)
        .collect();
    let mut total = 0.0;
    for group in anchor_groups(regions) {
        for &i in &group.members {
            let anchor = &regions[i].vector;
            let mut logits: Vec<f64> = group
                .members
                .iter()
                .filter(|&&p| p != i)
                .map(|&p| dot(anchor, &regions[p].vector) / tau)
                .collect();
            let lse_num = logsumexp(&logits);
            for &k in &backgrounds {
                logits.push(dot(anchor, &regions[k].vector) / tau);
            }
            let lse_den = logsumexp(&logits);
            total += lse_den - lse_num;
        }
    }
    total
}

/// Gradient of [`ctr_loss`] w.r.t. every region vector.
pub fn ctr_loss_backward(regions: &[RegionFeature], tau: f64) -> Vec<Vec<f64>> {
    let d = regions.first().map_or(0, |r| r.vector.len());
    let mut grads = vec![vec![0.0; d]; regions.len()];
    let backgrounds: Vec<usize> = regions
        .iter()
        .enumerate()
        .filter(|(_, r)| r.kind == RegionKind::Background)
        .map(|(i, _)| i)
        .collect();
    for group in anchor_groups(regions) {
        for &i in &group.members {
            let anchor = regions[i].vector.clone();
            let positives: Vec<usize> = group.members.iter().copied().filter(|&p| p != i).collect();
            let all: Vec<usize> = positives
                .iter()
                .copied()
                .chain(backgrounds.iter().copied())
                .collect();
            let logits_num: Vec<f64> = positives
                .iter()
                .map(|&p| dot(&anchor, &regions[p].vector) / tau)
                .collect();
            let logits_all: Vec<f64> = all
                .iter()
                .map(|&p| dot(&anchor, &regions[p].vector) / tau)
                .collect();
            let softmax = |logits: &[f64]| -> Vec<f64> {
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
                let sum: f64 = exps.iter().sum();
                exps.into_iter().map(|e| e / sum).collect()
            };
            let p_all = softmax(&logits_all);
            let p_num = softmax(&logits_num);
            // dL/dlogit_m = p_all(m) - [m in positives] p_num(m)
            for (slot, &m) in all.iter().enumerate() {
                let mut coeff = p_all[slot];
                if slot < positives.len() {
                    coeff -= p_num[slot];
                }
                if coeff == 0.0 {
                    continue;
                }
                let scale = coeff / tau;
                for idx in 0..d {
                    grads[i][idx] += scale * regions[m].vector[idx];
                    grads[m][idx] += scale * anchor[idx];
                }
            }
        }
    }
    grads
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// L = L_BDM + lambda1 * L_PEM + lambda2 * L_CTR.
pub fn total_loss(l_bdm: f64, l_pem: f64, l_ctr: f64, lambda1: f64, lambda2: f64) -> f64 {
    l_bdm + lambda1 * l_pem + lambda2 * l_ctr
}
