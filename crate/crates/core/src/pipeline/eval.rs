//! Detection metrics: greedy per-class NMS, average precision as the
//! exact area under the step precision/recall curve, and mAP over a
//! threshold grid.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::io::{PredictionRecord, VideoAnnotations};
use crate::pseudo::PseudoLabelSet;
use crate::types::{tiou, ScoredPrediction};

/// ActivityNet-style grid [0.5 : 0.05 : 0.95].
pub const ANET_GRID: [f64; 10] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];
/// THUMOS-style grid [0.1 : 0.1 : 0.7].
pub const THUMOS_GRID: [f64; 7] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no ground-truth instances to evaluate against")]
    EmptyGroundTruth,
    #[error("threshold grid is empty")]
    EmptyThresholds,
}

/// Greedy suppression over predictions of a single class: repeatedly keep
/// the highest-scored prediction and drop everything overlapping it with
/// tIoU above the threshold. Ties break toward smaller t_s, then t_e.
pub fn nms(preds: &[ScoredPrediction], threshold: f64) -> Vec<ScoredPrediction> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .score
            .total_cmp(&preds[a].score)
            .then(preds[a].t_s.cmp(&preds[b].t_s))
            .then(preds[a].t_e.cmp(&preds[b].t_e))
    });
    let mut alive = vec![true; preds.len()];
    let mut kept = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if !alive[i] {
            continue;
        }
        kept.push(preds[i].clone());
        for &j in &order[pos + 1..] {
            if alive[j] && tiou(preds[i].interval(), preds[j].interval()) > threshold {
                alive[j] = false;
            }
        }
    }
    kept
}

/// One class's predictions, already restricted to that class.
struct ClassPreds<'a> {
    items: Vec<&'a PredictionRecord>,
}

impl<'a> ClassPreds<'a> {
    fn sorted(mut self) -> Self {
        self.items.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.video_id.cmp(&b.video_id))
                .then(a.t_s.cmp(&b.t_s))
                .then(a.t_e.cmp(&b.t_e))
        });
        self
    }
}

/// Average precision for one class: greedy matching in score order (a
/// prediction is a true positive if its best-tIoU unmatched ground truth
/// in the same video clears the threshold), then the exact area under the
/// step PR curve. None when the class has no ground truth.
pub fn average_precision(
    preds: &[PredictionRecord],
    gt: &BTreeMap<&str, Vec<(usize, usize)>>,
    tiou_threshold: f64,
) -> Option<f64> {
    let total_gt: usize = gt.values().map(|v| v.len()).sum();
    if total_gt == 0 {
        return None;
    }
    let ranked = ClassPreds {
        items: preds.iter().collect(),
    }
    .sorted();
    let mut matched: BTreeMap<&str, Vec<bool>> = gt
        .iter()
        .map(|(vid, spans)| (*vid, vec![false; spans.len()]))
        .collect();
    let mut tp = 0usize;
    let mut ap = 0.0;
    for (rank0, p) in ranked.items.iter().enumerate() {
        let mut is_tp = false;
        if let Some(spans) = gt.get(p.video_id.as_str()) {
            let flags = matched.get_mut(p.video_id.as_str()).unwrap();
            let mut best: Option<(usize, f64)> = None;
            for (gi, span) in spans.iter().enumerate() {
                if flags[gi] {
                    continue;
                }
                let v = tiou((p.t_s, p.t_e), *span);
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((gi, v));
                }
            }
            if let Some((gi, v)) = best {
                if v >= tiou_threshold {
                    flags[gi] = true;
                    is_tp = true;
                }
            }
        }
        if is_tp {
            tp += 1;
            let precision = tp as f64 / (rank0 + 1) as f64;
            ap += precision / total_gt as f64;
        }
    }
    Some(ap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    /// Mean AP over classes with ground truth, one entry per threshold.
    pub map_per_threshold: Vec<f64>,
    /// AP per class (classes with ground truth only), one entry per threshold.
    pub per_class_ap: BTreeMap<usize, Vec<f64>>,
    /// Mean of the per-threshold mAPs.
    pub average_map: f64,
    /// Classes that appear in predictions but have no ground truth; their
    /// AP is undefined and excluded from the mean.
    pub skipped_classes: Vec<usize>,
}

/// mAP over the threshold grid. Classes are averaged only when they have
/// ground truth; a class with ground truth and no predictions scores 0.
pub fn evaluate(
    predictions: &[PredictionRecord],
    gt: &[VideoAnnotations],
    thresholds: &[f64],
) -> Result<EvalReport, EvalError> {
    if thresholds.is_empty() {
        return Err(EvalError::EmptyThresholds);
    }
    let mut gt_classes: BTreeSet<usize> = BTreeSet::new();
    for v in gt {
        for g in &v.gt {
            gt_classes.insert(g.class_id);
        }
    }
    if gt_classes.is_empty() {
        return Err(EvalError::EmptyGroundTruth);
    }
    let pred_classes: BTreeSet<usize> = predictions.iter().map(|p| p.class_id).collect();
    let skipped_classes: Vec<usize> = pred_classes.difference(&gt_classes).copied().collect();

    let mut per_class_ap: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut map_per_threshold = vec![0.0; thresholds.len()];
    for &class in &gt_classes {
        let class_preds: Vec<PredictionRecord> = predictions
            .iter()
            .filter(|p| p.class_id == class)
            .cloned()
            .collect();
        let mut class_gt: BTreeMap<&str, Vec<(usize, usize)>> = BTreeMap::new();
        for v in gt {
            let spans: Vec<(usize, usize)> =
                v.gt.iter()
                    .filter(|g| g.class_id == class)
                    .map(|g| (g.t_s, g.t_e))
                    .collect();
            if !spans.is_empty() {
                class_gt.insert(v.video_id.as_str(), spans);
            }
        }
        let aps: Vec<f64> = thresholds
            .iter()
            .map(|&th| {
                average_precision(&class_preds, &class_gt, th)
                    .expect("class was selected from ground truth")
            })
            .collect();
        for (acc, ap) in map_per_threshold.iter_mut().zip(&aps) {
            *acc += ap;
        }
        per_class_ap.insert(class, aps);
    }
    let n_classes = gt_classes.len() as f64;
    map_per_threshold.iter_mut().for_each(|v| *v /= n_classes);
    let average_map = map_per_threshold.iter().sum::<f64>() / thresholds.len() as f64;
    Ok(EvalReport {
        thresholds: thresholds.to_vec(),
        map_per_threshold,
        per_class_ap,
        average_map,
        skipped_classes,
    })
}

/// Pseudo-label quality: score the pseudo actions as unit-score
/// predictions against the ground truth at tIoU 0.5.
pub fn pseudo_quality_map50(
    pseudo: &[(String, PseudoLabelSet)],
    gt: &[VideoAnnotations],
) -> Result<f64, EvalError> {
    let preds: Vec<PredictionRecord> = pseudo
        .iter()
        .flat_map(|(vid, set)| {
            set.actions.iter().map(move |a| PredictionRecord {
                video_id: vid.clone(),
                t_s: a.t_s,
                t_e: a.t_e,
                class_id: a.class_id.expect("pseudo actions carry a class"),
                score: 1.0,
            })
        })
        .collect();
    Ok(evaluate(&preds, gt, &[0.5])?.map_per_threshold[0])
}
