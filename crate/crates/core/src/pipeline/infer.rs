//! Inference: embed, detect boundaries, pair candidates into proposals,
//! evaluate each against the class embeddings, fuse scores, and suppress
//! duplicates.

use crate::apn::{
    features_to_mat, generate_proposals, sample_proposal_features, select_boundary_candidates,
    ApnModel, InterpMode,
};
use crate::pipeline::{nms, TrainConfig};
use crate::types::{FeatureSequence, ScoredPrediction};

#[derive(Debug, Clone)]
pub struct InferOptions {
    pub n: usize,
    pub d_min: usize,
    pub d_max: Option<usize>,
    pub nms_threshold: f64,
    pub interp: InterpMode,
    /// Emit one prediction per class instead of only the argmax class.
    pub emit_all_classes: bool,
    /// Suppress across classes instead of per class.
    pub cross_class_nms: bool,
}

impl From<&TrainConfig> for InferOptions {
    fn from(cfg: &TrainConfig) -> Self {
        Self {
            n: cfg.n,
            d_min: cfg.d_min,
            d_max: cfg.d_max,
            nms_threshold: cfg.nms_threshold,
            interp: InterpMode::Linear,
            emit_all_classes: false,
            cross_class_nms: false,
        }
    }
}

/// Final fused score per class: classification probability times mapped
/// confidence.
fn fused_scores(class_probs: &[f64], confidence: &[f64]) -> Vec<f64> {
    class_probs
        .iter()
        .zip(confidence)
        .map(|(c, s)| c * s)
        .collect()
}

/// Localize actions in one video. Returns predictions sorted by score
/// descending; an empty list when no proposal survives the duration
/// filter.
pub fn infer(
    features: &FeatureSequence,
    model: &ApnModel,
    opts: &InferOptions,
) -> Vec<ScoredPrediction> {
    let t_len = features.len();
    let f = features_to_mat(features);
    let embed = model
        .embed(&f)
        .expect("embed shapes are fixed by the model");
    let bdm = model
        .bdm(&embed.x)
        .expect("bdm shapes are fixed by the model");
    let probs = bdm.boundary_probabilities();
    let starts = select_boundary_candidates(&probs.p_start);
    let ends = select_boundary_candidates(&probs.p_end);
    let d_max = opts.d_max.unwrap_or(t_len);
    let spans = generate_proposals(&starts, &ends, opts.d_min, d_max);

    let mut raw: Vec<ScoredPrediction> = Vec::new();
    for span in spans {
        let feats = sample_proposal_features(&embed.x, span, opts.n, opts.interp);
        let pem = model
            .pem(&feats)
            .expect("pem shapes are fixed by the model");
        let scores = fused_scores(&pem.class_probs, &pem.confidence);
        if opts.emit_all_classes {
            for (class_id, &score) in scores.iter().enumerate() {
                raw.push(
                    ScoredPrediction::new(span.0, span.1, class_id, score.clamp(0.0, 1.0))
                        .expect("fused scores live in [0,1]"),
                );
            }
        } else {
            let (class_id, score) = scores
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.total_cmp(b))
                .expect("at least one class");
            raw.push(
                ScoredPrediction::new(span.0, span.1, class_id, score.clamp(0.0, 1.0))
                    .expect("fused scores live in [0,1]"),
            );
        }
    }

    let mut kept = if opts.cross_class_nms {
        nms(&raw, opts.nms_threshold)
    } else {
        let mut classes: Vec<usize> = raw.iter().map(|p| p.class_id).collect();
        classes.sort_unstable();
        classes.dedup();
        let mut out = Vec::new();
        for class in classes {
            let class_preds: Vec<ScoredPrediction> = raw
                .iter()
                .filter(|p| p.class_id == class)
                .cloned()
                .collect();
            out.extend(nms(&class_preds, opts.nms_threshold));
        }
        out
    };
    kept.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.t_s.cmp(&b.t_s))
            .then(a.t_e.cmp(&b.t_e))
            .then(a.class_id.cmp(&b.class_id))
    });
    kept
}
