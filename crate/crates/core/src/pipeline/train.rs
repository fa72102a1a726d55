//! End-to-end training: pseudo labels from clustering at epoch 0, batched
//! Adam steps on the combined objective, and pseudo-label refreshes every
//! R iterations using the current embeddings.

use std::path::Path;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::apn::{
    features_to_mat, generate_proposals, mat_to_features, prompt_class_embedding,
    sample_proposal_features_cached, sample_proposal_features_scatter, select_boundary_candidates,
    ApnDims, ApnError, ApnModel, InterpMode, PemCache, SampleCache, DEFAULT_CLASS_EMBED_DIM,
    DEFAULT_PROMPTS,
};
use crate::io::{self, IoError, VideoAnnotations};
use crate::losses::{
    assign_proposal_targets, bdm_loss, bdm_loss_backward, boundary_labels_from_pseudo, ctr_loss,
    ctr_loss_backward, pem_loss, pem_loss_backward, region_features_backward,
    region_features_cached, total_loss, LossError, PemPrediction,
};
use crate::nn::{adam_step, seeded_rng, AdamState, Mat, NnError};
use crate::pipeline::{pseudo_quality_map50, EvalError, TrainConfig};
use crate::pseudo::{generate_pseudo_labels, should_update, ClusterError, PseudoLabelSet};
use crate::synth::Video;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("video '{0}' has no point annotations")]
    VideoWithoutPoints(String),
    #[error("videos disagree on feature dimension: '{video_id}' has D={got}, expected {expected}")]
    InconsistentFeatureDim {
        video_id: String,
        got: usize,
        expected: usize,
    },
    #[error("non-finite loss in video '{video_id}' ({component})")]
    NonFiniteLoss {
        video_id: String,
        component: &'static str,
    },
    #[error("clustering failed for video '{video_id}': {source}")]
    Cluster {
        video_id: String,
        #[source]
        source: ClusterError,
    },
    #[error("features for video '{video_id}' have T={got} rows but annotations say T={expected}")]
    LengthMismatch {
        video_id: String,
        got: usize,
        expected: usize,
    },
    #[error(transparent)]
    Apn(#[from] ApnError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// One metrics-log row per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub iter: usize,
    pub l_bdm: f64,
    pub l_pem: f64,
    pub l_ctr: f64,
    pub total: f64,
    /// mAP@0.5 of the pseudo labels against ground truth at the most
    /// recent update; None when the corpus has no ground truth.
    pub pseudo_map50: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: ApnModel,
    pub metrics: Vec<MetricsRow>,
    pub initial_pseudo_map50: Option<f64>,
    pub final_pseudo_map50: Option<f64>,
    /// Final pseudo labels per video id.
    pub pseudo: Vec<(String, PseudoLabelSet)>,
}

fn corpus_num_classes(corpus: &[Video]) -> usize {
    let mut m = 0;
    for v in corpus {
        for p in &v.points {
            m = m.max(p.class_id + 1);
        }
        for g in &v.gt {
            if let Some(c) = g.class_id {
                m = m.max(c + 1);
            }
        }
    }
    m
}

fn gt_annotations(corpus: &[Video]) -> Vec<VideoAnnotations> {
    corpus
        .iter()
        .map(|v| VideoAnnotations {
            video_id: v.id.clone(),
            t: v.features.len(),
            gt: v
                .gt
                .iter()
                .map(|g| io::GtRecord {
                    t_s: g.t_s,
                    t_e: g.t_e,
                    class_id: g.class_id.expect("gt instances carry a class"),
                })
                .collect(),
            points: v
                .points
                .iter()
                .map(|p| io::PointRecord {
                    t_p: p.t_p,
                    class_id: p.class_id,
                })
                .collect(),
        })
        .collect()
}

fn cluster_corpus(
    model: &ApnModel,
    corpus: &[Video],
    kappa: f64,
    epoch_tag: u32,
) -> Result<Vec<PseudoLabelSet>, PipelineError> {
    corpus
        .iter()
        .map(|v| {
            let f = features_to_mat(&v.features);
            let x = model.embed(&f)?.x;
            generate_pseudo_labels(&mat_to_features(&x), &v.points, kappa, epoch_tag).map_err(
                |source| PipelineError::Cluster {
                    video_id: v.id.clone(),
                    source,
                },
            )
        })
        .collect()
}

fn pseudo_quality(
    corpus: &[Video],
    pseudo: &[PseudoLabelSet],
    gt: &[VideoAnnotations],
) -> Option<f64> {
    if gt.iter().all(|v| v.gt.is_empty()) {
        return None;
    }
    let tagged: Vec<(String, PseudoLabelSet)> = corpus
        .iter()
        .zip(pseudo)
        .map(|(v, p)| (v.id.clone(), p.clone()))
        .collect();
    pseudo_quality_map50(&tagged, gt).ok()
}

struct ProposalForward {
    feats: Mat,
    sample_cache: SampleCache,
    pem_cache: PemCache,
}

/// Forward/backward for one video; gradients are accumulated into the
/// model scaled by `scale` (1 / batch size). Returns the unweighted loss
/// components.
fn train_video_step(
    model: &mut ApnModel,
    video: &Video,
    pseudo: &PseudoLabelSet,
    config: &TrainConfig,
    scale: f64,
) -> Result<(f64, f64, f64), PipelineError> {
    let t_len = video.features.len();
    let f = features_to_mat(&video.features);
    let embed = model.embed(&f)?;
    let bdm = model.bdm(&embed.x)?;
    let probs = bdm.boundary_probabilities();

    let labels = boundary_labels_from_pseudo(pseudo, t_len);
    let l_bdm = bdm_loss(&probs, &labels);

    let starts = select_boundary_candidates(&probs.p_start);
    let ends = select_boundary_candidates(&probs.p_end);
    let d_max = config.d_max.unwrap_or(t_len);
    let spans = generate_proposals(&starts, &ends, config.d_min, d_max);
    let targets = assign_proposal_targets(&spans, &video.points, pseudo)?;

    let mut forwards: Vec<ProposalForward> = Vec::with_capacity(targets.len());
    let mut preds: Vec<PemPrediction> = Vec::with_capacity(targets.len());
    for target in &targets {
        let (feats, sample_cache) = sample_proposal_features_cached(
            &embed.x,
            spans[target.proposal_index],
            config.n,
            InterpMode::Linear,
        );
        let pem_cache = model.pem(&feats)?;
        preds.push(PemPrediction {
            class_probs: pem_cache.class_probs.clone(),
            confidence: pem_cache.confidence.clone(),
        });
        forwards.push(ProposalForward {
            feats,
            sample_cache,
            pem_cache,
        });
    }
    let l_pem = pem_loss(&preds, &targets)?;

    let (regions, region_cache) = region_features_cached(&embed.x, pseudo);
    let l_ctr = ctr_loss(&regions, config.tau);

    for (value, component) in [(l_bdm, "L_BDM"), (l_pem, "L_PEM"), (l_ctr, "L_CTR")] {
        if !value.is_finite() {
            return Err(PipelineError::NonFiniteLoss {
                video_id: video.id.clone(),
                component,
            });
        }
    }

    // backward: gradients of scale * (l_bdm + lambda1 l_pem + lambda2 l_ctr)
    let mut dx = Mat::zeros(t_len, video.features.dim());

    let (ds, de) = bdm_loss_backward(&probs, &labels);
    let mut dprobs = Mat::zeros(t_len, 2);
    for t in 0..t_len {
        dprobs.set(t, 0, ds[t] * scale);
        dprobs.set(t, 1, de[t] * scale);
    }
    dx.add_assign(&model.bdm_backward(&embed.x, &bdm, &dprobs));

    let pem_grads = pem_loss_backward(&preds, &targets);
    let w1 = config.lambda1 * scale;
    for ((dclass, dconf), fwd) in pem_grads.iter().zip(&forwards) {
        let dclass: Vec<f64> = dclass.iter().map(|g| g * w1).collect();
        let dconf: Vec<f64> = dconf.iter().map(|g| g * w1).collect();
        let dfeats = model.pem_backward(&fwd.feats, &fwd.pem_cache, &dclass, &dconf);
        sample_proposal_features_scatter(&fwd.sample_cache, &dfeats, &mut dx);
    }

    let w2 = config.lambda2 * scale;
    let dregions: Vec<Vec<f64>> = ctr_loss_backward(&regions, config.tau)
        .into_iter()
        .map(|g| g.into_iter().map(|v| v * w2).collect())
        .collect();
    region_features_backward(&region_cache, &dregions, &mut dx);

    model.embed_backward(&f, &embed, &dx);
    Ok((l_bdm, l_pem, l_ctr))
}

/// Train on the corpus. Deterministic given (corpus, config): all
/// randomness flows from the config seed.
///
/// Class embeddings seed from deterministic prompt hashes; pass
/// `class_embeddings` (one row per class id) to ingest precomputed
/// embeddings instead.
pub fn train(
    corpus: &[Video],
    config: &TrainConfig,
    class_embeddings: Option<&[Vec<f64>]>,
) -> Result<TrainOutcome, PipelineError> {
    if corpus.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    let d = corpus[0].features.dim();
    for v in corpus {
        if v.points.is_empty() {
            return Err(PipelineError::VideoWithoutPoints(v.id.clone()));
        }
        if v.features.dim() != d {
            return Err(PipelineError::InconsistentFeatureDim {
                video_id: v.id.clone(),
                got: v.features.dim(),
                expected: d,
            });
        }
    }
    let m = corpus_num_classes(corpus);
    let class_init: Vec<Vec<f64>> = match class_embeddings {
        Some(rows) => rows.to_vec(),
        None => (0..m)
            .map(|c| {
                prompt_class_embedding(
                    &format!("action class {c}"),
                    DEFAULT_PROMPTS,
                    DEFAULT_CLASS_EMBED_DIM,
                )
            })
            .collect::<Result<_, _>>()?,
    };
    let d_e = class_init.first().map_or(DEFAULT_CLASS_EMBED_DIM, Vec::len);
    let dims = ApnDims {
        d_e,
        ..ApnDims::new(d, m)
    };
    let mut model = ApnModel::new(dims, config.seed, Some(&class_init))?;

    let gt = gt_annotations(corpus);
    let mut pseudo = cluster_corpus(&model, corpus, config.kappa, 0)?;
    let initial_pseudo_map50 = pseudo_quality(corpus, &pseudo, &gt);
    let mut current_map50 = initial_pseudo_map50;

    let mut adam = AdamState::new(&model.params(), config.lr);
    let mut metrics = Vec::new();
    let mut iteration = 0usize;

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        let mut shuffle_rng =
            seeded_rng(config.seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(epoch as u64 + 1)));
        order.shuffle(&mut shuffle_rng);

        for batch in order.chunks(config.batch_size) {
            model.zero_grads();
            let scale = 1.0 / batch.len() as f64;
            let (mut sum_bdm, mut sum_pem, mut sum_ctr) = (0.0, 0.0, 0.0);
            for &vi in batch {
                let (lb, lp, lc) =
                    train_video_step(&mut model, &corpus[vi], &pseudo[vi], config, scale)?;
                sum_bdm += lb * scale;
                sum_pem += lp * scale;
                sum_ctr += lc * scale;
            }
            let mut params = model.params_mut();
            adam_step(&mut params, &mut adam)?;
            drop(params);
            model.renormalize_class_embeddings();
            iteration += 1;

            if should_update(iteration, config.r) {
                pseudo = cluster_corpus(&model, corpus, config.kappa, iteration as u32)?;
                current_map50 = pseudo_quality(corpus, &pseudo, &gt);
            }

            metrics.push(MetricsRow {
                epoch,
                iter: iteration,
                l_bdm: sum_bdm,
                l_pem: sum_pem,
                l_ctr: sum_ctr,
                total: total_loss(sum_bdm, sum_pem, sum_ctr, config.lambda1, config.lambda2),
                pseudo_map50: current_map50,
            });
        }
    }

    let tagged: Vec<(String, PseudoLabelSet)> = corpus
        .iter()
        .zip(&pseudo)
        .map(|(v, p)| (v.id.clone(), p.clone()))
        .collect();
    Ok(TrainOutcome {
        model,
        metrics,
        initial_pseudo_map50,
        final_pseudo_map50: current_map50,
        pseudo: tagged,
    })
}

/// Read a corpus written by `gen-data`: annotations.json plus one
/// features/<video_id>.csv per video.
pub fn load_corpus(dir: &Path) -> Result<Vec<Video>, PipelineError> {
    let annotations = io::load_annotations(&dir.join("annotations.json"))?;
    let mut corpus = Vec::with_capacity(annotations.len());
    for record in annotations {
        let features = io::load_features(
            &dir.join("features")
                .join(format!("{}.csv", record.video_id)),
        )?;
        if features.len() != record.t {
            return Err(PipelineError::LengthMismatch {
                video_id: record.video_id.clone(),
                got: features.len(),
                expected: record.t,
            });
        }
        corpus.push(Video {
            id: record.video_id.clone(),
            features,
            gt: record.gt_instances(),
            points: record.point_annotations(),
        });
    }
    Ok(corpus)
}

/// Write the per-iteration metrics log.
pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<(), PipelineError> {
    let mut out = String::from("epoch,iter,L_BDM,L_PEM,L_CTR,total,pseudo_mAP50\n");
    for r in rows {
        let quality = r.pseudo_map50.map_or(String::new(), |v| format!("{v}"));
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.epoch, r.iter, r.l_bdm, r.l_pem, r.l_ctr, r.total, quality
        ));
    }
    std::fs::write(path, out).map_err(|e| {
        PipelineError::Io(IoError::File {
            path: path.display().to_string(),
            source: e,
        })
    })
}
