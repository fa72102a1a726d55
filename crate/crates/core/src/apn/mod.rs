//! The Action Proposal Network: feature embedding, Boundary Detection
//! Module, Proposal Generation Module, and Proposal Evaluation Module.
//!
//! Architecture, kept minimal but trainable:
//! - embed: conv1d k=3, D -> D, ReLU
//! - BDM:   conv1d k=3, D -> D/2, ReLU; conv1d k=3, D/2 -> 2, sigmoid
//! - PEM:   learnable CLS row; encoder input = [CLS ; mean-pool of the N
//!   sampled rows]; two dense layers with one ReLU produce the vision
//!   vector x^v; a dense head on the shared hidden gives per-class sigmoid
//!   probabilities. Confidence per class is sigmoid(cos(x^v, c_j) / 0.2).
//!
//! All backward passes are exact and finite-difference checked.

mod prompt;
mod proposals;

pub use prompt::{fnv1a64, prompt_class_embedding, DEFAULT_PROMPTS};
pub use proposals::{
    generate_proposals, sample_proposal_features, sample_proposal_features_cached,
    sample_proposal_features_scatter, select_boundary_candidates, InterpMode, SampleCache,
};

use thiserror::Error;

use crate::nn::{
    conv1d_backward, conv1d_forward, dense_backward, dense_forward, mean_pool, mean_pool_backward,
    relu, relu_backward, seeded_rng, sigmoid, sigmoid_backward, sigmoid_scalar, Mat, NnError,
    Parameter,
};
use crate::types::FeatureSequence;

/// tau_s: maps cosine similarity in [-1,1] to a confidence in (0,1) via
/// sigmoid(s / tau_s).
pub const SIM_TEMPERATURE: f64 = 0.2;
pub const DEFAULT_CLASS_EMBED_DIM: usize = 64;
pub const DEFAULT_ENC_HIDDEN: usize = 64;
const CONV_K: usize = 3;

#[derive(Debug, Error)]
pub enum ApnError {
    #[error("empty prompt set")]
    EmptyPromptSet,
    #[error("class embedding init has {got} rows, expected {expected}")]
    ClassEmbedRows { got: usize, expected: usize },
    #[error("checkpoint does not describe an APN model: {0}")]
    BadCheckpoint(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Per-snippet start/end probabilities, strictly inside (0,1).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryProbabilities {
    pub p_start: Vec<f64>,
    pub p_end: Vec<f64>,
}

/// An evaluated proposal: span plus the PEM outputs for every class.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub t_s: usize,
    pub t_e: usize,
    /// Independent per-class probabilities from the classification head.
    pub class_probs: Vec<f64>,
    /// Cosine similarities against the class embeddings, in [-1,1].
    pub sims: Vec<f64>,
    /// Mapped confidences sigmoid(sims / tau_s), in (0,1).
    pub confidence: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ApnDims {
    pub d: usize,
    pub m: usize,
    pub d_e: usize,
    pub bdm_hidden: usize,
    pub enc_hidden: usize,
}

impl ApnDims {
    pub fn new(d: usize, m: usize) -> Self {
        Self {
            d,
            m,
            d_e: DEFAULT_CLASS_EMBED_DIM,
            bdm_hidden: (d / 2).max(1),
            enc_hidden: DEFAULT_ENC_HIDDEN,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ApnModel {
    pub dims: ApnDims,
    pub embed_kernel: Parameter,
    pub embed_bias: Parameter,
    pub bdm1_kernel: Parameter,
    pub bdm1_bias: Parameter,
    pub bdm2_kernel: Parameter,
    pub bdm2_bias: Parameter,
    pub cls_token: Parameter,
    pub enc1_w: Parameter,
    pub enc1_b: Parameter,
    pub enc2_w: Parameter,
    pub enc2_b: Parameter,
    pub head_w: Parameter,
    pub head_b: Parameter,
    /// M x D_e table of textual class embeddings; rows are renormalized
    /// to unit norm after every optimizer step.
    pub class_embed: Parameter,
}

pub struct EmbedCache {
    pub pre: Mat,
    pub x: Mat,
}

pub struct BdmCache {
    pub pre1: Mat,
    pub act1: Mat,
    pub pre2: Mat,
    /// T x 2: column 0 = p_start, column 1 = p_end.
    pub probs: Mat,
}

pub struct PemCache {
    pub mean: Vec<f64>,
    pub concat: Mat,
    pub z_pre: Mat,
    pub z: Mat,
    pub xv: Vec<f64>,
    pub c_logits: Mat,
    pub class_probs: Vec<f64>,
    pub sims: Vec<f64>,
    pub confidence: Vec<f64>,
}

impl ApnModel {
    pub fn new(
        dims: ApnDims,
        seed: u64,
        class_embed_init: Option<&[Vec<f64>]>,
    ) -> Result<Self, ApnError> {
        let mut rng = seeded_rng(seed);
        let d = dims.d;
        let h = dims.bdm_hidden;
        let he = dims.enc_hidden;
        let de = dims.d_e;
        let m = dims.m;
        let embed_kernel =
            Parameter::uniform_init("embed.kernel", vec![CONV_K, d, d], CONV_K * d, &mut rng);
        let embed_bias = Parameter::uniform_init("embed.bias", vec![d], CONV_K * d, &mut rng);
        let bdm1_kernel =
            Parameter::uniform_init("bdm.conv1.kernel", vec![CONV_K, d, h], CONV_K * d, &mut rng);
        let bdm1_bias = Parameter::uniform_init("bdm.conv1.bias", vec![h], CONV_K * d, &mut rng);
        let bdm2_kernel =
            Parameter::uniform_init("bdm.conv2.kernel", vec![CONV_K, h, 2], CONV_K * h, &mut rng);
        let bdm2_bias = Parameter::uniform_init("bdm.conv2.bias", vec![2], CONV_K * h, &mut rng);
        let cls_token = Parameter::uniform_init("pem.cls_token", vec![d], d, &mut rng);
        let enc1_w = Parameter::uniform_init("pem.enc1.weight", vec![2 * d, he], 2 * d, &mut rng);
        let enc1_b = Parameter::uniform_init("pem.enc1.bias", vec![he], 2 * d, &mut rng);
        let enc2_w = Parameter::uniform_init("pem.enc2.weight", vec![he, de], he, &mut rng);
        // a nonzero bias keeps x^v away from the cosine's singular origin
        // even when every encoder unit is inactive
        let enc2_b = Parameter::uniform_init("pem.enc2.bias", vec![de], he, &mut rng);
        let head_w = Parameter::uniform_init("pem.head.weight", vec![he, m], he, &mut rng);
        let head_b = Parameter::uniform_init("pem.head.bias", vec![m], he, &mut rng);

        let class_embed = match class_embed_init {
            Some(rows) => {
                if rows.len() != m {
                    return Err(ApnError::ClassEmbedRows {
                        got: rows.len(),
                        expected: m,
                    });
                }
                let mut values = Vec::with_capacity(m * de);
                for (j, row) in rows.iter().enumerate() {
                    if row.len() != de {
                        return Err(ApnError::BadCheckpoint(format!(
                            "class embedding row {j} has {} entries, expected {de}",
                            row.len()
                        )));
                    }
                    values.extend_from_slice(row);
                }
                Parameter::new("pem.class_embed", vec![m, de], values)
            }
            None => Parameter::uniform_init("pem.class_embed", vec![m, de], de, &mut rng),
        };

        let mut model = Self {
            dims,
            embed_kernel,
            embed_bias,
            bdm1_kernel,
            bdm1_bias,
            bdm2_kernel,
            bdm2_bias,
            cls_token,
            enc1_w,
            enc1_b,
            enc2_w,
            enc2_b,
            head_w,
            head_b,
            class_embed,
        };
        model.renormalize_class_embeddings();
        Ok(model)
    }

    pub fn params(&self) -> Vec<&Parameter> {
        vec![
            &self.embed_kernel,
            &self.embed_bias,
            &self.bdm1_kernel,
            &self.bdm1_bias,
            &self.bdm2_kernel,
            &self.bdm2_bias,
            &self.cls_token,
            &self.enc1_w,
            &self.enc1_b,
            &self.enc2_w,
            &self.enc2_b,
            &self.head_w,
            &self.head_b,
            &self.class_embed,
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![
            &mut self.embed_kernel,
            &mut self.embed_bias,
            &mut self.bdm1_kernel,
            &mut self.bdm1_bias,
            &mut self.bdm2_kernel,
            &mut self.bdm2_bias,
            &mut self.cls_token,
            &mut self.enc1_w,
            &mut self.enc1_b,
            &mut self.enc2_w,
            &mut self.enc2_b,
            &mut self.head_w,
            &mut self.head_b,
            &mut self.class_embed,
        ]
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn flatten_values(&self) -> Vec<f64> {
        self.params()
            .iter()
            .flat_map(|p| p.values.iter().copied())
            .collect()
    }

    pub fn flatten_grads(&self) -> Vec<f64> {
        self.params()
            .iter()
            .flat_map(|p| p.grad.iter().copied())
            .collect()
    }

    pub fn set_values(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for p in self.params_mut() {
            let n = p.numel();
            p.values.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(
            offset,
            flat.len(),
            "flat vector does not match parameter count"
        );
    }

    /// Project every class embedding row back to unit norm.
    pub fn renormalize_class_embeddings(&mut self) {
        let de = self.dims.d_e;
        for j in 0..self.dims.m {
            let row = &mut self.class_embed.values[j * de..(j + 1) * de];
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-12 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
    }

    // -- embedding ---------------------------------------------------------

    pub fn embed(&self, f: &Mat) -> Result<EmbedCache, ApnError> {
        let pre = conv1d_forward(
            f,
            &self.embed_kernel.values,
            Some(&self.embed_bias.values),
            CONV_K,
            self.dims.d,
            self.dims.d,
        )?;
        let x = relu(&pre);
        Ok(EmbedCache { pre, x })
    }

    pub fn embed_backward(&mut self, f: &Mat, cache: &EmbedCache, dx: &Mat) {
        let dpre = relu_backward(&cache.pre, dx);
        let (_df, dk, db) = conv1d_backward(
            f,
            &self.embed_kernel.values,
            CONV_K,
            self.dims.d,
            self.dims.d,
            &dpre,
        );
        accumulate(&mut self.embed_kernel.grad, &dk);
        accumulate(&mut self.embed_bias.grad, &db);
    }

    // -- boundary detection --------------------------------------------------

    pub fn bdm(&self, x: &Mat) -> Result<BdmCache, ApnError> {
        let pre1 = conv1d_forward(
            x,
            &self.bdm1_kernel.values,
            Some(&self.bdm1_bias.values),
            CONV_K,
            self.dims.d,
            self.dims.bdm_hidden,
        )?;
        let act1 = relu(&pre1);
        let pre2 = conv1d_forward(
            &act1,
            &self.bdm2_kernel.values,
            Some(&self.bdm2_bias.values),
            CONV_K,
            self.dims.bdm_hidden,
            2,
        )?;
        let probs = sigmoid(&pre2);
        Ok(BdmCache {
            pre1,
            act1,
            pre2,
            probs,
        })
    }

    pub fn bdm_backward(&mut self, x: &Mat, cache: &BdmCache, dprobs: &Mat) -> Mat {
        let dpre2 = sigmoid_backward(&cache.probs, dprobs);
        let (dact1, dk2, db2) = conv1d_backward(
            &cache.act1,
            &self.bdm2_kernel.values,
            CONV_K,
            self.dims.bdm_hidden,
            2,
            &dpre2,
        );
        accumulate(&mut self.bdm2_kernel.grad, &dk2);
        accumulate(&mut self.bdm2_bias.grad, &db2);
        let dpre1 = relu_backward(&cache.pre1, &dact1);
        let (dx, dk1, db1) = conv1d_backward(
            x,
            &self.bdm1_kernel.values,
            CONV_K,
            self.dims.d,
            self.dims.bdm_hidden,
            &dpre1,
        );
        accumulate(&mut self.bdm1_kernel.grad, &dk1);
        accumulate(&mut self.bdm1_bias.grad, &db1);
        dx
    }

    // -- proposal evaluation -------------------------------------------------

    pub fn pem(&self, feats: &Mat) -> Result<PemCache, ApnError> {
        let d = self.dims.d;
        assert_eq!(feats.cols, d, "proposal features must be N x D");
        let mean = mean_pool(feats);
        let mut concat = Mat::zeros(1, 2 * d);
        concat.data[..d].copy_from_slice(&self.cls_token.values);
        concat.data[d..].copy_from_slice(&mean);
        let z_pre = dense_forward(
            &concat,
            &self.enc1_w.values,
            &self.enc1_b.values,
            2 * d,
            self.dims.enc_hidden,
        )?;
        let z = relu(&z_pre);
        let xv_mat = dense_forward(
            &z,
            &self.enc2_w.values,
            &self.enc2_b.values,
            self.dims.enc_hidden,
            self.dims.d_e,
        )?;
        let xv = xv_mat.data;
        let c_logits = dense_forward(
            &z,
            &self.head_w.values,
            &self.head_b.values,
            self.dims.enc_hidden,
            self.dims.m,
        )?;
        let class_probs = sigmoid(&c_logits).data;
        let sims = self.cosine_sims(&xv);
        let confidence = sims
            .iter()
            .map(|&s| sigmoid_scalar(s / SIM_TEMPERATURE))
            .collect();
        Ok(PemCache {
            mean,
            concat,
            z_pre,
            z,
            xv,
            c_logits,
            class_probs,
            sims,
            confidence,
        })
    }

    /// Cosine similarity of x^v against each class embedding row.
    pub fn cosine_sims(&self, xv: &[f64]) -> Vec<f64> {
        let de = self.dims.d_e;
        let nx2: f64 = xv.iter().map(|v| v * v).sum();
        (0..self.dims.m)
            .map(|j| {
                let row = &self.class_embed.values[j * de..(j + 1) * de];
                let nc2: f64 = row.iter().map(|v| v * v).sum();
                let denom2 = nx2 * nc2;
                if denom2 <= 1e-24 {
                    return 0.0;
                }
                let dot: f64 = row.iter().zip(xv).map(|(a, b)| a * b).sum();
                (dot / denom2.sqrt()).clamp(-1.0, 1.0)
            })
            .collect()
    }

    /// Backward through the PEM given gradients w.r.t. class probabilities
    /// and confidences; accumulates parameter gradients and returns the
    /// gradient w.r.t. the sampled proposal features.
    #[allow(clippy::needless_range_loop)]
    pub fn pem_backward(
        &mut self,
        feats: &Mat,
        cache: &PemCache,
        dclass_probs: &[f64],
        dconfidence: &[f64],
    ) -> Mat {
        let d = self.dims.d;
        let de = self.dims.d_e;
        let m = self.dims.m;

        // confidence = sigmoid(sims / tau)
        let dsims: Vec<f64> = (0..m)
            .map(|j| {
                dconfidence[j] * cache.confidence[j] * (1.0 - cache.confidence[j]) / SIM_TEMPERATURE
            })
            .collect();

        // cosine backward into x^v and the class embedding table
        let nx2: f64 = cache.xv.iter().map(|v| v * v).sum();
        let nx = nx2.sqrt();
        let mut dxv = vec![0.0; de];
        for j in 0..m {
            if dsims[j] == 0.0 {
                continue;
            }
            let row = &self.class_embed.values[j * de..(j + 1) * de];
            let nc2: f64 = row.iter().map(|v| v * v).sum();
            let nc = nc2.sqrt();
            if nx * nc <= 1e-12 {
                continue;
            }
            let cosv = cache.sims[j];
            let grad_row = &mut self.class_embed.grad[j * de..(j + 1) * de];
            for i in 0..de {
                dxv[i] += dsims[j] * (row[i] / (nc * nx) - cosv * cache.xv[i] / nx2);
                grad_row[i] += dsims[j] * (cache.xv[i] / (nc * nx) - cosv * row[i] / nc2);
            }
        }

        // classification head: probs = sigmoid(logits)
        let dlogits: Vec<f64> = (0..m)
            .map(|j| dclass_probs[j] * cache.class_probs[j] * (1.0 - cache.class_probs[j]))
            .collect();
        let dlogits = Mat::from_vec(1, m, dlogits);
        let (dz_head, dw_head, db_head) =
            dense_backward(&cache.z, &self.head_w.values, m, &dlogits);
        accumulate(&mut self.head_w.grad, &dw_head);
        accumulate(&mut self.head_b.grad, &db_head);

        let dxv_mat = Mat::from_vec(1, de, dxv);
        let (dz_enc, dw2, db2) = dense_backward(&cache.z, &self.enc2_w.values, de, &dxv_mat);
        accumulate(&mut self.enc2_w.grad, &dw2);
        accumulate(&mut self.enc2_b.grad, &db2);

        let mut dz = dz_enc;
        dz.add_assign(&dz_head);
        let dz_pre = relu_backward(&cache.z_pre, &dz);
        let (dconcat, dw1, db1) = dense_backward(
            &cache.concat,
            &self.enc1_w.values,
            self.dims.enc_hidden,
            &dz_pre,
        );
        accumulate(&mut self.enc1_w.grad, &dw1);
        accumulate(&mut self.enc1_b.grad, &db1);

        for i in 0..d {
            self.cls_token.grad[i] += dconcat.data[i];
        }
        mean_pool_backward(&dconcat.data[d..], feats.rows)
    }

    /// Package a PEM cache into an evaluated proposal.
    pub fn evaluate_proposal(&self, span: (usize, usize), cache: &PemCache) -> Proposal {
        Proposal {
            t_s: span.0,
            t_e: span.1,
            class_probs: cache.class_probs.clone(),
            sims: cache.sims.clone(),
            confidence: cache.confidence.clone(),
        }
    }

    // -- checkpointing -------------------------------------------------------

    pub fn from_parameters(params: Vec<Parameter>) -> Result<Self, ApnError> {
        let mut map: std::collections::BTreeMap<String, Parameter> =
            params.into_iter().map(|p| (p.name.clone(), p)).collect();
        let mut take = |name: &str| {
            map.remove(name)
                .ok_or_else(|| ApnError::BadCheckpoint(format!("missing tensor '{name}'")))
        };
        let embed_kernel = take("embed.kernel")?;
        let embed_bias = take("embed.bias")?;
        let bdm1_kernel = take("bdm.conv1.kernel")?;
        let bdm1_bias = take("bdm.conv1.bias")?;
        let bdm2_kernel = take("bdm.conv2.kernel")?;
        let bdm2_bias = take("bdm.conv2.bias")?;
        let cls_token = take("pem.cls_token")?;
        let enc1_w = take("pem.enc1.weight")?;
        let enc1_b = take("pem.enc1.bias")?;
        let enc2_w = take("pem.enc2.weight")?;
        let enc2_b = take("pem.enc2.bias")?;
        let head_w = take("pem.head.weight")?;
        let head_b = take("pem.head.bias")?;
        let class_embed = take("pem.class_embed")?;

        if embed_kernel.shape.len() != 3 || embed_kernel.shape[0] != CONV_K {
            return Err(ApnError::BadCheckpoint(
                "embed.kernel must be k x D x D".into(),
            ));
        }
        let d = embed_kernel.shape[1];
        let bdm_hidden = bdm1_kernel.shape.get(2).copied().unwrap_or(0);
        if class_embed.shape.len() != 2 {
            return Err(ApnError::BadCheckpoint(
                "pem.class_embed must be M x D_e".into(),
            ));
        }
        let m = class_embed.shape[0];
        let d_e = class_embed.shape[1];
        let enc_hidden = enc1_w.shape.get(1).copied().unwrap_or(0);
        let dims = ApnDims {
            d,
            m,
            d_e,
            bdm_hidden,
            enc_hidden,
        };
        if embed_kernel.shape != vec![CONV_K, d, d]
            || bdm1_kernel.shape != vec![CONV_K, d, bdm_hidden]
            || bdm2_kernel.shape != vec![CONV_K, bdm_hidden, 2]
            || enc1_w.shape != vec![2 * d, enc_hidden]
            || enc2_w.shape != vec![enc_hidden, d_e]
            || head_w.shape != vec![enc_hidden, m]
            || cls_token.shape != vec![d]
        {
            return Err(ApnError::BadCheckpoint(
                "tensor shapes are inconsistent".into(),
            ));
        }
        Ok(Self {
            dims,
            embed_kernel,
            embed_bias,
            bdm1_kernel,
            bdm1_bias,
            bdm2_kernel,
            bdm2_bias,
            cls_token,
            enc1_w,
            enc1_b,
            enc2_w,
            enc2_b,
            head_w,
            head_b,
            class_embed,
        })
    }
}

impl BdmCache {
    pub fn boundary_probabilities(&self) -> BoundaryProbabilities {
        let t = self.probs.rows;
        let mut p_start = Vec::with_capacity(t);
        let mut p_end = Vec::with_capacity(t);
        for r in 0..t {
            p_start.push(self.probs.get(r, 0));
            p_end.push(self.probs.get(r, 1));
        }
        BoundaryProbabilities { p_start, p_end }
    }
}

fn accumulate(acc: &mut [f64], delta: &[f64]) {
    debug_assert_eq!(acc.len(), delta.len());
    for (a, d) in acc.iter_mut().zip(delta) {
        *a += d;
    }
}

pub fn features_to_mat(f: &FeatureSequence) -> Mat {
    Mat::from_vec(f.len(), f.dim(), f.data().to_vec())
}

pub fn mat_to_features(m: &Mat) -> FeatureSequence {
    FeatureSequence::new(m.rows, m.cols, m.data.clone()).expect("network outputs are finite")
}
