//! Synthetic corpus generation (a stand-in for pre-extracted video
//! features) and point-annotation simulation.
//!
//! Every class gets a random unit-norm direction scaled by
//! `class_separation`; action snippets are that center plus isotropic
//! gaussian noise, background snippets sit around their own center so
//! background mining has structure to find. All output is a pure function
//! of (config, seed).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::nn::{gauss, seeded_rng};
use crate::types::{ActionInstance, FeatureSequence, PointAnnotation};

/// Minimum instance length in snippets (duration t_e - t_s >= 1).
const MIN_INSTANCE_LEN: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid corpus config: {0}")]
    InvalidConfig(String),
    #[error(
        "config infeasible: {instances} instances of minimum length {min_len} plus separating \
         gaps need {needed} snippets, but T can be as small as {t_min}"
    )]
    Infeasible {
        instances: usize,
        min_len: usize,
        needed: usize,
        t_min: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub num_videos: usize,
    /// Inclusive range of snippet counts per video.
    pub t_range: (usize, usize),
    pub d: usize,
    /// Number of action classes.
    pub m: usize,
    /// Inclusive range of instances per video.
    pub instances_per_video: (usize, usize),
    /// Scale of the unit-norm class mean directions; 0 collapses all
    /// classes (and background) onto the same center.
    pub class_separation: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.num_videos == 0 {
            return Err(SynthError::InvalidConfig("num_videos must be >= 1".into()));
        }
        if self.t_range.0 == 0 || self.t_range.0 > self.t_range.1 {
            return Err(SynthError::InvalidConfig(format!(
                "t_range [{}, {}] is empty or starts at 0",
                self.t_range.0, self.t_range.1
            )));
        }
        if self.d == 0 || self.m == 0 {
            return Err(SynthError::InvalidConfig("D and M must be >= 1".into()));
        }
        if self.instances_per_video.0 == 0
            || self.instances_per_video.0 > self.instances_per_video.1
        {
            return Err(SynthError::InvalidConfig(format!(
                "instances_per_video [{}, {}] is empty or starts at 0",
                self.instances_per_video.0, self.instances_per_video.1
            )));
        }
        if !self.class_separation.is_finite() || self.class_separation < 0.0 {
            return Err(SynthError::InvalidConfig(
                "class_separation must be finite and >= 0".into(),
            ));
        }
        if !self.noise_std.is_finite() || self.noise_std < 0.0 {
            return Err(SynthError::InvalidConfig(
                "noise_std must be finite and >= 0".into(),
            ));
        }
        let n = self.instances_per_video.1;
        let needed = n * MIN_INSTANCE_LEN + (n - 1);
        if needed > self.t_range.0 {
            return Err(SynthError::Infeasible {
                instances: n,
                min_len: MIN_INSTANCE_LEN,
                needed,
                t_min: self.t_range.0,
            });
        }
        Ok(())
    }
}

/// One synthetic video: features, ground-truth instances, and the single
/// annotated frame per instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub id: String,
    pub features: FeatureSequence,
    pub gt: Vec<ActionInstance>,
    pub points: Vec<PointAnnotation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointSamplingMode {
    Uniform,
    /// Normal centered at the instance midpoint, std = duration/6,
    /// truncated to the instance. The default simulation protocol.
    CenterGaussian,
}

fn unit_direction(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| gauss(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn generate_corpus(config: &CorpusConfig) -> Result<Vec<Video>, SynthError> {
    config.validate()?;
    let mut rng = seeded_rng(config.seed);
    let centers: Vec<Vec<f64>> = (0..config.m)
        .map(|_| {
            unit_direction(config.d, &mut rng)
                .into_iter()
                .map(|x| x * config.class_separation)
                .collect()
        })
        .collect();
    let bg_center: Vec<f64> = unit_direction(config.d, &mut rng)
        .into_iter()
        .map(|x| x * config.class_separation)
        .collect();

    let mut corpus = Vec::with_capacity(config.num_videos);
    for vid in 0..config.num_videos {
        let t_len = rng.random_range(config.t_range.0..=config.t_range.1);
        let n_inst = rng.random_range(config.instances_per_video.0..=config.instances_per_video.1);

        // Slot layout: gap | inst | gap | ... | inst | gap. Interior gaps
        // start at 1 snippet, ends at 0, instances at the minimum length;
        // leftover snippets are scattered uniformly over all slots.
        let n_slots = 2 * n_inst + 1;
        let mut slots = vec![0usize; n_slots];
        for (i, s) in slots.iter_mut().enumerate() {
            if i % 2 == 1 {
                *s = MIN_INSTANCE_LEN;
            } else if i != 0 && i != n_slots - 1 {
                *s = 1;
            }
        }
        let used: usize = slots.iter().sum();
        debug_assert!(used <= t_len, "feasibility was validated");
        for _ in 0..t_len - used {
            slots[rng.random_range(0..n_slots)] += 1;
        }

        let mut gt = Vec::with_capacity(n_inst);
        let mut cursor = 0usize;
        for (i, &width) in slots.iter().enumerate() {
            if i % 2 == 1 {
                let class_id = rng.random_range(0..config.m);
                gt.push(
                    ActionInstance::new(cursor, cursor + width - 1, Some(class_id))
                        .expect("layout produces valid spans"),
                );
            }
            cursor += width;
        }
        debug_assert_eq!(cursor, t_len);

        let mut data = Vec::with_capacity(t_len * config.d);
        let mut inst_iter = gt.iter().peekable();
        for t in 0..t_len {
            while inst_iter.peek().is_some_and(|g| g.t_e < t) {
                inst_iter.next();
            }
            let center = match inst_iter.peek() {
                Some(g) if g.contains(t) => &centers[g.class_id.unwrap()],
                _ => &bg_center,
            };
            for c in center {
                data.push(c + config.noise_std * gauss(&mut rng));
            }
        }
        let features =
            FeatureSequence::new(t_len, config.d, data).expect("generated features are finite");

        let points = sample_points_with_rng(&gt, PointSamplingMode::CenterGaussian, &mut rng);
        corpus.push(Video {
            id: format!("video_{vid:04}"),
            features,
            gt,
            points,
        });
    }
    Ok(corpus)
}

/// Draw exactly one annotated frame inside each ground-truth instance.
pub fn sample_point_annotations(
    gt: &[ActionInstance],
    mode: PointSamplingMode,
    seed: u64,
) -> Vec<PointAnnotation> {
    let mut rng = seeded_rng(seed);
    sample_points_with_rng(gt, mode, &mut rng)
}

fn sample_points_with_rng(
    gt: &[ActionInstance],
    mode: PointSamplingMode,
    rng: &mut ChaCha8Rng,
) -> Vec<PointAnnotation> {
    gt.iter()
        .map(|inst| {
            let t_p = match mode {
                PointSamplingMode::Uniform => rng.random_range(inst.t_s..=inst.t_e),
                PointSamplingMode::CenterGaussian => {
                    let mid = (inst.t_s + inst.t_e) as f64 / 2.0;
                    let std = inst.duration() as f64 / 6.0;
                    if std == 0.0 {
                        inst.t_s
                    } else {
                        let mut picked = mid.round() as usize;
                        for _ in 0..64 {
                            let x = (mid + std * gauss(rng)).round();
                            if x >= inst.t_s as f64 && x <= inst.t_e as f64 {
                                picked = x as usize;
                                break;
                            }
                        }
                        picked
                    }
                }
            };
            PointAnnotation {
                t_p,
                class_id: inst.class_id.expect("gt instances carry a class"),
            }
        })
        .collect()
}
