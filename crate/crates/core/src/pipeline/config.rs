//! Training configuration and the flat key=value config files.

use std::path::Path;

use crate::io::{kv_parse_field, parse_kv, IoError};
use crate::nn::DEFAULT_LR;
use crate::synth::CorpusConfig;

/// Hyper-parameters for training and inference. Defaults follow the
/// experimental protocol: Adam at lr 1e-4, batches of 16 for 30 epochs,
/// N = 32 sampled points, tau = 0.1, lambda1 = 1, lambda2 = 0.1, pseudo
/// labels refreshed every R = 10 iterations, NMS at 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub tau: f64,
    /// Sample points per proposal.
    pub n: usize,
    /// Pseudo-label update period in iterations.
    pub r: usize,
    /// Proposal duration bounds in snippets; d_max None means the video
    /// length.
    pub d_min: usize,
    pub d_max: Option<usize>,
    pub nms_threshold: f64,
    pub seed: u64,
    /// Background-mining threshold multiplier.
    pub kappa: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            lr: DEFAULT_LR,
            lambda1: 1.0,
            lambda2: 0.1,
            tau: 0.1,
            n: 32,
            r: 10,
            d_min: 1,
            d_max: None,
            nms_threshold: 0.5,
            seed: 0,
            kappa: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), IoError> {
        let bad = |msg: String| IoError::Config {
            path: "<config>".into(),
            line: 0,
            msg,
        };
        if self.epochs == 0 || self.batch_size == 0 || self.n < 2 || self.r == 0 {
            return Err(bad("epochs, batch_size, r must be >= 1 and n >= 2".into()));
        }
        if self.lr <= 0.0 || self.tau <= 0.0 || self.nms_threshold < 0.0 {
            return Err(bad("lr and tau must be positive, nms_threshold >= 0".into()));
        }
        if let Some(d_max) = self.d_max {
            if self.d_min > d_max {
                return Err(bad(format!("d_min={} > d_max={}", self.d_min, d_max)));
            }
        }
        Ok(())
    }

    /// Load from a flat key=value file; unknown keys are errors, missing
    /// keys keep their defaults.
    pub fn from_kv_file(path: &Path) -> Result<Self, IoError> {
        let map = parse_kv(path)?;
        let known = [
            "epochs",
            "batch_size",
            "lr",
            "lambda1",
            "lambda2",
            "tau",
            "n",
            "r",
            "d_min",
            "d_max",
            "nms_threshold",
            "seed",
            "kappa",
        ];
        for key in map.keys() {
            if !known.contains(&key.as_str()) {
                return Err(IoError::Config {
                    path: path.display().to_string(),
                    line: 0,
                    msg: format!("unknown key '{key}'"),
                });
            }
        }
        let mut cfg = Self::default();
        if let Some(v) = kv_parse_field(&map, "epochs", path)? {
            cfg.epochs = v;
        }
        if let Some(v) = kv_parse_field(&map, "batch_size", path)? {
            cfg.batch_size = v;
        }
        if let Some(v) = kv_parse_field(&map, "lr", path)? {
            cfg.lr = v;
        }
        if let Some(v) = kv_parse_field(&map, "lambda1", path)? {
            cfg.lambda1 = v;
        }
        if let Some(v) = kv_parse_field(&map, "lambda2", path)? {
            cfg.lambda2 = v;
        }
        if let Some(v) = kv_parse_field(&map, "tau", path)? {
            cfg.tau = v;
        }
        if let Some(v) = kv_parse_field(&map, "n", path)? {
            cfg.n = v;
        }
        if let Some(v) = kv_parse_field(&map, "r", path)? {
            cfg.r = v;
        }
        if let Some(v) = kv_parse_field(&map, "d_min", path)? {
            cfg.d_min = v;
        }
        if let Some(v) = kv_parse_field(&map, "d_max", path)? {
            cfg.d_max = Some(v);
        }
        if let Some(v) = kv_parse_field(&map, "nms_threshold", path)? {
            cfg.nms_threshold = v;
        }
        if let Some(v) = kv_parse_field(&map, "seed", path)? {
            cfg.seed = v;
        }
        if let Some(v) = kv_parse_field(&map, "kappa", path)? {
            cfg.kappa = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Echo a config back to the key=value format (written next to
/// checkpoints so inference can recover the training settings).
pub fn save_train_config(path: &Path, cfg: &TrainConfig) -> Result<(), IoError> {
    let mut out = String::new();
    out.push_str(&format!("epochs = {}\n", cfg.epochs));
    out.push_str(&format!("batch_size = {}\n", cfg.batch_size));
    out.push_str(&format!("lr = {}\n", cfg.lr));
    out.push_str(&format!("lambda1 = {}\n", cfg.lambda1));
    out.push_str(&format!("lambda2 = {}\n", cfg.lambda2));
    out.push_str(&format!("tau = {}\n", cfg.tau));
    out.push_str(&format!("n = {}\n", cfg.n));
    out.push_str(&format!("r = {}\n", cfg.r));
    out.push_str(&format!("d_min = {}\n", cfg.d_min));
    if let Some(d_max) = cfg.d_max {
        out.push_str(&format!("d_max = {d_max}\n"));
    }
    out.push_str(&format!("nms_threshold = {}\n", cfg.nms_threshold));
    out.push_str(&format!("seed = {}\n", cfg.seed));
    out.push_str(&format!("kappa = {}\n", cfg.kappa));
    std::fs::write(path, out).map_err(|e| IoError::File {
        path: path.display().to_string(),
        source: e,
    })
}

/// Corpus generator settings from a key=value file. Keys: num_videos,
/// t_min, t_max, d, m, instances_min, instances_max, class_separation,
/// noise_std, seed.
pub fn corpus_config_from_kv(path: &Path) -> Result<CorpusConfig, IoError> {
    let map = parse_kv(path)?;
    let known = [
        "num_videos",
        "t_min",
        "t_max",
        "d",
        "m",
        "instances_min",
        "instances_max",
        "class_separation",
        "noise_std",
        "seed",
    ];
    for key in map.keys() {
        if !known.contains(&key.as_str()) {
            return Err(IoError::Config {
                path: path.display().to_string(),
                line: 0,
                msg: format!("unknown key '{key}'"),
            });
        }
    }
    let require = |key: &str| -> Result<String, IoError> {
        map.get(key).cloned().ok_or_else(|| IoError::Config {
            path: path.display().to_string(),
            line: 0,
            msg: format!("missing key '{key}'"),
        })
    };
    let parse_usize = |key: &str| -> Result<usize, IoError> {
        require(key)?.parse().map_err(|_| IoError::Config {
            path: path.display().to_string(),
            line: 0,
            msg: format!("cannot parse '{key}'"),
        })
    };
    let parse_f64 = |key: &str| -> Result<f64, IoError> {
        require(key)?.parse().map_err(|_| IoError::Config {
            path: path.display().to_string(),
            line: 0,
            msg: format!("cannot parse '{key}'"),
        })
    };
    Ok(CorpusConfig {
        num_videos: parse_usize("num_videos")?,
        t_range: (parse_usize("t_min")?, parse_usize("t_max")?),
        d: parse_usize("d")?,
        m: parse_usize("m")?,
        instances_per_video: (parse_usize("instances_min")?, parse_usize("instances_max")?),
        class_separation: parse_f64("class_separation")?,
        noise_std: parse_f64("noise_std")?,
        seed: parse_usize("seed")? as u64,
    })
}
