//! File formats: features as plain CSV (T rows × D columns), annotations,
//! pseudo labels and predictions as JSON records, plus the flat key=value
//! config format used by the CLI.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! save/load is lossless at double precision.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ActionInstance, FeatureSequence, PointAnnotation, ScoredPrediction};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: row {row}, column {col}: {msg}")]
    Parse {
        path: String,
        row: usize,
        col: usize,
        msg: String,
    },
    #[error("{path}: T=0 not allowed (empty feature file)")]
    EmptyFeatures { path: String },
    #[error("{path}: {msg}")]
    Schema { path: String, msg: String },
    #[error("{path}: line {line}: {msg}")]
    Config {
        path: String,
        line: usize,
        msg: String,
    },
}

fn file_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::File {
        path: path.display().to_string(),
        source,
    }
}

// ---------------------------------------------------------------------------
// features.csv

pub fn save_features(path: &Path, features: &FeatureSequence) -> Result<(), IoError> {
    let mut out = String::new();
    for t in 0..features.len() {
        let row = features.row(t);
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| file_err(path, e))
}

pub fn load_features(path: &Path) -> Result<FeatureSequence, IoError> {
    let text = fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    let pathstr = path.display().to_string();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (r, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (c, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| IoError::Parse {
                path: pathstr.clone(),
                row: r,
                col: c,
                msg: format!("not a number: '{}'", cell.trim()),
            })?;
            if !v.is_finite() {
                return Err(IoError::Parse {
                    path: pathstr.clone(),
                    row: r,
                    col: c,
                    msg: "non-finite value".into(),
                });
            }
            row.push(v);
        }
        if let Some(w) = width {
            if row.len() != w {
                return Err(IoError::Parse {
                    path: pathstr.clone(),
                    row: r,
                    col: row.len().min(w),
                    msg: format!("row has {} columns, expected {}", row.len(), w),
                });
            }
        } else {
            width = Some(row.len());
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(IoError::EmptyFeatures { path: pathstr });
    }
    FeatureSequence::from_rows(&rows).map_err(|e| IoError::Schema {
        path: pathstr,
        msg: e.to_string(),
    })
}

// ---------------------------------------------------------------------------
// annotations.json / pseudo.json

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GtRecord {
    pub t_s: usize,
    pub t_e: usize,
    pub class_id: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointRecord {
    pub t_p: usize,
    pub class_id: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanRecord {
    pub t_s: usize,
    pub t_e: usize,
}

/// One video's annotations: ground-truth instances and point labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoAnnotations {
    pub video_id: String,
    #[serde(rename = "T")]
    pub t: usize,
    pub gt: Vec<GtRecord>,
    pub points: Vec<PointRecord>,
}

/// Pseudo-label output: mirrors [`VideoAnnotations`] with mined
/// backgrounds and the training iteration that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoVideoRecord {
    pub video_id: String,
    #[serde(rename = "T")]
    pub t: usize,
    pub gt: Vec<GtRecord>,
    pub points: Vec<PointRecord>,
    pub backgrounds: Vec<SpanRecord>,
    pub epoch_tag: u32,
}

impl VideoAnnotations {
    pub fn gt_instances(&self) -> Vec<ActionInstance> {
        self.gt
            .iter()
            .map(|g| ActionInstance {
                t_s: g.t_s,
                t_e: g.t_e,
                class_id: Some(g.class_id),
            })
            .collect()
    }

    pub fn point_annotations(&self) -> Vec<PointAnnotation> {
        self.points
            .iter()
            .map(|p| PointAnnotation {
                t_p: p.t_p,
                class_id: p.class_id,
            })
            .collect()
    }

    fn validate(&self, path: &str) -> Result<(), IoError> {
        let fail = |msg: String| {
            Err(IoError::Schema {
                path: path.to_string(),
                msg,
            })
        };
        if self.t == 0 {
            return fail(format!("video '{}': T=0 not allowed", self.video_id));
        }
        for g in &self.gt {
            if g.t_s > g.t_e || g.t_e >= self.t {
                return fail(format!(
                    "video '{}': gt instance [{}, {}] invalid for T={}",
                    self.video_id, g.t_s, g.t_e, self.t
                ));
            }
        }
        for w in self.gt.windows(2) {
            if w[1].t_s <= w[0].t_e {
                return fail(format!(
                    "video '{}': gt instances [{},{}] and [{},{}] overlap or are unsorted",
                    self.video_id, w[0].t_s, w[0].t_e, w[1].t_s, w[1].t_e
                ));
            }
        }
        for p in &self.points {
            if p.t_p >= self.t {
                return fail(format!(
                    "video '{}': point annotation t_p={} out of range for T={}",
                    self.video_id, p.t_p, self.t
                ));
            }
        }
        for w in self.points.windows(2) {
            if w[1].t_p <= w[0].t_p {
                return fail(format!(
                    "video '{}': point annotations not strictly increasing at t_p={}",
                    self.video_id, w[1].t_p
                ));
            }
        }
        if !self.gt.is_empty() && !self.points.is_empty() {
            for p in &self.points {
                let inside: Vec<&GtRecord> = self
                    .gt
                    .iter()
                    .filter(|g| g.t_s <= p.t_p && p.t_p <= g.t_e)
                    .collect();
                if inside.len() != 1 || inside[0].class_id != p.class_id {
                    return fail(format!(
                        "video '{}': point (t_p={}, class {}) does not sit inside exactly one \
                         matching gt instance",
                        self.video_id, p.t_p, p.class_id
                    ));
                }
            }
        }
        Ok(())
    }
}

pub fn save_annotations(path: &Path, videos: &[VideoAnnotations]) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(videos).map_err(|e| IoError::Schema {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    fs::write(path, text).map_err(|e| file_err(path, e))
}

pub fn load_annotations(path: &Path) -> Result<Vec<VideoAnnotations>, IoError> {
    let pathstr = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    let videos: Vec<VideoAnnotations> =
        serde_json::from_str(&text).map_err(|e| IoError::Schema {
            path: pathstr.clone(),
            msg: e.to_string(),
        })?;
    for v in &videos {
        v.validate(&pathstr)?;
    }
    Ok(videos)
}

pub fn save_pseudo_records(path: &Path, records: &[PseudoVideoRecord]) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(records).map_err(|e| IoError::Schema {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    fs::write(path, text).map_err(|e| file_err(path, e))
}

// ---------------------------------------------------------------------------
// predictions.json

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub video_id: String,
    pub t_s: usize,
    pub t_e: usize,
    pub class_id: usize,
    pub score: f64,
}

impl PredictionRecord {
    pub fn new(video_id: &str, p: &ScoredPrediction) -> Self {
        Self {
            video_id: video_id.to_string(),
            t_s: p.t_s,
            t_e: p.t_e,
            class_id: p.class_id,
            score: p.score,
        }
    }
}

/// Saved sorted by video id, then score descending.
pub fn save_predictions(path: &Path, preds: &[PredictionRecord]) -> Result<(), IoError> {
    let mut sorted = preds.to_vec();
    sorted.sort_by(|a, b| {
        a.video_id
            .cmp(&b.video_id)
            .then(b.score.total_cmp(&a.score))
            .then(a.t_s.cmp(&b.t_s))
            .then(a.t_e.cmp(&b.t_e))
    });
    let text = serde_json::to_string_pretty(&sorted).map_err(|e| IoError::Schema {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    fs::write(path, text).map_err(|e| file_err(path, e))
}

pub fn load_predictions(path: &Path) -> Result<Vec<PredictionRecord>, IoError> {
    let pathstr = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    let preds: Vec<PredictionRecord> =
        serde_json::from_str(&text).map_err(|e| IoError::Schema {
            path: pathstr.clone(),
            msg: e.to_string(),
        })?;
    for (i, p) in preds.iter().enumerate() {
        if p.t_s > p.t_e {
            return Err(IoError::Schema {
                path: pathstr,
                msg: format!("prediction {i}: t_s={} > t_e={}", p.t_s, p.t_e),
            });
        }
        if !p.score.is_finite() || !(0.0..=1.0).contains(&p.score) {
            return Err(IoError::Schema {
                path: pathstr,
                msg: format!("prediction {i}: score {} outside [0,1]", p.score),
            });
        }
    }
    Ok(preds)
}

// ---------------------------------------------------------------------------
// flat key=value config files

/// Parse `key = value` lines; '#' starts a comment, blank lines ignored.
pub fn parse_kv(path: &Path) -> Result<BTreeMap<String, String>, IoError> {
    let pathstr = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    let mut map = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(IoError::Config {
                path: pathstr.clone(),
                line: ln + 1,
                msg: format!("expected 'key = value', got '{raw}'"),
            });
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

pub fn kv_parse_field<T: std::str::FromStr>(
    map: &BTreeMap<String, String>,
    key: &str,
    path: &Path,
) -> Result<Option<T>, IoError> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw.parse::<T>().map(Some).map_err(|_| IoError::Config {
            path: path.display().to_string(),
            line: 0,
            msg: format!("cannot parse '{raw}' for key '{key}'"),
        }),
    }
}
