//! Shared data model: per-snippet feature matrices, point annotations,
//! action instances, scored predictions, and temporal IoU.
//!
//! Time is measured in snippet indices (one feature row per snippet).
//! Intervals store inclusive snippet endpoints `(t_s, t_e)` but are
//! *measured* half-open: `len = t_e - t_s`. Zero-length intervals are
//! legal only in degenerate cases.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TypeError {
    #[error("feature sequence must have T >= 1 and D >= 1, got T={t}, D={d}")]
    EmptyFeatures { t: usize, d: usize },
    #[error("feature sequence has non-finite entry at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },
    #[error(
        "feature rows have inconsistent widths: row {row} has {got} columns, expected {expected}"
    )]
    RaggedRows {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("invalid interval: t_s={t_s} > t_e={t_e}")]
    InvertedInterval { t_s: usize, t_e: usize },
    #[error("prediction score {0} outside [0,1]")]
    ScoreOutOfRange(f64),
}

/// A T×D matrix of per-snippet features, row-major.
///
/// Holds both raw features and their embedded form; every entry is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    data: Vec<f64>,
    t: usize,
    d: usize,
}

impl FeatureSequence {
    pub fn new(t: usize, d: usize, data: Vec<f64>) -> Result<Self, TypeError> {
        if t == 0 || d == 0 {
            return Err(TypeError::EmptyFeatures { t, d });
        }
        assert_eq!(data.len(), t * d, "data length must equal T*D");
        for (i, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(TypeError::NonFiniteFeature {
                    row: i / d,
                    col: i % d,
                });
            }
        }
        Ok(Self { data, t, d })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TypeError> {
        if rows.is_empty() {
            return Err(TypeError::EmptyFeatures { t: 0, d: 0 });
        }
        let d = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(TypeError::RaggedRows {
                    row: i,
                    got: r.len(),
                    expected: d,
                });
            }
        }
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), d, data)
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        false // T >= 1 by construction
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.d..(t + 1) * self.d]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// A single annotated frame `(t_p, class_id)` inside an action instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointAnnotation {
    pub t_p: usize,
    pub class_id: usize,
}

/// A temporal span with an optional class; `class_id = None` marks background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionInstance {
    pub t_s: usize,
    pub t_e: usize,
    pub class_id: Option<usize>,
}

impl ActionInstance {
    pub fn new(t_s: usize, t_e: usize, class_id: Option<usize>) -> Result<Self, TypeError> {
        if t_s > t_e {
            return Err(TypeError::InvertedInterval { t_s, t_e });
        }
        Ok(Self { t_s, t_e, class_id })
    }

    pub fn interval(&self) -> (usize, usize) {
        (self.t_s, self.t_e)
    }

    /// Half-open measure of the span.
    pub fn duration(&self) -> usize {
        self.t_e - self.t_s
    }

    pub fn contains(&self, t: usize) -> bool {
        self.t_s <= t && t <= self.t_e
    }
}

/// A model output: localized span, predicted class, and confidence in [0,1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrediction {
    pub t_s: usize,
    pub t_e: usize,
    pub class_id: usize,
    pub score: f64,
}

impl ScoredPrediction {
    pub fn new(t_s: usize, t_e: usize, class_id: usize, score: f64) -> Result<Self, TypeError> {
        if t_s > t_e {
            return Err(TypeError::InvertedInterval { t_s, t_e });
        }
        if !score.is_finite() || !(0.0..=1.0).contains(&score) {
            return Err(TypeError::ScoreOutOfRange(score));
        }
        Ok(Self {
            t_s,
            t_e,
            class_id,
            score,
        })
    }

    pub fn interval(&self) -> (usize, usize) {
        (self.t_s, self.t_e)
    }
}

/// Temporal intersection-over-union of two inclusive-index intervals,
/// with length measured as `t_e - t_s`.
///
/// Identical zero-length intervals score 1; otherwise a zero-length union
/// scores 0. Total on valid (`t_s <= t_e`) inputs.
pub fn tiou(a: (usize, usize), b: (usize, usize)) -> f64 {
    debug_assert!(a.0 <= a.1 && b.0 <= b.1, "tiou requires t_s <= t_e");
    let inter_lo = a.0.max(b.0);
    let inter_hi = a.1.min(b.1);
    let inter = inter_hi.saturating_sub(inter_lo) as f64;
    let union = (a.1 - a.0) as f64 + (b.1 - b.0) as f64 - inter;
    if union == 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    inter / union
}
