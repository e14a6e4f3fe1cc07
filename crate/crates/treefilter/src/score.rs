//! Quality scores: ordinal oracle feedback and its unit-interval normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Level reported for an evaluation that failed (e.g. unparseable response).
pub const FAILURE_LEVEL: i32 = -1;

/// An ordinal quality judgement on `L` levels, normalized into `[0, 1]`.
///
/// A failed evaluation carries level `-1` and normalizes to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrdinalScore {
    level: i32,
    normalized: f64,
}

impl OrdinalScore {
    /// Builds a score for `level` on a scale with `levels` ordinal values
    /// (`0..levels`, plus `-1` for failure). `normalized = max(level, 0) / (levels - 1)`.
    pub fn new(level: i32, levels: u32) -> Result<Self> {
        if levels < 2 {
            return Err(Error::InvalidParameter(
                "ordinal scale needs at least two levels".into(),
            ));
        }
        if level < FAILURE_LEVEL || level >= levels as i32 {
            return Err(Error::InvalidParameter(format!(
                "level {level} out of range for {levels}-level scale"
            )));
        }
        let normalized = level.max(0) as f64 / (levels - 1) as f64;
        Ok(OrdinalScore { level, normalized })
    }

    pub fn failure(levels: u32) -> Self {
        OrdinalScore::new(FAILURE_LEVEL, levels).expect("failure level is always valid")
    }

    pub fn level(&self) -> i32 {
        self.level
    }

    pub fn normalized(&self) -> f64 {
        self.normalized
    }

    pub fn is_failure(&self) -> bool {
        self.level == FAILURE_LEVEL
    }
}

/// A single oracle evaluation: ordinal feedback, or a raw real-valued signal
/// in `[0, 1]` for oracles that grade continuously.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Score {
    Ordinal(OrdinalScore),
    Real(f64),
}

impl Score {
    /// The normalized unit-interval value of the score.
    pub fn value(&self) -> f64 {
        match self {
            Score::Ordinal(s) => s.normalized(),
            Score::Real(v) => *v,
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, Score::Ordinal(s) if s.is_failure())
    }

    pub fn ordinal_level(&self) -> Option<i32> {
        match self {
            Score::Ordinal(s) => Some(s.level()),
            Score::Real(_) => None,
        }
    }
}

/// Arithmetic mean of a set of unit-interval qualities.
pub fn mean_quality(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptySet);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_quality_examples() {
        assert_eq!(mean_quality(&[1.0, 0.0, 0.0]).unwrap(), 1.0 / 3.0);
        assert_eq!(mean_quality(&[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mean_quality(&[0.4]).unwrap(), 0.4);
        assert!(matches!(mean_quality(&[]), Err(Error::EmptySet)));
    }

    #[test]
    fn normalization_law() {
        // normalized(level) = max(level, 0) / (L - 1) across the whole range
        for levels in [2u32, 6, 11] {
            for level in -1..levels as i32 {
                let s = OrdinalScore::new(level, levels).unwrap();
                assert_eq!(s.normalized(), level.max(0) as f64 / (levels - 1) as f64);
            }
        }
    }

    #[test]
    fn failure_normalizes_to_zero() {
        let s = OrdinalScore::failure(6);
        assert_eq!(s.level(), -1);
        assert_eq!(s.normalized(), 0.0);
        assert!(s.is_failure());
    }

    #[test]
    fn ordinal_four_of_six_is_point_eight() {
        let s = OrdinalScore::new(4, 6).unwrap();
        assert!((s.normalized() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_levels_rejected() {
        assert!(OrdinalScore::new(6, 6).is_err());
        assert!(OrdinalScore::new(-2, 6).is_err());
        assert!(OrdinalScore::new(0, 1).is_err());
    }
}
