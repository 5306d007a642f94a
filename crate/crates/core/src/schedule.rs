use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stepsize sequence indexed from `t = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Stepsize {
    /// `scale / (t + offset)`
    Harmonic { scale: f64, offset: f64 },
    Constant { value: f64 },
}

impl Stepsize {
    pub fn harmonic(scale: f64, offset: f64) -> Result<Self> {
        let s = Stepsize::Harmonic { scale, offset };
        s.validate()?;
        Ok(s)
    }

    pub fn at(&self, t: u64) -> f64 {
        match *self {
            Stepsize::Harmonic { scale, offset } => scale / (t as f64 + offset),
            Stepsize::Constant { value } => value,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Stepsize::Harmonic { scale, offset } => {
                if !(scale > 0.0 && scale.is_finite() && offset >= 1.0 && offset.is_finite()) {
                    return Err(Error::InvalidConfig(format!(
                        "harmonic stepsize needs scale > 0 and offset ≥ 1, got {scale}/(t + {offset})"
                    )));
                }
            }
            Stepsize::Constant { value } => {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(Error::InvalidConfig(format!("constant stepsize must be finite and ≥ 0, got {value}")));
                }
            }
        }
        Ok(())
    }
}

/// Snapshot every `max(1, T/200)` iterations unless overridden.
pub(crate) fn snapshot_period(total: u64, requested: Option<u64>) -> u64 {
    requested.unwrap_or(total / 200).max(1)
}

pub(crate) fn is_snapshot(t: u64, total: u64, period: u64) -> bool {
    t.is_multiple_of(period) || t == total
}
