use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Which safety signal is subtracted from the reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyMode {
    #[default]
    None,
    /// The binary collision cost.
    Cost,
    /// The approximate violation at the current state.
    Violation,
}

impl fmt::Display for PenaltyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PenaltyMode::None => "none",
            PenaltyMode::Cost => "cost",
            PenaltyMode::Violation => "violation",
        })
    }
}

impl FromStr for PenaltyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(PenaltyMode::None),
            "cost" => Ok(PenaltyMode::Cost),
            "violation" => Ok(PenaltyMode::Violation),
            _ => Err(Error::Config(format!("unknown penalty mode '{s}'"))),
        }
    }
}

/// `reward − ω·Z`, with `Z` the cost flag or the violation depending on `mode`.
pub fn apply_penalty(reward: f64, cost_flag: f64, violation: f64, mode: PenaltyMode, omega: f64) -> Result<f64> {
    if !(omega.is_finite() && omega >= 0.0) {
        return Err(Error::invalid(format!("omega must be finite and non-negative, got {omega}")));
    }
    if cost_flag != 0.0 && cost_flag != 1.0 {
        return Err(Error::invalid(format!("cost flag must be 0 or 1, got {cost_flag}")));
    }
    if !(0.0..=1.0).contains(&violation) {
        return Err(Error::invalid(format!("violation must lie in [0, 1], got {violation}")));
    }
    Ok(match mode {
        PenaltyMode::None => reward,
        PenaltyMode::Cost => reward - omega * cost_flag,
        PenaltyMode::Violation => reward - omega * violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(apply_penalty(0.3, 1.0, 0.5, PenaltyMode::None, 1.0).unwrap(), 0.3);
        assert!((apply_penalty(0.01, 1.0, 0.0, PenaltyMode::Cost, 1.0).unwrap() + 0.99).abs() < 1e-15);
        assert!((apply_penalty(0.01, 0.0, 0.76, PenaltyMode::Violation, 1.0).unwrap() + 0.75).abs() < 1e-15);
    }

    #[test]
    fn bad_arguments() {
        assert!(apply_penalty(0.0, 0.0, 0.0, PenaltyMode::Cost, -1.0).is_err());
        assert!(apply_penalty(0.0, 0.5, 0.0, PenaltyMode::Cost, 1.0).is_err());
        assert!(apply_penalty(0.0, 0.0, 1.5, PenaltyMode::Violation, 1.0).is_err());
    }

    #[test]
    fn parse_round_trip() {
        for m in [PenaltyMode::None, PenaltyMode::Cost, PenaltyMode::Violation] {
            assert_eq!(m.to_string().parse::<PenaltyMode>().unwrap(), m);
        }
        assert!("both".parse::<PenaltyMode>().is_err());
    }
}
