//! The attack/defense game: scores, best responses, brute-force oracles and
//! the equilibrium and randomization verifiers.
//!
//! Conventions shared by every routine here:
//! - an output of 0 (exactly on the boundary) is an error for both labels;
//! - the attacker's value at `x` is a supremum over the closed ball, so a
//!   boundary point is a legal target;
//! - landing inside an open region uses a fixed overshoot of
//!   [`OVERSHOOT`] past its edge, shrunk only where the budget binds.

mod attack_map;
mod best_response;
mod fig1;
mod oracle;
mod score;
mod verify;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::norm::NormKind;

pub use attack_map::{Action, AttackMap, Piece};
pub use best_response::{
    best_response_attack, best_response_attack_mixed, best_response_attack_profile, best_response_defender, transported_1d,
    Transported1d,
};
pub use fig1::{fig1_data, write_fig1_csv, Fig1Data, Fig1Panel};
pub use oracle::{oracle_point_value, oracle_score, pointwise_attack_oracle, OracleGrid};
pub use score::{adversarial_score, penalty, risk, score_decomposition, ScoreReport};
pub use verify::{
    admissible_alpha_range, randomization_gap, verify_no_pure_nash, weak_duality, DualityReport, GapReport, NashReport, NashRound,
    OracleCheck, STRICT,
};

/// Distance past the edge of an open target region.
pub const OVERSHOOT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    /// Probability mass of moved points.
    Mass,
    /// Expected perturbation norm.
    Norm,
    /// Unregularized adversary.
    None,
}

/// How expectations over the distribution are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvalMethod {
    /// Closed form through Gaussian interval masses and moments. Falls back
    /// to quadrature where no closed form applies.
    #[default]
    Exact,
    Quadrature { points: usize },
    MonteCarlo { n: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub penalty: Penalty,
    pub lambda: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub norm_kind: NormKind,
    #[serde(default)]
    pub eval: EvalMethod,
}

impl GameConfig {
    pub fn new(penalty: Penalty, lambda: f64, epsilon: f64) -> Result<Self> {
        let cfg = GameConfig { penalty, lambda, epsilon, norm_kind: NormKind::L2, eval: EvalMethod::Exact };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_eval(mut self, eval: EvalMethod) -> Self {
        self.eval = eval;
        self
    }

    pub fn with_norm(mut self, norm_kind: NormKind) -> Self {
        self.norm_kind = norm_kind;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::OutOfRange { name: "lambda", value: self.lambda, lo: 0.0, hi: 1.0 });
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!("epsilon must be positive and finite, got {}", self.epsilon)));
        }
        if self.penalty == Penalty::Norm && self.epsilon > 1.0 {
            return Err(Error::Config(format!("norm penalty requires epsilon <= 1, got {}", self.epsilon)));
        }
        match self.eval {
            EvalMethod::Quadrature { points } if points < 4 => Err(Error::Config("quadrature needs at least 4 points".into())),
            EvalMethod::MonteCarlo { n: 0, .. } => Err(Error::Config("monte carlo needs n >= 1".into())),
            _ => Ok(()),
        }
    }

    /// Penalty charged for moving a point by `distance`.
    pub fn cost(&self, distance: f64) -> f64 {
        match self.penalty {
            Penalty::Mass => {
                if distance > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Penalty::Norm => distance,
            Penalty::None => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_invariants() {
        assert!(GameConfig::new(Penalty::Mass, 0.3, 0.5).is_ok());
        assert!(matches!(GameConfig::new(Penalty::Mass, 0.0, 0.5), Err(Error::OutOfRange { .. })));
        assert!(GameConfig::new(Penalty::Mass, 1.0, 0.5).is_err());
        assert!(GameConfig::new(Penalty::Norm, 0.3, 1.5).is_err());
        assert!(GameConfig::new(Penalty::Mass, 0.3, 1.5).is_ok());
        assert!(GameConfig::new(Penalty::Mass, 0.3, 0.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let cfg = GameConfig::new(Penalty::Norm, 0.3, 0.5).unwrap().with_eval(EvalMethod::MonteCarlo { n: 10, seed: 1 });
        let s = serde_json::to_string(&cfg).unwrap();
        let back: GameConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cfg);
        let min: GameConfig = serde_json::from_str(r#"{"penalty":"mass","lambda":0.3,"epsilon":0.5}"#).unwrap();
        assert_eq!(min.eval, EvalMethod::Exact);
        assert!(serde_json::from_str::<GameConfig>(r#"{"penalty":"mass","lambda":0.3,"epsilon":0.5,"x":1}"#).is_err());
    }
}
