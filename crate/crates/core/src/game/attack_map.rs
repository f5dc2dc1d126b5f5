use serde::{Deserialize, Serialize};

use super::oracle::{pointwise_attack_oracle, OracleGrid};
use super::GameConfig;
use crate::distributions::{Label, Transport};
use crate::error::{check_dim, Error, Result};
use crate::hypotheses::{Interval, MixedClassifier};
use crate::norm::NormKind;

/// What happens to the points of one piece.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    Identity,
    /// Send every point to `z`.
    ToPoint { z: f64 },
    /// `x ↦ x + s`.
    Translate { s: f64 },
}

impl Action {
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Action::Identity => x,
            Action::ToPoint { z } => z,
            Action::Translate { s } => x + s,
        }
    }
}

/// An interval of the line together with its action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Piece {
    pub interval: Interval,
    pub action: Action,
}

impl Piece {
    pub fn new(interval: Interval, action: Action) -> Self {
        Piece { interval, action }
    }

    pub fn lo(&self) -> f64 {
        self.interval.lo
    }

    pub fn hi(&self) -> f64 {
        self.interval.hi
    }

    /// Largest displacement over the piece.
    pub fn max_shift(&self) -> f64 {
        match self.action {
            Action::Identity => 0.0,
            Action::Translate { s } => s.abs(),
            Action::ToPoint { z } => (z - self.lo()).abs().max((z - self.hi()).abs()),
        }
    }
}

/// A deterministic attack `φ_y`, one map per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackMap {
    Identity {
        #[serde(default)]
        budget: f64,
    },
    /// 1-D piecewise map; points outside every piece stay put.
    Piecewise1d {
        budget: f64,
        #[serde(default)]
        norm_kind: NormKind,
        pos: Vec<Piece>,
        neg: Vec<Piece>,
    },
    /// A 1-D map acting on the scaled score `u = (w·x + b)/‖w‖_*`, moving `x`
    /// along the steepest direction so that `u` becomes `φ(u)`.
    Linear {
        budget: f64,
        #[serde(default)]
        norm_kind: NormKind,
        w: Vec<f64>,
        b: f64,
        pos: Vec<Piece>,
        neg: Vec<Piece>,
    },
    /// Grid search of the ball around every point, against a fixed model.
    Pointwise {
        cfg: GameConfig,
        model: MixedClassifier,
        grid: OracleGrid,
    },
}

fn find_piece(pieces: &[Piece], x: f64) -> Option<&Piece> {
    // pieces are sorted and disjoint
    let idx = pieces.partition_point(|p| p.hi() < x);
    pieces[idx..].iter().take(2).find(|p| p.interval.contains(x))
}

impl AttackMap {
    pub fn identity() -> Self {
        AttackMap::Identity { budget: 0.0 }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            AttackMap::Identity { .. } => true,
            AttackMap::Piecewise1d { pos, neg, .. } | AttackMap::Linear { pos, neg, .. } => {
                pos.iter().chain(neg).all(|p| p.action == Action::Identity)
            }
            AttackMap::Pointwise { .. } => false,
        }
    }

    pub fn norm_kind(&self) -> NormKind {
        match self {
            AttackMap::Identity { .. } => NormKind::L2,
            AttackMap::Piecewise1d { norm_kind, .. } | AttackMap::Linear { norm_kind, .. } => *norm_kind,
            AttackMap::Pointwise { cfg, .. } => cfg.norm_kind,
        }
    }

    /// Pieces of label `y` for the 1-D kinds.
    pub fn pieces(&self, label: Label) -> Option<&[Piece]> {
        match self {
            AttackMap::Piecewise1d { pos, neg, .. } | AttackMap::Linear { pos, neg, .. } => {
                Some(if label == Label::Pos { pos } else { neg })
            }
            _ => None,
        }
    }

    /// Structural checks: sorted disjoint pieces and displacement within the
    /// budget.
    pub fn validate(&self) -> Result<()> {
        let check = |pieces: &[Piece], budget: f64| -> Result<()> {
            for p in pieces {
                if !(p.hi() >= p.lo()) {
                    return Err(Error::InvalidInput(format!("piece ({}, {}) is empty", p.lo(), p.hi())));
                }
                let shift = p.max_shift();
                if shift > budget + 1e-12 {
                    return Err(Error::BudgetViolation { distance: shift, budget });
                }
            }
            for w in pieces.windows(2) {
                let touching = w[0].hi() == w[1].lo() && w[0].interval.hi_closed && w[1].interval.lo_closed;
                if w[0].hi() > w[1].lo() || touching {
                    return Err(Error::InvalidInput("attack pieces overlap or are unsorted".into()));
                }
            }
            Ok(())
        };
        match self {
            AttackMap::Identity { .. } => Ok(()),
            AttackMap::Piecewise1d { budget, pos, neg, .. } | AttackMap::Linear { budget, pos, neg, .. } => {
                check(pos, *budget)?;
                check(neg, *budget)
            }
            AttackMap::Pointwise { cfg, model, .. } => {
                cfg.validate()?;
                model.validate()
            }
        }
    }

    /// Image of a 1-D score under the per-label piece map.
    pub fn apply_1d(pieces: &[Piece], x: f64) -> f64 {
        find_piece(pieces, x).map_or(x, |p| p.action.apply(x))
    }
}

impl Transport for AttackMap {
    fn transport(&self, x: &[f64], label: Label) -> Result<Vec<f64>> {
        match self {
            AttackMap::Identity { .. } => Ok(x.to_vec()),
            AttackMap::Piecewise1d { pos, neg, .. } => {
                check_dim(1, x.len())?;
                let pieces = if label == Label::Pos { pos } else { neg };
                Ok(vec![AttackMap::apply_1d(pieces, x[0])])
            }
            AttackMap::Linear { norm_kind, w, b, pos, neg, .. } => {
                check_dim(w.len(), x.len())?;
                let dn = norm_kind.dual_norm(w);
                if dn == 0.0 {
                    return Ok(x.to_vec());
                }
                let u = (w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b) / dn;
                let pieces = if label == Label::Pos { pos } else { neg };
                let t = AttackMap::apply_1d(pieces, u) - u;
                if t == 0.0 {
                    return Ok(x.to_vec());
                }
                let dir = norm_kind.steepest_direction(w);
                Ok(x.iter().zip(&dir).map(|(xi, di)| xi + t * di).collect())
            }
            AttackMap::Pointwise { cfg, model, grid } => pointwise_attack_oracle(model, x, label, cfg, grid),
        }
    }

    fn budget(&self) -> f64 {
        match self {
            AttackMap::Identity { budget } => *budget,
            AttackMap::Piecewise1d { budget, .. } | AttackMap::Linear { budget, .. } => *budget,
            AttackMap::Pointwise { cfg, .. } => cfg.epsilon,
        }
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.norm_kind().distance(a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn banded_map() -> AttackMap {
        AttackMap::Piecewise1d {
            budget: 0.5,
            norm_kind: NormKind::L2,
            pos: vec![Piece::new(Interval::left_open(0.0, 0.5), Action::ToPoint { z: 0.0 })],
            neg: vec![Piece::new(Interval::right_open(-0.5, 0.0), Action::Translate { s: 0.25 })],
        }
    }

    #[test]
    fn piece_lookup() {
        let m = banded_map();
        assert_eq!(m.transport(&[0.3], Label::Pos).unwrap(), vec![0.0]);
        assert_eq!(m.transport(&[0.5], Label::Pos).unwrap(), vec![0.0]);
        assert_eq!(m.transport(&[0.0], Label::Pos).unwrap(), vec![0.0]);
        assert_eq!(m.transport(&[0.6], Label::Pos).unwrap(), vec![0.6]);
        assert_eq!(m.transport(&[-0.5], Label::Neg).unwrap(), vec![-0.25]);
        assert_eq!(m.transport(&[0.0], Label::Neg).unwrap(), vec![0.0]);
        assert!(m.validate().is_ok());
    }

    #[test]
    fn over_budget_rejected() {
        let m = AttackMap::Piecewise1d {
            budget: 0.1,
            norm_kind: NormKind::L2,
            pos: vec![Piece::new(Interval::left_open(0.0, 0.5), Action::ToPoint { z: 0.0 })],
            neg: vec![],
        };
        assert!(matches!(m.validate(), Err(Error::BudgetViolation { .. })));
    }

    #[test]
    fn linear_moves_along_normal() {
        let m = AttackMap::Linear {
            budget: 1.0,
            norm_kind: NormKind::L2,
            w: vec![3.0, 4.0],
            b: 0.0,
            pos: vec![Piece::new(Interval::left_open(0.0, 1.0), Action::ToPoint { z: 0.0 })],
            neg: vec![],
        };
        let x = [0.06, 0.08]; // u = 0.1
        let z = m.transport(&x, Label::Pos).unwrap();
        assert!(z.iter().all(|v| v.abs() < 1e-14), "{z:?}");
        assert!((m.distance(&x, &z) - 0.1).abs() < 1e-14);
        let AttackMap::Linear { budget, w, b, pos, neg, .. } = m else { unreachable!() };
        let linf = AttackMap::Linear { budget, norm_kind: NormKind::Linf, w, b, pos, neg };
        // u = 0.5/‖w‖₁, removed by a sign step of that size per coordinate
        let z = linf.transport(&x, Label::Pos).unwrap();
        let u = 0.5 / 7.0;
        assert!((z[0] - (0.06 - u)).abs() < 1e-14 && (z[1] - (0.08 - u)).abs() < 1e-14, "{z:?}");
        assert!((3.0 * z[0] + 4.0 * z[1]).abs() < 1e-14);
    }

    #[test]
    fn json_round_trip() {
        let m = banded_map();
        let s = serde_json::to_string(&m).unwrap();
        let back: AttackMap = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
