use serde::{Deserialize, Serialize};

/// Norm used for budgets and distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    #[default]
    L2,
    Linf,
}

impl NormKind {
    pub fn norm(self, v: &[f64]) -> f64 {
        match self {
            NormKind::L2 => v.iter().map(|a| a * a).sum::<f64>().sqrt(),
            NormKind::Linf => v.iter().fold(0.0, |m, a| m.max(a.abs())),
        }
    }

    /// Dual norm: `|w·v| ≤ ‖w‖_* ‖v‖`.
    pub fn dual_norm(self, w: &[f64]) -> f64 {
        match self {
            NormKind::L2 => NormKind::L2.norm(w),
            NormKind::Linf => w.iter().map(|a| a.abs()).sum(),
        }
    }

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            NormKind::L2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            NormKind::Linf => a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs())),
        }
    }

    /// Unit-norm direction `u` maximizing `w·u`.
    pub fn steepest_direction(self, w: &[f64]) -> Vec<f64> {
        match self {
            NormKind::L2 => {
                let n = NormKind::L2.norm(w);
                w.iter().map(|a| if n > 0.0 { a / n } else { 0.0 }).collect()
            }
            NormKind::Linf => w.iter().map(|a| sign(*a)).collect(),
        }
    }
}

pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms_and_duals() {
        let v = [3.0, -4.0];
        assert_eq!(NormKind::L2.norm(&v), 5.0);
        assert_eq!(NormKind::Linf.norm(&v), 4.0);
        assert_eq!(NormKind::Linf.dual_norm(&v), 7.0);
        let w = [1.0, -2.0];
        for k in [NormKind::L2, NormKind::Linf] {
            let u = k.steepest_direction(&w);
            assert!((k.norm(&u) - 1.0).abs() < 1e-15);
            let dot: f64 = u.iter().zip(&w).map(|(a, b)| a * b).sum();
            assert!((dot - k.dual_norm(&w)).abs() < 1e-12);
        }
    }
}
