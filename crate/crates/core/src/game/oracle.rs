//! Brute-force attacker: evaluates the model on a grid of the ball around a
//! point and keeps the best regularized value. Only used to check the
//! closed forms.

use serde::{Deserialize, Serialize};

use super::GameConfig;
use crate::distributions::{integrate, DistributionSpec, Grid, Label};
use crate::error::{Error, Result};
use crate::hypotheses::{Classifier, ErrorProfile};

/// Grid resolution: `2·per_side + 1` points per axis across the ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleGrid {
    pub per_side: usize,
}

impl Default for OracleGrid {
    fn default() -> Self {
        OracleGrid { per_side: 32 }
    }
}

/// Offsets inside the ball, sorted by norm and then lexicographically, so
/// the first best candidate found is the preferred one on ties.
pub(crate) struct BallGrid {
    offsets: Vec<Vec<f64>>,
    costs: Vec<f64>,
}

impl BallGrid {
    pub(crate) fn new(d: usize, cfg: &GameConfig, grid: &OracleGrid) -> Result<Self> {
        let k = grid.per_side.max(1) as i64;
        let h = cfg.epsilon / k as f64;
        let mut offsets: Vec<(f64, Vec<f64>)> = match d {
            1 => (-k..=k).map(|i| vec![i as f64 * h]).map(|v| (cfg.norm_kind.norm(&v), v)).collect(),
            2 => {
                let mut out = Vec::new();
                for i in -k..=k {
                    for j in -k..=k {
                        let v = vec![i as f64 * h, j as f64 * h];
                        let n = cfg.norm_kind.norm(&v);
                        if n <= cfg.epsilon * (1.0 + 1e-12) {
                            out.push((n, v));
                        }
                    }
                }
                out
            }
            _ => return Err(Error::UnsupportedDimension(d)),
        };
        offsets.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| cmp_lex(&a.1, &b.1)));
        let costs = offsets.iter().map(|(n, _)| cfg.cost(*n)).collect();
        Ok(BallGrid { offsets: offsets.into_iter().map(|(_, v)| v).collect(), costs })
    }

    /// Best `(z, value)` for the error function `err`.
    pub(crate) fn search(&self, x: &[f64], lambda: f64, mut err: impl FnMut(&[f64]) -> Result<f64>) -> Result<(Vec<f64>, f64)> {
        let mut z = x.to_vec();
        let mut best: Option<(usize, f64)> = None;
        for (i, (off, cost)) in self.offsets.iter().zip(&self.costs).enumerate() {
            for ((zi, xi), oi) in z.iter_mut().zip(x).zip(off) {
                *zi = xi + oi;
            }
            let v = err(&z)? - lambda * cost;
            if best.is_none_or(|(_, b)| v > b + 1e-12) {
                best = Some((i, v));
            }
        }
        let (i, v) = best.expect("ball grid contains the centre");
        Ok((x.iter().zip(&self.offsets[i]).map(|(a, b)| a + b).collect(), v))
    }
}

fn cmp_lex(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
}

/// Grid argmax of `err(z) − λ·cost(‖z − x‖)` over the ball around `x`.
/// Ties go to the smaller perturbation, then the lexicographically smaller
/// point.
pub fn pointwise_attack_oracle<C: Classifier + ?Sized>(
    model: &C,
    x: &[f64],
    label: Label,
    cfg: &GameConfig,
    grid: &OracleGrid,
) -> Result<Vec<f64>> {
    Ok(oracle_point_value(model, x, label, cfg, grid)?.0)
}

/// The oracle's point and its regularized value.
pub fn oracle_point_value<C: Classifier + ?Sized>(
    model: &C,
    x: &[f64],
    label: Label,
    cfg: &GameConfig,
    grid: &OracleGrid,
) -> Result<(Vec<f64>, f64)> {
    if let Some(d) = model.dimension() {
        crate::error::check_dim(d, x.len())?;
    }
    let ball = BallGrid::new(x.len(), cfg, grid)?;
    ball.search(x, cfg.lambda, |z| model.error_prob(z, label))
}

/// Regularized score of the oracle attack, `Σ_y ν_y ∫ value_y(x) dμ_y`, for
/// a 1-D model. The model's outputs are read from its exact profile, the
/// expectation is taken by quadrature with `quad` (panel edges added at
/// every model break and its translates by `±ε`).
pub fn oracle_score<C: Classifier + ?Sized>(
    model: &C,
    spec: &DistributionSpec,
    cfg: &GameConfig,
    grid: &OracleGrid,
    quad: &Grid,
) -> Result<f64> {
    if spec.dimension != 1 {
        return Err(Error::UnsupportedDimension(spec.dimension));
    }
    let window = super::score::profile_window(spec, cfg);
    let profile = model.profile_1d(window)?;
    let ball = BallGrid::new(1, cfg, grid)?;
    let mut breaks = Vec::new();
    for &b in &profile.breaks {
        breaks.extend([b - cfg.epsilon, b, b + cfg.epsilon]);
    }
    let quad = quad.clone().with_breaks(breaks);
    let mut total = 0.0;
    for label in [Label::Pos, Label::Neg] {
        let e: ErrorProfile = profile.error_profile(label);
        let failure = std::cell::RefCell::new(None);
        let v = integrate(
            |x| match ball.search(x, cfg.lambda, |z| Ok(e.at(z[0]))) {
                Ok((_, v)) => v,
                Err(err) => {
                    failure.borrow_mut().get_or_insert(err);
                    0.0
                }
            },
            spec,
            label,
            &quad,
        )?;
        if let Some(err) = failure.into_inner() {
            return Err(err);
        }
        total += spec.prior(label) * v;
    }
    Ok(total)
}
