//! Densities of the class conditionals before and after the best-response
//! attacks on the Bayes classifier, one panel per penalty.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::best_response::{best_response_attack, transported_1d};
use super::{GameConfig, Penalty};
use crate::distributions::{density_unchecked, DistributionSpec, Label};
use crate::error::{Error, Result};
use crate::hypotheses::Hypothesis;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig1Panel {
    pub name: String,
    pub mu_neg: Vec<f64>,
    pub mu_pos: Vec<f64>,
    /// `(label, location, mass)`.
    pub atoms: Vec<(i8, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig1Data {
    pub x: Vec<f64>,
    pub panels: Vec<Fig1Panel>,
}

/// Panels `original`, `none`, `mass`, `norm` on `points` equally spaced
/// abscissae over `[lo, hi]`.
pub fn fig1_data(spec: &DistributionSpec, lambda: f64, epsilon: f64, range: (f64, f64), points: usize) -> Result<Fig1Data> {
    if spec.dimension != 1 {
        return Err(Error::UnsupportedDimension(spec.dimension));
    }
    if points < 2 || !(range.1 > range.0) {
        return Err(Error::InvalidInput("need at least two points on a nonempty range".into()));
    }
    let x: Vec<f64> = (0..points).map(|i| range.0 + (range.1 - range.0) * i as f64 / (points - 1) as f64).collect();
    let mut panels = vec![Fig1Panel {
        name: "original".into(),
        mu_neg: x.iter().map(|&v| density_unchecked(spec, Label::Neg, &[v])).collect(),
        mu_pos: x.iter().map(|&v| density_unchecked(spec, Label::Pos, &[v])).collect(),
        atoms: Vec::new(),
    }];
    let bayes = Hypothesis::Bayes { spec: spec.clone() };
    for (name, penalty) in [("none", Penalty::None), ("mass", Penalty::Mass), ("norm", Penalty::Norm)] {
        let cfg = GameConfig::new(penalty, lambda, epsilon)?;
        let phi = best_response_attack(&bayes, spec, &cfg)?;
        let t = transported_1d(spec, &phi)?;
        let mut atoms = Vec::new();
        for label in [Label::Neg, Label::Pos] {
            atoms.extend(t.atoms(label).iter().map(|&(z, m)| (label.sign(), z, m)));
        }
        panels.push(Fig1Panel {
            name: name.into(),
            mu_neg: x.iter().map(|&v| t.density(spec, Label::Neg, v)).collect(),
            mu_pos: x.iter().map(|&v| t.density(spec, Label::Pos, v)).collect(),
            atoms,
        });
    }
    Ok(Fig1Data { x, panels })
}

/// Writes `fig1_<panel>.csv` (columns `x,mu_neg,mu_pos`) per panel and
/// `fig1_atoms.csv` (columns `panel,label,x,mass`). Returns the paths.
pub fn write_fig1_csv(data: &Fig1Data, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for panel in &data.panels {
        let path = dir.join(format!("fig1_{}.csv", panel.name));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["x", "mu_neg", "mu_pos"])?;
        for ((x, n), p) in data.x.iter().zip(&panel.mu_neg).zip(&panel.mu_pos) {
            w.write_record([x.to_string(), n.to_string(), p.to_string()])?;
        }
        w.flush()?;
        paths.push(path);
    }
    let path = dir.join("fig1_atoms.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["panel", "label", "x", "mass"])?;
    for panel in &data.panels {
        for (label, z, m) in &panel.atoms {
            w.write_record([panel.name.clone(), label.to_string(), z.to_string(), m.to_string()])?;
        }
    }
    w.flush()?;
    paths.push(path);
    Ok(paths)
}
