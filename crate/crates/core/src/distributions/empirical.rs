use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DistributionSpec, Label};
use crate::error::{check_dim, Error, Result};

/// Tolerance added to the budget when checking transported points.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub point: Vec<f64>,
    pub label: Label,
}

/// Finite labeled sample together with the seed that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub samples: Vec<LabeledSample>,
    pub seed: u64,
    pub dimension: usize,
}

/// Anything that transports labeled points under a budget.
pub trait Transport {
    fn transport(&self, x: &[f64], label: Label) -> Result<Vec<f64>>;
    fn budget(&self) -> f64;
    /// Distance used for the budget check.
    fn distance(&self, a: &[f64], b: &[f64]) -> f64;
}

/// Per-sample generator: stream `index` of a ChaCha8 generator seeded with
/// `seed`, so draws do not depend on evaluation order.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn pick(weights: impl Iterator<Item = f64>, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Draw one point from the class conditional using `rng`.
pub(crate) fn draw_point<R: Rng>(spec: &DistributionSpec, label: Label, rng: &mut R) -> Vec<f64> {
    let comps = spec.components(label);
    let c = &comps[pick(comps.iter().map(|c| c.weight), rng.random::<f64>())];
    c.mean
        .iter()
        .zip(&c.var)
        .map(|(m, v)| {
            let z: f64 = rng.sample(StandardNormal);
            m + v.sqrt() * z
        })
        .collect()
}

/// `n` i.i.d. labeled draws from the spec, deterministic in `seed`.
pub fn sample_labeled(spec: &DistributionSpec, n: usize, seed: u64) -> Result<EmpiricalMeasure> {
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be at least 1".into()));
    }
    let samples = (0..n as u64)
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let label = if rng.random::<f64>() < spec.prior_pos { Label::Pos } else { Label::Neg };
            LabeledSample { point: draw_point(spec, label, &mut rng), label }
        })
        .collect();
    Ok(EmpiricalMeasure { samples, seed, dimension: spec.dimension })
}

/// Replace every point by its image under the transport; labels and order
/// are kept.
pub fn pushforward_empirical<T: Transport + ?Sized>(measure: &EmpiricalMeasure, attack: &T) -> Result<EmpiricalMeasure> {
    let budget = attack.budget();
    let samples = measure
        .samples
        .iter()
        .map(|s| {
            let z = attack.transport(&s.point, s.label)?;
            check_dim(s.point.len(), z.len())?;
            let distance = attack.distance(&s.point, &z);
            if distance > budget + BUDGET_TOLERANCE {
                return Err(Error::BudgetViolation { distance, budget });
            }
            Ok(LabeledSample { point: z, label: s.label })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EmpiricalMeasure { samples, seed: measure.seed, dimension: measure.dimension })
}

impl EmpiricalMeasure {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn from_samples(samples: Vec<LabeledSample>, seed: u64) -> Result<Self> {
        let dimension = samples.first().map(|s| s.point.len()).ok_or_else(|| Error::InvalidInput("empty sample".into()))?;
        for s in &samples {
            check_dim(dimension, s.point.len())?;
        }
        Ok(EmpiricalMeasure { samples, seed, dimension })
    }

    /// Split into the first `n` samples and the rest.
    pub fn split_at(&self, n: usize) -> (EmpiricalMeasure, EmpiricalMeasure) {
        let n = n.min(self.samples.len());
        let head = EmpiricalMeasure { samples: self.samples[..n].to_vec(), seed: self.seed, dimension: self.dimension };
        let tail = EmpiricalMeasure { samples: self.samples[n..].to_vec(), seed: self.seed, dimension: self.dimension };
        (head, tail)
    }

    /// CSV with header `x0,...,x{d-1},label`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.dimension).map(|i| format!("x{i}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for s in &self.samples {
            let mut row: Vec<String> = s.point.iter().map(|v| format!("{v:?}")).collect();
            row.push(s.label.sign().to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(reader: R, seed: u64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let d = header.len().checked_sub(1).filter(|d| *d > 0).ok_or_else(|| Error::InvalidInput("csv needs x columns and a label".into()))?;
        for (i, h) in header.iter().enumerate() {
            let expected = if i == d { "label".to_string() } else { format!("x{i}") };
            if h != expected {
                return Err(Error::InvalidInput(format!("unexpected csv column '{h}', expected '{expected}'")));
            }
        }
        let mut samples = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::InvalidInput(format!("bad number '{s}': {e}")));
            let point = (0..d).map(|i| parse(&rec[i])).collect::<Result<Vec<_>>>()?;
            let label = Label::from_sign(parse(&rec[d])? as i64)?;
            samples.push(LabeledSample { point, label });
        }
        Self::from_samples(samples, seed)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load_csv(path: &Path, seed: u64) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, seed)
    }
}
