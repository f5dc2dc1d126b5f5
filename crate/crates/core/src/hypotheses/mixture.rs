use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Classifier, Hypothesis, OutputDistribution, Profile1d};
use crate::distributions::sample_rng;
use crate::error::{Error, Result};

/// Prediction by drawing `h_i` with probability `q_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixedClassifier {
    pub weights: Vec<f64>,
    pub hypotheses: Vec<Hypothesis>,
}

impl MixedClassifier {
    pub fn new(hypotheses: Vec<Hypothesis>, weights: Vec<f64>) -> Result<Self> {
        let m = MixedClassifier { weights, hypotheses };
        m.validate()?;
        Ok(m)
    }

    pub fn single(h: Hypothesis) -> Self {
        MixedClassifier { weights: vec![1.0], hypotheses: vec![h] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hypotheses.is_empty() {
            return Err(Error::InvalidInput("mixture needs at least one hypothesis".into()));
        }
        if self.weights.len() != self.hypotheses.len() {
            return Err(Error::InvalidInput(format!(
                "{} weights for {} hypotheses",
                self.weights.len(),
                self.hypotheses.len()
            )));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidInput("mixture weights must be nonnegative".into()));
        }
        let s: f64 = self.weights.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("mixture weights sum to {s}, expected 1")));
        }
        let d = self.hypotheses[0].dimension();
        if self.hypotheses.iter().any(|h| h.dimension() != d) {
            return Err(Error::InvalidInput("mixture components have different dimensions".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    /// `m(x)(y) = Σ q_i 1{h_i(x) = y}`, with the abstention mass separate.
    pub fn mixture_distribution(&self, x: &[f64]) -> Result<OutputDistribution> {
        let mut acc = OutputDistribution::default();
        for (h, &q) in self.hypotheses.iter().zip(&self.weights) {
            if q == 0.0 {
                continue;
            }
            acc = acc.add_scaled(&OutputDistribution::deterministic(h.predict(x)?), q);
        }
        Ok(acc)
    }

    /// Index drawn from `q` with the per-sample stream `(seed, index)`.
    pub fn sample_index(&self, seed: u64, index: u64) -> usize {
        let u: f64 = sample_rng(seed, index).random();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
        last
    }

    pub fn mixture_sample(&self, x: &[f64], seed: u64, index: u64) -> Result<i8> {
        self.hypotheses[self.sample_index(seed, index)].predict(x)
    }
}

impl Classifier for MixedClassifier {
    fn dimension(&self) -> Option<usize> {
        self.hypotheses[0].dimension()
    }

    fn output_distribution(&self, x: &[f64]) -> Result<OutputDistribution> {
        self.mixture_distribution(x)
    }

    fn profile_1d(&self, window: (f64, f64)) -> Result<Profile1d> {
        let profiles = self.hypotheses.iter().map(|h| h.profile_1d(window)).collect::<Result<Vec<_>>>()?;
        Ok(Profile1d::mixture(&profiles, &self.weights))
    }

    fn linear_form(&self) -> Option<(Vec<f64>, f64)> {
        let mut active = self.hypotheses.iter().zip(&self.weights).filter(|(_, w)| **w > 0.0);
        let (h, _) = active.next()?;
        let form = h.linear_form()?;
        active.all(|(g, _)| g.linear_form().as_ref() == Some(&form)).then_some(form)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Label;
    use crate::hypotheses::Orientation;

    fn pair(q: f64) -> MixedClassifier {
        MixedClassifier::new(
            vec![Hypothesis::threshold(0.0, Orientation::Pos), Hypothesis::threshold(0.0, Orientation::Neg)],
            vec![q, 1.0 - q],
        )
        .unwrap()
    }

    #[test]
    fn distribution_follows_weights() {
        let d = pair(0.7).mixture_distribution(&[1.0]).unwrap();
        assert!((d.pos - 0.7).abs() < 1e-15 && (d.neg - 0.3).abs() < 1e-15);
        let d = pair(0.7).mixture_distribution(&[0.0]).unwrap();
        assert_eq!(d.abstain, 1.0);
        let s = MixedClassifier::single(Hypothesis::threshold(0.0, Orientation::Pos));
        assert_eq!(s.mixture_distribution(&[-1.0]).unwrap().neg, 1.0);
    }

    #[test]
    fn unanimous_components_give_point_mass() {
        let h = Hypothesis::threshold(0.0, Orientation::Pos);
        let m = MixedClassifier::new(vec![h.clone(), h], vec![0.2, 0.8]).unwrap();
        assert_eq!(m.mixture_distribution(&[2.0]).unwrap().pos, 1.0);
    }

    #[test]
    fn invalid_weights_rejected() {
        let h = Hypothesis::threshold(0.0, Orientation::Pos);
        assert!(MixedClassifier::new(vec![h.clone(), h.clone()], vec![0.5, 0.6]).is_err());
        assert!(MixedClassifier::new(vec![h.clone()], vec![0.5, 0.5]).is_err());
        assert!(MixedClassifier::new(vec![h.clone(), h], vec![1.5, -0.5]).is_err());
        assert!(MixedClassifier::new(vec![], vec![]).is_err());
    }

    #[test]
    fn sampling_frequency_and_determinism() {
        let m = pair(0.7);
        let n = 100_000;
        let pos = (0..n).filter(|&i| m.mixture_sample(&[1.0], 5, i).unwrap() == 1).count() as f64 / n as f64;
        assert!((pos - 0.7).abs() < 5.0 / (n as f64).sqrt(), "{pos}");
        assert_eq!(m.mixture_sample(&[1.0], 5, 17).unwrap(), m.mixture_sample(&[1.0], 5, 17).unwrap());
        let degenerate = pair(1.0);
        assert!((0..1000).all(|i| degenerate.mixture_sample(&[1.0], 1, i).unwrap() == 1));
    }

    #[test]
    fn complementary_mixture_has_half_error() {
        let p = pair(0.5).profile_1d((-1.0, 1.0)).unwrap();
        for x in [-3.0, -0.1, 0.1, 3.0] {
            assert_eq!(p.at(x).error(Label::Pos), 0.5);
            assert_eq!(p.at(x).error(Label::Neg), 0.5);
        }
    }
}
