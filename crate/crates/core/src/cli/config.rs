//! Experiment configuration: one JSON document covering every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attacks::{CwConfig, PgdConfig, CW_THRESHOLDS};
use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::game::{GameConfig, Penalty};
use crate::hypotheses::Hypothesis;
use crate::training::{AdversarialPreset, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Full-scale hyperparameters on the unit box.
    Paper,
    /// Scaled-down training on the toy plane.
    Desk,
}

/// Sample sizes drawn from `distribution` when no dataset is given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl Default for SampleSizes {
    fn default() -> Self {
        SampleSizes { train: 2000, validation: 500, test: 1000 }
    }
}

/// Subcommand parameters. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    /// Classifier for `risk`, `score`, `best-response` and `rand-gap`
    /// (Bayes, or `threshold(0, +)` for `rand-gap`, when absent).
    pub hypothesis: Option<Hypothesis>,
    pub rounds: usize,
    pub alpha_thm: Option<f64>,
    /// Margin δ of the norm-penalty construction, defaulting to ε/10.
    pub delta: Option<f64>,
    pub oracle_check: bool,
    pub fig1_range: (f64, f64),
    pub fig1_points: usize,
    pub arch: Vec<usize>,
    pub samples: SampleSizes,
    /// Train adversarially (otherwise naturally) in `train`.
    pub adversarial: bool,
    pub n_classifiers: usize,
    pub alpha_bat: f64,
    pub alpha_grid: Vec<f64>,
    pub epsilon2: Vec<f64>,
    /// Checkpoint for `evaluate` / `alpha-grid`: a network or a mixture.
    pub model: Option<PathBuf>,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            hypothesis: None,
            rounds: 5,
            alpha_thm: None,
            delta: None,
            oracle_check: true,
            fig1_range: (-4.0, 4.0),
            fig1_points: 801,
            arch: vec![2, 32, 32, 2],
            samples: SampleSizes::default(),
            adversarial: true,
            n_classifiers: 2,
            alpha_bat: 0.2,
            alpha_grid: vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3],
            epsilon2: CW_THRESHOLDS.to_vec(),
            model: None,
        }
    }
}

/// As read from disk; missing sections are filled by [`ExperimentConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub distribution: Option<DistributionSpec>,
    /// CSV of labeled points (`label,x0,x1,...`) used instead of sampling.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Game settings; both penalties with λ = 0.3, ε = 0.5 when absent.
    #[serde(default)]
    pub game: Option<Vec<GameConfig>>,
    #[serde(default)]
    pub pgd: Option<PgdConfig>,
    #[serde(default)]
    pub eval_pgd: Option<PgdConfig>,
    #[serde(default)]
    pub cw: Option<CwConfig>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub preset: Option<Preset>,
    #[serde(default)]
    pub params: Params,
}

/// Fully specified configuration, the one echoed and hashed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resolved {
    pub distribution: DistributionSpec,
    pub dataset: Option<PathBuf>,
    pub game: Vec<GameConfig>,
    pub pgd: PgdConfig,
    pub eval_pgd: PgdConfig,
    pub cw: CwConfig,
    pub train: TrainConfig,
    pub seed: u64,
    pub preset: Preset,
    pub params: Params,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Fill defaults for `command`, apply overrides and validate everything.
    pub fn resolve(&self, command: &str, seed: Option<u64>, preset: Option<Preset>) -> Result<Resolved> {
        let preset = preset.or(self.preset).unwrap_or(Preset::Desk);
        let cli_seed = seed.is_some();
        let seed = seed.or(self.seed).unwrap_or(0);
        let game_command = matches!(command, "risk" | "score" | "best-response" | "no-nash" | "rand-gap" | "fig1");
        let distribution = match &self.distribution {
            Some(d) => d.clone(),
            None if game_command => DistributionSpec::symmetric_1d(),
            None => DistributionSpec::xor_2d(0.25),
        };
        let game = match &self.game {
            Some(g) if g.is_empty() => return Err(Error::Config("game list is empty".into())),
            Some(g) => g.clone(),
            None => vec![GameConfig::new(Penalty::Mass, 0.3, 0.5)?, GameConfig::new(Penalty::Norm, 0.3, 0.5)?],
        };
        let (at, train, cw) = match preset {
            Preset::Paper => (AdversarialPreset::at_paper(), TrainConfig::paper(), CwConfig::paper()),
            Preset::Desk => (AdversarialPreset::at_desk(), TrainConfig::desk(), CwConfig { domain: (-5.0, 5.0), ..CwConfig::paper() }),
        };
        // --seed reseeds everything; the file's seed only the sections it leaves out
        let reseed = |given: bool| cli_seed || !given;
        let mut r = Resolved {
            distribution,
            dataset: self.dataset.clone(),
            game,
            pgd: self.pgd.unwrap_or(at.train),
            eval_pgd: self.eval_pgd.unwrap_or(at.eval),
            cw: self.cw.unwrap_or(cw),
            train: self.train.clone().unwrap_or(train),
            seed,
            preset,
            params: self.params.clone(),
        };
        if reseed(self.pgd.is_some()) {
            r.pgd.seed = seed;
        }
        if reseed(self.eval_pgd.is_some()) {
            r.eval_pgd.seed = seed;
        }
        if reseed(self.cw.is_some()) {
            r.cw.seed = seed;
        }
        if reseed(self.train.is_some()) {
            r.train.seed = seed;
        }
        r.validate()?;
        Ok(r)
    }
}

impl Resolved {
    pub fn validate(&self) -> Result<()> {
        self.distribution.validate()?;
        for g in &self.game {
            g.validate()?;
        }
        self.pgd.validate()?;
        self.eval_pgd.validate()?;
        self.cw.validate()?;
        self.train.validate()?;
        let p = &self.params;
        if p.rounds == 0 {
            return Err(Error::Config("params.rounds must be >= 1".into()));
        }
        if p.fig1_points < 2 || !(p.fig1_range.0 < p.fig1_range.1) {
            return Err(Error::Config("params.fig1_range must be nonempty with at least 2 points".into()));
        }
        if p.n_classifiers < 2 {
            return Err(Error::Config(format!("params.n_classifiers must be >= 2, got {}", p.n_classifiers)));
        }
        if !(0.0..=1.0).contains(&p.alpha_bat) {
            return Err(Error::OutOfRange { name: "alpha_bat", value: p.alpha_bat, lo: 0.0, hi: 1.0 });
        }
        if p.alpha_grid.is_empty() || p.alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Config("params.alpha_grid must be a nonempty list in [0, 1]".into()));
        }
        if p.epsilon2.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::Config("params.epsilon2 thresholds must be >= 0".into()));
        }
        if p.samples.train == 0 || p.samples.test == 0 {
            return Err(Error::Config("params.samples.train and .test must be >= 1".into()));
        }
        if let Some(d) = p.delta {
            if !(d > 0.0) {
                return Err(Error::Config(format!("params.delta must be > 0, got {d}")));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of the resolved configuration.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
