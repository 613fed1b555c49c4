use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::ReportOptions;
use crate::error::{Error, Result};
use crate::nn::{ArchitectureName, InitScheme};
use crate::pruning::{Direction, Method, PruneConfig, Ranking};
use crate::train::TrainConfig;
use crate::treatments::Treatment;

/// Seeds split by role. Reinit and shuffle runs share `init` and `score`
/// with their control, so they see the same weights and score batches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SeedTuple {
    pub init: u64,
    pub treat: u64,
    pub score: u64,
    pub data: u64,
}

impl SeedTuple {
    /// `init = n`, `treat = n + 1000`, `score = n + 2000`, `data = n + 3000`.
    pub fn from_base(n: u64) -> Self {
        Self {
            init: n,
            treat: n + 1000,
            score: n + 2000,
            data: n + 3000,
        }
    }
}

/// A bare integer expands with [`SeedTuple::from_base`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    Base(u64),
    Explicit(SeedTuple),
}

impl SeedSpec {
    pub fn resolve(self) -> SeedTuple {
        match self {
            SeedSpec::Base(n) => SeedTuple::from_base(n),
            SeedSpec::Explicit(t) => t,
        }
    }
}

/// When weights are compared.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    /// After pruning, before any training step.
    #[default]
    Init,
    /// After training both the control and the treated network.
    PostTrain,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Init => "init",
            Stage::PostTrain => "post-train",
        })
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "init" => Ok(Self::Init),
            "post-train" => Ok(Self::PostTrain),
            other => Err(Error::InvalidArgument(format!("unknown stage {other:?}"))),
        }
    }
}

/// Scoring knobs shared by every cell of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    pub batch_size: usize,
    pub batch_count: usize,
    pub synflow_rounds: usize,
    pub ranking: Ranking,
    pub graspabs_direction: Direction,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        let p = PruneConfig::default();
        Self {
            batch_size: p.score_batch_size,
            batch_count: p.score_batch_count,
            synflow_rounds: p.synflow_rounds,
            ranking: p.ranking,
            graspabs_direction: p.graspabs_direction,
        }
    }
}

impl ScoringConfig {
    pub fn prune_config(&self, method: Method, sparsity: f64, seed: u64) -> PruneConfig {
        PruneConfig {
            method,
            sparsity,
            score_batch_size: self.batch_size,
            score_batch_count: self.batch_count,
            synflow_rounds: self.synflow_rounds,
            seed,
            ranking: self.ranking,
            graspabs_direction: self.graspabs_direction,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: ArchitectureName,
    pub init: InitScheme,
    /// Root holding `mnist/` and `cifar-10-batches-bin/`.
    pub data_dir: PathBuf,
    pub methods: Vec<Method>,
    pub treatments: Vec<Treatment>,
    pub sparsities: Vec<f64>,
    pub seeds: Vec<SeedSpec>,
    pub scoring: ScoringConfig,
    pub train: bool,
    pub training: TrainConfig,
    /// Use only this many training examples (drawn with the data seed).
    pub subset: Option<usize>,
    pub stage: Stage,
    pub report: ReportOptions,
    pub out: PathBuf,
    pub snapshots: bool,
    pub plots: bool,
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            network: ArchitectureName::Lenet300_100,
            init: InitScheme::KaimingNormal,
            data_dir: PathBuf::from("data"),
            methods: Method::SCORED.to_vec(),
            treatments: vec![Treatment::Reinit, Treatment::LayerwiseShuffle, Treatment::RandomPruning],
            sparsities: vec![0.2, 0.5, 0.8, 0.9, 0.95, 0.98],
            seeds: vec![SeedSpec::Base(0)],
            scoring: ScoringConfig::default(),
            train: false,
            training: TrainConfig::default(),
            subset: None,
            stage: Stage::Init,
            report: ReportOptions::default(),
            out: PathBuf::from("results"),
            snapshots: false,
            plots: true,
            jobs: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn seed_tuples(&self) -> Vec<SeedTuple> {
        self.seeds.iter().map(|s| s.resolve()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.network == ArchitectureName::Custom {
            return Err(Error::InvalidArgument("sweeps need a named network".into()));
        }
        if self.methods.is_empty() || self.treatments.is_empty() || self.sparsities.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidArgument("methods, treatments, sparsities and seeds must be non-empty".into()));
        }
        if let Some(&s) = self.sparsities.iter().find(|s| !(0.0..1.0).contains(*s)) {
            return Err(Error::InvalidSparsity(s));
        }
        if self.stage == Stage::PostTrain && !self.train {
            return Err(Error::InvalidArgument("stage post-train requires training".into()));
        }
        if self.train {
            self.training.validate()?;
        }
        if self.subset == Some(0) {
            return Err(Error::InvalidArgument("subset must be at least 1".into()));
        }
        let tuples = self.seed_tuples();
        for (i, t) in tuples.iter().enumerate() {
            if tuples[..i].contains(t) {
                return Err(Error::InvalidArgument(format!("duplicate seed tuple {t:?}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_accept_both_forms() {
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"seeds": [3, {"init": 1, "treat": 2, "score": 3, "data": 4}]}"#).unwrap();
        assert_eq!(c.seed_tuples()[0], SeedTuple { init: 3, treat: 1003, score: 2003, data: 3003 });
        assert_eq!(c.seed_tuples()[1].data, 4);
    }

    #[test]
    fn round_trips_through_json() {
        let c = ExperimentConfig::default();
        let back: ExperimentConfig = serde_json::from_str(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"methodz": []}"#).is_err());
    }
}
