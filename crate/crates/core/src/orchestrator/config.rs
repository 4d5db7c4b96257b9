//! Run configuration, phase toggles and the ablation presets.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{QualityWeights, DEFAULT_THETA, MIN_PROMPT_BUDGET};
use crate::retrieval::RetrievalConfig;

const PRESETS_JSON: &str = include_str!("../../data/presets.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitMode {
    /// Each task commits as soon as it finishes.
    Immediate,
    /// Commits are buffered and applied in task order after every epoch, so
    /// results do not depend on worker scheduling.
    EpochBoundary,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeTier {
    #[default]
    Standard,
    Strong,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("max_iterations must be at least 1")]
    NoIterations,
    #[error("parallelism must be at least 1")]
    NoWorkers,
    #[error("quality weights must be non-negative and sum to 1")]
    Weights,
    #[error("theta must lie in [0, 1]")]
    Theta,
    #[error("prompt budget must be at least {MIN_PROMPT_BUDGET}")]
    PromptBudget,
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrgiiConfig {
    pub enable_planning: bool,
    pub enable_retrieval: bool,
    pub enable_iteration: bool,
    pub enable_ingest: bool,
    pub enable_judge: bool,
    pub generate_tests: bool,
    pub judge: JudgeTier,
    pub max_iterations: u32,
    pub quality_weights: QualityWeights,
    pub theta: f64,
    pub retrieval: RetrievalConfig,
    pub parallelism: usize,
    pub commit_mode: CommitMode,
    /// Character budget for each compressed example.
    pub prompt_budget: usize,
}

impl Default for PrgiiConfig {
    fn default() -> Self {
        Self {
            enable_planning: true,
            enable_retrieval: true,
            enable_iteration: true,
            enable_ingest: true,
            enable_judge: true,
            generate_tests: true,
            judge: JudgeTier::Standard,
            max_iterations: 3,
            quality_weights: QualityWeights::default(),
            theta: DEFAULT_THETA,
            retrieval: RetrievalConfig::default(),
            parallelism: 1,
            commit_mode: CommitMode::EpochBoundary,
            prompt_budget: 1200,
        }
    }
}

impl PrgiiConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_iterations == 0 {
            return Err(ConfigError::NoIterations);
        }
        if self.parallelism == 0 {
            return Err(ConfigError::NoWorkers);
        }
        if !self.quality_weights.is_valid() {
            return Err(ConfigError::Weights);
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(ConfigError::Theta);
        }
        if self.prompt_budget < MIN_PROMPT_BUDGET {
            return Err(ConfigError::PromptBudget);
        }
        Ok(())
    }

    /// Iteration budget actually used: one attempt when iteration is off.
    pub fn effective_iterations(&self) -> u32 {
        if self.enable_iteration {
            self.max_iterations
        } else {
            1
        }
    }

    /// Whether a run under this config reads or writes memory at all.
    pub fn uses_memory(&self) -> bool {
        self.enable_retrieval || self.enable_ingest
    }
}

/// Ablation matrix entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Preset {
    A0,
    A1,
    A2,
    A3,
    R1,
    EG1,
    EG2,
    A5,
}

#[derive(Clone, Copy, Debug, Deserialize)]
struct PresetToggles {
    planning: bool,
    retrieval: bool,
    iteration: bool,
    ingest: bool,
    judge: bool,
    semantic: bool,
    structural: bool,
    graph: bool,
    strong_judge: bool,
}

fn preset_table() -> &'static BTreeMap<String, PresetToggles> {
    static TABLE: OnceLock<BTreeMap<String, PresetToggles>> = OnceLock::new();
    TABLE.get_or_init(|| serde_json::from_str(PRESETS_JSON).expect("bundled preset table parses"))
}

impl Preset {
    pub const ALL: [Preset; 8] =
        [Preset::A0, Preset::A1, Preset::A2, Preset::A3, Preset::R1, Preset::EG1, Preset::EG2, Preset::A5];

    pub fn name(self) -> &'static str {
        match self {
            Preset::A0 => "A0",
            Preset::A1 => "A1",
            Preset::A2 => "A2",
            Preset::A3 => "A3",
            Preset::R1 => "R1",
            Preset::EG1 => "EG1",
            Preset::EG2 => "EG2",
            Preset::A5 => "A5",
        }
    }

    pub fn config(self) -> PrgiiConfig {
        let t = preset_table()[self.name()];
        let mut cfg = PrgiiConfig {
            enable_planning: t.planning,
            enable_retrieval: t.retrieval,
            enable_iteration: t.iteration,
            enable_ingest: t.ingest,
            enable_judge: t.judge,
            judge: if t.strong_judge { JudgeTier::Strong } else { JudgeTier::Standard },
            ..PrgiiConfig::default()
        };
        cfg.retrieval.enable_semantic = t.semantic;
        cfg.retrieval.enable_structural = t.structural;
        cfg.retrieval.enable_graph = t.graph;
        cfg
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ConfigError::UnknownPreset(s.to_string()))
    }
}
