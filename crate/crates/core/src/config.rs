//! Experiment configuration as read from JSON.
//!
//! Every field must be present in the file; [`ExperimentConfig::resolve`]
//! validates it and applies the oracle overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Congregation,
    PredatorPrey,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Congregation => "congregation",
            Task::PredatorPrey => "predator_prey",
        }
    }
}

/// Which filtering system drives the cooperative agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    /// Heuristic policies on locally masked information with belief sharing.
    Decentralized,
    /// Heuristic policies, sensing over the whole map, no sharing.
    Oracle,
    /// Uniformly random controls on the decentralized filter.
    Random,
}

impl System {
    pub fn name(self) -> &'static str {
        match self {
            System::Decentralized => "decentralized",
            System::Oracle => "oracle",
            System::Random => "random",
        }
    }
}

/// How feature ids are laid out over the cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureLayout {
    /// Cell `k` (row-major) emits `k mod alphabet`.
    RoundRobin,
    /// The round-robin labels shuffled once per episode from the episode seed.
    Shuffled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Column name for this run in plot files.
    pub variant: String,
    pub task: Task,
    pub system: System,
    pub height: usize,
    pub width: usize,
    /// Cooperative agents (the predators in predator-prey).
    pub n_agents: usize,
    /// External entities; must be zero for congregation.
    pub n_prey: usize,
    /// Chebyshev sensing range in cells. Rewards always use this value.
    pub sensing_range: usize,
    pub feature_alphabet: u32,
    pub feature_layout: FeatureLayout,
    pub rounds: usize,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub separation_radius: usize,
    pub output_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("grid dimensions must be positive, got {0}x{1}")]
    EmptyGrid(usize, usize),
    #[error("at least one cooperative agent is required")]
    NoAgents,
    #[error("{entities} entities do not fit on {cells} cells")]
    Overcrowded { entities: usize, cells: usize },
    #[error("congregation takes no prey, got n_prey = {0}")]
    PreyInCongregation(usize),
    #[error("predator_prey needs at least one prey")]
    NoPrey,
    #[error("feature alphabet must be between 1 and the cell count {cells}, got {alphabet}")]
    Alphabet { alphabet: u32, cells: usize },
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("seed list is empty")]
    NoSeeds,
    #[error("seed {0} is listed twice")]
    DuplicateSeed(u64),
    #[error("variant name must be non-empty and free of commas and whitespace, got {0:?}")]
    VariantName(String),
    #[error("reading {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("parsing {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl ExperimentConfig {
    /// The standard setup: a 10×10 grid with four aliased features, five
    /// cooperative agents with sensing range 1, 30 steps and seeds 0..100.
    pub fn standard(task: Task, system: System, rounds: usize) -> Self {
        let variant = match system {
            System::Oracle => "oracle".to_owned(),
            s => format!("{}_r{rounds}", s.name()),
        };
        Self {
            output_path: PathBuf::from("runs").join(task.name()).join(&variant),
            variant,
            task,
            system,
            height: 10,
            width: 10,
            n_agents: 5,
            n_prey: match task {
                Task::Congregation => 0,
                Task::PredatorPrey => 1,
            },
            sensing_range: 1,
            feature_alphabet: 4,
            feature_layout: FeatureLayout::Shuffled,
            rounds: if system == System::Oracle { 0 } else { rounds },
            horizon: 30,
            seeds: (0..100).collect(),
            separation_radius: 1,
        }
    }

    /// The full grid of standard configs for both tasks: decentralized and
    /// random systems with 0, 1 and 5 rounds, plus the oracle.
    pub fn standard_grid() -> Vec<Self> {
        let mut out = Vec::new();
        for task in [Task::Congregation, Task::PredatorPrey] {
            for system in [System::Decentralized, System::Random] {
                for rounds in [0, 1, 5] {
                    out.push(Self::standard(task, system, rounds));
                }
            }
            out.push(Self::standard(task, System::Oracle, 0));
        }
        out
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn cells(&self) -> usize {
        self.height * self.width
    }

    /// Sensing range used for frames, indicator bits and sharing. The oracle
    /// senses the whole map; rewards keep using [`sensing_range`](Self::sensing_range).
    pub fn filter_sensing_range(&self) -> usize {
        match self.system {
            System::Oracle => self.height.max(self.width),
            _ => self.sensing_range,
        }
    }

    /// Checks every field and returns the config with overrides applied.
    pub fn resolve(&self) -> Result<Self, ConfigError> {
        if self.height == 0 || self.width == 0 {
            return Err(ConfigError::EmptyGrid(self.height, self.width));
        }
        if self.variant.is_empty()
            || self.variant.contains(',')
            || self.variant.chars().any(char::is_whitespace)
        {
            return Err(ConfigError::VariantName(self.variant.clone()));
        }
        if self.n_agents == 0 {
            return Err(ConfigError::NoAgents);
        }
        match self.task {
            Task::Congregation if self.n_prey != 0 => {
                return Err(ConfigError::PreyInCongregation(self.n_prey))
            }
            Task::PredatorPrey if self.n_prey == 0 => return Err(ConfigError::NoPrey),
            _ => {}
        }
        if self.n_agents + self.n_prey > self.cells() {
            return Err(ConfigError::Overcrowded {
                entities: self.n_agents + self.n_prey,
                cells: self.cells(),
            });
        }
        if self.feature_alphabet == 0 || self.feature_alphabet as usize > self.cells() {
            return Err(ConfigError::Alphabet {
                alphabet: self.feature_alphabet,
                cells: self.cells(),
            });
        }
        if self.horizon == 0 {
            return Err(ConfigError::EmptyHorizon);
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::NoSeeds);
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(ConfigError::DuplicateSeed(w[0]));
        }
        let mut resolved = self.clone();
        if resolved.system == System::Oracle {
            resolved.rounds = 0;
        }
        Ok(resolved)
    }
}
