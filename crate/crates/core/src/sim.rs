//! Ground-truth world stepping, locality masking and episode orchestration.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{w1_to_dirac, GridIndex};
use crate::config::{ExperimentConfig, FeatureLayout, System, Task};
use crate::error::EpisodeError;
use crate::filter::{
    share_beliefs_observed, BeliefBank, VisibleControls, VisibleObservations, Visibility,
};
use crate::policy::{congregation_action, predator_action, prey_action, random_action};
use crate::world::{within_sensing, Action, FeatureId, GridSpec, WorldModel};

/// Global positions of every entity. Cooperative agents come first in every
/// ordering, external entities after them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    grid: GridSpec,
    agents: Vec<GridIndex>,
    externals: Vec<GridIndex>,
    time: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorldError {
    #[error("position {0:?} is outside the grid")]
    OutOfBounds(GridIndex),
    #[error("two entities share cell {0:?}")]
    Collision(GridIndex),
}

impl WorldState {
    pub fn new(
        grid: GridSpec,
        agents: Vec<GridIndex>,
        externals: Vec<GridIndex>,
    ) -> Result<Self, WorldError> {
        let mut seen = std::collections::HashSet::new();
        for &p in agents.iter().chain(&externals) {
            if p.row >= grid.height() || p.col >= grid.width() {
                return Err(WorldError::OutOfBounds(p));
            }
            if !seen.insert(p) {
                return Err(WorldError::Collision(p));
            }
        }
        Ok(Self {
            grid,
            agents,
            externals,
            time: 0,
        })
    }

    /// Distinct cells drawn uniformly without replacement.
    pub fn random<R: Rng + ?Sized>(
        grid: GridSpec,
        n_agents: usize,
        n_externals: usize,
        rng: &mut R,
    ) -> Self {
        let cells: Vec<GridIndex> = sample(rng, grid.cells(), n_agents + n_externals)
            .into_iter()
            .map(|flat| grid.index(flat))
            .collect();
        let externals = cells[n_agents..].to_vec();
        let mut agents = cells;
        agents.truncate(n_agents);
        Self {
            grid,
            agents,
            externals,
            time: 0,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn agent_positions(&self) -> &[GridIndex] {
        &self.agents
    }

    pub fn external_positions(&self) -> &[GridIndex] {
        &self.externals
    }

    pub fn time(&self) -> usize {
        self.time
    }

    fn entities(&self) -> impl Iterator<Item = GridIndex> + '_ {
        self.agents.iter().chain(&self.externals).copied()
    }
}

/// Moves every entity in id order against the occupancy at the moment of its
/// move. Off-grid or blocked moves stay put and are recorded as `Stay`.
///
/// `intended` holds one action per agent followed by one per external entity.
/// Returns the new state and the executed actions in the same layout.
pub fn step_world(state: &WorldState, intended: &[Action]) -> (WorldState, Vec<Action>) {
    let n_agents = state.agents.len();
    assert_eq!(intended.len(), n_agents + state.externals.len());
    let mut positions: Vec<GridIndex> = state.entities().collect();
    let mut executed = Vec::with_capacity(positions.len());
    for (k, &action) in intended.iter().enumerate() {
        let from = positions[k];
        let done = match state.grid.displaced(from, action) {
            Some(to) if to != from && !positions.contains(&to) => {
                positions[k] = to;
                action
            }
            _ => Action::Stay,
        };
        executed.push(done);
    }
    let externals = positions.split_off(n_agents);
    let next = WorldState {
        grid: state.grid.clone(),
        agents: positions,
        externals,
        time: state.time + 1,
    };
    (next, executed)
}

/// Everything agent `owner` may learn in one step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalFrame {
    pub owner: usize,
    pub own_observation: FeatureId,
    pub controls: VisibleControls,
    pub observations: VisibleObservations,
    /// In-range cooperative agents, ascending, owner excluded.
    pub neighbors: Vec<usize>,
}

/// Masks the global step down to what `agent` can sense at range `range`.
/// External entities contribute a single indicator bit each and nothing else.
pub fn build_local_frame(
    state: &WorldState,
    agent: usize,
    executed: &[Action],
    range: usize,
) -> LocalFrame {
    let me = state.agents[agent];
    let n_agents = state.agents.len();
    let neighbors: Vec<usize> = (0..n_agents)
        .filter(|&j| j != agent && within_sensing(me, state.agents[j], range))
        .collect();
    let visible = |j: usize| j == agent || neighbors.binary_search(&j).is_ok();
    let controls = VisibleControls {
        agents: (0..n_agents)
            .map(|j| {
                if visible(j) {
                    Visibility::Seen(executed[j])
                } else {
                    Visibility::Masked
                }
            })
            .collect(),
        externals: vec![Visibility::Masked; state.externals.len()],
    };
    let observations = VisibleObservations {
        agents: (0..n_agents)
            .map(|j| {
                if visible(j) {
                    Visibility::Seen(state.grid.feature(state.agents[j]))
                } else {
                    Visibility::Masked
                }
            })
            .collect(),
        indicators: state
            .externals
            .iter()
            .map(|&e| within_sensing(me, e, range))
            .collect(),
    };
    LocalFrame {
        owner: agent,
        own_observation: state.grid.feature(me),
        controls,
        observations,
        neighbors,
    }
}

/// Number of ordered agent pairs within sensing range of each other.
pub fn reward_congregation(state: &WorldState, range: usize) -> u64 {
    let a = &state.agents;
    (0..a.len())
        .flat_map(|i| (0..a.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && within_sensing(a[i], a[j], range))
        .count() as u64
}

/// Number of predators with at least one prey within sensing range.
pub fn reward_predator_prey(state: &WorldState, range: usize) -> u64 {
    state
        .agents
        .iter()
        .filter(|&&p| state.externals.iter().any(|&e| within_sensing(p, e, range)))
        .count() as u64
}

/// Metrics after one step of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub seed: u64,
    pub t: usize,
    pub step_reward: u64,
    pub cumulative_reward: u64,
    /// Sum over every (owner, agent) belief of its W1 distance to the agent's true cell.
    pub total_w1: f64,
    /// Same sum over prey beliefs; `None` for congregation.
    pub prey_w1: Option<f64>,
}

/// Filter phases of a step, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Control,
    Observation,
    Sharing,
}

/// Hooks into a running episode. Every method defaults to doing nothing.
pub trait EpisodeObserver {
    fn on_frames(&mut self, _t: usize, _state: &WorldState, _frames: &[LocalFrame]) {}
    fn on_phase(&mut self, _t: usize, _phase: Phase, _state: &WorldState, _banks: &[BeliefBank]) {}
    fn on_share_round(
        &mut self,
        _t: usize,
        _round: usize,
        _before: &[BeliefBank],
        _after: &[BeliefBank],
    ) {
    }
}

impl EpisodeObserver for () {}

// Independent random streams of one episode.
const PLACEMENT_STREAM: u64 = 0;
const POLICY_STREAM: u64 = 1;
const LAYOUT_STREAM: u64 = 2;

fn episode_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One seeded run of a resolved config.
pub struct Episode {
    config: ExperimentConfig,
    seed: u64,
    model: WorldModel,
    state: WorldState,
    banks: Vec<BeliefBank>,
    rng: ChaCha8Rng,
    cumulative: u64,
}

impl Episode {
    pub fn new(config: &ExperimentConfig, seed: u64) -> Self {
        let (h, w, f) = (config.height, config.width, config.feature_alphabet);
        let grid = match config.feature_layout {
            FeatureLayout::RoundRobin => GridSpec::round_robin(h, w, f),
            FeatureLayout::Shuffled => GridSpec::shuffled(h, w, f, &mut episode_rng(seed, LAYOUT_STREAM)),
        }
        .expect("config was resolved");
        let state = WorldState::random(
            grid.clone(),
            config.n_agents,
            config.n_prey,
            &mut episode_rng(seed, PLACEMENT_STREAM),
        );
        Self::with_state(config, seed, state)
    }

    /// Starts from an explicit initial state instead of a random placement.
    pub fn with_state(config: &ExperimentConfig, seed: u64, state: WorldState) -> Self {
        let model = WorldModel::new(state.grid().clone(), config.filter_sensing_range());
        let banks = (0..config.n_agents)
            .map(|i| BeliefBank::uniform(i, config.n_agents, config.n_prey, config.cells()))
            .collect();
        Self {
            config: config.clone(),
            seed,
            model,
            state,
            banks,
            rng: episode_rng(seed, POLICY_STREAM),
            cumulative: 0,
        }
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn banks(&self) -> &[BeliefBank] {
        &self.banks
    }

    pub fn model(&self) -> &WorldModel {
        &self.model
    }

    fn intended_actions(&mut self) -> Vec<Action> {
        let width = self.config.width;
        let mut actions = Vec::with_capacity(self.config.n_agents + self.config.n_prey);
        for bank in &self.banks {
            let a = match (self.config.system, self.config.task) {
                (System::Random, _) => random_action(&mut self.rng),
                (_, Task::Congregation) => congregation_action(bank, width, &mut self.rng),
                (_, Task::PredatorPrey) => predator_action(
                    bank,
                    bank.owner() % self.config.n_prey,
                    self.config.separation_radius,
                    width,
                    &mut self.rng,
                ),
            };
            actions.push(a);
        }
        for e in 0..self.config.n_prey {
            actions.push(prey_action(&self.state, e));
        }
        actions
    }

    /// Advances one step: act, move, mask, filter, share, score.
    ///
    /// With `sharing` false the sharing phase is skipped entirely.
    pub fn step<O: EpisodeObserver + ?Sized>(
        &mut self,
        sharing: bool,
        observer: &mut O,
    ) -> Result<MetricsRecord, EpisodeError> {
        let intended = self.intended_actions();
        let (next, executed) = step_world(&self.state, &intended);
        self.state = next;
        let t = self.state.time();
        let range = self.model.sensing_range();
        let frames: Vec<LocalFrame> = (0..self.config.n_agents)
            .map(|i| build_local_frame(&self.state, i, &executed, range))
            .collect();
        observer.on_frames(t, &self.state, &frames);

        for (bank, frame) in self.banks.iter_mut().zip(&frames) {
            bank.control_update(&frame.controls, &self.model);
        }
        observer.on_phase(t, Phase::Control, &self.state, &self.banks);

        for (bank, frame) in self.banks.iter_mut().zip(&frames) {
            bank.correct(&frame.observations, &self.model)
                .map_err(|source| EpisodeError { step: t, source })?;
        }
        observer.on_phase(t, Phase::Observation, &self.state, &self.banks);

        if sharing {
            let neighbors: Vec<Vec<usize>> = frames.iter().map(|f| f.neighbors.clone()).collect();
            share_beliefs_observed(&mut self.banks, &neighbors, self.config.rounds, |r, b, a| {
                observer.on_share_round(t, r, b, a)
            });
            observer.on_phase(t, Phase::Sharing, &self.state, &self.banks);
        }

        Ok(self.record(t))
    }

    fn record(&mut self, t: usize) -> MetricsRecord {
        let reward_range = self.config.sensing_range;
        let step_reward = match self.config.task {
            Task::Congregation => reward_congregation(&self.state, reward_range),
            Task::PredatorPrey => reward_predator_prey(&self.state, reward_range),
        };
        self.cumulative += step_reward;
        let width = self.config.width;
        let agents = self.state.agent_positions();
        let externals = self.state.external_positions();
        let total_w1 = self
            .banks
            .iter()
            .flat_map(|b| b.agents().iter().zip(agents))
            .map(|(bel, &truth)| w1_to_dirac(bel, width, truth))
            .sum();
        let prey_w1 = (self.config.task == Task::PredatorPrey).then(|| {
            self.banks
                .iter()
                .flat_map(|b| b.externals().iter().zip(externals))
                .map(|(bel, &truth)| w1_to_dirac(bel, width, truth))
                .sum()
        });
        MetricsRecord {
            seed: self.seed,
            t,
            step_reward,
            cumulative_reward: self.cumulative,
            total_w1,
            prey_w1,
        }
    }

    /// Runs the remaining steps up to the horizon.
    pub fn run<O: EpisodeObserver + ?Sized>(
        mut self,
        sharing: bool,
        observer: &mut O,
    ) -> Result<Vec<MetricsRecord>, EpisodeError> {
        (self.state.time()..self.config.horizon)
            .map(|_| self.step(sharing, observer))
            .collect()
    }
}

/// Runs one full episode of a resolved config.
pub fn run_episode(config: &ExperimentConfig, seed: u64) -> Result<Vec<MetricsRecord>, EpisodeError> {
    Episode::new(config, seed).run(true, &mut ())
}
