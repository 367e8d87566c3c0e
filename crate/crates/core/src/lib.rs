//! Decentralized Bayes filtering for multi-agent grid worlds.
//!
//! Every agent keeps a histogram belief over the position of every other
//! agent and of every external entity. Beliefs are updated from the agent's
//! own executed control and observation, from the controls and observations
//! of peers within sensing range, and are then fused with neighbours by
//! adopting the lowest-entropy candidate over a fixed number of synchronous
//! message rounds. Out-of-range peers are handled with masked updates: an
//! action-averaged transition kernel and a uniform observation likelihood.
//!
//! The crate is organised bottom-up:
//!
//! * [`belief`]: probability vectors, entropy, W1 to a point mass, MAP
//! * [`world`]: grid, features, transition kernels, sensing operator
//! * [`filter`]: per-agent belief banks and their update phases
//! * [`policy`]: heuristic and random controllers
//! * [`sim`]: ground-truth stepping, local frames, rewards, episodes
//! * [`config`] and [`experiment`]: seed sweeps and CSV output

pub mod belief;
pub mod config;
pub mod error;
pub mod experiment;
pub mod filter;
pub mod policy;
pub mod sim;
pub mod world;

pub use belief::{entropy, map_estimate, normalize, w1_to_dirac, Belief, GridIndex};
pub use config::{ConfigError, ExperimentConfig, System, Task};
pub use error::{EpisodeError, FilterError, ZeroMassError};
pub use experiment::{aggregate, run_experiment, ExperimentError, ExperimentOutput};
pub use filter::{share_beliefs, BeliefBank, BeliefMessage, Tracked, Visibility};
pub use sim::{run_episode, Episode, EpisodeObserver, LocalFrame, MetricsRecord, Phase, WorldState};
pub use world::{Action, GridSpec, WorldModel};
