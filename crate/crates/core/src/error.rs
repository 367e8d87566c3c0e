use thiserror::Error;

/// A likelihood assigned zero probability to every cell of a posterior's support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("belief has zero total mass")]
pub struct ZeroMassError;

/// Which belief collapsed, and in which update.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FilterError {
    #[error("agent {owner}: observation update on its belief about agent {tracked} left zero mass")]
    Observation { owner: usize, tracked: usize },
    #[error("agent {owner}: indicator update on its belief about external {external} left zero mass")]
    Indicator { owner: usize, external: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("step {step}: {source}")]
pub struct EpisodeError {
    pub step: usize,
    #[source]
    pub source: FilterError,
}
