//! Per-agent Bayes filter bank: control, observation, indicator and
//! entropy-greedy sharing updates.
//!
//! Each agent keeps one [`Belief`] for every cooperative agent (itself
//! included) and one for every external entity. Information about a peer that
//! is out of sensing range arrives [`Visibility::Masked`] and is folded in with
//! the masked kernel or the uniform likelihood.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::belief::{entropy, normalize, Belief};
use crate::error::FilterError;
use crate::world::{Action, FeatureId, SensingOperator, WorldModel};

/// A piece of information that is either visible to the receiving agent or masked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility<T> {
    Seen(T),
    Masked,
}

impl<T> Visibility<T> {
    pub fn is_seen(&self) -> bool {
        matches!(self, Visibility::Seen(_))
    }

    pub fn seen(self) -> Option<T> {
        match self {
            Visibility::Seen(v) => Some(v),
            Visibility::Masked => None,
        }
    }
}

/// Executed controls as one agent sees them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibleControls {
    pub agents: Vec<Visibility<Action>>,
    pub externals: Vec<Visibility<Action>>,
}

/// Observations as one agent sees them, plus one indicator bit per external entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibleObservations {
    pub agents: Vec<Visibility<FeatureId>>,
    pub indicators: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefBank {
    owner: usize,
    agents: Vec<Belief>,
    externals: Vec<Belief>,
}

/// What an agent broadcasts in one sharing round.
#[derive(Debug, Clone)]
pub struct BeliefMessage {
    pub sender: usize,
    pub snapshot: Arc<BeliefBank>,
}

/// Identifies one belief inside a bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tracked {
    Agent(usize),
    External(usize),
}

impl BeliefBank {
    /// Uniform priors over `cells` for `n_agents` agents and `n_externals` external entities.
    pub fn uniform(owner: usize, n_agents: usize, n_externals: usize, cells: usize) -> Self {
        assert!(owner < n_agents, "owner {owner} is not one of {n_agents} agents");
        Self {
            owner,
            agents: vec![Belief::uniform(cells); n_agents],
            externals: vec![Belief::uniform(cells); n_externals],
        }
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn agent(&self, id: usize) -> &Belief {
        &self.agents[id]
    }

    pub fn external(&self, id: usize) -> &Belief {
        &self.externals[id]
    }

    pub fn own(&self) -> &Belief {
        &self.agents[self.owner]
    }

    pub fn agents(&self) -> &[Belief] {
        &self.agents
    }

    pub fn externals(&self) -> &[Belief] {
        &self.externals
    }

    pub fn get(&self, id: Tracked) -> &Belief {
        match id {
            Tracked::Agent(j) => &self.agents[j],
            Tracked::External(e) => &self.externals[e],
        }
    }

    pub fn set(&mut self, id: Tracked, bel: Belief) {
        match id {
            Tracked::Agent(j) => self.agents[j] = bel,
            Tracked::External(e) => self.externals[e] = bel,
        }
    }

    /// Every tracked id: agents ascending, then externals ascending.
    pub fn tracked(&self) -> impl Iterator<Item = Tracked> {
        (0..self.agents.len())
            .map(Tracked::Agent)
            .chain((0..self.externals.len()).map(Tracked::External))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Tracked, &Belief)> {
        self.tracked().map(move |id| (id, self.get(id)))
    }

    pub fn message(&self) -> BeliefMessage {
        BeliefMessage {
            sender: self.owner,
            snapshot: Arc::new(self.clone()),
        }
    }

    /// Prediction step: push every belief through the kernel of the control
    /// this agent saw executed, or the masked kernel when it saw nothing.
    pub fn control_update(&mut self, controls: &VisibleControls, model: &WorldModel) {
        assert_eq!(controls.agents.len(), self.agents.len());
        assert_eq!(controls.externals.len(), self.externals.len());
        debug_assert!(controls.agents[self.owner].is_seen());
        let kernel = |u: &Visibility<Action>| match u {
            Visibility::Seen(a) => model.kernel(*a),
            Visibility::Masked => model.masked_kernel(),
        };
        for (bel, u) in self.agents.iter_mut().zip(&controls.agents) {
            *bel = kernel(u).apply(bel);
        }
        for (bel, u) in self.externals.iter_mut().zip(&controls.externals) {
            *bel = kernel(u).apply(bel);
        }
    }

    /// Correction step for cooperative agents. A masked observation carries a
    /// uniform likelihood, which normalization cancels, so it leaves the
    /// belief untouched.
    pub fn observation_update(
        &mut self,
        obs: &VisibleObservations,
        model: &WorldModel,
    ) -> Result<(), FilterError> {
        assert_eq!(obs.agents.len(), self.agents.len());
        debug_assert!(obs.agents[self.owner].is_seen());
        for (tracked, (bel, z)) in self.agents.iter_mut().zip(&obs.agents).enumerate() {
            if let Visibility::Seen(z) = z {
                *bel = weighted(bel, model.emission(*z)).map_err(|_| FilterError::Observation {
                    owner: self.owner,
                    tracked,
                })?;
            }
        }
        Ok(())
    }

    /// Fuses the indicator bit for one external entity.
    ///
    /// With `v = sensing · own belief`, a set bit multiplies the entity belief
    /// by `v` and a cleared bit by `1 − v`.
    pub fn external_indicator_update(
        &mut self,
        external: usize,
        indicator: bool,
        sensing: &SensingOperator,
    ) -> Result<(), FilterError> {
        let mut v = sensing.apply(self.own());
        if !indicator {
            for p in &mut v {
                *p = (1.0 - *p).max(0.0);
            }
        }
        self.externals[external] =
            weighted(&self.externals[external], &v).map_err(|_| FilterError::Indicator {
                owner: self.owner,
                external,
            })?;
        Ok(())
    }

    /// Observation update for cooperative agents followed by the indicator
    /// update for every external entity.
    pub fn correct(
        &mut self,
        obs: &VisibleObservations,
        model: &WorldModel,
    ) -> Result<(), FilterError> {
        self.observation_update(obs, model)?;
        assert_eq!(obs.indicators.len(), self.externals.len());
        for (e, &bit) in obs.indicators.iter().enumerate() {
            self.external_indicator_update(e, bit, model.sensing())?;
        }
        Ok(())
    }
}

fn weighted(prior: &Belief, likelihood: &[f64]) -> Result<Belief, crate::error::ZeroMassError> {
    normalize(
        prior
            .as_slice()
            .iter()
            .zip(likelihood)
            .map(|(p, l)| p * l)
            .collect(),
    )
}

/// One greedy sharing round for a single agent.
///
/// For every tracked id the agent keeps the lowest-entropy belief among its
/// own and the received snapshots. Ties keep the agent's own belief, then
/// favour the lowest sender id.
pub fn share_round(bank: &BeliefBank, inbox: &[BeliefMessage]) -> BeliefBank {
    let mut senders: Vec<&BeliefMessage> = inbox.iter().collect();
    senders.sort_by_key(|m| m.sender);
    let mut out = bank.clone();
    for id in bank.tracked() {
        let mut best = bank.get(id);
        let mut best_h = entropy(best);
        for msg in &senders {
            let candidate = msg.snapshot.get(id);
            let h = entropy(candidate);
            if h < best_h {
                best = candidate;
                best_h = h;
            }
        }
        if !std::ptr::eq(best, bank.get(id)) {
            out.set(id, best.clone());
        }
    }
    out
}

/// Runs `rounds` synchronous sharing rounds over all banks. Every round reads
/// the previous round's snapshots only.
///
/// `neighbors[i]` lists the agents within range of agent `i` and must be symmetric.
pub fn share_beliefs(banks: &mut [BeliefBank], neighbors: &[Vec<usize>], rounds: usize) {
    share_beliefs_observed(banks, neighbors, rounds, |_, _, _| {});
}

/// [`share_beliefs`] that reports `(round, before, after)` for every round.
pub fn share_beliefs_observed<F>(
    banks: &mut [BeliefBank],
    neighbors: &[Vec<usize>],
    rounds: usize,
    mut observe: F,
) where
    F: FnMut(usize, &[BeliefBank], &[BeliefBank]),
{
    assert_eq!(banks.len(), neighbors.len());
    debug_assert!(neighbors
        .iter()
        .enumerate()
        .all(|(i, ns)| ns.iter().all(|&j| j != i && neighbors[j].contains(&i))));
    for round in 0..rounds {
        let outbox: Vec<BeliefMessage> = banks.iter().map(BeliefBank::message).collect();
        let next: Vec<BeliefBank> = banks
            .iter()
            .zip(neighbors)
            .map(|(bank, ns)| {
                let inbox: Vec<BeliefMessage> = ns.iter().map(|&j| outbox[j].clone()).collect();
                share_round(bank, &inbox)
            })
            .collect();
        observe(round, banks, &next);
        banks.clone_from_slice(&next);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{GridIndex, NORMALIZATION_TOLERANCE};
    use crate::world::{sensing_operator, GridSpec};

    fn model(h: usize, w: usize, f: u32, s: usize) -> WorldModel {
        WorldModel::new(GridSpec::round_robin(h, w, f).unwrap(), s)
    }

    fn controls(agents: Vec<Visibility<Action>>) -> VisibleControls {
        VisibleControls {
            agents,
            externals: vec![],
        }
    }

    #[test]
    fn control_update_examples() {
        let m = model(10, 10, 4, 1);
        let c = GridIndex::new(4, 4).flatten(10);
        let mut bank = BeliefBank::uniform(0, 2, 0, 100);
        bank.set(Tracked::Agent(0), Belief::dirac(100, c));
        bank.set(Tracked::Agent(1), Belief::dirac(100, c));
        bank.control_update(
            &controls(vec![Visibility::Seen(Action::East), Visibility::Masked]),
            &m,
        );
        assert_eq!(bank.agent(0), &Belief::dirac(100, GridIndex::new(4, 5).flatten(10)));
        let masked = bank.agent(1);
        for x in 0..100 {
            let i = GridIndex::unflatten(x, 10);
            let expected = if i.chebyshev(GridIndex::new(4, 4)) <= 1 { 1.0 / 9.0 } else { 0.0 };
            assert_eq!(masked[x], expected);
        }

        let mut bank = BeliefBank::uniform(0, 1, 0, 100);
        bank.control_update(&controls(vec![Visibility::Seen(Action::Stay)]), &m);
        assert_eq!(bank.agent(0), &Belief::uniform(100));
    }

    #[test]
    fn observation_update_examples() {
        let m = model(10, 10, 4, 1);
        let mut bank = BeliefBank::uniform(0, 2, 0, 100);
        let before = bank.agent(1).clone();
        bank.observation_update(
            &VisibleObservations {
                agents: vec![Visibility::Seen(2), Visibility::Masked],
                indicators: vec![],
            },
            &m,
        )
        .unwrap();
        let own = bank.agent(0);
        assert_eq!(own.as_slice().iter().filter(|&&p| p > 0.0).count(), 25);
        for x in 0..100 {
            let expected = if x % 4 == 2 { 0.04 } else { 0.0 };
            assert!((own[x] - expected).abs() <= 1e-15);
        }
        assert_eq!(bank.agent(1), &before);

        // Consistent evidence on a Dirac.
        let mut bank = BeliefBank::uniform(0, 1, 0, 100);
        bank.set(Tracked::Agent(0), Belief::dirac(100, 14));
        bank.observation_update(
            &VisibleObservations {
                agents: vec![Visibility::Seen(2)],
                indicators: vec![],
            },
            &m,
        )
        .unwrap();
        assert_eq!(bank.agent(0), &Belief::dirac(100, 14));
    }

    #[test]
    fn inconsistent_observation_names_the_pair() {
        let m = model(10, 10, 4, 1);
        let mut bank = BeliefBank::uniform(1, 2, 0, 100);
        bank.set(Tracked::Agent(0), Belief::dirac(100, 14));
        let err = bank
            .observation_update(
                &VisibleObservations {
                    agents: vec![Visibility::Seen(1), Visibility::Seen(0)],
                    indicators: vec![],
                },
                &m,
            )
            .unwrap_err();
        assert_eq!(err, FilterError::Observation { owner: 1, tracked: 0 });
    }

    #[test]
    fn indicator_update_examples() {
        let m = model(10, 10, 4, 1);
        let c = GridIndex::new(5, 5);
        let mut bank = BeliefBank::uniform(0, 1, 1, 100);
        bank.set(Tracked::Agent(0), Belief::dirac(100, c.flatten(10)));
        let mut hit = bank.clone();
        hit.external_indicator_update(0, true, m.sensing()).unwrap();
        let mut miss = bank.clone();
        miss.external_indicator_update(0, false, m.sensing()).unwrap();
        for x in 0..100 {
            let near = GridIndex::unflatten(x, 10).chebyshev(c) <= 1;
            assert!((hit.external(0)[x] - if near { 1.0 / 9.0 } else { 0.0 }).abs() < 1e-15);
            assert!((miss.external(0)[x] - if near { 0.0 } else { 1.0 / 91.0 }).abs() < 1e-15);
        }

        let full = sensing_operator(m.grid(), 10);
        let mut wide = bank.clone();
        wide.external_indicator_update(0, true, &full).unwrap();
        for x in 0..100 {
            assert!((wide.external(0)[x] - bank.external(0)[x]).abs() <= 1e-15);
        }
    }

    #[test]
    fn indicator_error_names_the_external() {
        let m = model(3, 3, 1, 0);
        let mut bank = BeliefBank::uniform(0, 1, 1, 9);
        bank.set(Tracked::Agent(0), Belief::dirac(9, 0));
        bank.set(Tracked::External(0), Belief::dirac(9, 8));
        assert_eq!(
            bank.external_indicator_update(0, true, m.sensing()),
            Err(FilterError::Indicator { owner: 0, external: 0 })
        );
    }

    #[test]
    fn sharing_adopts_lower_entropy() {
        let mut banks = vec![BeliefBank::uniform(0, 2, 0, 9), BeliefBank::uniform(1, 2, 0, 9)];
        banks[1].set(Tracked::Agent(1), Belief::dirac(9, 4));
        share_beliefs(&mut banks, &[vec![1], vec![0]], 1);
        assert_eq!(banks[0].agent(1), &Belief::dirac(9, 4));
        assert_eq!(banks[0].agent(0), &Belief::uniform(9));
    }

    #[test]
    fn sharing_without_neighbours_is_a_no_op() {
        let mut banks = vec![BeliefBank::uniform(0, 2, 1, 9), BeliefBank::uniform(1, 2, 1, 9)];
        banks[1].set(Tracked::Agent(0), Belief::dirac(9, 1));
        let before = banks.clone();
        share_beliefs(&mut banks, &[vec![], vec![]], 7);
        assert_eq!(banks, before);
        share_beliefs(&mut banks, &[vec![1], vec![0]], 0);
        assert_eq!(banks, before);
    }

    #[test]
    fn sharing_propagates_one_hop_per_round() {
        // Chain a - b - c; only a knows where agent x (id 0) is.
        let fresh = || {
            let mut banks: Vec<_> = (0..3).map(|i| BeliefBank::uniform(i, 3, 0, 9)).collect();
            banks[0].set(Tracked::Agent(0), Belief::dirac(9, 3));
            banks
        };
        let chain = [vec![1], vec![0, 2], vec![1]];
        let mut one = fresh();
        share_beliefs(&mut one, &chain, 1);
        assert_eq!(one[1].agent(0), &Belief::dirac(9, 3));
        assert_eq!(one[2].agent(0), &Belief::uniform(9));
        let mut two = fresh();
        share_beliefs(&mut two, &chain, 2);
        assert_eq!(two[2].agent(0), &Belief::dirac(9, 3));
    }

    #[test]
    fn sharing_ties_prefer_self_then_lowest_sender() {
        let half = |a: usize, b: usize| {
            let mut v = vec![0.0; 9];
            v[a] = 0.5;
            v[b] = 0.5;
            Belief::from_probabilities(v).unwrap()
        };
        let mut banks: Vec<_> = (0..3).map(|i| BeliefBank::uniform(i, 3, 0, 9)).collect();
        banks[1].set(Tracked::Agent(2), half(0, 1));
        banks[2].set(Tracked::Agent(2), half(2, 3));
        banks[0].set(Tracked::Agent(1), half(4, 5));
        banks[1].set(Tracked::Agent(1), half(6, 7));
        let all = [vec![1, 2], vec![0, 2], vec![0, 1]];
        share_beliefs(&mut banks, &all, 1);
        // Agent 0 ties between senders 1 and 2 about agent 2: lowest id wins.
        assert_eq!(banks[0].agent(2), &half(0, 1));
        // Agent 1 ties with sender 0 about itself: keeps its own.
        assert_eq!(banks[1].agent(1), &half(6, 7));
    }

    #[test]
    fn sharing_never_raises_entropy() {
        let m = model(6, 6, 3, 1);
        let mut banks: Vec<_> = (0..4).map(|i| BeliefBank::uniform(i, 4, 1, 36)).collect();
        for (i, bank) in banks.iter_mut().enumerate() {
            bank.observation_update(
                &VisibleObservations {
                    agents: (0..4)
                        .map(|j| if (i + j) % 2 == 0 { Visibility::Seen(j as u32 % 3) } else { Visibility::Masked })
                        .collect(),
                    indicators: vec![],
                },
                &m,
            )
            .unwrap();
        }
        let ring = [vec![1, 3], vec![0, 2], vec![1, 3], vec![0, 2]];
        let mut checked = 0;
        share_beliefs_observed(&mut banks, &ring, 3, |_, before, after| {
            for (b, a) in before.iter().zip(after) {
                for id in b.tracked() {
                    assert!(entropy(a.get(id)) <= entropy(b.get(id)));
                    assert!((a.get(id).total() - 1.0).abs() <= NORMALIZATION_TOLERANCE);
                    checked += 1;
                }
            }
        });
        assert_eq!(checked, 3 * 4 * 5);
    }
}
