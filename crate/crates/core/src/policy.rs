//! Stationary heuristic and random control policies.
//!
//! Cooperative agents only ever see their own [`BeliefBank`]; the prey is the
//! one policy allowed to read the global [`WorldState`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{map_estimate, GridIndex};
use crate::filter::BeliefBank;
use crate::sim::WorldState;
use crate::world::Action;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Congregation,
    Predator,
    PreyGlobal,
    Random,
}

/// Sign of a real offset with a dead zone of half a cell around zero.
fn dead_zone_sign(delta: f64) -> i64 {
    if delta > 0.5 {
        1
    } else if delta < -0.5 {
        -1
    } else {
        0
    }
}

fn toward(from: GridIndex, to: GridIndex) -> (i64, i64) {
    (
        (to.row as i64 - from.row as i64).signum(),
        (to.col as i64 - from.col as i64).signum(),
    )
}

fn mean_position(cells: impl IntoIterator<Item = GridIndex>) -> (f64, f64) {
    let (mut r, mut c, mut n) = (0.0, 0.0, 0usize);
    for cell in cells {
        r += cell.row as f64;
        c += cell.col as f64;
        n += 1;
    }
    assert!(n > 0, "mean of no positions");
    (r / n as f64, c / n as f64)
}

/// MAP cell of every cooperative agent in the bank, drawn in id order.
fn agent_maps<R: Rng + ?Sized>(bank: &BeliefBank, width: usize, rng: &mut R) -> Vec<GridIndex> {
    bank.agents()
        .iter()
        .map(|bel| map_estimate(bel, width, rng))
        .collect()
}

/// Steps toward the mean of every agent's MAP position, the agent's own included.
pub fn congregation_action<R: Rng + ?Sized>(bank: &BeliefBank, width: usize, rng: &mut R) -> Action {
    let maps = agent_maps(bank, width, rng);
    let me = maps[bank.owner()];
    let (tr, tc) = mean_position(maps.iter().copied());
    Action::from_signs(
        dead_zone_sign(tr - me.row as f64),
        dead_zone_sign(tc - me.col as f64),
    )
}

/// Steps toward the believed prey position while pushing away from other
/// predators believed within `separation_radius`.
pub fn predator_action<R: Rng + ?Sized>(
    bank: &BeliefBank,
    prey: usize,
    separation_radius: usize,
    width: usize,
    rng: &mut R,
) -> Action {
    let maps = agent_maps(bank, width, rng);
    let prey_map = map_estimate(bank.external(prey), width, rng);
    let me = maps[bank.owner()];
    let (mut dr, mut dc) = toward(me, prey_map);
    for (j, &other) in maps.iter().enumerate() {
        if j != bank.owner() && other.chebyshev(me) <= separation_radius {
            let (rr, rc) = toward(other, me);
            dr += rr;
            dc += rc;
        }
    }
    Action::from_signs(dr, dc)
}

/// Steps away from the mean of the true predator positions.
pub fn prey_action(state: &WorldState, prey: usize) -> Action {
    let me = state.external_positions()[prey];
    let (tr, tc) = mean_position(state.agent_positions().iter().copied());
    Action::from_signs(
        dead_zone_sign(me.row as f64 - tr),
        dead_zone_sign(me.col as f64 - tc),
    )
}

pub fn random_action<R: Rng + ?Sized>(rng: &mut R) -> Action {
    Action::ALL[rng.gen_range(0..Action::ALL.len())]
}
