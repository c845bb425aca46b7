//! Turning a solved game into a decision and a plan.
//!
//! The decision is the type with the highest estimated value; the plan is read
//! off the recorded plan frequencies, either per player from its own marginal
//! or sequentially along a leader-follower order.

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{ActionId, PlayerId, TypeId};
use crate::solver::{FrequencyTable, SolveResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("type {ty} of player {player} was never sampled; raise the iteration count or its prior mass")]
    UnvisitedType { player: usize, ty: usize },
    #[error("no plans recorded")]
    EmptyFrequencies,
    #[error("conditioning on earlier players' choices leaves no recorded mass at player {player}")]
    ZeroMassCondition { player: usize },
    #[error("leader order must be a permutation of all players")]
    BadOrder,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Marginal,
    Accurate,
}

/// Per-type estimate `V̂(t) = va(root of t) / |M_t|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeValueEstimate {
    pub player: PlayerId,
    pub values: Vec<f64>,
    pub visits: Vec<u64>,
}

pub fn estimate_type_values(
    result: &SolveResult,
    player: PlayerId,
) -> Result<TypeValueEstimate, PolicyError> {
    let visits = result.visits[player.0].clone();
    let values = visits
        .iter()
        .enumerate()
        .map(|(t, &n)| {
            if n == 0 {
                Err(PolicyError::UnvisitedType {
                    player: player.0,
                    ty: t,
                })
            } else {
                Ok(result.root_value(player, TypeId(t)) / n as f64)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TypeValueEstimate {
        player,
        values,
        visits,
    })
}

/// `argmax V̂`, lowest index on ties.
pub fn select_type(est: &TypeValueEstimate) -> TypeId {
    let all: Vec<TypeId> = (0..est.values.len()).map(TypeId).collect();
    select_type_among(est, &all)
}

/// `argmax V̂` restricted to `allowed`, lowest index on ties.
pub fn select_type_among(est: &TypeValueEstimate, allowed: &[TypeId]) -> TypeId {
    let mut best: Option<TypeId> = None;
    let mut sorted = allowed.to_vec();
    sorted.sort();
    for t in sorted {
        match best {
            Some(b) if est.values[t.0] <= est.values[b.0] => {}
            _ => best = Some(t),
        }
    }
    best.expect("select_type needs at least one candidate")
}

/// Distribution of `(player, ty)`'s first-stage action under `φ / M`.
pub fn marginal_distribution(freq: &FrequencyTable, player: PlayerId, ty: TypeId) -> Vec<f64> {
    let slot = freq.layout.slot_range(player, ty).start;
    let k = freq.layout.slots[slot].num_actions;
    let mut out = vec![0.0; k];
    let total = freq.total() as f64;
    if total == 0.0 {
        return out;
    }
    for (plan, count) in freq.entries() {
        out[plan.0[slot].0] += count as f64 / total;
    }
    out
}

/// Mode of `player`'s marginal for type `ty`; lowest action on ties.
pub fn marginal_plan(freq: &FrequencyTable, player: PlayerId, ty: TypeId) -> Result<ActionId, PolicyError> {
    if freq.is_empty() {
        return Err(PolicyError::EmptyFrequencies);
    }
    Ok(ActionId(argmax(&marginal_distribution(freq, player, ty))))
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Leader-follower execution: the first player of `order` takes the mode of
/// its marginal over plan components, each later player the mode of its
/// component conditioned on all earlier choices. Returns each player's chosen
/// first-stage action per type, indexed by player.
pub fn accurate_plans(
    freq: &FrequencyTable,
    order: &[PlayerId],
) -> Result<Vec<Vec<ActionId>>, PolicyError> {
    let n = freq.layout.num_players();
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(PolicyError::BadOrder);
    }
    for p in order {
        if p.0 >= n || seen[p.0] {
            return Err(PolicyError::BadOrder);
        }
        seen[p.0] = true;
    }
    if freq.is_empty() {
        return Err(PolicyError::EmptyFrequencies);
    }
    let entries = freq.entries();
    let root_actions = |plan: &[ActionId], p: PlayerId| -> Vec<ActionId> {
        (0..freq.layout.num_types(p))
            .map(|t| plan[freq.layout.slot_range(p, TypeId(t)).start])
            .collect()
    };
    let mut chosen: Vec<Option<Vec<ActionId>>> = vec![None; n];
    for &p in order {
        let mut mass: FxHashMap<Vec<ActionId>, u64> = FxHashMap::default();
        for (plan, count) in &entries {
            let consistent = chosen.iter().enumerate().all(|(j, c)| match c {
                Some(c) => &root_actions(&plan.0, PlayerId(j)) == c,
                None => true,
            });
            if consistent {
                *mass.entry(root_actions(&plan.0, p)).or_insert(0) += count;
            }
        }
        let mut best: Option<(&Vec<ActionId>, u64)> = None;
        for (comp, &m) in &mass {
            best = match best {
                Some((b, bm)) if bm > m || (bm == m && b <= comp) => Some((b, bm)),
                _ => Some((comp, m)),
            };
        }
        match best {
            Some((comp, m)) if m > 0 => chosen[p.0] = Some(comp.clone()),
            _ => return Err(PolicyError::ZeroMassCondition { player: p.0 }),
        }
    }
    Ok(chosen.into_iter().map(|c| c.expect("every player chosen")).collect())
}

/// Decision and first-stage action of one player.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanChoice {
    pub player: PlayerId,
    pub ty: TypeId,
    pub action: ActionId,
    pub scheme: Scheme,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::TabularGame;
    use crate::solver::{JointPlan, PlanLayout};

    /// Two players, one type each, three first-stage actions.
    fn table(counts: &[(&[usize], u64)]) -> FrequencyTable {
        let g = TabularGame::new(vec![vec![vec![3]], vec![vec![3]]], 1, |_, _| vec![0.0, 0.0])
            .unwrap();
        let mut f = FrequencyTable::new(PlanLayout::partial(&g));
        for (plan, c) in counts {
            for _ in 0..*c {
                f.record(&JointPlan(plan.iter().map(|&a| ActionId(a)).collect()));
            }
        }
        f
    }

    #[test]
    fn select_type_argmax_and_ties() {
        let est = TypeValueEstimate {
            player: PlayerId(0),
            values: vec![-30.0, -12.0],
            visits: vec![1, 1],
        };
        assert_eq!(select_type(&est), TypeId(1));
        let tie = TypeValueEstimate {
            player: PlayerId(0),
            values: vec![-5.0, -5.0],
            visits: vec![1, 1],
        };
        assert_eq!(select_type(&tie), TypeId(0));
        assert_eq!(select_type_among(&est, &[TypeId(0)]), TypeId(0));
    }

    #[test]
    fn marginal_examples() {
        let one = table(&[(&[2, 1], 7)]);
        assert_eq!(marginal_plan(&one, PlayerId(0), TypeId(0)).unwrap(), ActionId(2));
        let two = table(&[(&[1, 0], 3), (&[1, 2], 3)]);
        assert_eq!(marginal_plan(&two, PlayerId(0), TypeId(0)).unwrap(), ActionId(1));
        let three = table(&[(&[0, 0], 5), (&[0, 1], 3), (&[2, 2], 2)]);
        assert_eq!(marginal_plan(&three, PlayerId(0), TypeId(0)).unwrap(), ActionId(0));
        let d = marginal_distribution(&three, PlayerId(0), TypeId(0));
        assert!((d[0] - 0.8).abs() < 1e-12 && (d[2] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn marginal_ignores_permuting_other_components() {
        let a = table(&[(&[0, 1], 4), (&[2, 2], 3), (&[2, 0], 2)]);
        let b = table(&[(&[0, 2], 4), (&[2, 0], 3), (&[2, 1], 2)]);
        for t in [&a, &b] {
            assert_eq!(marginal_plan(t, PlayerId(0), TypeId(0)).unwrap(), ActionId(2));
        }
    }

    #[test]
    fn accurate_follows_leader_not_joint_mode() {
        // (A,X):4 (A,Y):6 (B,Z):9 with A=0, B=1, X=0, Y=1, Z=2
        let f = table(&[(&[0, 0], 4), (&[0, 1], 6), (&[1, 2], 9)]);
        let plans = accurate_plans(&f, &[PlayerId(0), PlayerId(1)]).unwrap();
        assert_eq!(plans, vec![vec![ActionId(0)], vec![ActionId(1)]]);
        let single = table(&[(&[2, 1], 3)]);
        for order in [[PlayerId(0), PlayerId(1)], [PlayerId(1), PlayerId(0)]] {
            assert_eq!(
                accurate_plans(&single, &order).unwrap(),
                vec![vec![ActionId(2)], vec![ActionId(1)]]
            );
        }
        assert_eq!(
            accurate_plans(&f, &[PlayerId(0)]),
            Err(PolicyError::BadOrder)
        );
    }

    #[test]
    fn empty_table_errors() {
        let f = table(&[]);
        assert_eq!(
            marginal_plan(&f, PlayerId(0), TypeId(0)),
            Err(PolicyError::EmptyFrequencies)
        );
    }
}
