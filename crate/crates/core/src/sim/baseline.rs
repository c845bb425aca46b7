//! Complete-information baseline: every vehicle is a single-type player whose
//! actions are the union of its intentions' actions.

use crate::traffic::{
    build_tree_for_targets, ActionTarget, ReferenceLine, Scenario, TrafficError, TrafficGame, TrajectoryTree,
    VehicleState,
};
use std::collections::BTreeMap;

/// Union of the action targets of `types`, grouped by reference line in order
/// of first appearance and deduplicated within each line.
pub fn union_targets(scenario: &Scenario, vehicle: usize, types: &[usize]) -> Vec<(String, Vec<ActionTarget>)> {
    let mut groups: Vec<(String, Vec<ActionTarget>)> = Vec::new();
    for &t in types {
        let intent = scenario.intention(vehicle, t);
        let idx = match groups.iter().position(|(name, _)| *name == intent.reference) {
            Some(i) => i,
            None => {
                groups.push((intent.reference.clone(), Vec::new()));
                groups.len() - 1
            }
        };
        for target in intent.targets() {
            if !groups[idx].1.contains(&target) {
                groups[idx].1.push(target);
            }
        }
    }
    groups
}

/// Types entering a vehicle's union: the ego's selectable types, every type
/// of the others.
pub fn baseline_types(scenario: &Scenario, vehicle: usize) -> Vec<usize> {
    let v = &scenario.vehicles[vehicle];
    let ego = vehicle == scenario.ego();
    (0..v.types.len()).filter(|&t| !ego || v.types[t].selectable).collect()
}

/// Union tree of one vehicle. Stage-2 branches stay on the line of their
/// stage-1 parent.
pub fn baseline_tree(
    scenario: &Scenario,
    lines: &BTreeMap<String, ReferenceLine>,
    vehicle: usize,
    state: &VehicleState,
) -> Result<TrajectoryTree, TrafficError> {
    let groups = union_targets(scenario, vehicle, &baseline_types(scenario, vehicle));
    let trees = groups
        .iter()
        .map(|(line, targets)| {
            let line = lines
                .get(line)
                .ok_or_else(|| TrafficError::Config(format!("unknown reference line {line}")))?;
            build_tree_for_targets(state, line, targets, &scenario.stage_durations, scenario.dt)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TrajectoryTree::concat(trees))
}

/// Single-type game over union trees at the given states. Utilities depend
/// on types only through trajectories, so the union fully determines them.
pub fn make_baseline_game(scenario: &Scenario, states: &[VehicleState]) -> Result<TrafficGame, TrafficError> {
    let lines = scenario.lines()?;
    let trees = (0..scenario.vehicles.len())
        .map(|v| Ok(vec![baseline_tree(scenario, &lines, v, &states[v])?]))
        .collect::<Result<Vec<_>, TrafficError>>()?;
    TrafficGame::new(trees, scenario.params.clone(), scenario.geometry.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{GameSpec, PlayerId, TypeId};

    #[test]
    fn case_one_union_has_eight_actions() {
        let sc = Scenario::bundled("I", "A", &[]).unwrap();
        let states = sc.initial_states().unwrap();
        let g = make_baseline_game(&sc, &states).unwrap();
        for p in 0..3 {
            assert_eq!(g.num_types(PlayerId(p)), 1);
            assert_eq!(g.num_actions(PlayerId(p), TypeId(0), 0, &[]), 8);
        }
    }

    #[test]
    fn identical_sets_are_idempotent() {
        let mut sc = Scenario::bundled("I", "A", &[]).unwrap();
        let v = sc.ego();
        let first = sc.vehicles[v].types[0].clone();
        sc.vehicles[v].types[1].velocities = first.velocities.clone();
        let groups = union_targets(&sc, v, &[0, 1]);
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].1, sc.intention(v, 0).targets());
    }

    #[test]
    fn case_two_ego_union_skips_unselectable_types() {
        let sc = Scenario::bundled("II", "A", &[]).unwrap();
        let ego = sc.ego();
        let types = baseline_types(&sc, ego);
        assert!(types.iter().all(|&t| sc.vehicles[ego].types[t].selectable));
        let groups = union_targets(&sc, ego, &types);
        assert_eq!(groups.len(), 1);
        let hv = (0..3).find(|&v| v != ego).unwrap();
        assert_eq!(union_targets(&sc, hv, &baseline_types(&sc, hv)).len(), 2);
    }
}
