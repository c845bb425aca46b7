//! Invariants checked over randomized inputs.

use bayesgame::belief::{update_marginal, Belief, MixtureComponent, ObservationModel, log_likelihood};
use bayesgame::game::{enumerate_infosets, terminal_utility, ActionId, GameSpec, PlayerId, Prior, TabularGame, TypeId, TypeVector};
use bayesgame::policy::{estimate_type_values, select_type};
use bayesgame::solver::{sample_partial_plan, solve, PlanLayout, SolverConfig};
use bayesgame::traffic::utility::{comfort_cost, own_cost, progress_cost, reference_cost, safety_cost};
use bayesgame::traffic::{generate_segment, ActionTarget, ReferenceLine, UtilityParams, VehicleGeometry, VehicleState};
use bayesgame::verify::games::{random_bayesian_game, random_strategy_tables};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two-player game with `counts[player][type][stage]` actions and seeded
/// utilities in `[-1, 0]`, scaled by `scale` for player 0.
fn game(counts: &[Vec<Vec<usize>>], stages: usize, seed: u64, scale: f64) -> TabularGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TabularGame::new(counts.to_vec(), stages, |_, _| vec![-rng.random::<f64>() * scale, -rng.random::<f64>()]).unwrap()
}

fn counts_strategy(stages: usize) -> impl Strategy<Value = Vec<Vec<Vec<usize>>>> {
    prop::collection::vec(prop::collection::vec(prop::collection::vec(1usize..=3, stages), 1..=2), 2)
}

fn straight() -> ReferenceLine {
    ReferenceLine::from_points("straight", vec![[-50.0, 0.0], [200.0, 0.0]]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn infosets_hide_same_stage_moves(counts in counts_strategy(2), seed in 0u64..1000) {
        let g = game(&counts, 2, seed, 1.0);
        let n = g.num_players();
        for p in 0..n {
            for t in 0..g.num_types(PlayerId(p)) {
                for key in enumerate_infosets(&g, PlayerId(p), TypeId(t)) {
                    prop_assert_eq!(key.history.len(), key.stage * n);
                }
            }
        }
    }

    #[test]
    fn utilities_are_total_on_terminal_histories(counts in counts_strategy(2), seed in 0u64..1000) {
        let g = game(&counts, 2, seed, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in TypeVector::enumerate(&g) {
            let mut h = Vec::new();
            for stage in 0..2 {
                let done = h.clone();
                for p in 0..2 {
                    let k = g.num_actions(PlayerId(p), t.0[p], stage, &done);
                    h.push(ActionId(rng.random_range(0..k)));
                }
            }
            let u = terminal_utility(&g, &t, &h).unwrap();
            prop_assert!(u.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn partial_plans_give_legal_first_moves(counts in counts_strategy(2), seed in 0u64..1000) {
        let g = game(&counts, 2, seed, 1.0);
        let tables = random_strategy_tables(&g, seed);
        let layout = PlanLayout::partial(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let plan = sample_partial_plan(&tables, &layout, &mut rng);
            for t in TypeVector::enumerate(&g) {
                for p in 0..2 {
                    let a = plan.root_action(&layout, PlayerId(p), t.0[p]);
                    prop_assert!(a.0 < g.num_actions(PlayerId(p), t.0[p], 0, &[]));
                }
            }
        }
    }

    #[test]
    fn solve_bookkeeping(seed in 0u64..1000, m in 1u64..600, workers in 1usize..=2) {
        let g = random_bayesian_game(seed);
        let cfg = SolverConfig { iterations: m, seed, workers, sync_interval: 50, ..SolverConfig::default() };
        let res = solve(&g, &Prior::uniform(&g), &cfg).unwrap();
        prop_assert_eq!(res.frequencies.total(), m);
        for p in 0..2 {
            prop_assert_eq!(res.visits[p].iter().sum::<u64>(), m);
        }
    }

    #[test]
    fn single_worker_solves_are_reproducible(seed in 0u64..1000) {
        let g = random_bayesian_game(seed);
        let cfg = SolverConfig::default().with_iterations(500).with_seed(seed);
        let prior = Prior::uniform(&g);
        prop_assert_eq!(solve(&g, &prior, &cfg).unwrap().to_json(), solve(&g, &prior, &cfg).unwrap().to_json());
    }

    #[test]
    fn type_choice_ignores_utility_scale(seed in 0u64..1000, exp in -2i32..=3) {
        // Powers of two scale exactly, so the sampled paths coincide.
        let c = 2f64.powi(exp);
        let counts = vec![vec![vec![3], vec![2]], vec![vec![2], vec![3]]];
        let cfg = SolverConfig::default().with_iterations(2000).with_seed(seed);
        let base = game(&counts, 1, seed, 1.0);
        let scaled = game(&counts, 1, seed, c);
        let a = estimate_type_values(&solve(&base, &Prior::uniform(&base), &cfg).unwrap(), PlayerId(0)).unwrap();
        let b = estimate_type_values(&solve(&scaled, &Prior::uniform(&scaled), &cfg).unwrap(), PlayerId(0)).unwrap();
        prop_assert_eq!(select_type(&a), select_type(&b));
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x * c - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn mixture_likelihood_is_positive_on_support(
        obs in prop::collection::vec(-50.0f64..50.0, 2),
        ends in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0, 0.01f64..1.0), 1..5),
        std in 0.1f64..2.0,
    ) {
        let model = ObservationModel::isotropic(std, 2).unwrap();
        let comps: Vec<MixtureComponent> = ends
            .iter()
            .map(|&(x, y, w)| MixtureComponent { end_state: vec![x, y], weight: w })
            .collect();
        let ll = log_likelihood(&obs, &comps, &model).unwrap();
        prop_assert!(ll.is_finite());
    }

    #[test]
    fn matching_evidence_never_lowers_the_odds(
        obs in prop::collection::vec(-20.0f64..20.0, 2),
        others in prop::collection::vec((0.5f64..10.0, 0.0f64..6.3, 0.05f64..1.0), 1..4),
        prior_a in 0.05f64..0.95,
    ) {
        let model = ObservationModel::isotropic(0.5, 2).unwrap();
        let a = vec![MixtureComponent { end_state: obs.clone(), weight: 1.0 }];
        let b: Vec<MixtureComponent> = others
            .iter()
            .map(|&(r, th, w)| MixtureComponent { end_state: vec![obs[0] + r * th.cos(), obs[1] + r * th.sin()], weight: w })
            .collect();
        let belief = Belief { marginals: vec![vec![prior_a, 1.0 - prior_a]] };
        let post = update_marginal(&belief, PlayerId(0), &obs, &[a, b], &model).unwrap();
        let m = &post.marginals[0];
        prop_assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(m[0] / m[1] >= prior_a / (1.0 - prior_a) * (1.0 - 1e-12));
    }

    #[test]
    fn segments_hit_their_targets_and_chain_smoothly(
        v0 in 0.0f64..15.0, v1 in 0.0f64..15.0, v2 in 0.0f64..15.0,
        l0 in -1.5f64..1.5, l1 in -1.5f64..1.5, d1 in 1usize..=3, d2 in 1usize..=3,
    ) {
        let line = straight();
        let start = VehicleState::on_line(&line, 0.0, l0, v0);
        let first = generate_segment(&line, &start, ActionTarget { velocity: v1, offset: l1 }, d1 as f64, 0.1).unwrap();
        prop_assert!((first.end().v_long - v1).abs() < 1e-6);
        prop_assert!((first.end().l - l1).abs() < 1e-9);
        let second = generate_segment(&line, &first.end().state(), ActionTarget { velocity: v2, offset: 0.0 }, d2 as f64, 0.1).unwrap();
        let (a, b) = (first.end(), second.start());
        prop_assert!((a.s - b.s).abs() < 1e-9 && (a.l - b.l).abs() < 1e-9);
        prop_assert!((a.v_long - b.v_long).abs() < 1e-9 && (a.v_lat - b.v_lat).abs() < 1e-9);
        prop_assert!((second.end().v_long - v2).abs() < 1e-6);
    }

    #[test]
    fn cost_components_are_nonnegative(v0 in 0.0f64..15.0, v1 in 0.0f64..15.0, l0 in -1.5f64..1.5, l1 in -1.5f64..1.5) {
        let line = straight();
        let p = UtilityParams::default();
        let seg = generate_segment(&line, &VehicleState::on_line(&line, 0.0, l0, v0), ActionTarget { velocity: v1, offset: l1 }, 1.0, 0.1).unwrap();
        let s = &seg.samples;
        for c in [comfort_cost(s, &p), progress_cost(s, &p), reference_cost(s, &p), own_cost(s, &p)] {
            prop_assert!(c >= 0.0);
        }
        let other = generate_segment(&line, &VehicleState::on_line(&line, 3.0, 0.0, v0), ActionTarget { velocity: v0, offset: 0.0 }, 1.0, 0.1).unwrap();
        prop_assert!(safety_cost(s, &[&other.samples], &VehicleGeometry::default(), &p).unwrap() >= 0.0);
    }

    #[test]
    fn closer_neighbours_cost_more(gap in 2.0f64..3.9, shrink in 0.05f64..1.0) {
        // Side by side in parallel lanes, so the closest circle pair sits at the lateral gap.
        let line = straight();
        let p = UtilityParams::default();
        let geo = VehicleGeometry::default();
        let seg = |l: f64| generate_segment(&line, &VehicleState::on_line(&line, 0.0, l, 7.0), ActionTarget { velocity: 7.0, offset: l }, 1.0, 0.1).unwrap();
        let me = seg(0.0);
        let far = seg(gap);
        let near = seg(gap - shrink);
        let c_far = safety_cost(&me.samples, &[&far.samples], &geo, &p).unwrap();
        let c_near = safety_cost(&me.samples, &[&near.samples], &geo, &p).unwrap();
        prop_assert!(c_near > c_far);
    }

    #[test]
    fn halving_the_step_doubles_sample_sums(v0 in 3.0f64..12.0, dv in 1.0f64..5.0, dl in 0.3f64..1.5) {
        let line = straight();
        let p = UtilityParams::default();
        let start = VehicleState::on_line(&line, 0.0, 0.0, v0);
        let target = ActionTarget { velocity: v0 + dv, offset: dl };
        // Both segment ends are sampled; over 3 s that endpoint term stays small.
        let coarse = generate_segment(&line, &start, target, 3.0, 0.1).unwrap();
        let fine = generate_segment(&line, &start, target, 3.0, 0.05).unwrap();
        for f in [comfort_cost, reference_cost] {
            let ratio = f(&fine.samples, &p) / f(&coarse.samples, &p);
            prop_assert!((ratio - 2.0).abs() <= 0.2, "ratio {}", ratio);
        }
    }
}
