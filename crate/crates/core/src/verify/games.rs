use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::game::{GameSpec, InfoSetKey, PlayerId, TabularGame, TypeId, enumerate_infosets};
use crate::solver::InfosetTables;

/// One player, one type, actions `A` (utility 1) and `B` (utility 0).
pub fn bandit() -> TabularGame {
    TabularGame::new(vec![vec![vec![2]]], 1, |_, h| {
        vec![if h[0].0 == 0 { 1.0 } else { 0.0 }]
    })
    .expect("bandit is well formed")
}

/// Two players, one type each, one stage, `±1` payoffs; player 0 wins on a match.
pub fn matching_pennies() -> TabularGame {
    TabularGame::new(vec![vec![vec![2]], vec![vec![2]]], 1, |_, h| {
        let v = if h[0] == h[1] { 1.0 } else { -1.0 };
        vec![v, -v]
    })
    .expect("matching pennies is well formed")
}

/// Two players with two types each, one stage, 2 or 3 actions per type and
/// utilities drawn uniformly from `[-1, 0]`. The same seed gives the same game.
pub fn random_bayesian_game(seed: u64) -> TabularGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let actions: Vec<Vec<Vec<usize>>> = (0..2)
        .map(|_| (0..2).map(|_| vec![rng.random_range(2..=3)]).collect())
        .collect();
    TabularGame::new(actions, 1, |_, _| vec![-rng.random::<f64>(), -rng.random::<f64>()])
        .expect("random game is well formed")
}

/// Two players, one type each, two stages of two actions, utilities in `[-1, 0]`.
pub fn two_stage_game(seed: u64) -> TabularGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TabularGame::new(vec![vec![vec![2, 2]], vec![vec![2, 2]]], 2, |_, _| {
        vec![-rng.random::<f64>(), -rng.random::<f64>()]
    })
    .expect("two-stage game is well formed")
}

/// Tables holding a random, fully mixed strategy at every information set of
/// every `(player, type)`, with all probabilities at least `floor / k`.
pub fn random_strategy_tables(spec: &dyn GameSpec, seed: u64) -> InfosetTables {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tables = InfosetTables::new(spec).expect("small game fits packed keys");
    for p in 0..spec.num_players() {
        for t in 0..spec.num_types(PlayerId(p)) {
            for key in enumerate_infosets(spec, PlayerId(p), TypeId(t)) {
                set_random(spec, &mut tables, &key, &mut rng);
            }
        }
    }
    tables
}

fn set_random(spec: &dyn GameSpec, tables: &mut InfosetTables, key: &InfoSetKey, rng: &mut impl Rng) {
    let k = spec.num_actions(key.player, key.ty, key.stage, &key.history);
    let raw: Vec<f64> = (0..k).map(|_| 0.1 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let probs: Vec<f64> = raw.iter().map(|x| x / total).collect();
    tables.set_strategy(key, &probs);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_game_is_reproducible_and_bounded() {
        let a = random_bayesian_game(7);
        let b = random_bayesian_game(7);
        for p in 0..2 {
            for t in 0..2 {
                let k = a.num_actions(PlayerId(p), TypeId(t), 0, &[]);
                assert!((2..=3).contains(&k));
                assert_eq!(k, b.num_actions(PlayerId(p), TypeId(t), 0, &[]));
                let r = a.utility_range(PlayerId(p), TypeId(t)).unwrap();
                assert!((0.0..=1.0).contains(&r));
            }
        }
    }
}
