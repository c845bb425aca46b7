//! Staged games of incomplete information.
//!
//! A game is played in two phases: a chance move draws one private type per
//! player from a common prior, then the players move through `S` stages. Inside
//! a stage every player picks one action; moves within a stage are simultaneous,
//! which is encoded by keying information sets on the *completed-stage* public
//! history only. Same-stage moves of other players never enter a key.
//!
//! The game tree is never materialized. Anything that needs the tree walks it
//! implicitly through [`GameSpec`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a player, `0..N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlayerId(pub usize);

/// Index into one player's type list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeId(pub usize);

/// Index into the action list of one `(player, type, information set)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub usize);

/// One type per player, indexed by player.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeVector(pub Vec<TypeId>);

impl TypeVector {
    pub fn get(&self, player: PlayerId) -> TypeId {
        self.0[player.0]
    }

    pub fn as_slice(&self) -> &[TypeId] {
        &self.0
    }

    /// All type vectors of `spec` in lexicographic order (player 0 most significant).
    pub fn enumerate(spec: &dyn GameSpec) -> Vec<TypeVector> {
        let counts: Vec<usize> = (0..spec.num_players())
            .map(|p| spec.num_types(PlayerId(p)))
            .collect();
        let mut out = Vec::new();
        let mut cur = vec![0usize; counts.len()];
        loop {
            out.push(TypeVector(cur.iter().map(|&t| TypeId(t)).collect()));
            if !increment(&mut cur, &counts) {
                break;
            }
        }
        out
    }
}

/// Information set of `player` (holding type `ty`) at the start of `stage`.
///
/// `history` is the flat list of joint actions of all completed stages,
/// `stage * N` entries ordered stage-major then by player.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InfoSetKey {
    pub player: PlayerId,
    pub ty: TypeId,
    pub stage: usize,
    pub history: Vec<ActionId>,
}

impl InfoSetKey {
    pub fn root(player: PlayerId, ty: TypeId) -> Self {
        InfoSetKey {
            player,
            ty,
            stage: 0,
            history: Vec::new(),
        }
    }

    pub fn is_root(&self) -> bool {
        self.stage == 0
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("history has {got} actions but a terminal history needs {expected}")]
    NotTerminal { expected: usize, got: usize },
    #[error("type vector has {got} entries for a {expected}-player game")]
    TypeVectorLength { expected: usize, got: usize },
    #[error("type {ty} of player {player} is out of range")]
    TypeOutOfRange { player: usize, ty: usize },
    #[error("action {action} is not legal for player {player} at stage {stage}")]
    IllegalAction {
        player: usize,
        stage: usize,
        action: usize,
    },
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("invalid game: {0}")]
    Invalid(String),
}

/// A staged game of incomplete information.
///
/// Implementations must be pure: the same inputs always give the same action
/// counts and utilities. Solvers share one instance across episodes.
pub trait GameSpec: Sync {
    fn num_players(&self) -> usize;

    fn num_types(&self, player: PlayerId) -> usize;

    fn num_stages(&self) -> usize;

    /// Size of the action list of `player` with type `ty` at the start of
    /// `stage`, after the completed-stage `history` (`stage * N` entries).
    /// Must be at least 1 on every reachable information set.
    fn num_actions(&self, player: PlayerId, ty: TypeId, stage: usize, history: &[ActionId])
        -> usize;

    /// Upper bound of [`GameSpec::num_actions`] for `player` over all types and
    /// information sets.
    fn max_actions(&self, player: PlayerId) -> usize;

    /// Writes the utility of every player for the terminal `history`
    /// (`S * N` entries) into `out`.
    fn utility(&self, types: &[TypeId], history: &[ActionId], out: &mut [f64]);

    /// Utility range `Δu` of `player` holding `ty`, when the author knows it.
    fn utility_range(&self, _player: PlayerId, _ty: TypeId) -> Option<f64> {
        None
    }
}

/// Evaluates the utility provider on a terminal history after checking its shape.
pub fn terminal_utility(
    spec: &dyn GameSpec,
    types: &TypeVector,
    history: &[ActionId],
) -> Result<Vec<f64>, GameError> {
    let n = spec.num_players();
    if types.0.len() != n {
        return Err(GameError::TypeVectorLength {
            expected: n,
            got: types.0.len(),
        });
    }
    for (p, t) in types.0.iter().enumerate() {
        if t.0 >= spec.num_types(PlayerId(p)) {
            return Err(GameError::TypeOutOfRange { player: p, ty: t.0 });
        }
    }
    let expected = n * spec.num_stages();
    if history.len() != expected {
        return Err(GameError::NotTerminal {
            expected,
            got: history.len(),
        });
    }
    for stage in 0..spec.num_stages() {
        for p in 0..n {
            let k = spec.num_actions(PlayerId(p), types.0[p], stage, &history[..stage * n]);
            let a = history[stage * n + p].0;
            if a >= k {
                return Err(GameError::IllegalAction {
                    player: p,
                    stage,
                    action: a,
                });
            }
        }
    }
    let mut out = vec![0.0; n];
    spec.utility(&types.0, history, &mut out);
    Ok(out)
}

/// All information sets of `(player, ty)` reachable by some joint play, in
/// stage order and then lexicographic history order.
///
/// Other players' moves range over the union of their types' action lists,
/// since their types are hidden.
pub fn enumerate_infosets(spec: &dyn GameSpec, player: PlayerId, ty: TypeId) -> Vec<InfoSetKey> {
    let n = spec.num_players();
    let mut out = Vec::new();
    let mut frontier: Vec<Vec<ActionId>> = vec![Vec::new()];
    for stage in 0..spec.num_stages() {
        for h in &frontier {
            out.push(InfoSetKey {
                player,
                ty,
                stage,
                history: h.clone(),
            });
        }
        if stage + 1 == spec.num_stages() {
            break;
        }
        let mut next = Vec::new();
        for h in &frontier {
            let counts: Vec<usize> = (0..n)
                .map(|j| {
                    if j == player.0 {
                        spec.num_actions(player, ty, stage, h)
                    } else {
                        (0..spec.num_types(PlayerId(j)))
                            .map(|t| spec.num_actions(PlayerId(j), TypeId(t), stage, h))
                            .max()
                            .unwrap_or(0)
                    }
                })
                .collect();
            if counts.iter().any(|&c| c == 0) {
                continue;
            }
            let mut joint = vec![0usize; n];
            loop {
                let mut child = h.clone();
                child.extend(joint.iter().map(|&a| ActionId(a)));
                next.push(child);
                if !increment(&mut joint, &counts) {
                    break;
                }
            }
        }
        next.sort();
        frontier = next;
    }
    out
}

/// Odometer increment with the last digit fastest. Returns `false` on wrap-around.
pub(crate) fn increment(digits: &mut [usize], radix: &[usize]) -> bool {
    for i in (0..digits.len()).rev() {
        digits[i] += 1;
        if digits[i] < radix[i] {
            return true;
        }
        digits[i] = 0;
    }
    false
}

/// Common prior over type vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prior {
    /// Independent per-player categorical distributions.
    Product(Vec<Vec<f64>>),
    /// Explicit table over type vectors; absent vectors have zero mass.
    Joint(Vec<(TypeVector, f64)>),
}

const PRIOR_TOL: f64 = 1e-9;

impl Prior {
    pub fn uniform(spec: &dyn GameSpec) -> Self {
        Prior::Product(
            (0..spec.num_players())
                .map(|p| {
                    let k = spec.num_types(PlayerId(p));
                    vec![1.0 / k as f64; k]
                })
                .collect(),
        )
    }

    pub fn validate(&self, spec: &dyn GameSpec) -> Result<(), GameError> {
        let n = spec.num_players();
        match self {
            Prior::Product(marginals) => {
                if marginals.len() != n {
                    return Err(GameError::InvalidPrior(format!(
                        "{} marginals for {n} players",
                        marginals.len()
                    )));
                }
                for (p, m) in marginals.iter().enumerate() {
                    if m.len() != spec.num_types(PlayerId(p)) {
                        return Err(GameError::InvalidPrior(format!(
                            "player {p} has {} types but the marginal has {} entries",
                            spec.num_types(PlayerId(p)),
                            m.len()
                        )));
                    }
                    check_distribution(m, &format!("marginal of player {p}"))?;
                }
            }
            Prior::Joint(entries) => {
                for (t, w) in entries {
                    if t.0.len() != n {
                        return Err(GameError::InvalidPrior(format!(
                            "type vector of length {} in a {n}-player game",
                            t.0.len()
                        )));
                    }
                    for (p, ty) in t.0.iter().enumerate() {
                        if ty.0 >= spec.num_types(PlayerId(p)) {
                            return Err(GameError::InvalidPrior(format!(
                                "type {} of player {p} is outside its type list",
                                ty.0
                            )));
                        }
                    }
                    if !(w.is_finite() && *w >= 0.0) {
                        return Err(GameError::InvalidPrior(format!(
                            "mass {w} on {:?} is negative or not finite",
                            t.0
                        )));
                    }
                }
                let total: f64 = entries.iter().map(|(_, w)| w).sum();
                if (total - 1.0).abs() > PRIOR_TOL {
                    return Err(GameError::InvalidPrior(format!(
                        "joint mass sums to {total}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Marginal distribution of `player`'s type.
    pub fn marginal(&self, player: PlayerId, num_types: usize) -> Vec<f64> {
        match self {
            Prior::Product(m) => m[player.0].clone(),
            Prior::Joint(entries) => {
                let mut out = vec![0.0; num_types];
                for (t, w) in entries {
                    out[t.get(player).0] += w;
                }
                out
            }
        }
    }

    /// Probability of the full type vector `t`.
    pub fn probability(&self, t: &[TypeId]) -> f64 {
        match self {
            Prior::Product(m) => t.iter().enumerate().map(|(p, ty)| m[p][ty.0]).product(),
            Prior::Joint(entries) => entries
                .iter()
                .filter(|(v, _)| v.0 == t)
                .map(|(_, w)| w)
                .sum(),
        }
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<(), GameError> {
    if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(GameError::InvalidPrior(format!(
            "{what} has a negative or non-finite entry"
        )));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PRIOR_TOL {
        return Err(GameError::InvalidPrior(format!("{what} sums to {total}")));
    }
    Ok(())
}

/// Small game with a dense utility table. Action counts depend only on
/// `(player, type, stage)`.
///
/// Used for verification games and the Python bindings; anything large should
/// implement [`GameSpec`] directly.
#[derive(Clone, Debug)]
pub struct TabularGame {
    types: Vec<usize>,
    /// `actions[player][type][stage]`
    actions: Vec<Vec<Vec<usize>>>,
    stages: usize,
    radix: Vec<usize>,
    /// `utilities[type_index][history_index * N + player]`
    utilities: Vec<Vec<f64>>,
    ranges: Vec<Vec<f64>>,
}

impl TabularGame {
    /// Builds the table by evaluating `utility(types, history)` on every terminal
    /// history. `actions[player][type][stage]` gives the action count.
    pub fn new<F>(
        actions: Vec<Vec<Vec<usize>>>,
        stages: usize,
        mut utility: F,
    ) -> Result<Self, GameError>
    where
        F: FnMut(&[TypeId], &[ActionId]) -> Vec<f64>,
    {
        let n = actions.len();
        if n == 0 || stages == 0 {
            return Err(GameError::Invalid("need at least one player and stage".into()));
        }
        for (p, per_type) in actions.iter().enumerate() {
            if per_type.is_empty() {
                return Err(GameError::Invalid(format!("player {p} has no types")));
            }
            for counts in per_type {
                if counts.len() != stages || counts.iter().any(|&c| c == 0) {
                    return Err(GameError::Invalid(format!(
                        "player {p} needs a nonzero action count for each of {stages} stages"
                    )));
                }
            }
        }
        let types: Vec<usize> = actions.iter().map(|t| t.len()).collect();
        let radix: Vec<usize> = actions
            .iter()
            .map(|t| t.iter().flat_map(|s| s.iter().copied()).max().unwrap_or(1))
            .collect();
        let leaves: usize = radix.iter().product::<usize>().pow(stages as u32);
        let mut game = TabularGame {
            types,
            actions,
            stages,
            radix,
            utilities: Vec::new(),
            ranges: Vec::new(),
        };
        let mut ranges: Vec<Vec<(f64, f64)>> = game
            .types
            .iter()
            .map(|&k| vec![(f64::INFINITY, f64::NEG_INFINITY); k])
            .collect();
        for tv in TypeVector::enumerate(&game) {
            let mut table = vec![0.0; leaves * n];
            let digits_radix: Vec<usize> = (0..stages * n).map(|i| game.radix[i % n]).collect();
            let mut digits = vec![0usize; stages * n];
            loop {
                let hist: Vec<ActionId> = digits.iter().map(|&a| ActionId(a)).collect();
                if game.is_legal(&tv.0, &hist) {
                    let u = utility(&tv.0, &hist);
                    if u.len() != n || u.iter().any(|x| !x.is_finite()) {
                        return Err(GameError::Invalid(format!(
                            "utility for {:?} / {:?} is not {n} finite values",
                            tv.0, digits
                        )));
                    }
                    let idx = game.history_index(&hist);
                    table[idx * n..(idx + 1) * n].copy_from_slice(&u);
                    for p in 0..n {
                        let r = &mut ranges[p][tv.0[p].0];
                        r.0 = r.0.min(u[p]);
                        r.1 = r.1.max(u[p]);
                    }
                }
                if !increment(&mut digits, &digits_radix) {
                    break;
                }
            }
            game.utilities.push(table);
        }
        game.ranges = ranges
            .into_iter()
            .map(|v| v.into_iter().map(|(lo, hi)| (hi - lo).max(0.0)).collect())
            .collect();
        Ok(game)
    }

    fn is_legal(&self, types: &[TypeId], history: &[ActionId]) -> bool {
        let n = self.types.len();
        history
            .iter()
            .enumerate()
            .all(|(i, a)| a.0 < self.actions[i % n][types[i % n].0][i / n])
    }

    fn history_index(&self, history: &[ActionId]) -> usize {
        let n = self.types.len();
        history
            .iter()
            .enumerate()
            .fold(0, |acc, (i, a)| acc * self.radix[i % n] + a.0)
    }

    fn type_index(&self, types: &[TypeId]) -> usize {
        types
            .iter()
            .enumerate()
            .fold(0, |acc, (p, t)| acc * self.types[p] + t.0)
    }
}

impl GameSpec for TabularGame {
    fn num_players(&self) -> usize {
        self.types.len()
    }

    fn num_types(&self, player: PlayerId) -> usize {
        self.types[player.0]
    }

    fn num_stages(&self) -> usize {
        self.stages
    }

    fn num_actions(&self, player: PlayerId, ty: TypeId, stage: usize, _: &[ActionId]) -> usize {
        self.actions[player.0][ty.0][stage]
    }

    fn max_actions(&self, player: PlayerId) -> usize {
        self.radix[player.0]
    }

    fn utility(&self, types: &[TypeId], history: &[ActionId], out: &mut [f64]) {
        let n = self.types.len();
        let idx = self.history_index(history);
        out.copy_from_slice(&self.utilities[self.type_index(types)][idx * n..(idx + 1) * n]);
    }

    fn utility_range(&self, player: PlayerId, ty: TypeId) -> Option<f64> {
        Some(self.ranges[player.0][ty.0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_game(players: usize, actions: usize, stages: usize) -> TabularGame {
        TabularGame::new(
            vec![vec![vec![actions; stages]]; players],
            stages,
            |_, _| vec![0.0; players],
        )
        .unwrap()
    }

    #[test]
    fn single_stage_has_only_root() {
        let g = uniform_game(1, 2, 1);
        let sets = enumerate_infosets(&g, PlayerId(0), TypeId(0));
        assert_eq!(sets, vec![InfoSetKey::root(PlayerId(0), TypeId(0))]);
    }

    #[test]
    fn two_stage_two_player_count() {
        let g = uniform_game(2, 2, 2);
        let sets = enumerate_infosets(&g, PlayerId(0), TypeId(0));
        assert_eq!(sets.len(), 5);
        assert!(sets[0].is_root());
        assert!(sets[1..].iter().all(|k| k.stage == 1 && k.history.len() == 2));
    }

    #[test]
    fn hidden_types_widen_opponent_moves() {
        // Player 1 has types with 2 and 3 actions; player 0 cannot tell them apart.
        let g = TabularGame::new(
            vec![vec![vec![2, 2]], vec![vec![2, 2], vec![3, 3]]],
            2,
            |_, _| vec![0.0, 0.0],
        )
        .unwrap();
        assert_eq!(enumerate_infosets(&g, PlayerId(0), TypeId(0)).len(), 1 + 2 * 3);
        // Player 1's own moves are restricted to its type's list.
        assert_eq!(enumerate_infosets(&g, PlayerId(1), TypeId(0)).len(), 1 + 2 * 2);
    }

    #[test]
    fn terminal_utility_rejects_partial_history() {
        let g = uniform_game(2, 2, 2);
        let t = TypeVector(vec![TypeId(0), TypeId(0)]);
        let err = terminal_utility(&g, &t, &[ActionId(0), ActionId(1)]).unwrap_err();
        assert_eq!(err, GameError::NotTerminal { expected: 4, got: 2 });
        assert_eq!(
            terminal_utility(&g, &t, &[ActionId(0); 4]).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn zero_sum_provider() {
        let g = TabularGame::new(vec![vec![vec![2]], vec![vec![2]]], 1, |_, h| {
            let v = if h[0] == h[1] { 1.0 } else { -1.0 };
            vec![v, -v]
        })
        .unwrap();
        let t = TypeVector(vec![TypeId(0), TypeId(0)]);
        for a in 0..2 {
            for b in 0..2 {
                let u = terminal_utility(&g, &t, &[ActionId(a), ActionId(b)]).unwrap();
                assert_eq!(u[0], -u[1]);
            }
        }
        assert_eq!(g.utility_range(PlayerId(0), TypeId(0)), Some(2.0));
    }

    #[test]
    fn prior_validation() {
        let g = uniform_game(2, 2, 1);
        assert!(Prior::uniform(&g).validate(&g).is_ok());
        let bad = Prior::Product(vec![vec![1.2, -0.2], vec![1.0]]);
        assert!(bad.validate(&g).is_err());
        let joint = Prior::Joint(vec![
            (TypeVector(vec![TypeId(0), TypeId(0)]), 0.5),
            (TypeVector(vec![TypeId(0), TypeId(0)]), 0.4),
        ]);
        assert!(joint.validate(&g).is_err());
    }
}
