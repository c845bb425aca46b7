//! MCCFR-S: outcome-sampling MCCFR with per-iteration type sampling and plan
//! sampling.
//!
//! Every iteration draws a type vector from the common prior, runs one
//! outcome-sampling episode that updates regrets and strategies along the
//! sampled path, then samples a plan from the updated strategies and counts
//! it. The empirical plan distribution `φ / M` approaches a Bayesian coarse
//! correlated equilibrium; the cumulative sampled counterfactual values at
//! root information sets give the per-type value estimates used for
//! decisions.

mod json;
mod tables;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{ActionId, GameError, GameSpec, InfoSetKey, PlayerId, Prior, TypeId, TypeVector};

pub use json::{SolveDocument, SOLVE_SCHEMA_VERSION};
pub use tables::{regret_match, FrequencyTable, InfosetTables, JointPlan, PlanLayout, PlanSlot};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("game too large for packed keys: {0}")]
    TooLarge(&'static str),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Number of iterations `M`.
    pub iterations: u64,
    /// Exploration `ε` mixed into the sampling policy.
    pub exploration: f64,
    pub seed: u64,
    pub workers: usize,
    /// Iterations each worker runs between regret merges.
    pub sync_interval: u64,
    /// Record plans over every information set instead of first-stage actions only.
    pub record_full_plans: bool,
    /// Accumulate sampled counterfactual values at every information set, not just roots.
    pub record_all_values: bool,
    /// Keep the sampled `(t, plan)` of every iteration.
    pub record_history: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            iterations: 20_000,
            exploration: 0.6,
            seed: 0,
            workers: 1,
            sync_interval: 1_000,
            record_full_plans: false,
            record_all_values: false,
            record_history: false,
        }
    }
}

impl SolverConfig {
    pub fn with_iterations(mut self, m: u64) -> Self {
        self.iterations = m;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<(), SolverError> {
        if self.iterations == 0 {
            return Err(SolverError::Config("iterations must be positive".into()));
        }
        if !(self.exploration > 0.0 && self.exploration <= 1.0) {
            return Err(SolverError::Config(format!(
                "exploration must lie in (0, 1], got {}",
                self.exploration
            )));
        }
        if self.workers == 0 {
            return Err(SolverError::Config("workers must be at least 1".into()));
        }
        if self.workers > 1 && self.sync_interval == 0 {
            return Err(SolverError::Config("sync_interval must be positive".into()));
        }
        Ok(())
    }
}

/// Type vector and plan sampled at one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub types: TypeVector,
    pub plan: JointPlan,
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    /// Regrets, current strategies and cumulative sampled counterfactual values.
    pub tables: InfosetTables,
    /// `visits[player][type]`: iterations whose sampled type vector gave `player` that type.
    pub visits: Vec<Vec<u64>>,
    pub frequencies: FrequencyTable,
    pub iterations: u64,
    pub history: Vec<IterationRecord>,
    pub duration: Duration,
}

impl SolveResult {
    pub fn visit_count(&self, player: PlayerId, ty: TypeId) -> u64 {
        self.visits[player.0][ty.0]
    }

    /// Cumulative sampled counterfactual value at the root of `(player, ty)`.
    pub fn root_value(&self, player: PlayerId, ty: TypeId) -> f64 {
        self.tables
            .value(&InfoSetKey::root(player, ty))
            .unwrap_or(0.0)
    }

    pub fn strategy(&self, key: &InfoSetKey) -> Option<&[f64]> {
        self.tables.strategy(key)
    }
}

/// Outcome of one sampled episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub history: Vec<ActionId>,
    pub utilities: Vec<f64>,
    /// Sampling probability `q(z)` of the leaf.
    pub sample_probability: f64,
}

#[derive(Clone, Copy, Debug)]
struct Step {
    node: usize,
    player: usize,
    action: usize,
    /// `σ(a | I)` of the sampled action.
    sigma: f64,
    /// Reach probability of all other players at `I`.
    others: f64,
}

/// Reusable per-episode buffers.
#[derive(Clone, Debug, Default)]
struct Scratch {
    path: Vec<Step>,
    history: Vec<ActionId>,
    reach: Vec<f64>,
    utilities: Vec<f64>,
}

fn sample_index(probs: impl Iterator<Item = f64>, r: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        acc += p;
        last = i;
        if r < acc {
            return i;
        }
    }
    last
}

/// Forward pass: samples a leaf under the ε-mixed strategy. Returns `q(z)`.
fn forward(
    spec: &dyn GameSpec,
    tables: &mut InfosetTables,
    types: &[TypeId],
    eps: f64,
    rng: &mut impl Rng,
    scratch: &mut Scratch,
) -> f64 {
    let n = spec.num_players();
    scratch.path.clear();
    scratch.history.clear();
    scratch.reach.clear();
    scratch.reach.resize(n, 1.0);
    let mut l = 1.0;
    let mut code = 0u128;
    for stage in 0..spec.num_stages() {
        let done = stage * n;
        for p in 0..n {
            let packed = tables.codec.pack(p, types[p].0, stage, code);
            let history = &scratch.history[..done];
            let node = tables.get_or_insert(packed, || {
                spec.num_actions(PlayerId(p), types[p], stage, history)
            });
            let sigma = tables.node_strategy(node);
            let k = sigma.len() as f64;
            let r: f64 = rng.random();
            let a = sample_index(sigma.iter().map(|s| (1.0 - eps) * s + eps / k), r);
            l *= (1.0 - eps) * sigma[a] + eps / k;
            let others: f64 = scratch
                .reach
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != p)
                .map(|(_, r)| r)
                .product();
            scratch.path.push(Step {
                node,
                player: p,
                action: a,
                sigma: sigma[a],
                others,
            });
            scratch.reach[p] *= sigma[a];
            scratch.history.push(ActionId(a));
        }
        code = tables.codec.push_stage(code, &scratch.history[done..]);
    }
    l
}

/// Backward pass: regret and value updates for every information set on the
/// sampled path, deepest first.
fn backward(tables: &mut InfosetTables, scratch: &Scratch, l: f64, all_values: bool, stage_len: usize) {
    let mut x = 1.0;
    for (depth, step) in scratch.path.iter().enumerate().rev() {
        let c = x;
        x *= step.sigma;
        let w = scratch.utilities[step.player] / l * step.others;
        let range = tables.range(step.node);
        for (a, r) in tables.regrets[range].iter_mut().enumerate() {
            if a == step.action {
                *r += (c - x) * w;
            } else {
                *r -= x * w;
            }
        }
        tables.rematch(step.node);
        if all_values || depth < stage_len {
            tables.values[step.node] += x * w;
        }
    }
}

/// Runs one outcome-sampling MCCFR episode for the fixed type vector `t`,
/// updating regrets, strategies and root values in `tables`.
pub fn mccfr_episode(
    spec: &dyn GameSpec,
    tables: &mut InfosetTables,
    t: &TypeVector,
    eps: f64,
    rng: &mut impl Rng,
) -> Result<EpisodeOutcome, SolverError> {
    check_types(spec, t)?;
    let mut scratch = Scratch::default();
    let l = forward(spec, tables, &t.0, eps, rng, &mut scratch);
    scratch.utilities = vec![0.0; spec.num_players()];
    spec.utility(&t.0, &scratch.history, &mut scratch.utilities);
    backward(tables, &scratch, l, false, spec.num_players());
    Ok(EpisodeOutcome {
        history: scratch.history,
        utilities: scratch.utilities,
        sample_probability: l,
    })
}

/// Samples one leaf under the current strategies and returns the sampled
/// counterfactual value of every information set on the path, without
/// updating anything. Information sets off the path have value zero.
pub fn sampled_counterfactual_values(
    spec: &dyn GameSpec,
    tables: &mut InfosetTables,
    t: &TypeVector,
    eps: f64,
    rng: &mut impl Rng,
) -> Result<Vec<(InfoSetKey, f64)>, SolverError> {
    check_types(spec, t)?;
    let mut scratch = Scratch::default();
    let l = forward(spec, tables, &t.0, eps, rng, &mut scratch);
    scratch.utilities = vec![0.0; spec.num_players()];
    spec.utility(&t.0, &scratch.history, &mut scratch.utilities);
    let mut x = 1.0;
    let mut out = Vec::with_capacity(scratch.path.len());
    for step in scratch.path.iter().rev() {
        x *= step.sigma;
        let w = scratch.utilities[step.player] / l * step.others;
        out.push((tables.codec.decode(tables.packed_key(step.node)), x * w));
    }
    out.reverse();
    Ok(out)
}

fn check_types(spec: &dyn GameSpec, t: &TypeVector) -> Result<(), SolverError> {
    if t.0.len() != spec.num_players() {
        return Err(GameError::TypeVectorLength {
            expected: spec.num_players(),
            got: t.0.len(),
        }
        .into());
    }
    for (p, ty) in t.0.iter().enumerate() {
        if ty.0 >= spec.num_types(PlayerId(p)) {
            return Err(GameError::TypeOutOfRange { player: p, ty: ty.0 }.into());
        }
    }
    Ok(())
}

/// Draws one plan from the current strategies; unvisited information sets are
/// sampled uniformly.
pub fn sample_partial_plan(
    tables: &InfosetTables,
    layout: &PlanLayout,
    rng: &mut impl Rng,
) -> JointPlan {
    let plan = layout
        .slots
        .iter()
        .map(|slot| {
            let r: f64 = rng.random();
            let a = match tables.strategy(&slot.key) {
                Some(sigma) => sample_index(sigma.iter().copied(), r),
                None => ((r * slot.num_actions as f64) as usize).min(slot.num_actions - 1),
            };
            ActionId(a)
        })
        .collect();
    JointPlan(plan)
}

enum ChanceSampler {
    Product(Vec<Vec<f64>>),
    Joint(Vec<TypeVector>, Vec<f64>),
}

impl ChanceSampler {
    fn new(prior: &Prior) -> Self {
        match prior {
            Prior::Product(m) => ChanceSampler::Product(m.clone()),
            Prior::Joint(entries) => ChanceSampler::Joint(
                entries.iter().map(|(t, _)| t.clone()).collect(),
                entries.iter().map(|(_, w)| *w).collect(),
            ),
        }
    }

    fn sample(&self, rng: &mut impl Rng, out: &mut Vec<TypeId>) {
        out.clear();
        match self {
            ChanceSampler::Product(m) => {
                for probs in m {
                    let r: f64 = rng.random();
                    out.push(TypeId(sample_index(probs.iter().copied(), r)));
                }
            }
            ChanceSampler::Joint(types, w) => {
                let r: f64 = rng.random();
                let i = sample_index(w.iter().copied(), r);
                out.extend_from_slice(&types[i].0);
            }
        }
    }
}

/// One independent solver state: tables, counts and an RNG.
#[derive(Clone)]
struct Worker {
    tables: InfosetTables,
    visits: Vec<Vec<u64>>,
    freq: FrequencyTable,
    history: Vec<IterationRecord>,
    rng: ChaCha8Rng,
    scratch: Scratch,
    types: Vec<TypeId>,
    /// Cached node index per plan slot once the node exists.
    slot_nodes: Vec<Option<usize>>,
    slot_keys: Vec<u128>,
}

impl Worker {
    fn new(spec: &dyn GameSpec, layout: &PlanLayout, seed: u64) -> Result<Self, SolverError> {
        let tables = InfosetTables::new(spec)?;
        let slot_keys = layout
            .slots
            .iter()
            .map(|s| tables.codec.encode(&s.key))
            .collect();
        Ok(Worker {
            visits: (0..spec.num_players())
                .map(|p| vec![0; spec.num_types(PlayerId(p))])
                .collect(),
            freq: FrequencyTable::new(layout.clone()),
            history: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            scratch: Scratch::default(),
            types: Vec::new(),
            slot_nodes: vec![None; layout.slots.len()],
            slot_keys,
            tables,
        })
    }

    fn reset_tables(&mut self, tables: &InfosetTables) {
        self.tables.clone_from(tables);
        self.slot_nodes.iter_mut().for_each(|s| *s = None);
    }

    fn run(&mut self, spec: &dyn GameSpec, chance: &ChanceSampler, cfg: &SolverConfig, iterations: u64) {
        let n = spec.num_players();
        self.scratch.utilities.resize(n, 0.0);
        for _ in 0..iterations {
            chance.sample(&mut self.rng, &mut self.types);
            for (p, t) in self.types.iter().enumerate() {
                self.visits[p][t.0] += 1;
            }
            let l = forward(
                spec,
                &mut self.tables,
                &self.types,
                cfg.exploration,
                &mut self.rng,
                &mut self.scratch,
            );
            spec.utility(&self.types, &self.scratch.history, &mut self.scratch.utilities);
            backward(&mut self.tables, &self.scratch, l, cfg.record_all_values, n);
            self.sample_plan(cfg.record_history);
        }
    }

    fn sample_plan(&mut self, keep: bool) {
        let layout = &self.freq.layout;
        let mut code = 0u128;
        let mut actions = Vec::new();
        for (i, slot) in layout.slots.iter().enumerate() {
            if self.slot_nodes[i].is_none() {
                self.slot_nodes[i] = self.tables.find(self.slot_keys[i]);
            }
            let r: f64 = self.rng.random();
            let a = match self.slot_nodes[i] {
                Some(node) => sample_index(self.tables.node_strategy(node).iter().copied(), r),
                None => ((r * slot.num_actions as f64) as usize).min(slot.num_actions - 1),
            };
            code = code * slot.num_actions as u128 + a as u128;
            if keep {
                actions.push(ActionId(a));
            }
        }
        self.freq.record_code(code, 1);
        if keep {
            self.history.push(IterationRecord {
                types: TypeVector(self.types.clone()),
                plan: JointPlan(actions),
            });
        }
    }
}

fn worker_seed(seed: u64, worker: usize) -> u64 {
    // splitmix64 step keeps worker streams unrelated for nearby seeds
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(worker as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `cfg.iterations` iterations of MCCFR-S on `spec` under `prior`.
///
/// With one worker this is exactly the sequential algorithm and bit-for-bit
/// reproducible for a fixed seed. With several workers each runs
/// `sync_interval` iterations against a snapshot, after which regret and value
/// increments are summed and strategies re-matched.
pub fn solve(spec: &dyn GameSpec, prior: &Prior, cfg: &SolverConfig) -> Result<SolveResult, SolverError> {
    cfg.validate()?;
    prior.validate(spec)?;
    let layout = if cfg.record_full_plans {
        PlanLayout::full(spec)
    } else {
        PlanLayout::partial(spec)
    };
    layout.check_capacity()?;
    let chance = ChanceSampler::new(prior);
    let start = Instant::now();

    let (tables, visits, freq, history) = if cfg.workers == 1 {
        let mut w = Worker::new(spec, &layout, worker_seed(cfg.seed, 0))?;
        w.run(spec, &chance, cfg, cfg.iterations);
        (w.tables, w.visits, w.freq, w.history)
    } else {
        solve_parallel(spec, &layout, &chance, cfg)?
    };

    Ok(SolveResult {
        tables,
        visits,
        frequencies: freq,
        iterations: cfg.iterations,
        history,
        duration: start.elapsed(),
    })
}

type Merged = (InfosetTables, Vec<Vec<u64>>, FrequencyTable, Vec<IterationRecord>);

fn solve_parallel(
    spec: &dyn GameSpec,
    layout: &PlanLayout,
    chance: &ChanceSampler,
    cfg: &SolverConfig,
) -> Result<Merged, SolverError> {
    let mut workers: Vec<Worker> = (0..cfg.workers)
        .map(|w| Worker::new(spec, layout, worker_seed(cfg.seed, w)))
        .collect::<Result<_, _>>()?;
    let mut master = InfosetTables::new(spec)?;
    let mut remaining = cfg.iterations;
    while remaining > 0 {
        let round = remaining.min(cfg.sync_interval * cfg.workers as u64);
        let share = round / cfg.workers as u64;
        let extra = round % cfg.workers as u64;
        for w in workers.iter_mut() {
            w.reset_tables(&master);
        }
        std::thread::scope(|s| {
            for (i, w) in workers.iter_mut().enumerate() {
                let iters = share + u64::from((i as u64) < extra);
                s.spawn(move || w.run(spec, chance, cfg, iters));
            }
        });
        let base_len = master.len();
        let base = master.clone();
        for w in &workers {
            for node in 0..w.tables.len() {
                let key = w.tables.packed_key(node);
                let len = w.tables.range(node).len();
                let target = master.get_or_insert(key, || len);
                let dst = master.range(target);
                let src = w.tables.range(node);
                for (d, s) in dst.zip(src) {
                    let old = if node < base_len {
                        base.regrets[d]
                    } else {
                        0.0
                    };
                    master.regrets[d] += w.tables.regrets[s] - old;
                }
                let old_value = if node < base_len { base.values[node] } else { 0.0 };
                master.values[target] += w.tables.values[node] - old_value;
            }
        }
        for node in 0..master.len() {
            master.rematch(node);
        }
        remaining -= round;
    }
    let mut visits: Vec<Vec<u64>> = workers[0].visits.iter().map(|v| vec![0; v.len()]).collect();
    let mut freq = FrequencyTable::new(layout.clone());
    let mut history = Vec::new();
    for w in &workers {
        for (acc, v) in visits.iter_mut().zip(&w.visits) {
            for (a, b) in acc.iter_mut().zip(v) {
                *a += b;
            }
        }
        freq.merge(&w.freq);
        history.extend(w.history.iter().cloned());
    }
    Ok((master, visits, freq, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::TabularGame;

    fn bandit() -> TabularGame {
        TabularGame::new(vec![vec![vec![2]]], 1, |_, h| {
            vec![if h[0].0 == 0 { 1.0 } else { 0.0 }]
        })
        .unwrap()
    }

    #[test]
    fn single_node_regret_increment() {
        let g = bandit();
        let mut tables = InfosetTables::new(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = TypeVector(vec![TypeId(0)]);
        let out = mccfr_episode(&g, &mut tables, &t, 0.6, &mut rng).unwrap();
        let a = out.history[0].0;
        // σ was uniform, q(a) = 0.4 * 0.5 + 0.3 = 0.5, w = u / q.
        assert!((out.sample_probability - 0.5).abs() < 1e-12);
        let w = out.utilities[0] / 0.5;
        let r = tables.regrets(&InfoSetKey::root(PlayerId(0), TypeId(0))).unwrap();
        assert!((r[a] - 0.5 * w).abs() < 1e-12);
        assert!((r[1 - a] + 0.5 * w).abs() < 1e-12);
        let v = tables.value(&InfoSetKey::root(PlayerId(0), TypeId(0))).unwrap();
        assert!((v - 0.5 * w).abs() < 1e-12);
    }

    #[test]
    fn full_exploration_samples_uniformly() {
        let g = TabularGame::new(vec![vec![vec![3, 2]], vec![vec![4, 5]]], 2, |_, _| {
            vec![0.0, 0.0]
        })
        .unwrap();
        let mut tables = InfosetTables::new(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let t = TypeVector(vec![TypeId(0), TypeId(0)]);
        let out = mccfr_episode(&g, &mut tables, &t, 1.0, &mut rng).unwrap();
        let expected = 1.0 / (3.0 * 4.0 * 2.0 * 5.0);
        assert!((out.sample_probability - expected).abs() < 1e-15);
    }

    #[test]
    fn one_iteration_bookkeeping() {
        let g = crate::verify::games::random_bayesian_game(4);
        let prior = Prior::uniform(&g);
        let res = solve(&g, &prior, &SolverConfig::default().with_iterations(1)).unwrap();
        assert_eq!(res.frequencies.total(), 1);
        for p in 0..2 {
            assert_eq!(res.visits[p].iter().sum::<u64>(), 1);
        }
        for (key, node) in res.tables.entries() {
            let s: f64 = res.tables.node_strategy(node).iter().sum();
            assert!((s - 1.0).abs() < 1e-9, "{key:?}");
        }
    }

    #[test]
    fn bandit_concentrates_on_best_action() {
        let g = bandit();
        let cfg = SolverConfig::default().with_iterations(10_000);
        let res = solve(&g, &Prior::uniform(&g), &cfg).unwrap();
        let on_a: u64 = res
            .frequencies
            .entries()
            .iter()
            .filter(|(p, _)| p.0[0].0 == 0)
            .map(|(_, c)| c)
            .sum();
        assert!(on_a as f64 / 10_000.0 >= 0.9, "mass on A = {on_a}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = bandit();
        let bad = Prior::Product(vec![vec![-0.5, 1.5]]);
        assert!(matches!(
            solve(&g, &bad, &SolverConfig::default()),
            Err(SolverError::Game(GameError::InvalidPrior(_)))
        ));
        let cfg = SolverConfig {
            exploration: 0.0,
            ..SolverConfig::default()
        };
        assert!(solve(&g, &Prior::uniform(&g), &cfg).is_err());
    }

    #[test]
    fn deterministic_for_a_seed() {
        let g = crate::verify::games::random_bayesian_game(11);
        let prior = Prior::uniform(&g);
        let cfg = SolverConfig::default().with_iterations(2_000).with_seed(5);
        let a = solve(&g, &prior, &cfg).unwrap();
        let b = solve(&g, &prior, &cfg).unwrap();
        assert_eq!(a.frequencies.entries(), b.frequencies.entries());
        assert_eq!(a.tables.regrets, b.tables.regrets);
        assert_eq!(a.tables.values, b.tables.values);
    }

    #[test]
    fn parallel_bookkeeping() {
        let g = crate::verify::games::random_bayesian_game(2);
        let prior = Prior::uniform(&g);
        let cfg = SolverConfig {
            iterations: 5_003,
            workers: 3,
            sync_interval: 400,
            ..SolverConfig::default()
        };
        let res = solve(&g, &prior, &cfg).unwrap();
        assert_eq!(res.frequencies.total(), 5_003);
        for p in 0..2 {
            assert_eq!(res.visits[p].iter().sum::<u64>(), 5_003);
        }
    }
}
