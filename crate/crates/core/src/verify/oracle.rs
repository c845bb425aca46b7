use rustc_hash::FxHashMap;

use crate::game::{increment, ActionId, GameSpec, InfoSetKey, PlayerId, Prior, TypeId, TypeVector};
use crate::solver::{FrequencyTable, InfosetTables, IterationRecord, JointPlan, PlanLayout};

/// Maps information sets to their slot in a full [`PlanLayout`] so a joint
/// plan can be played out for any type vector.
pub struct PlanIndex<'a> {
    layout: &'a PlanLayout,
    slots: FxHashMap<InfoSetKey, usize>,
}

impl<'a> PlanIndex<'a> {
    pub fn new(layout: &'a PlanLayout) -> Self {
        let slots = layout
            .slots
            .iter()
            .enumerate()
            .map(|(i, s)| (s.key.clone(), i))
            .collect();
        PlanIndex { layout, slots }
    }

    pub fn layout(&self) -> &PlanLayout {
        self.layout
    }

    /// Terminal history produced when every player follows `plan` under `types`.
    pub fn play(&self, spec: &dyn GameSpec, plan: &[ActionId], types: &[TypeId]) -> Vec<ActionId> {
        let n = spec.num_players();
        let mut history = Vec::with_capacity(n * spec.num_stages());
        for stage in 0..spec.num_stages() {
            let done = history.len();
            for p in 0..n {
                let key = InfoSetKey {
                    player: PlayerId(p),
                    ty: types[p],
                    stage,
                    history: history[..done].to_vec(),
                };
                let slot = self.slots[&key];
                history.push(plan[slot]);
            }
        }
        history
    }

    fn utility(&self, spec: &dyn GameSpec, plan: &[ActionId], types: &[TypeId], player: usize) -> f64 {
        let h = self.play(spec, plan, types);
        let mut out = vec![0.0; spec.num_players()];
        spec.utility(types, &h, &mut out);
        out[player]
    }
}

/// Type vectors with positive prior mass that give `player` type `ty`, with
/// their conditional probabilities `p(t_{-i} | t_i)`.
pub fn conditional_types(spec: &dyn GameSpec, prior: &Prior, player: PlayerId, ty: TypeId) -> Vec<(TypeVector, f64)> {
    let all: Vec<(TypeVector, f64)> = TypeVector::enumerate(spec)
        .into_iter()
        .filter(|t| t.get(player) == ty)
        .map(|t| {
            let w = prior.probability(&t.0);
            (t, w)
        })
        .filter(|(_, w)| *w > 0.0)
        .collect();
    let total: f64 = all.iter().map(|(_, w)| w).sum();
    all.into_iter().map(|(t, w)| (t, w / total)).collect()
}

/// Gain from one deviation in the Bayes-CCE inequality.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviationRegret {
    pub player: PlayerId,
    pub ty: TypeId,
    /// Actions of the deviating `(player, ty)`, one per slot of that type.
    pub deviation: Vec<ActionId>,
    pub regret: f64,
}

/// For every player, type with positive mass and deviation plan, the
/// expected gain `E_{s~φ/M} E_{t_{-i}} [u_i(t_i; s'_i, s_{-i}) − u_i(t_i; s)]`.
///
/// `freq` must record full plans.
pub fn bayes_cce_regrets(spec: &dyn GameSpec, prior: &Prior, freq: &FrequencyTable) -> Vec<DeviationRegret> {
    assert!(freq.layout.full, "deviation regrets need full-plan recording");
    let index = PlanIndex::new(&freq.layout);
    let total = freq.total() as f64;
    let entries = freq.entries();
    let mut out = Vec::new();
    for p in 0..spec.num_players() {
        for t in 0..spec.num_types(PlayerId(p)) {
            let cond = conditional_types(spec, prior, PlayerId(p), TypeId(t));
            if cond.is_empty() {
                continue;
            }
            let range = freq.layout.slot_range(PlayerId(p), TypeId(t));
            let radix: Vec<usize> = freq.layout.slots[range.clone()]
                .iter()
                .map(|s| s.num_actions)
                .collect();
            let baseline: f64 = entries
                .iter()
                .map(|(plan, c)| {
                    let u: f64 = cond
                        .iter()
                        .map(|(tv, w)| w * index.utility(spec, &plan.0, &tv.0, p))
                        .sum();
                    u * *c as f64 / total
                })
                .sum();
            let mut digits = vec![0usize; radix.len()];
            loop {
                let dev: Vec<ActionId> = digits.iter().map(|&a| ActionId(a)).collect();
                let mut value = 0.0;
                for (plan, c) in &entries {
                    let mut s = plan.0.clone();
                    s[range.clone()].copy_from_slice(&dev);
                    let u: f64 = cond
                        .iter()
                        .map(|(tv, w)| w * index.utility(spec, &s, &tv.0, p))
                        .sum();
                    value += u * *c as f64 / total;
                }
                out.push(DeviationRegret {
                    player: PlayerId(p),
                    ty: TypeId(t),
                    deviation: dev,
                    regret: value - baseline,
                });
                if !increment(&mut digits, &radix) {
                    break;
                }
            }
        }
    }
    out
}

/// Expected utility `V(t_i) = E_{s~φ/M} E_{t_{-i}} u_i(t_i; s(t_i, t_{-i}))`
/// of every type of `player`; `NaN` for types without prior mass.
pub fn exact_type_values(spec: &dyn GameSpec, prior: &Prior, freq: &FrequencyTable, player: PlayerId) -> Vec<f64> {
    assert!(freq.layout.full, "type values need full-plan recording");
    let index = PlanIndex::new(&freq.layout);
    let total = freq.total() as f64;
    let entries = freq.entries();
    (0..spec.num_types(player))
        .map(|t| {
            let cond = conditional_types(spec, prior, player, TypeId(t));
            if cond.is_empty() {
                return f64::NAN;
            }
            entries
                .iter()
                .map(|(plan, c)| {
                    let u: f64 = cond
                        .iter()
                        .map(|(tv, w)| w * index.utility(spec, &plan.0, &tv.0, player.0))
                        .sum();
                    u * *c as f64 / total
                })
                .sum()
        })
        .collect()
}

fn strategy_or_uniform(tables: &InfosetTables, key: &InfoSetKey, k: usize) -> Vec<f64> {
    tables
        .strategy(key)
        .map(|s| s.to_vec())
        .unwrap_or_else(|| vec![1.0 / k as f64; k])
}

/// Exact counterfactual value of every information set reachable under the
/// type vector `t`, by enumerating all leaves:
/// `v_i(σ, I) = Σ_{z ∈ Z_I} π_{-i}(z[I]) π(z[I], z) u_i(z)`.
pub fn exact_counterfactual_values(
    spec: &dyn GameSpec,
    tables: &InfosetTables,
    t: &TypeVector,
) -> FxHashMap<InfoSetKey, f64> {
    let n = spec.num_players();
    let mut out: FxHashMap<InfoSetKey, f64> = FxHashMap::default();
    let mut path: Vec<(InfoSetKey, f64)> = Vec::new();
    let mut history = Vec::new();
    walk(spec, tables, &t.0, n, &mut history, &mut path, &mut out);
    out
}

fn walk(
    spec: &dyn GameSpec,
    tables: &InfosetTables,
    types: &[TypeId],
    n: usize,
    history: &mut Vec<ActionId>,
    path: &mut Vec<(InfoSetKey, f64)>,
    out: &mut FxHashMap<InfoSetKey, f64>,
) {
    let depth = history.len();
    if depth == n * spec.num_stages() {
        let mut u = vec![0.0; n];
        spec.utility(types, history, &mut u);
        for (i, (key, _)) in path.iter().enumerate() {
            let p = key.player.0;
            let others: f64 = path[..i]
                .iter()
                .filter(|(k, _)| k.player.0 != p)
                .map(|(_, s)| s)
                .product();
            let tail: f64 = path[i..].iter().map(|(_, s)| s).product();
            *out.entry(key.clone()).or_insert(0.0) += others * tail * u[p];
        }
        return;
    }
    let stage = depth / n;
    let p = depth % n;
    let key = InfoSetKey {
        player: PlayerId(p),
        ty: types[p],
        stage,
        history: history[..stage * n].to_vec(),
    };
    let k = spec.num_actions(PlayerId(p), types[p], stage, &key.history);
    let sigma = strategy_or_uniform(tables, &key, k);
    out.entry(key.clone()).or_insert(0.0);
    for (a, &s) in sigma.iter().enumerate() {
        history.push(ActionId(a));
        path.push((key.clone(), s));
        walk(spec, tables, types, n, history, path, out);
        path.pop();
        history.pop();
    }
}

/// Per-player sum of best-response gains (NashConv) of the independent
/// profile `strategies[player]` in a one-stage, single-type game.
pub fn nash_conv_one_stage(spec: &dyn GameSpec, strategies: &[Vec<f64>]) -> f64 {
    assert_eq!(spec.num_stages(), 1);
    let n = spec.num_players();
    let types = vec![TypeId(0); n];
    let radix: Vec<usize> = strategies.iter().map(|s| s.len()).collect();
    let mut value = vec![0.0; n];
    // deviation[p][a]: p's utility when playing a against the others' profile
    let mut deviation: Vec<Vec<f64>> = radix.iter().map(|&k| vec![0.0; k]).collect();
    let mut digits = vec![0usize; n];
    let mut u = vec![0.0; n];
    loop {
        let h: Vec<ActionId> = digits.iter().map(|&a| ActionId(a)).collect();
        spec.utility(&types, &h, &mut u);
        let prob: f64 = digits.iter().enumerate().map(|(p, &a)| strategies[p][a]).product();
        for p in 0..n {
            value[p] += prob * u[p];
            let others: f64 = digits
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != p)
                .map(|(j, &a)| strategies[j][a])
                .product();
            deviation[p][digits[p]] += others * u[p];
        }
        if !increment(&mut digits, &radix) {
            break;
        }
    }
    (0..n)
        .map(|p| deviation[p].iter().cloned().fold(f64::NEG_INFINITY, f64::max) - value[p])
        .sum()
}

/// Exploitability of a two-player zero-sum profile: NashConv divided by the
/// number of players.
pub fn exploitability_one_stage(spec: &dyn GameSpec, strategies: &[Vec<f64>]) -> f64 {
    nash_conv_one_stage(spec, strategies) / spec.num_players() as f64
}

/// Largest sampled regret `R̂_{t_i}(s'_i)` of `(player, ty)` over all
/// deviation plans, replaying the recorded full plans of the iterations whose
/// sampled types gave the player `ty`. `None` if no such iteration exists.
pub fn max_sampled_regret(
    spec: &dyn GameSpec,
    layout: &PlanLayout,
    history: &[IterationRecord],
    player: PlayerId,
    ty: TypeId,
) -> Option<f64> {
    assert!(layout.full, "sampled regrets need full-plan recording");
    let index = PlanIndex::new(layout);
    let rounds: Vec<&IterationRecord> = history.iter().filter(|r| r.types.get(player) == ty).collect();
    if rounds.is_empty() {
        return None;
    }
    let range = layout.slot_range(player, ty);
    let radix: Vec<usize> = layout.slots[range.clone()].iter().map(|s| s.num_actions).collect();
    let baseline: f64 = rounds
        .iter()
        .map(|r| index.utility(spec, &r.plan.0, &r.types.0, player.0))
        .sum();
    let mut best = f64::NEG_INFINITY;
    let mut digits = vec![0usize; radix.len()];
    loop {
        let mut value = 0.0;
        for r in &rounds {
            let mut s = r.plan.0.clone();
            for (slot, &a) in range.clone().zip(&digits) {
                s[slot] = ActionId(a);
            }
            value += index.utility(spec, &s, &r.types.0, player.0);
        }
        best = best.max((value - baseline) / rounds.len() as f64);
        if !increment(&mut digits, &radix) {
            break;
        }
    }
    Some(best)
}

/// Empirical plan distribution `φ / M`.
pub fn plan_distribution(freq: &FrequencyTable) -> Vec<(JointPlan, f64)> {
    let total = freq.total() as f64;
    freq.entries()
        .into_iter()
        .map(|(p, c)| (p, c as f64 / total))
        .collect()
}
