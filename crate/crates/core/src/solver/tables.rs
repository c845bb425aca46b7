use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::game::{enumerate_infosets, ActionId, GameSpec, InfoSetKey, PlayerId, TypeId};

use super::SolverError;

const HISTORY_BITS: u32 = 96;

/// Packs information-set keys into a `u128`: 32 high bits for
/// `(player, type, stage)`, 96 low bits for the completed-stage history in
/// mixed radix.
#[derive(Clone, Debug)]
pub(crate) struct KeyCodec {
    players: usize,
    stages: usize,
    max_types: usize,
    radix: Vec<u128>,
}

impl KeyCodec {
    pub(crate) fn new(spec: &dyn GameSpec) -> Result<Self, SolverError> {
        let players = spec.num_players();
        let stages = spec.num_stages();
        let max_types = (0..players)
            .map(|p| spec.num_types(PlayerId(p)))
            .max()
            .unwrap_or(1);
        let radix: Vec<u128> = (0..players)
            .map(|p| spec.max_actions(PlayerId(p)).max(1) as u128)
            .collect();
        let mut joint_radix: u128 = 1;
        for r in &radix {
            joint_radix = joint_radix
                .checked_mul(*r)
                .ok_or(SolverError::TooLarge("joint action space"))?;
        }
        let mut span: u128 = 1;
        for _ in 1..stages {
            span = span
                .checked_mul(joint_radix)
                .ok_or(SolverError::TooLarge("history encoding"))?;
        }
        if span > (1u128 << HISTORY_BITS) {
            return Err(SolverError::TooLarge("history encoding"));
        }
        let head = (players as u128) * (max_types as u128) * (stages as u128);
        if head > u32::MAX as u128 {
            return Err(SolverError::TooLarge("player/type/stage header"));
        }
        Ok(KeyCodec {
            players,
            stages,
            max_types,
            radix,
        })
    }

    #[inline]
    pub(crate) fn pack(&self, player: usize, ty: usize, stage: usize, code: u128) -> u128 {
        let head = ((player * self.max_types + ty) * self.stages + stage) as u128;
        (head << HISTORY_BITS) | code
    }

    /// Appends one stage's joint action to a history code.
    #[inline]
    pub(crate) fn push_stage(&self, code: u128, joint: &[ActionId]) -> u128 {
        let mut c = code;
        for (p, a) in joint.iter().enumerate() {
            c = c * self.radix[p] + a.0 as u128;
        }
        debug_assert!(c < (1u128 << HISTORY_BITS) || self.stages <= 1);
        c
    }

    pub(crate) fn encode(&self, key: &InfoSetKey) -> u128 {
        let mut code = 0;
        for stage in key.history.chunks(self.players) {
            code = self.push_stage(code, stage);
        }
        self.pack(key.player.0, key.ty.0, key.stage, code)
    }

    pub(crate) fn decode(&self, packed: u128) -> InfoSetKey {
        let head = (packed >> HISTORY_BITS) as usize;
        let mut code = packed & ((1u128 << HISTORY_BITS) - 1);
        let stage = head % self.stages;
        let pt = head / self.stages;
        let ty = pt % self.max_types;
        let player = pt / self.max_types;
        let mut history = vec![ActionId(0); stage * self.players];
        for slot in (0..history.len()).rev() {
            let r = self.radix[slot % self.players];
            history[slot] = ActionId((code % r) as usize);
            code /= r;
        }
        InfoSetKey {
            player: PlayerId(player),
            ty: TypeId(ty),
            stage,
            history,
        }
    }
}

/// Per-information-set regrets, current strategy and cumulative sampled
/// counterfactual value, stored in flat arrays.
///
/// Entries are created lazily with zero regret and a uniform strategy.
#[derive(Clone, Debug)]
pub struct InfosetTables {
    pub(crate) codec: KeyCodec,
    index: FxHashMap<u128, u32>,
    keys: Vec<u128>,
    offsets: Vec<usize>,
    lens: Vec<usize>,
    pub(crate) regrets: Vec<f64>,
    pub(crate) strategy: Vec<f64>,
    pub(crate) values: Vec<f64>,
}

impl InfosetTables {
    pub fn new(spec: &dyn GameSpec) -> Result<Self, SolverError> {
        Ok(InfosetTables {
            codec: KeyCodec::new(spec)?,
            index: FxHashMap::default(),
            keys: Vec::new(),
            offsets: Vec::new(),
            lens: Vec::new(),
            regrets: Vec::new(),
            strategy: Vec::new(),
            values: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    #[inline]
    pub(crate) fn find(&self, packed: u128) -> Option<usize> {
        self.index.get(&packed).map(|&i| i as usize)
    }

    #[inline]
    pub(crate) fn get_or_insert(&mut self, packed: u128, num_actions: impl FnOnce() -> usize) -> usize {
        if let Some(&i) = self.index.get(&packed) {
            return i as usize;
        }
        let k = num_actions();
        assert!(k > 0, "information set with an empty action list");
        let i = self.keys.len();
        self.index.insert(packed, i as u32);
        self.keys.push(packed);
        self.offsets.push(self.regrets.len());
        self.lens.push(k);
        self.regrets.extend(std::iter::repeat_n(0.0, k));
        self.strategy.extend(std::iter::repeat_n(1.0 / k as f64, k));
        self.values.push(0.0);
        i
    }

    #[inline]
    pub(crate) fn range(&self, node: usize) -> std::ops::Range<usize> {
        self.offsets[node]..self.offsets[node] + self.lens[node]
    }

    #[inline]
    pub(crate) fn node_strategy(&self, node: usize) -> &[f64] {
        &self.strategy[self.range(node)]
    }

    pub(crate) fn packed_key(&self, node: usize) -> u128 {
        self.keys[node]
    }

    /// Recomputes the current strategy of `node` by regret matching.
    #[inline]
    pub(crate) fn rematch(&mut self, node: usize) {
        let r = self.range(node);
        let (regrets, strategy) = (&self.regrets[r.clone()], &mut self.strategy[r]);
        regret_match_into(regrets, strategy);
    }

    pub fn strategy(&self, key: &InfoSetKey) -> Option<&[f64]> {
        self.find(self.codec.encode(key)).map(|n| self.node_strategy(n))
    }

    pub fn regrets(&self, key: &InfoSetKey) -> Option<&[f64]> {
        self.find(self.codec.encode(key))
            .map(|n| &self.regrets[self.range(n)])
    }

    /// Cumulative sampled counterfactual value at `key` (recorded at root
    /// information sets, or everywhere when the solver was asked to).
    pub fn value(&self, key: &InfoSetKey) -> Option<f64> {
        self.find(self.codec.encode(key)).map(|n| self.values[n])
    }

    /// Overwrites the strategy at `key`, creating the entry when needed.
    /// Used to evaluate fixed strategies.
    pub fn set_strategy(&mut self, key: &InfoSetKey, probs: &[f64]) {
        let packed = self.codec.encode(key);
        let node = self.get_or_insert(packed, || probs.len());
        let r = self.range(node);
        assert_eq!(r.len(), probs.len(), "strategy length mismatch at {key:?}");
        self.strategy[r].copy_from_slice(probs);
    }

    /// All entries with decoded keys, sorted by key.
    pub fn entries(&self) -> Vec<(InfoSetKey, usize)> {
        let mut out: Vec<(InfoSetKey, usize)> = (0..self.keys.len())
            .map(|n| (self.codec.decode(self.keys[n]), n))
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    pub(crate) fn node_regrets(&self, node: usize) -> &[f64] {
        &self.regrets[self.range(node)]
    }

    pub(crate) fn node_value(&self, node: usize) -> f64 {
        self.values[node]
    }
}

/// Regret matching: positive regrets normalized, uniform when none is positive.
pub fn regret_match(regrets: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; regrets.len()];
    regret_match_into(regrets, &mut out);
    out
}

#[inline]
pub(crate) fn regret_match_into(regrets: &[f64], out: &mut [f64]) {
    let total: f64 = regrets.iter().map(|r| r.max(0.0)).sum();
    if total > 0.0 {
        for (o, r) in out.iter_mut().zip(regrets) {
            *o = r.max(0.0) / total;
        }
    } else {
        out.fill(1.0 / regrets.len() as f64);
    }
}

/// One recorded slot of a plan: the information set and its action count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanSlot {
    pub key: InfoSetKey,
    pub num_actions: usize,
}

/// Which information sets a recorded plan covers. Slots are grouped by player,
/// then type, then information set order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanLayout {
    pub full: bool,
    pub slots: Vec<PlanSlot>,
    /// `groups[player][type]` is the slot range of that `(player, type)`.
    groups: Vec<Vec<(usize, usize)>>,
}

impl PlanLayout {
    /// First-stage action per `(player, type)`.
    pub fn partial(spec: &dyn GameSpec) -> Self {
        Self::build(spec, false)
    }

    /// Every reachable information set of every `(player, type)`.
    pub fn full(spec: &dyn GameSpec) -> Self {
        Self::build(spec, true)
    }

    fn build(spec: &dyn GameSpec, full: bool) -> Self {
        let mut slots = Vec::new();
        let mut groups = Vec::new();
        for p in 0..spec.num_players() {
            let mut per_type = Vec::new();
            for t in 0..spec.num_types(PlayerId(p)) {
                let start = slots.len();
                let keys = if full {
                    enumerate_infosets(spec, PlayerId(p), TypeId(t))
                } else {
                    vec![InfoSetKey::root(PlayerId(p), TypeId(t))]
                };
                for key in keys {
                    let k = spec.num_actions(key.player, key.ty, key.stage, &key.history);
                    slots.push(PlanSlot { key, num_actions: k });
                }
                per_type.push((start, slots.len()));
            }
            groups.push(per_type);
        }
        PlanLayout { full, slots, groups }
    }

    pub fn slot_range(&self, player: PlayerId, ty: TypeId) -> std::ops::Range<usize> {
        let (a, b) = self.groups[player.0][ty.0];
        a..b
    }

    /// Slot range of every type of `player`.
    pub fn player_range(&self, player: PlayerId) -> std::ops::Range<usize> {
        let g = &self.groups[player.0];
        g[0].0..g[g.len() - 1].1
    }

    pub fn num_players(&self) -> usize {
        self.groups.len()
    }

    pub fn num_types(&self, player: PlayerId) -> usize {
        self.groups[player.0].len()
    }

    pub(crate) fn check_capacity(&self) -> Result<(), SolverError> {
        let mut span: u128 = 1;
        for s in &self.slots {
            span = span
                .checked_mul(s.num_actions as u128)
                .ok_or(SolverError::TooLarge("plan encoding"))?;
        }
        Ok(())
    }

    pub(crate) fn encode(&self, actions: &[ActionId]) -> u128 {
        actions
            .iter()
            .zip(&self.slots)
            .fold(0u128, |acc, (a, s)| acc * s.num_actions as u128 + a.0 as u128)
    }

    pub(crate) fn decode(&self, mut code: u128) -> Vec<ActionId> {
        let mut out = vec![ActionId(0); self.slots.len()];
        for (i, s) in self.slots.iter().enumerate().rev() {
            let r = s.num_actions as u128;
            out[i] = ActionId((code % r) as usize);
            code /= r;
        }
        out
    }
}

/// A sampled plan: one action per slot of a [`PlanLayout`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointPlan(pub Vec<ActionId>);

impl JointPlan {
    /// The part of the plan owned by `player`, one entry per slot of that player.
    pub fn component<'a>(&'a self, layout: &PlanLayout, player: PlayerId) -> &'a [ActionId] {
        &self.0[layout.player_range(player)]
    }

    /// First-stage action of `(player, ty)`.
    pub fn root_action(&self, layout: &PlanLayout, player: PlayerId, ty: TypeId) -> ActionId {
        self.0[layout.slot_range(player, ty).start]
    }
}

/// Empirical plan counts `φ`, with total `M`.
#[derive(Clone, Debug)]
pub struct FrequencyTable {
    pub layout: PlanLayout,
    counts: FxHashMap<u128, u64>,
    total: u64,
}

impl FrequencyTable {
    pub fn new(layout: PlanLayout) -> Self {
        FrequencyTable {
            layout,
            counts: FxHashMap::default(),
            total: 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn record(&mut self, plan: &JointPlan) {
        let code = self.layout.encode(&plan.0);
        self.record_code(code, 1);
    }

    #[inline]
    pub(crate) fn record_code(&mut self, code: u128, count: u64) {
        *self.counts.entry(code).or_insert(0) += count;
        self.total += count;
    }

    pub(crate) fn merge(&mut self, other: &FrequencyTable) {
        for (&code, &c) in &other.counts {
            self.record_code(code, c);
        }
    }

    /// Plans and counts, sorted by plan.
    pub fn entries(&self) -> Vec<(JointPlan, u64)> {
        let mut codes: Vec<(u128, u64)> = self.counts.iter().map(|(&k, &v)| (k, v)).collect();
        codes.sort_unstable();
        codes
            .into_iter()
            .map(|(code, c)| (JointPlan(self.layout.decode(code)), c))
            .collect()
    }
}
