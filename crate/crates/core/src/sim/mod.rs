//! Closed-loop receding-horizon planning with one independent solver per
//! agent, the complete-information baseline, and run metrics.
//!
//! Every step builds the trajectory trees of every vehicle under every type,
//! lets each agent solve its own copy of the game under its own belief, has
//! each agent pick a first-stage segment, executes `replan` seconds of all
//! segments at once, and finally lets each agent update its belief about the
//! others from the motion they actually executed.

pub mod baseline;
pub mod bench;
pub mod metrics;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::belief::{update_marginal, Belief, BeliefError, MixtureComponent, ObservationModel};
use crate::game::{ActionId, GameSpec, PlayerId, Prior, TypeId};
use crate::policy::{
    accurate_plans, estimate_type_values, marginal_distribution, marginal_plan, select_type_among, PolicyError,
    Scheme, TypeValueEstimate,
};
use crate::solver::{solve, SolveResult, SolverConfig, SolverError};
use crate::traffic::{
    build_trajectory_tree, ActionTarget, ReferenceLine, Role, Scenario, TrafficError, TrafficGame,
    TrajectorySample, TrajectorySegment, TrajectoryTree, VehicleGeometry, VehicleState,
};

pub use baseline::make_baseline_game;
pub use bench::{benchmark_solver, BenchRow};
pub use metrics::{classify_merge, compute_metrics, run_metrics, MergeOutcome, MetricsReport, RunMetrics};

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation setup: {0}")]
    Config(String),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error("run aborted at step {step}: {message}")]
    Aborted {
        step: usize,
        message: String,
        trace: Box<SimTrace>,
    },
}

impl SimError {
    /// Trace recorded up to the failing step, if the run got that far.
    pub fn partial_trace(&self) -> Option<&SimTrace> {
        match self {
            SimError::Aborted { trace, .. } => Some(trace),
            _ => None,
        }
    }
}

/// How an agent models the others.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Incomplete-information game over intentions.
    #[default]
    Bayes,
    /// Single-type game over the union of each vehicle's actions.
    Baseline,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bayes" | "proposed" => Ok(Mode::Bayes),
            "baseline" | "complete" => Ok(Mode::Baseline),
            other => Err(format!("unknown mode {other}; expected bayes or baseline")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Bayes => "bayes",
            Mode::Baseline => "baseline",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub player: PlayerId,
    pub role: Role,
    pub mode: Mode,
    /// Fixed intention of a human driver; the ego picks its own each step.
    pub true_type: Option<TypeId>,
    pub solver: SolverConfig,
    pub scheme: Scheme,
}

impl AgentConfig {
    /// One agent per vehicle: the ego in `ego_mode`, humans in
    /// [`Mode::Bayes`] with the scenario's true types.
    pub fn for_scenario(
        scenario: &Scenario,
        ego_mode: Mode,
        solver: &SolverConfig,
        scheme: Scheme,
    ) -> Result<Vec<AgentConfig>, SimError> {
        scenario.validate()?;
        scenario
            .vehicles
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let true_type = match v.role {
                    Role::Ego => None,
                    Role::Human => Some(TypeId(scenario.true_type(i).ok_or_else(|| {
                        SimError::Config(format!("human vehicle {} has no valid true_type", v.name))
                    })?)),
                };
                Ok(AgentConfig {
                    player: PlayerId(i),
                    role: v.role,
                    mode: if v.role == Role::Ego { ego_mode } else { Mode::Bayes },
                    true_type,
                    solver: solver.clone(),
                    scheme,
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub steps: usize,
    /// Seconds of each first-stage segment executed before replanning.
    pub replan: f64,
    pub seed: u64,
    /// Lower bound on any type's probability in the prior handed to a solver.
    pub belief_floor: f64,
}

impl SimOptions {
    pub fn from_scenario(scenario: &Scenario, seed: u64) -> Self {
        SimOptions {
            steps: scenario.steps,
            replan: scenario.replan,
            seed,
            belief_floor: 1e-3,
        }
    }
}

/// Decision of one agent at one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentDecision {
    pub player: PlayerId,
    pub mode: Mode,
    pub scheme: Scheme,
    /// Chosen (ego) or true (human) type; `None` under the baseline.
    pub ty: Option<TypeId>,
    pub type_name: String,
    pub action: ActionId,
    pub target: ActionTarget,
    pub reference: String,
    /// Per-type value estimates, kept for the ego.
    pub values: Option<TypeValueEstimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    /// States at the start of the step.
    pub states: Vec<VehicleState>,
    pub decisions: Vec<AgentDecision>,
    /// Executed part of each vehicle's segment, times absolute, both ends included.
    pub executed: Vec<Vec<TrajectorySample>>,
    /// Each agent's belief after this step's update.
    pub beliefs: Vec<Belief>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub step: usize,
    pub time: f64,
    pub a: usize,
    pub b: usize,
    /// Smallest circle-center distance over the step.
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub schema_version: u32,
    pub scenario: String,
    pub case: String,
    pub seed: u64,
    pub ego: usize,
    pub ego_mode: Mode,
    pub scheme: Scheme,
    pub iterations: u64,
    pub replan: f64,
    pub dt: f64,
    pub vehicles: Vec<String>,
    pub type_names: Vec<Vec<String>>,
    pub geometry: VehicleGeometry,
    pub steps: Vec<StepRecord>,
    pub final_states: Vec<VehicleState>,
    pub collisions: Vec<CollisionEvent>,
    /// Seconds spent in each agent's solve, per step. Kept out of the JSON so
    /// that traces stay reproducible.
    #[serde(skip)]
    pub solve_seconds: Vec<Vec<f64>>,
}

impl SimTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("traces serialize")
    }

    /// Executed samples of `vehicle` over the whole run, step boundaries counted once.
    pub fn timeline(&self, vehicle: usize) -> Vec<TrajectorySample> {
        let mut out = Vec::new();
        for (k, step) in self.steps.iter().enumerate() {
            let skip = usize::from(k > 0);
            out.extend(step.executed[vehicle].iter().skip(skip).copied());
        }
        out
    }

    /// The ego's belief after the last recorded step.
    pub fn final_ego_belief(&self) -> Option<&Belief> {
        self.steps.last().map(|s| &s.beliefs[self.ego])
    }

    pub fn collided(&self) -> bool {
        !self.collisions.is_empty()
    }
}

/// Per-agent, per-step solver seed: the run seed xor the player id, mixed
/// with the step by a splitmix64 round.
pub fn agent_seed(seed: u64, player: usize, step: usize) -> u64 {
    let mut z = (seed ^ player as u64).wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(step as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Trees of every vehicle under every type at the given states.
pub fn build_trees(
    scenario: &Scenario,
    lines: &BTreeMap<String, ReferenceLine>,
    states: &[VehicleState],
) -> Result<Vec<Vec<TrajectoryTree>>, TrafficError> {
    scenario
        .vehicles
        .iter()
        .enumerate()
        .map(|(v, spec)| {
            (0..spec.types.len())
                .map(|t| {
                    let intent = scenario.intention(v, t);
                    let line = lines.get(&intent.reference).ok_or_else(|| {
                        TrafficError::Config(format!("unknown reference line {}", intent.reference))
                    })?;
                    build_trajectory_tree(&states[v], line, &intent, &scenario.stage_durations, scenario.dt).map_err(
                        |e| TrafficError::Config(format!("vehicle {} type {}: {e}", spec.name, intent.name)),
                    )
                })
                .collect()
        })
        .collect()
}

/// Diagonal noise over `(x, y)` and, when configured, `v_long`.
pub fn observation_model(scenario: &Scenario) -> Result<ObservationModel, SimError> {
    let p = scenario.observation_std.powi(2);
    let mut diag = vec![p, p];
    if let Some(v) = scenario.velocity_std {
        diag.push(v * v);
    }
    ObservationModel::new(nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)))
        .map_err(|e| SimError::Config(format!("observation model: {e}")))
}

/// Observed end state of a sample under the scenario's observation model.
fn end_state(scenario: &Scenario, s: &TrajectorySample) -> Vec<f64> {
    let mut v = vec![s.x, s.y];
    if scenario.velocity_std.is_some() {
        v.push(s.v_long);
    }
    v
}

fn uniform_belief(scenario: &Scenario) -> Belief {
    let counts: Vec<usize> = scenario.vehicles.iter().map(|v| v.types.len()).collect();
    Belief::uniform(&counts)
}

enum StepFailure {
    Solver(SolverError),
    Policy(PolicyError),
    Belief(BeliefError),
    Traffic(TrafficError),
}

impl std::fmt::Display for StepFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StepFailure::Solver(e) => write!(f, "solver: {e}"),
            StepFailure::Policy(e) => write!(f, "policy: {e}"),
            StepFailure::Belief(e) => write!(f, "belief: {e}"),
            StepFailure::Traffic(e) => write!(f, "traffic: {e}"),
        }
    }
}

impl From<SolverError> for StepFailure {
    fn from(e: SolverError) -> Self {
        StepFailure::Solver(e)
    }
}
impl From<PolicyError> for StepFailure {
    fn from(e: PolicyError) -> Self {
        StepFailure::Policy(e)
    }
}
impl From<BeliefError> for StepFailure {
    fn from(e: BeliefError) -> Self {
        StepFailure::Belief(e)
    }
}
impl From<TrafficError> for StepFailure {
    fn from(e: TrafficError) -> Self {
        StepFailure::Traffic(e)
    }
}

struct AgentStep {
    decision: AgentDecision,
    segment: TrajectorySegment,
    result: SolveResult,
}

/// Runs the receding-horizon loop. Errors after the first step carry the
/// partial trace.
pub fn run_closed_loop(
    scenario: &Scenario,
    agents: &[AgentConfig],
    options: &SimOptions,
) -> Result<SimTrace, SimError> {
    scenario.validate()?;
    let n = scenario.vehicles.len();
    if agents.len() != n {
        return Err(SimError::Config(format!("{} agents for {n} vehicles", agents.len())));
    }
    for (i, a) in agents.iter().enumerate() {
        if a.player.0 != i {
            return Err(SimError::Config(format!("agent {i} is configured as player {}", a.player.0)));
        }
        if a.role != scenario.vehicles[i].role {
            return Err(SimError::Config(format!("agent {i} role disagrees with the scenario")));
        }
        match (a.role, a.true_type) {
            (Role::Human, None) => {
                return Err(SimError::Config(format!("human agent {i} needs a true type")));
            }
            (Role::Human, Some(t)) if t.0 >= scenario.vehicles[i].types.len() => {
                return Err(SimError::Config(format!("human agent {i} true type {} out of range", t.0)));
            }
            (Role::Human, Some(_)) if a.mode == Mode::Baseline => {
                return Err(SimError::Config("only the ego can run the baseline".into()));
            }
            _ => {}
        }
    }
    let dt = scenario.dt;
    let k_exec = (options.replan / dt).round();
    if !(options.replan > 0.0) || (k_exec * dt - options.replan).abs() > 1e-9 {
        return Err(SimError::Config(format!(
            "replan interval {} must be a positive multiple of dt = {dt}",
            options.replan
        )));
    }
    if options.replan > scenario.stage_durations[0] + 1e-9 {
        return Err(SimError::Config(format!(
            "replan interval {} exceeds the first stage ({} s)",
            options.replan, scenario.stage_durations[0]
        )));
    }
    if !(options.belief_floor >= 0.0 && options.belief_floor < 1.0) {
        return Err(SimError::Config("belief floor must lie in [0, 1)".into()));
    }
    let k_exec = k_exec as usize;
    let lines = scenario.lines()?;
    let model = observation_model(scenario)?;
    let ego = scenario.ego();

    let mut trace = SimTrace {
        schema_version: TRACE_SCHEMA_VERSION,
        scenario: scenario.name.clone(),
        case: scenario.case.clone(),
        seed: options.seed,
        ego,
        ego_mode: agents[ego].mode,
        scheme: agents[ego].scheme,
        iterations: agents[ego].solver.iterations,
        replan: options.replan,
        dt,
        vehicles: scenario.vehicles.iter().map(|v| v.name.clone()).collect(),
        type_names: scenario
            .vehicles
            .iter()
            .map(|v| v.types.iter().map(|t| t.name.clone()).collect())
            .collect(),
        geometry: scenario.geometry.clone(),
        steps: Vec::new(),
        final_states: Vec::new(),
        collisions: Vec::new(),
        solve_seconds: Vec::new(),
    };
    let mut states = scenario.initial_states()?;
    let mut beliefs: Vec<Belief> = vec![uniform_belief(scenario); n];

    for step in 0..options.steps {
        let time = step as f64 * options.replan;
        match advance(scenario, &lines, agents, options, &model, step, &states, &beliefs) {
            Ok((steps, new_beliefs)) => {
                let mut executed = Vec::with_capacity(n);
                for s in &steps {
                    let samples: Vec<TrajectorySample> = s.segment.samples[..=k_exec]
                        .iter()
                        .map(|x| TrajectorySample { t: x.t + time, ..*x })
                        .collect();
                    executed.push(samples);
                }
                trace.collisions.extend(detect_collisions(scenario, step, &executed));
                trace.solve_seconds.push(steps.iter().map(|s| s.result.duration.as_secs_f64()).collect());
                let record = StepRecord {
                    step,
                    time,
                    states: states.clone(),
                    decisions: steps.into_iter().map(|s| s.decision).collect(),
                    beliefs: new_beliefs.clone(),
                    executed,
                };
                log::debug!(
                    "step {step}: {}",
                    record
                        .decisions
                        .iter()
                        .map(|d| format!("{}:{}->{:.1}", d.player.0, d.type_name, d.target.velocity))
                        .collect::<Vec<_>>()
                        .join(" ")
                );
                states = record.executed.iter().map(|e| e[k_exec].state()).collect();
                beliefs = new_beliefs;
                trace.steps.push(record);
            }
            Err(e) => {
                trace.final_states = states;
                return Err(SimError::Aborted {
                    step,
                    message: e.to_string(),
                    trace: Box::new(trace),
                });
            }
        }
    }
    trace.final_states = states;
    Ok(trace)
}

#[allow(clippy::too_many_arguments)]
fn advance(
    scenario: &Scenario,
    lines: &BTreeMap<String, ReferenceLine>,
    agents: &[AgentConfig],
    options: &SimOptions,
    model: &ObservationModel,
    step: usize,
    states: &[VehicleState],
    beliefs: &[Belief],
) -> Result<(Vec<AgentStep>, Vec<Belief>), StepFailure> {
    let trees = build_trees(scenario, lines, states)?;
    let game = TrafficGame::new(trees, scenario.params.clone(), scenario.geometry.clone())?;
    let baseline = if agents.iter().any(|a| a.mode == Mode::Baseline) {
        Some(make_baseline_game(scenario, states)?)
    } else {
        None
    };

    let mut out = Vec::with_capacity(agents.len());
    for agent in agents {
        let cfg = agent.solver.clone().with_seed(agent_seed(options.seed, agent.player.0, step));
        let a = match agent.mode {
            Mode::Bayes => {
                let prior = beliefs[agent.player.0].to_prior(options.belief_floor);
                let result = solve(&game, &prior, &cfg)?;
                decide_bayes(scenario, &game, agent, result)?
            }
            Mode::Baseline => {
                let game = baseline.as_ref().expect("built when a baseline agent exists");
                let result = solve(game, &Prior::uniform(game), &cfg)?;
                let action = marginal_plan(&result.frequencies, agent.player, TypeId(0))?;
                let tree = game.tree(agent.player, TypeId(0));
                let segment = tree.first[action.0].clone();
                AgentStep {
                    decision: AgentDecision {
                        player: agent.player,
                        mode: Mode::Baseline,
                        scheme: Scheme::Marginal,
                        ty: None,
                        type_name: "union".into(),
                        action,
                        target: segment.target,
                        reference: tree.reference[action.0].clone(),
                        values: None,
                    },
                    segment,
                    result,
                }
            }
        };
        out.push(a);
    }

    let replan = options.replan;
    let observed: Vec<Vec<f64>> = out
        .iter()
        .map(|s| end_state(scenario, s.segment.at(replan, scenario.dt)))
        .collect();
    let mut updated = Vec::with_capacity(agents.len());
    for (k, agent) in agents.iter().enumerate() {
        let mut belief = beliefs[k].clone();
        if agent.mode == Mode::Bayes {
            for i in 0..agents.len() {
                if i == k {
                    continue;
                }
                let components: Vec<Vec<MixtureComponent>> = (0..game.num_types(PlayerId(i)))
                    .map(|t| {
                        let psi = marginal_distribution(&out[k].result.frequencies, PlayerId(i), TypeId(t));
                        let tree = game.tree(PlayerId(i), TypeId(t));
                        psi.iter()
                            .enumerate()
                            .map(|(a, &w)| {
                                MixtureComponent {
                                    end_state: end_state(scenario, tree.first[a].at(replan, scenario.dt)),
                                    weight: w,
                                }
                            })
                            .collect()
                    })
                    .collect();
                belief = match update_marginal(&belief, PlayerId(i), &observed[i], &components, model) {
                    Ok(b) => b,
                    Err(BeliefError::Inconsistent(_)) => {
                        log::warn!("agent {k}: observation of vehicle {i} fits no type; resetting to uniform");
                        let mut b = belief;
                        let m = b.marginals[i].len();
                        b.marginals[i] = vec![1.0 / m as f64; m];
                        b
                    }
                    Err(e) => return Err(e.into()),
                };
            }
        }
        updated.push(belief);
    }
    Ok((out, updated))
}

fn decide_bayes(
    scenario: &Scenario,
    game: &TrafficGame,
    agent: &AgentConfig,
    result: SolveResult,
) -> Result<AgentStep, StepFailure> {
    let p = agent.player;
    let (ty, values) = match agent.true_type {
        Some(t) => (t, None),
        None => {
            let est = estimate_type_values(&result, p)?;
            let allowed: Vec<TypeId> = scenario.vehicles[p.0]
                .types
                .iter()
                .enumerate()
                .filter(|(_, t)| t.selectable)
                .map(|(i, _)| TypeId(i))
                .collect();
            (select_type_among(&est, &allowed), Some(est))
        }
    };
    let action = match agent.scheme {
        Scheme::Marginal => marginal_plan(&result.frequencies, p, ty)?,
        Scheme::Accurate => {
            let mut order = vec![p];
            order.extend((0..game.num_players()).filter(|&j| j != p.0).map(PlayerId));
            accurate_plans(&result.frequencies, &order)?[p.0][ty.0]
        }
    };
    let tree = game.tree(p, ty);
    let segment = tree.first[action.0].clone();
    Ok(AgentStep {
        decision: AgentDecision {
            player: p,
            mode: Mode::Bayes,
            scheme: agent.scheme,
            ty: Some(ty),
            type_name: scenario.vehicles[p.0].types[ty.0].name.clone(),
            action,
            target: segment.target,
            reference: tree.reference[action.0].clone(),
            values,
        },
        segment,
        result,
    })
}

/// Smallest distance between the two-circle bodies of two poses.
pub fn circle_distance(g: &VehicleGeometry, a: &TrajectorySample, b: &TrajectorySample) -> f64 {
    let ca = g.circles(a.x, a.y, a.heading);
    let cb = g.circles(b.x, b.y, b.heading);
    let mut best = f64::INFINITY;
    for p in &ca {
        for q in &cb {
            best = best.min(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
        }
    }
    best
}

fn detect_collisions(scenario: &Scenario, step: usize, executed: &[Vec<TrajectorySample>]) -> Vec<CollisionEvent> {
    let limit = scenario.geometry.collision_distance();
    let mut out = Vec::new();
    for a in 0..executed.len() {
        for b in a + 1..executed.len() {
            let mut first: Option<f64> = None;
            let mut closest = f64::INFINITY;
            for (sa, sb) in executed[a].iter().zip(&executed[b]) {
                let d = circle_distance(&scenario.geometry, sa, sb);
                if d < limit && first.is_none() {
                    first = Some(sa.t);
                }
                closest = closest.min(d);
            }
            if let Some(time) = first {
                out.push(CollisionEvent {
                    step,
                    time,
                    a,
                    b,
                    distance: closest,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_across_players_and_steps() {
        let s = agent_seed(7, 0, 0);
        assert_ne!(s, agent_seed(7, 1, 0));
        assert_ne!(s, agent_seed(7, 0, 1));
        assert_eq!(s, agent_seed(7, 0, 0));
    }

    #[test]
    fn mode_parses() {
        assert_eq!("Bayes".parse::<Mode>().unwrap(), Mode::Bayes);
        assert_eq!("baseline".parse::<Mode>().unwrap(), Mode::Baseline);
        assert!("nash".parse::<Mode>().is_err());
    }

    #[test]
    fn agent_count_must_match() {
        let sc = Scenario::bundled("I", "A", &[]).unwrap();
        let mut agents = AgentConfig::for_scenario(&sc, Mode::Bayes, &SolverConfig::default(), Scheme::Marginal).unwrap();
        agents.pop();
        let err = run_closed_loop(&sc, &agents, &SimOptions::from_scenario(&sc, 0)).unwrap_err();
        assert!(matches!(err, SimError::Config(_)));
    }

    #[test]
    fn replan_must_fit_the_grid() {
        let sc = Scenario::bundled("I", "A", &[]).unwrap();
        let agents = AgentConfig::for_scenario(&sc, Mode::Bayes, &SolverConfig::default(), Scheme::Marginal).unwrap();
        let mut opts = SimOptions::from_scenario(&sc, 0);
        opts.replan = 0.25;
        assert!(run_closed_loop(&sc, &agents, &opts).is_err());
        opts.replan = 1.5;
        assert!(run_closed_loop(&sc, &agents, &opts).is_err());
    }
}
