//! Python bindings: tabular games and the solver, type selection, belief
//! updates, closed-loop driving runs, metrics, benchmarks and the verification
//! suite. Structured results cross the boundary as plain dicts and lists.

use bayesgame::belief::{self, Belief, MixtureComponent, ObservationModel};
use bayesgame::game::{ActionId, GameSpec, PlayerId, Prior, TabularGame, TypeId};
use bayesgame::policy::{estimate_type_values, marginal_distribution, marginal_plan, select_type};
use bayesgame::sim::{self, AgentConfig, Mode, SimOptions, SimTrace};
use bayesgame::solver::{self, SolverConfig};
use bayesgame::traffic::Scenario;
use bayesgame::verify::suite::{run_suite, SuiteConfig};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(runtime_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Game with private types given by action counts and a utility callable.
///
/// `actions[player][type][stage]` is the action count. `utility(types,
/// history)` gets two lists of ints and returns one float per player; it is
/// evaluated once per terminal history when the game is built.
#[pyclass(name = "TabularGame", module = "bayesgame_py", frozen)]
struct PyTabularGame {
    inner: TabularGame,
}

#[pymethods]
impl PyTabularGame {
    #[new]
    fn new(actions: Vec<Vec<Vec<usize>>>, stages: usize, utility: Bound<'_, PyAny>) -> PyResult<Self> {
        let mut failure: Option<PyErr> = None;
        let game = TabularGame::new(actions, stages, |types, history| {
            let t: Vec<usize> = types.iter().map(|x| x.0).collect();
            let h: Vec<usize> = history.iter().map(|x| x.0).collect();
            match utility.call1((t, h)).and_then(|r| r.extract::<Vec<f64>>()) {
                Ok(u) => u,
                Err(e) => {
                    failure.get_or_insert(e);
                    vec![0.0; types.len()]
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(PyTabularGame {
            inner: game.map_err(value_err)?,
        })
    }

    /// Two players, one type each, one stage, `±1` payoffs.
    #[staticmethod]
    fn matching_pennies() -> Self {
        PyTabularGame {
            inner: bayesgame::verify::games::matching_pennies(),
        }
    }

    /// The seeded two-player, two-type verification game.
    #[staticmethod]
    fn random_bayesian(seed: u64) -> Self {
        PyTabularGame {
            inner: bayesgame::verify::games::random_bayesian_game(seed),
        }
    }

    #[getter]
    fn num_players(&self) -> usize {
        self.inner.num_players()
    }

    #[getter]
    fn num_stages(&self) -> usize {
        self.inner.num_stages()
    }

    fn num_types(&self, player: usize) -> PyResult<usize> {
        check_player(&self.inner, player)?;
        Ok(self.inner.num_types(PlayerId(player)))
    }

    /// Utilities of every player for a terminal history.
    fn utility(&self, types: Vec<usize>, history: Vec<usize>) -> PyResult<Vec<f64>> {
        let t = bayesgame::TypeVector(types.into_iter().map(TypeId).collect());
        let h: Vec<ActionId> = history.into_iter().map(ActionId).collect();
        bayesgame::game::terminal_utility(&self.inner, &t, &h).map_err(value_err)
    }
}

fn check_player(game: &dyn GameSpec, player: usize) -> PyResult<()> {
    if player >= game.num_players() {
        return Err(PyValueError::new_err(format!("player {player} out of range")));
    }
    Ok(())
}

/// Outcome of a solve: visit counts, root values and the plan frequencies.
#[pyclass(name = "SolveResult", module = "bayesgame_py", frozen)]
struct PySolveResult {
    inner: solver::SolveResult,
}

#[pymethods]
impl PySolveResult {
    #[getter]
    fn iterations(&self) -> u64 {
        self.inner.iterations
    }

    #[getter]
    fn seconds(&self) -> f64 {
        self.inner.duration.as_secs_f64()
    }

    /// `visits[player][type]`.
    #[getter]
    fn visits(&self) -> Vec<Vec<u64>> {
        self.inner.visits.clone()
    }

    /// Estimated value of each of the player's types.
    fn type_values(&self, player: usize) -> PyResult<Vec<f64>> {
        self.check(player)?;
        Ok(estimate_type_values(&self.inner, PlayerId(player)).map_err(value_err)?.values)
    }

    /// Type with the highest estimated value, lowest index on ties.
    fn select_type(&self, player: usize) -> PyResult<usize> {
        self.check(player)?;
        let est = estimate_type_values(&self.inner, PlayerId(player)).map_err(value_err)?;
        Ok(select_type(&est).0)
    }

    /// Marginal distribution over the first-stage actions of `(player, ty)`.
    fn marginal(&self, player: usize, ty: usize) -> PyResult<Vec<f64>> {
        self.check_type(player, ty)?;
        Ok(marginal_distribution(&self.inner.frequencies, PlayerId(player), TypeId(ty)))
    }

    /// Most frequent first-stage action of `(player, ty)`.
    fn marginal_action(&self, player: usize, ty: usize) -> PyResult<usize> {
        self.check_type(player, ty)?;
        Ok(marginal_plan(&self.inner.frequencies, PlayerId(player), TypeId(ty)).map_err(value_err)?.0)
    }

    /// Current strategy at the root information set of `(player, ty)`.
    fn root_strategy(&self, player: usize, ty: usize) -> PyResult<Option<Vec<f64>>> {
        self.check_type(player, ty)?;
        Ok(self
            .inner
            .strategy(&bayesgame::InfoSetKey::root(PlayerId(player), TypeId(ty)))
            .map(|s| s.to_vec()))
    }

    /// Versioned JSON document; equal runs give equal bytes.
    fn to_json(&self) -> String {
        self.inner.to_json()
    }
}

impl PySolveResult {
    fn check(&self, player: usize) -> PyResult<()> {
        if player >= self.inner.visits.len() {
            return Err(PyValueError::new_err(format!("player {player} out of range")));
        }
        Ok(())
    }

    fn check_type(&self, player: usize, ty: usize) -> PyResult<()> {
        self.check(player)?;
        if ty >= self.inner.visits[player].len() {
            return Err(PyValueError::new_err(format!("type {ty} of player {player} out of range")));
        }
        Ok(())
    }
}

/// Runs MCCFR-S. `prior` is a list of per-player type distributions; the
/// default is uniform.
#[pyfunction]
#[pyo3(signature = (game, iterations=20_000, seed=0, exploration=0.6, workers=1, prior=None, record_full_plans=false))]
fn solve(
    py: Python<'_>,
    game: &PyTabularGame,
    iterations: u64,
    seed: u64,
    exploration: f64,
    workers: usize,
    prior: Option<Vec<Vec<f64>>>,
    record_full_plans: bool,
) -> PyResult<PySolveResult> {
    let prior = match prior {
        Some(p) => Prior::Product(p),
        None => Prior::uniform(&game.inner),
    };
    let cfg = SolverConfig {
        iterations,
        seed,
        exploration,
        workers,
        record_full_plans,
        ..SolverConfig::default()
    };
    let inner = py
        .detach(|| solver::solve(&game.inner, &prior, &cfg))
        .map_err(value_err)?;
    Ok(PySolveResult { inner })
}

/// Bayes update of one categorical belief. `mixtures[t]` lists the
/// `(end_state, weight)` components of type `t`; the observation noise is
/// isotropic with standard deviation `std`.
#[pyfunction]
fn update_belief(prior: Vec<f64>, observed: Vec<f64>, mixtures: Vec<Vec<(Vec<f64>, f64)>>, std: f64) -> PyResult<Vec<f64>> {
    let model = ObservationModel::isotropic(std, observed.len()).map_err(value_err)?;
    let components: Vec<Vec<MixtureComponent>> = mixtures
        .into_iter()
        .map(|m| {
            m.into_iter()
                .map(|(end_state, weight)| MixtureComponent { end_state, weight })
                .collect()
        })
        .collect();
    let b = Belief { marginals: vec![prior] };
    b.validate().map_err(value_err)?;
    let post = belief::update_marginal(&b, PlayerId(0), &observed, &components, &model).map_err(value_err)?;
    Ok(post.marginals.into_iter().next().expect("one marginal"))
}

/// A driving scenario: road layout, vehicles and their intentions.
#[pyclass(name = "Scenario", module = "bayesgame_py", frozen)]
struct PyScenario {
    inner: Scenario,
}

fn pairs(overrides: Option<Vec<(String, String)>>) -> Vec<(String, String)> {
    overrides.unwrap_or_default()
}

#[pymethods]
impl PyScenario {
    /// One of the shipped scenarios, e.g. `("I", "A")`.
    #[staticmethod]
    #[pyo3(signature = (case, id, overrides=None))]
    fn bundled(case: &str, id: &str, overrides: Option<Vec<(String, String)>>) -> PyResult<Self> {
        Ok(PyScenario {
            inner: Scenario::bundled(case, id, &pairs(overrides)).map_err(value_err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (text, overrides=None))]
    fn from_toml(text: &str, overrides: Option<Vec<(String, String)>>) -> PyResult<Self> {
        Ok(PyScenario {
            inner: Scenario::from_toml(text, &pairs(overrides)).map_err(value_err)?,
        })
    }

    /// Scenario ids shipped for a case.
    #[staticmethod]
    fn ids(case: &str) -> Vec<String> {
        bayesgame::traffic::scenario::bundled_ids(case).into_iter().map(String::from).collect()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn case(&self) -> String {
        self.inner.case.clone()
    }

    #[getter]
    fn vehicles(&self) -> Vec<String> {
        self.inner.vehicles.iter().map(|v| v.name.clone()).collect()
    }

    #[getter]
    fn ego(&self) -> usize {
        self.inner.ego()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }
}

/// Record of one closed-loop run.
#[pyclass(name = "Trace", module = "bayesgame_py", frozen)]
struct PyTrace {
    inner: SimTrace,
}

#[pymethods]
impl PyTrace {
    #[getter]
    fn collided(&self) -> bool {
        self.inner.collided()
    }

    /// `"ahead"`, `"gap"` or `"behind"`: the ego's final place in the queue.
    #[getter]
    fn outcome(&self) -> Option<String> {
        sim::classify_merge(&self.inner).map(|o| o.to_string())
    }

    /// Commanded terminal velocity of `vehicle` at each step.
    fn commanded_velocities(&self, vehicle: usize) -> PyResult<Vec<f64>> {
        if vehicle >= self.inner.vehicles.len() {
            return Err(PyValueError::new_err(format!("vehicle {vehicle} out of range")));
        }
        Ok(self.inner.steps.iter().map(|s| s.decisions[vehicle].target.velocity).collect())
    }

    /// The ego's belief over each vehicle's types after every step.
    fn ego_beliefs(&self) -> Vec<Vec<Vec<f64>>> {
        self.inner
            .steps
            .iter()
            .map(|s| s.beliefs[self.inner.ego].marginals.clone())
            .collect()
    }

    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &sim::run_metrics(&self.inner))
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }
}

/// Runs a scenario in closed loop. `mode` is `"bayes"` or `"baseline"` and
/// applies to the ego; the other vehicles always play the Bayesian game.
#[pyfunction]
#[pyo3(signature = (scenario, mode="bayes", seed=0, iterations=20_000, workers=1, steps=None, replan=None))]
fn run_scenario(
    py: Python<'_>,
    scenario: &PyScenario,
    mode: &str,
    seed: u64,
    iterations: u64,
    workers: usize,
    steps: Option<usize>,
    replan: Option<f64>,
) -> PyResult<PyTrace> {
    let mode: Mode = mode.parse().map_err(value_err)?;
    let sc = &scenario.inner;
    let cfg = SolverConfig {
        iterations,
        workers,
        ..SolverConfig::default()
    };
    let agents = AgentConfig::for_scenario(sc, mode, &cfg, Default::default()).map_err(value_err)?;
    let mut opts = SimOptions::from_scenario(sc, seed);
    if let Some(s) = steps {
        opts.steps = s;
    }
    if let Some(r) = replan {
        opts.replan = r;
    }
    let trace = py
        .detach(|| sim::run_closed_loop(sc, &agents, &opts))
        .map_err(runtime_err)?;
    Ok(PyTrace { inner: trace })
}

/// Metrics averaged over runs.
#[pyfunction]
fn compute_metrics<'py>(py: Python<'py>, traces: Vec<PyRef<'py, PyTrace>>) -> PyResult<Bound<'py, PyAny>> {
    if traces.is_empty() {
        return Err(PyValueError::new_err("need at least one trace"));
    }
    let owned: Vec<SimTrace> = traces.iter().map(|t| t.inner.clone()).collect();
    to_py(py, &sim::compute_metrics(&owned))
}

/// Mean solve time of both methods at each budget.
#[pyfunction]
#[pyo3(signature = (scenario, budgets, repeats=3, workers=1, seed=0))]
fn benchmark<'py>(
    py: Python<'py>,
    scenario: &PyScenario,
    budgets: Vec<u64>,
    repeats: usize,
    workers: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let rows = py
        .detach(|| sim::benchmark_solver(&scenario.inner, &budgets, repeats, workers, seed))
        .map_err(runtime_err)?;
    to_py(py, &rows)
}

/// Solver checks on tiny games; returns one report dict per check.
#[pyfunction]
#[pyo3(signature = (iterations=None, seed=0))]
fn verify<'py>(py: Python<'py>, iterations: Option<u64>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = SuiteConfig::default();
    if let Some(m) = iterations {
        cfg = cfg.with_iterations(m);
    }
    cfg.base_seed = seed;
    let reports = py.detach(|| run_suite(&cfg)).map_err(runtime_err)?;
    to_py(py, &reports)
}

#[pymodule]
fn bayesgame_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTabularGame>()?;
    m.add_class::<PySolveResult>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyTrace>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(update_belief, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(compute_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
