use serde::{Deserialize, Serialize};

use super::{build_trees, make_baseline_game, Mode, SimError};
use crate::game::{PlayerId, Prior};
use crate::solver::{solve, SolverConfig};
use crate::traffic::{Scenario, TrafficGame};

/// Mean solve time of one method at one iteration budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: Mode,
    pub iterations: u64,
    pub repeats: usize,
    pub mean_seconds: f64,
}

/// Times the ego's solve at the initial states for both methods, excluding
/// tree construction. Each method gets one untimed warm-up solve. Rows are
/// ordered method-major, budget-minor.
pub fn benchmark_solver(
    scenario: &Scenario,
    budgets: &[u64],
    repeats: usize,
    workers: usize,
    seed: u64,
) -> Result<Vec<BenchRow>, SimError> {
    if repeats == 0 {
        return Err(SimError::Config("repeats must be positive".into()));
    }
    scenario.validate()?;
    let states = scenario.initial_states()?;
    let lines = scenario.lines()?;
    let bayes = TrafficGame::new(
        build_trees(scenario, &lines, &states)?,
        scenario.params.clone(),
        scenario.geometry.clone(),
    )?;
    let baseline = make_baseline_game(scenario, &states)?;
    let ego = PlayerId(scenario.ego());
    let mut rows = Vec::new();
    for (method, game) in [(Mode::Bayes, &bayes), (Mode::Baseline, &baseline)] {
        let prior = Prior::uniform(game);
        if let Some(&m) = budgets.first() {
            let warm = SolverConfig { iterations: m, seed, workers, ..SolverConfig::default() };
            solve(game, &prior, &warm).map_err(|e| SimError::Config(e.to_string()))?;
        }
        for &m in budgets {
            let mut total = 0.0;
            for r in 0..repeats {
                let cfg = SolverConfig {
                    iterations: m,
                    seed: super::agent_seed(seed, ego.0, r),
                    workers,
                    ..SolverConfig::default()
                };
                let result = solve(game, &prior, &cfg).map_err(|e| SimError::Config(e.to_string()))?;
                total += result.duration.as_secs_f64();
            }
            rows.push(BenchRow {
                method,
                iterations: m,
                repeats,
                mean_seconds: total / repeats as f64,
            });
        }
    }
    Ok(rows)
}
