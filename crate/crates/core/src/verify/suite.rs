//! Solver checks on tiny games against the brute-force oracles, each reported
//! as pass, fail or insufficient.

use serde::{Deserialize, Serialize};

use super::games::{matching_pennies, random_bayesian_game};
use super::oracle::{bayes_cce_regrets, exact_type_values, exploitability_one_stage, max_sampled_regret};
use crate::game::{GameSpec, PlayerId, Prior, TypeId};
use crate::policy::{estimate_type_values, marginal_distribution};
use crate::solver::{solve, SolverConfig, SolverError};

/// Budgets below this are too small for a meaningful consistency trend.
pub const MIN_CONSISTENCY_ITERATIONS: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyStatus {
    Pass,
    Fail,
    Insufficient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub name: String,
    pub status: PropertyStatus,
    /// Measured quantity compared against `tolerance`.
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.status == PropertyStatus::Pass
    }

    pub fn line(&self) -> String {
        let tag = match self.status {
            PropertyStatus::Pass => "PASS",
            PropertyStatus::Fail => "FAIL",
            PropertyStatus::Insufficient => "INSUFFICIENT",
        };
        format!("[{tag}] {}: {} (value {:.5}, tolerance {:.5})", self.name, self.detail, self.value, self.tolerance)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    /// Iterations for the equilibrium and regret-decay checks.
    pub iterations: u64,
    pub seeds: u64,
    pub pennies_iterations: u64,
    pub consistency_budgets: Vec<u64>,
    pub consistency_seeds: u64,
    /// Tolerances as fractions of the utility range.
    pub cce_tolerance: f64,
    pub pennies_tolerance: f64,
    pub consistency_tolerance: f64,
    pub base_seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            iterations: 100_000,
            seeds: 5,
            pennies_iterations: 50_000,
            consistency_budgets: vec![1_000, 10_000, 100_000],
            consistency_seeds: 20,
            cce_tolerance: 0.05,
            pennies_tolerance: 0.05,
            consistency_tolerance: 0.02,
            base_seed: 0,
        }
    }
}

impl SuiteConfig {
    /// Uses `m` for every budget, scaling the consistency ladder to end at `m`.
    pub fn with_iterations(mut self, m: u64) -> Self {
        self.iterations = m;
        self.pennies_iterations = m;
        self.consistency_budgets = vec![(m / 100).max(1), (m / 10).max(1), m];
        self
    }
}

/// Largest utility range over all players and types.
pub fn utility_span(spec: &dyn GameSpec) -> f64 {
    (0..spec.num_players())
        .flat_map(|p| (0..spec.num_types(PlayerId(p))).map(move |t| (p, t)))
        .filter_map(|(p, t)| spec.utility_range(PlayerId(p), TypeId(t)))
        .fold(0.0, f64::max)
}

fn full_config(m: u64, seed: u64) -> SolverConfig {
    SolverConfig {
        iterations: m,
        seed,
        record_full_plans: true,
        ..SolverConfig::default()
    }
}

/// Worst deviation gain over all players, types and plans, across seeds.
pub fn check_bayes_cce(cfg: &SuiteConfig) -> Result<PropertyReport, SolverError> {
    let mut worst = f64::NEG_INFINITY;
    let mut tol = f64::INFINITY;
    for k in 0..cfg.seeds {
        let seed = cfg.base_seed + k;
        let game = random_bayesian_game(seed);
        let prior = Prior::uniform(&game);
        let res = solve(&game, &prior, &full_config(cfg.iterations, seed))?;
        let r = bayes_cce_regrets(&game, &prior, &res.frequencies)
            .into_iter()
            .map(|d| d.regret)
            .fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max(r);
        tol = tol.min(cfg.cce_tolerance * utility_span(&game));
    }
    Ok(report(
        "bayes_cce",
        worst <= tol,
        worst,
        tol,
        format!("max deviation gain over {} games at M = {}", cfg.seeds, cfg.iterations),
    ))
}

/// Worst sampled regret over players and types must shrink from a tenth of
/// the budget to the full budget on every game.
pub fn check_regret_decay(cfg: &SuiteConfig) -> Result<PropertyReport, SolverError> {
    let early = (cfg.iterations / 10).max(1);
    let mut ratios = Vec::new();
    for k in 0..cfg.seeds {
        let seed = cfg.base_seed + k;
        let game = random_bayesian_game(seed);
        let prior = Prior::uniform(&game);
        let worst = |m: u64| -> Result<f64, SolverError> {
            let mut c = full_config(m, seed);
            c.record_history = true;
            let res = solve(&game, &prior, &c)?;
            let mut w = f64::NEG_INFINITY;
            for p in 0..game.num_players() {
                for t in 0..game.num_types(PlayerId(p)) {
                    if let Some(r) = max_sampled_regret(&game, &res.frequencies.layout, &res.history, PlayerId(p), TypeId(t)) {
                        w = w.max(r);
                    }
                }
            }
            Ok(w.max(0.0))
        };
        let (a, b) = (worst(early)?, worst(cfg.iterations)?);
        ratios.push(if a > 0.0 { b / a } else if b == 0.0 { 0.0 } else { f64::INFINITY });
    }
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(report(
        "regret_decay",
        max_ratio < 1.0,
        max_ratio,
        1.0,
        format!("worst ratio of sampled regret at M = {} to M = {early}", cfg.iterations),
    ))
}

/// Matching pennies: both marginals near one half and low exploitability.
pub fn check_matching_pennies(cfg: &SuiteConfig) -> Result<PropertyReport, SolverError> {
    let game = matching_pennies();
    let prior = Prior::uniform(&game);
    let res = solve(&game, &prior, &SolverConfig::default().with_iterations(cfg.pennies_iterations).with_seed(cfg.base_seed))?;
    let strategies: Vec<Vec<f64>> = (0..2)
        .map(|p| marginal_distribution(&res.frequencies, PlayerId(p), TypeId(0)))
        .collect();
    let dev = strategies
        .iter()
        .flat_map(|s| s.iter().map(|x| (x - 0.5).abs()))
        .fold(0.0, f64::max);
    let span = utility_span(&game);
    let expl = exploitability_one_stage(&game, &strategies);
    let ok = dev <= 0.05 && expl <= cfg.pennies_tolerance * span;
    Ok(report(
        "matching_pennies",
        ok,
        expl,
        cfg.pennies_tolerance * span,
        format!(
            "marginals ({:.3}, {:.3}), max deviation from 0.5 {:.4}; value is exploitability",
            strategies[0][0], strategies[1][0], dev
        ),
    ))
}

/// Mean `|V̂(t) − V(t)|` over seeds must fall strictly along the budgets and
/// end within tolerance.
pub fn check_estimator_consistency(cfg: &SuiteConfig) -> Result<PropertyReport, SolverError> {
    let budgets = &cfg.consistency_budgets;
    if budgets.is_empty() || budgets[0] < MIN_CONSISTENCY_ITERATIONS {
        return Ok(PropertyReport {
            name: "estimator_consistency".into(),
            status: PropertyStatus::Insufficient,
            value: f64::NAN,
            tolerance: cfg.consistency_tolerance,
            detail: format!(
                "insufficient iterations: the smallest budget must be at least {MIN_CONSISTENCY_ITERATIONS}"
            ),
        });
    }
    let mut errors = Vec::new();
    let mut tol = f64::INFINITY;
    for &m in budgets {
        let mut total = 0.0;
        let mut count = 0usize;
        for k in 0..cfg.consistency_seeds {
            let seed = cfg.base_seed + k;
            let game = random_bayesian_game(seed);
            tol = tol.min(cfg.consistency_tolerance * utility_span(&game));
            let prior = Prior::uniform(&game);
            let res = solve(&game, &prior, &full_config(m, seed))?;
            for p in 0..game.num_players() {
                let exact = exact_type_values(&game, &prior, &res.frequencies, PlayerId(p));
                let Ok(est) = estimate_type_values(&res, PlayerId(p)) else {
                    continue;
                };
                for (v, e) in exact.iter().zip(&est.values) {
                    total += (v - e).abs();
                    count += 1;
                }
            }
        }
        errors.push(total / count.max(1) as f64);
    }
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let last = *errors.last().expect("nonempty");
    Ok(report(
        "estimator_consistency",
        decreasing && last <= tol,
        last,
        tol,
        format!(
            "mean |V̂ - V| at M = {:?}: {}",
            budgets,
            errors.iter().map(|e| format!("{e:.5}")).collect::<Vec<_>>().join(", ")
        ),
    ))
}

fn report(name: &str, ok: bool, value: f64, tolerance: f64, detail: String) -> PropertyReport {
    PropertyReport {
        name: name.into(),
        status: if ok { PropertyStatus::Pass } else { PropertyStatus::Fail },
        value,
        tolerance,
        detail,
    }
}

/// Every check, in a fixed order.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<PropertyReport>, SolverError> {
    Ok(vec![
        check_regret_decay(cfg)?,
        check_bayes_cce(cfg)?,
        check_estimator_consistency(cfg)?,
        check_matching_pennies(cfg)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_budgets_are_insufficient_not_failures() {
        let cfg = SuiteConfig::default().with_iterations(10);
        let r = check_estimator_consistency(&cfg).unwrap();
        assert_eq!(r.status, PropertyStatus::Insufficient);
        assert!(r.detail.contains("insufficient iterations"));
    }

    #[test]
    fn span_of_pennies_is_two() {
        assert_eq!(utility_span(&matching_pennies()), 2.0);
    }
}
