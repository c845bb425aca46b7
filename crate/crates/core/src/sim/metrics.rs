use serde::{Deserialize, Serialize};

use super::{circle_distance, SimTrace};
use crate::traffic::TrajectorySample;

pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// Comfort and safety figures of the ego over one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub max_a_long: f64,
    pub rms_a_long: f64,
    pub max_a_lat: f64,
    pub rms_a_lat: f64,
    /// Smallest body-center distance between the ego and any other vehicle.
    pub min_distance: f64,
    /// Smallest gap between the ego's and any other vehicle's circles
    /// (circle-center distance minus both radii); negative on overlap.
    pub min_clearance: f64,
    pub collided: bool,
}

/// Averages of [`RunMetrics`] over runs, in the column order of the
/// comparison table, plus optional solve-time measurements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub runs: usize,
    pub avg_max_a_long: f64,
    pub rms_a_long: f64,
    pub avg_max_a_lat: f64,
    pub rms_a_lat: f64,
    pub min_distance: f64,
    pub min_clearance: f64,
    pub collisions: usize,
    pub collision_rate: f64,
    /// `(iterations, mean seconds)` pairs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub solve_times: Vec<(u64, f64)>,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "avg_max_long_acc,rms_long_acc,avg_max_lat_acc,rms_lat_acc,min_distance,min_clearance,collisions,runs,collision_rate";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{},{},{:.4}",
            self.avg_max_a_long,
            self.rms_a_long,
            self.avg_max_a_lat,
            self.rms_a_lat,
            self.min_distance,
            self.min_clearance,
            self.collisions,
            self.runs,
            self.collision_rate
        )
    }
}

fn max_rms(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let max = xs.clone().fold(0.0f64, |m, x| m.max(x.abs()));
    let rms = (xs.map(|x| x * x).sum::<f64>() / n as f64).sqrt();
    (max, rms)
}

pub fn run_metrics(trace: &SimTrace) -> RunMetrics {
    let ego = trace.ego;
    let own = trace.timeline(ego);
    let (max_a_long, rms_a_long) = max_rms(own.iter().map(|s| s.a_long));
    let (max_a_lat, rms_a_lat) = max_rms(own.iter().map(|s| s.a_lat));
    let mut min_distance = f64::INFINITY;
    let mut min_circle = f64::INFINITY;
    let limit = trace.geometry.collision_distance();
    for other in (0..trace.vehicles.len()).filter(|&v| v != ego) {
        for (a, b) in own.iter().zip(trace.timeline(other).iter()) {
            min_distance = min_distance.min(((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt());
            min_circle = min_circle.min(circle_distance(&trace.geometry, a, b));
        }
    }
    RunMetrics {
        max_a_long,
        rms_a_long,
        max_a_lat,
        rms_a_lat,
        min_distance,
        min_clearance: min_circle - limit,
        collided: min_circle < limit,
    }
}

/// Averages per-run metrics. Panics on an empty slice.
pub fn compute_metrics(traces: &[SimTrace]) -> MetricsReport {
    assert!(!traces.is_empty(), "compute_metrics needs at least one trace");
    let runs: Vec<RunMetrics> = traces.iter().map(run_metrics).collect();
    let n = runs.len() as f64;
    let mean = |f: fn(&RunMetrics) -> f64| runs.iter().map(f).sum::<f64>() / n;
    let collisions = runs.iter().filter(|r| r.collided).count();
    MetricsReport {
        schema_version: METRICS_SCHEMA_VERSION,
        runs: runs.len(),
        avg_max_a_long: mean(|r| r.max_a_long),
        rms_a_long: mean(|r| r.rms_a_long),
        avg_max_a_lat: mean(|r| r.max_a_lat),
        rms_a_lat: mean(|r| r.rms_a_lat),
        min_distance: mean(|r| r.min_distance),
        min_clearance: mean(|r| r.min_clearance),
        collisions,
        collision_rate: collisions as f64 / n,
        solve_times: Vec::new(),
    }
}

/// Where the ego ended up along the direction of travel relative to the
/// others at the end of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeOutcome {
    /// Ahead of every other vehicle.
    Ahead,
    /// Between two other vehicles.
    Gap,
    /// Behind every other vehicle.
    Behind,
}

impl std::fmt::Display for MergeOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MergeOutcome::Ahead => "ahead",
            MergeOutcome::Gap => "gap",
            MergeOutcome::Behind => "behind",
        })
    }
}

/// Orders the final positions by their projection on the ego's final heading.
pub fn classify_merge(trace: &SimTrace) -> Option<MergeOutcome> {
    let last = trace.steps.last()?;
    let end: Vec<&TrajectorySample> = last.executed.iter().map(|e| e.last().expect("nonempty")).collect();
    let me = end[trace.ego];
    let (c, s) = (me.heading.cos(), me.heading.sin());
    let along = |p: &TrajectorySample| p.x * c + p.y * s;
    let mine = along(me);
    let others: Vec<f64> = (0..end.len()).filter(|&v| v != trace.ego).map(|v| along(end[v])).collect();
    if others.is_empty() {
        return None;
    }
    let ahead = others.iter().filter(|&&x| x > mine).count();
    Some(if ahead == 0 {
        MergeOutcome::Ahead
    } else if ahead == others.len() {
        MergeOutcome::Behind
    } else {
        MergeOutcome::Gap
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::Belief;
    use crate::policy::Scheme;
    use crate::sim::{Mode, StepRecord};

    fn sample(t: f64, x: f64, y: f64, a_long: f64) -> TrajectorySample {
        TrajectorySample {
            t,
            s: x,
            l: 0.0,
            v_long: 0.0,
            v_lat: 0.0,
            a_long,
            a_lat: 0.0,
            j_long: 0.0,
            j_lat: 0.0,
            x,
            y,
            heading: 0.0,
        }
    }

    fn trace(executed: Vec<Vec<TrajectorySample>>) -> SimTrace {
        let n = executed.len();
        SimTrace {
            schema_version: 1,
            scenario: "t".into(),
            case: "custom".into(),
            seed: 0,
            ego: 0,
            ego_mode: Mode::Bayes,
            scheme: Scheme::Marginal,
            iterations: 1,
            replan: 0.4,
            dt: 0.1,
            vehicles: (0..n).map(|i| format!("v{i}")).collect(),
            type_names: vec![vec!["a".into()]; n],
            geometry: Default::default(),
            steps: vec![StepRecord {
                step: 0,
                time: 0.0,
                states: Vec::new(),
                decisions: Vec::new(),
                executed,
                beliefs: vec![Belief::uniform(&vec![1; n]); n],
            }],
            final_states: Vec::new(),
            collisions: Vec::new(),
            solve_seconds: Vec::new(),
        }
    }

    #[test]
    fn constant_velocity_has_no_acceleration() {
        let ego: Vec<_> = (0..5).map(|k| sample(k as f64 * 0.1, k as f64 * 0.7, 0.0, 0.0)).collect();
        let m = run_metrics(&trace(vec![ego]));
        assert_eq!((m.max_a_long, m.rms_a_long, m.max_a_lat, m.rms_a_lat), (0.0, 0.0, 0.0, 0.0));
        assert!(!m.collided);
    }

    #[test]
    fn stationary_pair_ten_metres_apart() {
        let a: Vec<_> = (0..5).map(|k| sample(k as f64 * 0.1, 0.0, 0.0, 0.0)).collect();
        let b: Vec<_> = (0..5).map(|k| sample(k as f64 * 0.1, 10.0, 0.0, 0.0)).collect();
        let m = run_metrics(&trace(vec![a, b]));
        assert_eq!(m.min_distance, 10.0);
        assert!(!m.collided);
        // circles at ±1.15: closest pair 10 - 2.3 apart
        assert!((m.min_clearance - (10.0 - 2.3 - 2.3)).abs() < 1e-12);
    }

    #[test]
    fn rms_never_exceeds_max() {
        let ego: Vec<_> = [1.0, -3.0, 2.0, 0.5].iter().enumerate().map(|(k, &a)| sample(k as f64, 0.0, 0.0, a)).collect();
        let report = compute_metrics(&[trace(vec![ego])]);
        assert_eq!(report.avg_max_a_long, 3.0);
        assert!(report.rms_a_long <= report.avg_max_a_long);
        assert_eq!(report.collision_rate, 0.0);
    }

    #[test]
    fn overlapping_bodies_collide_and_order_is_classified() {
        let a = vec![sample(0.0, 7.0, 0.0, 0.0)];
        let b = vec![sample(0.0, 6.0, 0.0, 0.0)];
        let c = vec![sample(0.0, 30.0, 0.0, 0.0)];
        let t = trace(vec![a, b, c]);
        assert!(run_metrics(&t).collided);
        assert_eq!(classify_merge(&t), Some(MergeOutcome::Gap));
        let report = compute_metrics(&[t.clone(), trace(vec![vec![sample(0.0, 50.0, 0.0, 0.0)], vec![sample(0.0, 0.0, 0.0, 0.0)]])]);
        assert_eq!(report.collisions, 1);
        assert_eq!(report.collision_rate, 0.5);
    }
}
