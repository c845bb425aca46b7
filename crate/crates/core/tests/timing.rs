//! Wall-clock checks. Kept in their own binary and run one after the other
//! so that no concurrent test skews the timings.

use bayesgame::sim::{benchmark_solver, Mode};
use bayesgame::traffic::Scenario;

#[test]
fn timings() {
    bench_times_grow_with_budget_and_favor_the_proposed_method();
    workers_speed_up_a_fixed_budget();
}

fn bench_times_grow_with_budget_and_favor_the_proposed_method() {
    let sc = Scenario::bundled("II", "B", &[]).unwrap();
    let budgets = [10_000, 20_000, 50_000];
    let rows = benchmark_solver(&sc, &budgets, 2, 1, 0).unwrap();
    assert_eq!(rows.len(), 6);
    for method in [Mode::Bayes, Mode::Baseline] {
        let times: Vec<f64> = rows.iter().filter(|r| r.method == method).map(|r| r.mean_seconds).collect();
        assert!(times.windows(2).all(|w| w[0] < w[1]), "{method}: {times:?}");
    }
    for (p, b) in rows[..3].iter().zip(&rows[3..]) {
        assert_eq!(p.iterations, b.iterations);
        assert!(p.mean_seconds <= b.mean_seconds, "{} vs {} at {}", p.mean_seconds, b.mean_seconds, p.iterations);
    }
}

fn workers_speed_up_a_fixed_budget() {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    if cores < 4 {
        eprintln!("skipped: the speedup check needs 4 cores, found {cores}");
        return;
    }
    let sc = Scenario::bundled("II", "A", &[]).unwrap();
    let rows = |w| benchmark_solver(&sc, &[200_000], 1, w, 0).unwrap()[0].mean_seconds;
    let (one, four) = (rows(1), rows(4));
    assert!(one / four > 1.5, "1 worker {one:.3} s, 4 workers {four:.3} s");
}
