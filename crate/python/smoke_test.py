"""Smoke test for the Python bindings.

Build and install the extension first, e.g.

    maturin build --release -m crates/py/Cargo.toml -o dist
    pip install dist/bayesgame_py-*.whl

then run ``python python/smoke_test.py``.
"""

import json

import bayesgame_py as bg


def check_solver():
    # One player choosing between a payoff of 1 and 0.
    bandit = bg.TabularGame([[[2]]], 1, lambda types, history: [1.0 if history[0] == 0 else 0.0])
    res = bg.solve(bandit, iterations=10_000, seed=1)
    assert res.iterations == 10_000
    assert res.marginal(0, 0)[0] >= 0.9, res.marginal(0, 0)
    assert abs(res.type_values(0)[0] - 1.0) < 0.05

    pennies = bg.TabularGame.matching_pennies()
    res = bg.solve(pennies, iterations=50_000)
    for p in range(2):
        assert abs(res.marginal(p, 0)[0] - 0.5) <= 0.05, res.marginal(p, 0)
    assert bg.solve(pennies, iterations=2_000, seed=3).to_json() == bg.solve(pennies, iterations=2_000, seed=3).to_json()

    game = bg.TabularGame.random_bayesian(4)
    res = bg.solve(game, iterations=5_000, prior=[[0.7, 0.3], [0.5, 0.5]])
    assert sum(res.visits[0]) == 5_000
    assert res.select_type(0) in (0, 1)
    doc = json.loads(res.to_json())
    assert doc["schema_version"] == 1

    try:
        bg.TabularGame([[[2]]], 1, lambda t, h: 1 / 0)
    except ZeroDivisionError:
        pass
    else:
        raise AssertionError("utility errors must propagate")


def check_belief():
    post = bg.update_belief([0.5, 0.5], [10.0, 0.0], [[([10.0, 0.0], 1.0)], [([13.0, 0.0], 1.0)]], 0.5)
    assert post[0] > 0.99 and abs(sum(post) - 1.0) < 1e-9, post


def check_driving():
    assert bg.Scenario.ids("I") == ["A", "B", "C", "D"]
    sc = bg.Scenario.bundled("I", "A")
    assert sc.vehicles == ["AV", "HV1", "HV2"] and sc.ego == 0
    trace = bg.run_scenario(sc, seed=0, iterations=5_000, steps=4)
    assert not trace.collided
    assert len(trace.commanded_velocities(0)) == 4
    assert len(trace.ego_beliefs()) == 4
    m = trace.metrics()
    assert m["rms_a_long"] <= m["max_a_long"]
    report = bg.compute_metrics([trace])
    assert report["runs"] == 1 and report["collisions"] == 0
    assert json.loads(trace.to_json())["scenario"] == "case1_a"

    rows = bg.benchmark(bg.Scenario.bundled("II", "A"), [2_000], repeats=1)
    assert [r["method"] for r in rows] == ["bayes", "baseline"]


def check_verify():
    reports = bg.verify()
    assert all(r["status"] == "pass" for r in reports), reports
    tiny = {r["name"]: r["status"] for r in bg.verify(iterations=10)}
    assert tiny["estimator_consistency"] == "insufficient"


if __name__ == "__main__":
    check_solver()
    check_belief()
    check_driving()
    check_verify()
    print("python smoke test passed")
