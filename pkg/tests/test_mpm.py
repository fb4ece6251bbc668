import math

import numpy as np
import pytest

from restrade.market import MarketConfig, generate_instance
from restrade.mpm import (QpProblem, SolverConfig, build_qp, maximize,
                          oracle_solve, pair_upper_bound, solve)
from restrade.scoring import MatchMatrix, satisfaction

from conftest import make_instance, make_requirement, make_service

DEFAULTS = MarketConfig()


def test_pair_upper_bound_unconstrained():
    req = make_requirement(max_delay=1000.0)
    svc = make_service(max_energy=1000.0)
    assert pair_upper_bound(req, svc) == 1.0


def test_pair_upper_bound_delay_limited():
    # 4 s per unit proportion against a 2 s budget
    req = make_requirement(task_size=1.0, cpu_cycles=10.0, max_delay=2.0)
    svc = make_service(tx_rate=0.5, cpu_freq=5.0, max_energy=1000.0)
    assert pair_upper_bound(req, svc) == pytest.approx(0.5)


def test_pair_upper_bound_energy_limited():
    # 2.4 J per unit proportion against a 0.6 J budget
    req = make_requirement(task_size=1.0, cpu_cycles=10.0, max_delay=1000.0)
    svc = make_service(tx_rate=0.5, cpu_freq=5.0, tx_energy_rate=0.2,
                       exe_energy_rate=1.0, max_energy=0.6)
    assert pair_upper_bound(req, svc) == pytest.approx(0.25)


def test_build_qp_single_pair_matches_symbolic_expansion():
    req = make_requirement()   # task 1 GB, 10 Gcycle, delay cap 8 s, bid 5, rep 0.8
    svc = make_service()       # rate 0.5, freq 5, e 0.2/1.0, cap 10 J, offer 3, rep 0.9
    qp = build_qp(make_instance([req], [svc]))
    unit_delay = 1.0 / 0.5 + 10.0 / 5.0
    unit_energy = 0.2 * (1.0 / 0.5) + 1.0 * (10.0 / 5.0)
    a_req = 0.36 + 0.28 * math.exp(3.0 - 5.0) + 0.36 * 0.9
    a_col = 0.36 + 0.28 * math.exp(-3.0 / 5.0) + 0.36 * 0.8
    assert qp.linear[0, 0] == pytest.approx(0.5 * a_req + 0.5 * a_col, rel=1e-12)
    expected_b = 0.5 * (0.36 * unit_delay / 8.0) + 0.5 * (0.36 * unit_energy / 10.0)
    assert qp.curvature[0, 0] == pytest.approx(expected_b, rel=1e-12)
    assert qp.upper[0, 0] == 1.0


def test_build_qp_price_and_reputation_terms_vanish():
    # offer above bid and zero reputations leave only the delay/energy weights
    req = make_requirement(bid_price=1.0, reputation=0.0)
    svc = make_service(offer_price=2.0, reputation=0.0)
    qp = build_qp(make_instance([req], [svc]))
    assert qp.linear[0, 0] == pytest.approx(0.5 * 0.36 + 0.5 * 0.36, rel=1e-12)
    assert qp.curvature[0, 0] > 0


def test_qp_objective_agrees_with_satisfaction_on_random_feasible_points():
    inst = generate_instance(DEFAULTS, 6, 5, seed=2)
    qp = build_qp(inst)
    rng = np.random.default_rng(17)
    for _ in range(100):
        x = rng.random((6, 5)) * qp.upper
        x[x < 1e-8] = 0.0
        x = x / np.maximum(x.sum(axis=1, keepdims=True), 1.0)
        load = (qp.task_size[:, None] * x).sum(axis=0)
        with np.errstate(divide="ignore"):
            shrink = np.minimum(1.0, np.where(load > 0, qp.cache_size / load, 1.0))
        x = x * shrink[None, :]
        direct = satisfaction(inst, MatchMatrix(x)).objective
        assert qp.objective(x) == pytest.approx(direct, abs=1e-9)


def test_solve_empty_instance():
    result = solve(make_instance([], []))
    assert result.match.values.shape == (0, 0)
    assert result.converged


def test_solve_zero_cache_forces_zero_column():
    svc_empty = make_service(sid="c1", cache_size=0.0)
    inst = make_instance([make_requirement()], [make_service(), svc_empty])
    result = solve(inst)
    assert (result.match.values[:, 1] == 0.0).all()
    assert result.match.values[0, 0] > 0.0


def test_maximize_interior_optimum_synthetic():
    # single pair, contribution (1 - x) * x: maximum at 0.5
    qp = QpProblem(
        linear=np.array([[1.0]]), curvature=np.array([[1.0]]),
        upper=np.array([[1.0]]), task_size=np.array([1.0]),
        cache_size=np.array([10.0]),
    )
    result = maximize(qp, SolverConfig())
    assert result.match.values[0, 0] == pytest.approx(0.5, abs=1e-6)
    assert result.objective == pytest.approx(0.25, abs=1e-9)


def _interior_pair_instance():
    # crafted so the lone pair's optimum is interior: a = 0.36, b = 0.324
    req = make_requirement(task_size=0.45, cpu_cycles=4.5, max_delay=1.0,
                           bid_price=1.0, reputation=0.0)
    svc = make_service(tx_rate=1.0, cpu_freq=10.0, tx_energy_rate=0.4,
                       exe_energy_rate=1.6, max_energy=1.0, offer_price=2.0,
                       reputation=0.0)
    return make_instance([req], [svc])


def test_solve_interior_optimum_from_market_data():
    inst = _interior_pair_instance()
    qp = build_qp(inst)
    assert qp.upper[0, 0] == pytest.approx(1.0)
    expected = qp.linear[0, 0] / (2.0 * qp.curvature[0, 0])
    assert expected < 1.0
    result = solve(inst)
    assert result.match.values[0, 0] == pytest.approx(expected, abs=1e-6)


def test_oracle_empty_instance():
    assert oracle_solve(make_instance([], [])).values.shape == (0, 0)


def test_oracle_grid_maximizer_within_one_step_of_optimum():
    inst = _interior_pair_instance()
    cfg = SolverConfig(oracle_grid_steps=10)
    qp = build_qp(inst)
    optimum = qp.linear[0, 0] / (2.0 * qp.curvature[0, 0])
    grid_best = oracle_solve(inst, cfg).values[0, 0]
    assert abs(grid_best - optimum) <= qp.upper[0, 0] / cfg.oracle_grid_steps + 1e-12


def test_oracle_rejects_large_instances():
    inst = generate_instance(DEFAULTS, 3, 3, seed=0)
    with pytest.raises(ValueError):
        oracle_solve(inst)


def test_solve_dominates_oracle_on_small_seeded_instances():
    cfg = SolverConfig(oracle_grid_steps=10)
    for seed in range(8):
        inst = generate_instance(DEFAULTS, 2, 2, seed)
        qp = build_qp(inst)
        solved = satisfaction(inst, solve(inst, cfg).match).objective
        gridded = satisfaction(inst, oracle_solve(inst, cfg)).objective
        bound = cfg.tolerance + qp.grid_gap_bound(cfg.oracle_grid_steps)
        assert solved >= gridded - bound


def test_solver_feasibility_invariants():
    for m, n, seed in ((3, 4, 0), (10, 7, 1), (25, 25, 2)):
        inst = generate_instance(DEFAULTS, m, n, seed)
        qp = build_qp(inst)
        result = solve(inst)
        x = result.match.values
        assert (x >= 0.0).all() and (x <= 1.0).all()
        assert (x <= qp.upper + 1e-12).all()
        assert x.sum(axis=1).max() <= 1.0 + 1e-9
        assert ((qp.task_size[:, None] * x).sum(axis=0) <= qp.cache_size + 1e-9).all()


def test_solver_respects_delay_and_energy_limits():
    inst = generate_instance(DEFAULTS, 12, 12, seed=5)
    x = solve(inst).match.values
    for i, req in enumerate(inst.requirements):
        for j, svc in enumerate(inst.services):
            if x[i, j] > 1e-9:
                t = x[i, j] * (req.task_size / svc.tx_rate + req.cpu_cycles / svc.cpu_freq)
                e = x[i, j] * (svc.tx_energy_rate * req.task_size / svc.tx_rate
                               + svc.exe_energy_rate * req.cpu_cycles / svc.cpu_freq)
                assert t <= req.max_delay + 1e-9
                assert e <= svc.max_energy + 1e-9


def test_objective_history_is_nondecreasing():
    for seed in (1, 4):
        result = solve(generate_instance(DEFAULTS, 15, 15, seed))
        diffs = np.diff(result.objective_history)
        assert (diffs >= -1e-12).all()
        assert result.objective == result.objective_history[-1]


def test_solve_is_deterministic():
    inst = generate_instance(DEFAULTS, 9, 9, seed=3)
    a = solve(inst)
    b = solve(inst)
    assert np.array_equal(a.match.values, b.match.values)
    assert a.objective == b.objective


def test_pair_contribution_is_concave_along_each_coordinate():
    inst = generate_instance(DEFAULTS, 1, 1, seed=6)
    qp = build_qp(inst)
    u = qp.upper[0, 0]
    h = u / 50
    xs = np.linspace(h, u - h, 20)
    values = [satisfaction(inst, MatchMatrix(np.array([[x]]))).objective for x in xs]
    second = np.diff(values, n=2)
    assert (second <= 1e-12).all()


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(max_iterations=0)
    with pytest.raises(ValueError):
        SolverConfig(tolerance=0.0)
    with pytest.raises(ValueError):
        SolverConfig(oracle_grid_steps=1)
