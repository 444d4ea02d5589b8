import json

import numpy as np
import pytest

from rddp import oracle, portfolio, sim, solver
from rddp.instances import deterministic_chain, random_model, tiny_model
from rddp.model import RiskParams
from rddp.solver import RddpConfig


def hold_cash(t, d, x):
    return np.zeros(6)


def cash_model(horizon):
    p = portfolio.default_params().replace(delta_plus=np.zeros(3), delta_minus=np.zeros(3),
                                           horizon=horizon, grid_size=5)
    return portfolio.build_instance(p)


@pytest.fixture(scope="module")
def tiny_neutral():
    m = tiny_model(0.0, 1.0)
    return m, solver.run(m, RddpConfig(max_iterations=30)).cuts


def test_deterministic_model_has_no_spread():
    m = deterministic_chain()
    res = solver.run(m, RddpConfig(max_iterations=6))
    rep = sim.simulate(m, res.cuts, 20, 0)
    assert rep.std_return == 0.0
    assert rep.mean_return == pytest.approx(res.lower_bound, abs=1e-9)
    assert rep.ci2sd == (rep.mean_return, rep.mean_return)


def test_one_period_cash_cost_is_exact():
    m = cash_model(1)
    rep = sim.simulate(m, None, 50, 3, policy=hold_cash)
    assert np.all(rep.trajectories == 1.0 - 1.00042)


def test_cash_compounds():
    for horizon in (1, 3, 5):
        gain = sim.risk_neutral_return(cash_model(horizon), None, 10, 0, policy=hold_cash)
        assert gain == pytest.approx(1.00042 ** horizon - 1.0, abs=1e-14)
        rep = sim.simulate(cash_model(horizon), None, 10, 0, policy=hold_cash)
        assert rep.per_period_gain == pytest.approx(0.00042, abs=1e-12)


def test_zero_horizon_is_zero():
    m = cash_model(1).replace(horizon=0)
    assert sim.risk_neutral_return(m, None, 5, 0, policy=hold_cash) == 0.0


def test_seeded_determinism(tiny_neutral):
    m, cuts = tiny_neutral
    a = sim.simulate(m, cuts, 300, 42)
    b = sim.simulate(m, cuts, 300, 42)
    assert a.to_json() == b.to_json()
    assert np.array_equal(a.trajectories, b.trajectories)
    c = sim.simulate(m, cuts, 300, 43)
    assert not np.array_equal(a.trajectories, c.trajectories)


def test_report_invariants(tiny_neutral):
    m, cuts = tiny_neutral
    rep = sim.simulate(m, cuts, 500, 1)
    lo, hi = rep.ci2sd
    assert lo <= rep.mean_return <= hi
    assert rep.empirical_avar[1.0] == pytest.approx(rep.mean_return, abs=1e-9)
    levels = sorted(rep.empirical_avar)
    vals = [rep.empirical_avar[a] for a in levels]
    assert all(x >= y - 1e-12 for x, y in zip(vals, vals[1:]))
    doc = json.loads(rep.to_json())
    assert doc["runs"] == 500 and set(doc["empirical_avar"]) == {"1", "0.7", "0.5", "0.2", "0.05"}
    assert rep.trajectories_csv().splitlines()[0] == "run,total_cost"
    assert len(rep.trajectories_csv().splitlines()) == 501


def test_neutral_policy_value_matches_oracle(tiny_neutral):
    m, cuts = tiny_neutral
    exact = oracle.exact_oracle(m)
    rep = sim.simulate(m, cuts, 4000, 7)
    assert abs(rep.mean_return - exact) <= 3 * rep.stderr


@pytest.mark.parametrize("seed", range(3))
def test_neutral_random_models(seed):
    m = random_model(np.random.default_rng(200 + seed), risk=RiskParams(0.0, 1.0))
    cuts = solver.run(m, RddpConfig(max_iterations=40)).cuts
    rep = sim.simulate(m, cuts, 3000, seed)
    assert abs(rep.mean_return - oracle.exact_oracle(m)) <= 3 * rep.stderr


def test_two_seeds_overlap(tiny_neutral):
    m, cuts = tiny_neutral
    a = sim.simulate(m, cuts, 3000, 1)
    b = sim.simulate(m, cuts, 3000, 2)
    assert a.mean_return != b.mean_return
    assert a.ci2sd[0] <= b.ci2sd[1] and b.ci2sd[0] <= a.ci2sd[1]


def test_uncovered_cuts_rejected():
    m = tiny_model()
    with pytest.raises(ValueError):
        sim.simulate(m, None, 10, 0)
    from rddp.value import CutSet
    with pytest.raises(ValueError):
        sim.simulate(m, CutSet(3, 2, 1), 10, 0)


def test_bad_run_count():
    with pytest.raises(ValueError):
        sim.simulate(cash_model(1), None, 0, 0, policy=hold_cash)


def test_summarize_single_run():
    rep = sim.summarize([2.5])
    assert rep.std_return == 0.0 and rep.stderr == 0.0 and rep.empirical_avar[0.05] == 2.5


def test_continuous_dynamics_run():
    p = portfolio.default_params().replace(grid_size=5, horizon=2)
    m = portfolio.build_instance(p)
    step = portfolio.continuous_step(p, portfolio.market_grid(p))
    rep = sim.simulate(m, None, 20, 0, policy=hold_cash, step=step)
    assert np.allclose(rep.trajectories, 1.0 - 1.00042 ** 2)
