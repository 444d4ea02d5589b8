"""Small hand-built models used for verification and examples."""

from __future__ import annotations

import numpy as np

from .model import GE, CostSpec, MdpModel, Outcome, RiskParams, StageConstraints


def tiny_model(lam: float = 0.5, alpha: float = 0.5, horizon: int = 3) -> MdpModel:
    """Inventory with random yield: two regimes, two outcomes each, ``n = m = 1``.

    Order ``a`` in ``[0, 1]`` subject to ``a + x >= 0.3``; stock decays by
    half, the order arrives with random yield and demand is subtracted.
    Cost is the order price minus a salvage credit on the next stock.
    """
    con = StageConstraints([[1.0]], [0.3], [[1.0]], [0.0], [1.0], (GE,))
    outs = (
        (Outcome(0.5, 0, [[0.5]], [[1.0]], [-0.2]),
         Outcome(0.5, 1, [[0.5]], [[0.6]], [-0.6])),
        (Outcome(0.3, 0, [[0.5]], [[1.2]], [-0.1]),
         Outcome(0.7, 1, [[0.5]], [[0.5]], [-0.6])),
    )
    return MdpModel(horizon, 1, 1, (con, con), outs,
                    CostSpec([1.0], [0.0], [-0.8]), RiskParams(lam, alpha),
                    0, [0.5], [-0.7], [2.4])


def deterministic_chain(horizon: int = 4, lam: float = 0.3, alpha: float = 0.4) -> MdpModel:
    """One outcome per state; two alternating regimes with ``n = m = 2``."""
    con = StageConstraints(
        np.array([[1.0, 1.0], [1.0, -1.0]]), [0.5, -1.0], np.array([[0.2, 0.0], [0.0, 1.0]]),
        [0.0, 0.0], [2.0, 2.0], (GE, GE))
    outs = (
        (Outcome(1.0, 1, [[0.9, 0.1], [0.0, 0.8]], [[1.0, 0.0], [0.0, 0.5]], [-0.3, 0.1]),),
        (Outcome(1.0, 0, [[0.7, 0.0], [0.2, 0.9]], [[0.5, 0.2], [0.0, 1.0]], [0.2, -0.4]),),
    )
    return MdpModel(horizon, 2, 2, (con, con), outs,
                    CostSpec([1.0, 0.5], [0.1, 0.0], [-0.6, -0.3]), RiskParams(lam, alpha),
                    0, [1.0, 0.5], [0.0, 0.0], [2.0, 2.0])


def random_model(rng: np.random.Generator, *, horizon: int = 3, num_d: int = 2,
                 num_outcomes: int = 2, n: int = 2, m: int = 2,
                 risk: RiskParams | None = None) -> MdpModel:
    """Random model with complete recourse.

    The single row ``sum(a) >= sum(lower)`` holds on the whole action box, so
    every state admits every action in the box.
    """
    k = 1
    cons = []
    for _ in range(num_d):
        lo = -rng.uniform(0.0, 1.0, m)
        hi = rng.uniform(0.5, 1.5, m)
        cons.append(StageConstraints(np.ones((k, m)), [float(np.sum(lo))],
                                     np.zeros((k, n)), lo, hi, (GE,)))
    outs = []
    for _ in range(num_d):
        p = rng.dirichlet(np.ones(num_outcomes))
        outs.append(tuple(
            Outcome(p[j], int(rng.integers(num_d)), rng.uniform(-0.6, 0.6, (n, n)),
                    rng.uniform(-1.0, 1.0, (n, m)), rng.uniform(-0.5, 0.5, n))
            for j in range(num_outcomes)))
    if risk is None:
        risk = RiskParams(float(rng.uniform(0.0, 1.0)), float(rng.uniform(0.1, 1.0)))
    cost = CostSpec(rng.uniform(-1.0, 1.0, m), rng.uniform(-1.0, 1.0, n), rng.uniform(-1.0, 1.0, n))
    return MdpModel(horizon, n, m, tuple(cons), tuple(outs), cost, risk,
                    0, rng.uniform(-0.5, 0.5, n), -np.ones(n), np.ones(n))
