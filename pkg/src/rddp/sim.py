"""Monte Carlo evaluation of greedy policies."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from . import bellman
from .model import MdpModel, outcome_arrays
from .risk import FiniteDistribution, avar_primal
from .value import CutSet

DEFAULT_ALPHAS = (1.0, 0.7, 0.5, 0.2, 0.05)


@dataclass(frozen=True, eq=False)
class SimReport:
    """Statistics of the total cost over independent runs.

    ``mean_return`` and ``std_return`` refer to the total cost, so a wealth
    gain shows up as a negative mean.  ``per_period_gain`` is the geometric
    mean wealth growth per step and is only set for wealth-loss cost models.
    """

    runs: int
    mean_return: float
    std_return: float
    empirical_avar: dict
    ci2sd: tuple
    trajectories: np.ndarray | None = None
    per_period_gain: float | None = None

    @property
    def stderr(self) -> float:
        return self.std_return / np.sqrt(self.runs) if self.runs > 1 else 0.0

    def to_json(self) -> str:
        doc = {
            "runs": self.runs,
            "mean_return": self.mean_return,
            "std_return": self.std_return,
            "empirical_avar": {format(k, "g"): v for k, v in self.empirical_avar.items()},
            "ci2sd": list(self.ci2sd),
            "per_period_gain": self.per_period_gain,
        }
        return json.dumps(doc, indent=2) + "\n"

    def trajectories_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["run", "total_cost"])
        for i, v in enumerate(self.trajectories if self.trajectories is not None else ()):
            w.writerow([i, format(float(v), ".17g")])
        return buf.getvalue()


def run_rng(seed: int, run: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(run,))))


def discrete_step(model: MdpModel):
    """Transition sampling the model's own outcome atoms by inverse CDF."""
    cum = [np.cumsum(outcome_arrays(model, d).probs) for d in range(model.num_d)]

    def step(rng, d, x, a, aux):
        oa = outcome_arrays(model, d)
        k = min(int(np.searchsorted(cum[d], rng.random(), side="right")), oa.probs.size - 1)
        return int(oa.next_d[k]), oa.t_x[k] @ x + oa.t_a[k] @ a + oa.u[k], aux

    return step


def greedy_policy(model: MdpModel, cuts: CutSet, **kw):
    """Greedy action lookup memoized on the exact state."""
    memo = {}

    def policy(t, d, x):
        key = (t, d, x.tobytes())
        a = memo.get(key)
        if a is None:
            a = memo[key] = bellman.greedy_action(model, cuts, t, d, x, **kw)
        return a

    return policy


def _wealth_cost(model):
    c = model.cost
    return not np.any(c.c_a) and np.all(c.c_x == 1.0) and np.all(c.c_n == -1.0)


def simulate(model: MdpModel, cuts: CutSet | None, runs: int, seed: int, *,
             policy=None, step=None, alphas=DEFAULT_ALPHAS, keep_trajectories: bool = True,
             **kw) -> SimReport:
    """Roll out ``policy`` (greedy on ``cuts`` by default) ``runs`` times.

    ``step(rng, d, x, a, aux) -> (d', x', aux')`` replaces the sampled
    dynamics; the cost always follows the model's cost function.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if policy is None:
        uncovered = [k for k in cuts.uncovered() if k[0] > 0] if cuts is not None else None
        if cuts is None or uncovered:
            raise ValueError(f"cut set does not cover stages {uncovered}")
        policy = greedy_policy(model, cuts, **kw)
    step = step or discrete_step(model)
    totals = np.empty(runs)
    for i in range(runs):
        rng = run_rng(seed, i)
        d, x, aux = model.initial_d, model.initial_x.astype(float), None
        total = 0.0
        for t in range(model.horizon):
            a = policy(t, d, x)
            d_next, x_next, aux = step(rng, d, x, a, aux)
            total += model.cost(x, a, x_next)
            d, x = d_next, x_next
        totals[i] = total
    return summarize(totals, model, alphas, keep_trajectories)


def summarize(totals, model: MdpModel | None = None, alphas=DEFAULT_ALPHAS,
              keep_trajectories: bool = True) -> SimReport:
    totals = np.asarray(totals, dtype=float)
    runs = totals.size
    mean = float(totals.mean())
    # identical totals have no spread; the rounded mean would suggest some
    std = float(totals.std(ddof=1)) if runs > 1 and np.ptp(totals) > 0 else 0.0
    dist = FiniteDistribution.uniform(totals)
    avar = {float(a): avar_primal(dist, a) for a in alphas}
    half = 2.0 * std / np.sqrt(runs)
    gain = None
    if model is not None and model.horizon > 0 and _wealth_cost(model):
        w0 = float(np.sum(model.initial_x))
        if w0 > 0 and w0 - mean > 0:
            gain = float(((w0 - mean) / w0) ** (1.0 / model.horizon) - 1.0)
    return SimReport(runs, mean, std, avar, (float(mean - half), float(mean + half)),
                     totals if keep_trajectories else None, gain)


def risk_neutral_return(model: MdpModel, cuts: CutSet | None, runs: int, seed: int, **kw) -> float:
    """Expected total wealth gain, the negated mean total cost."""
    return -simulate(model, cuts, runs, seed, **kw).mean_return
