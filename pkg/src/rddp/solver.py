"""Forward/backward cut generation and lower-bound tracking."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import bellman
from .model import MdpModel, outcome_arrays
from .value import Cut, CutSet


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class RddpConfig:
    """Run settings.

    ``initial_cut_value`` replaces the computed seed bounds with one constant
    for every stage; it must be a valid lower bound for the run to be sound.
    The stall rule stops once the lower bound improved by less than
    ``stall_tolerance`` over the last ``stall_window`` iterations; it is off
    when ``stall_tolerance`` is None.
    """

    max_iterations: int = 50
    rng_seed: int = 0
    trajectories_per_iteration: int = 1
    initial_cut_value: float | None = None
    stall_tolerance: float | None = None
    stall_window: int = 5
    threads: int = 1
    lazy_cuts: bool = True
    backend: str | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if self.stall_window < 1:
            raise ConfigurationError("stall_window must be >= 1")
        if self.trajectories_per_iteration < 1:
            raise ConfigurationError("trajectories_per_iteration must be >= 1")
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigurationError("rng_seed must be a 64-bit unsigned integer")


@dataclass
class RddpResult:
    cuts: CutSet
    lb_trace: list = field(default_factory=list)
    iterations_run: int = 0
    wall_time: float = 0.0
    stopped_by: str = "max_iterations"
    wall_ms: list = field(default_factory=list)
    initial_action: np.ndarray | None = None

    @property
    def lower_bound(self) -> float:
        return self.lb_trace[-1] if self.lb_trace else -np.inf


class IterationError(RuntimeError):
    def __init__(self, iteration, cause):
        super().__init__(f"iteration {iteration}: {cause}")
        self.iteration = iteration
        self.__cause__ = cause


def reachable_boxes(model: MdpModel) -> list[tuple[np.ndarray, np.ndarray]]:
    """Interval boxes containing every state reachable at each stage from the state box."""
    lo, hi = model.state_lower.astype(float), model.state_upper.astype(float)
    boxes = [(lo, hi)]
    for _ in range(1, model.horizon):
        c, r = (lo + hi) / 2, (hi - lo) / 2
        nlo, nhi = np.full(model.n, np.inf), np.full(model.n, -np.inf)
        for d in range(model.num_d):
            con = model.constraints[d]
            ac, ar = (con.lower + con.upper) / 2, (con.upper - con.lower) / 2
            oa = outcome_arrays(model, d)
            center = oa.t_x @ c + oa.t_a @ ac + oa.u
            rad = np.abs(oa.t_x) @ r + np.abs(oa.t_a) @ ar
            nlo = np.minimum(nlo, (center - rad).min(axis=0))
            nhi = np.maximum(nhi, (center + rad).max(axis=0))
        lo, hi = nlo, nhi
        boxes.append((lo, hi))
    return boxes


def stage_cost_bounds(model: MdpModel) -> np.ndarray:
    """Lower bound on the stage cost at each stage over the reachable boxes and action boxes."""
    for d, con in enumerate(model.constraints):
        if not (np.all(np.isfinite(con.lower)) and np.all(np.isfinite(con.upper))):
            raise ConfigurationError(f"state {d}: seed bounds need finite action bounds")
    out = []
    for lo, hi in reachable_boxes(model):
        best = np.inf
        for d in range(model.num_d):
            con = model.constraints[d]
            oa = outcome_arrays(model, d)
            low = (np.minimum(oa.cost_a * con.lower, oa.cost_a * con.upper).sum(axis=1)
                   + np.minimum(oa.cost_x * lo, oa.cost_x * hi).sum(axis=1) + oa.cost_0)
            best = min(best, float(low.min()))
        out.append(best)
    return np.array(out)


def seed_cuts(model: MdpModel, value: float | None = None) -> CutSet:
    """Constant cuts ``L_t`` bounding every stage value from below.

    ``L_t`` sums the stage cost bounds of stages ``t .. horizon-1``; each risk
    mapping is at least the smallest realization, so the sum is a lower bound
    for any start state inside the reachable box of stage ``t``.
    """
    cuts = CutSet(model.horizon, model.num_d, model.n)
    if value is None:
        tails = np.cumsum(stage_cost_bounds(model)[::-1])[::-1]
    else:
        tails = np.full(model.horizon, float(value))
    if not np.all(np.isfinite(tails)):
        raise ConfigurationError("seed bounds are not finite; check the state box")
    for t in range(model.horizon):
        for d in range(model.num_d):
            cuts.add_cut(t, d, Cut(np.zeros(model.n), tails[t], 0, t, d))
    return cuts


def trajectory_rng(seed: int, iteration: int, trajectory: int) -> np.random.Generator:
    """Counter-based stream, independent per (iteration, trajectory)."""
    return np.random.Generator(np.random.Philox(
        np.random.SeedSequence(seed, spawn_key=(iteration, trajectory))))


def sample_outcome(probs: np.ndarray, u: float) -> int:
    """Inverse CDF: the first outcome whose cumulative probability exceeds ``u``."""
    k = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return min(k, probs.size - 1)


def greedy_policy_action(model: MdpModel, cuts: CutSet, t: int, d: int, x, **kw) -> np.ndarray:
    return bellman.greedy_action(model, cuts, t, d, x, **kw)


def forward_pass(model, cuts, rng, config) -> list[np.ndarray]:
    """Sampled continuous states ``x_0 .. x_{horizon-1}`` of one trajectory."""
    d, x = model.initial_d, model.initial_x.astype(float)
    xs = [x]
    for t in range(model.horizon - 1):
        a = bellman.greedy_action(model, cuts, t, d, x, lazy_cuts=config.lazy_cuts,
                                  backend=config.backend)
        oa = outcome_arrays(model, d)
        k = sample_outcome(oa.probs, rng.random())
        x = oa.t_x[k] @ x + oa.t_a[k] @ a + oa.u[k]
        d = int(oa.next_d[k])
        xs.append(x)
    return xs


def run(model: MdpModel, config: RddpConfig | None = None, *, cuts: CutSet | None = None,
        progress=None, first_iteration: int = 1) -> RddpResult:
    """Run cut generation from ``(initial_d, initial_x)``.

    ``progress(iteration, lb, wall_ms)`` is called after each iteration.
    Passing ``cuts`` continues from an earlier cut set instead of seeding;
    with ``first_iteration`` set to the next iteration number the sampled
    trajectories match those of one uninterrupted run.
    """
    config = config or RddpConfig()
    start = time.perf_counter()
    cuts = seed_cuts(model, config.initial_cut_value) if cuts is None else cuts.copy()
    result = RddpResult(cuts)
    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    kw = dict(lazy_cuts=config.lazy_cuts, backend=config.backend)

    def new_cut(t, d, x, it):
        st = bellman.solve_stage(model, t, d, x, cuts, **kw)
        return bellman.extract_cut(model, t, d, x, st, cuts, it)

    try:
        for it in range(first_iteration, first_iteration + config.max_iterations):
            try:
                paths = [forward_pass(model, cuts, trajectory_rng(config.rng_seed, it, j), config)
                         for j in range(config.trajectories_per_iteration)]
                for t in range(model.horizon - 1, 0, -1):
                    jobs = [(d, xs[t]) for xs in paths for d in range(model.num_d)]
                    if pool is None:
                        found = [new_cut(t, d, x, it) for d, x in jobs]
                    else:
                        found = list(pool.map(lambda job: new_cut(t, job[0], job[1], it), jobs))
                    for (d, _), cut in zip(jobs, found):
                        cuts.add_cut(t, d, cut)
                root = bellman.solve_stage(model, 0, model.initial_d, model.initial_x, cuts, **kw)
            except bellman.StageError as exc:
                raise IterationError(it, exc) from exc
            result.lb_trace.append(root.value)
            result.initial_action = root.action
            result.iterations_run = it - first_iteration + 1
            ms = (time.perf_counter() - start) * 1000.0
            result.wall_ms.append(ms)
            if progress is not None:
                progress(it, root.value, ms)
            w = config.stall_window
            if (config.stall_tolerance is not None and len(result.lb_trace) > w
                    and result.lb_trace[-1] - result.lb_trace[-1 - w] < config.stall_tolerance):
                result.stopped_by = "stall"
                break
    finally:
        if pool is not None:
            pool.shutdown()
    result.wall_time = time.perf_counter() - start
    return result
