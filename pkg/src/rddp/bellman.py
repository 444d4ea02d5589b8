"""Stage linear program: greedy action, stage value and a new cut.

At stage ``t`` in discrete state ``d`` with continuous state ``x`` the LP is

    min   lam * mu + sum_w p(w) * ((1 - lam) * z(w) + lam / alpha * xi(w))
    s.t.  A a (=|>=) b - X x                                  (structural rows)
          z(w) - (c_a + T_a(w)' c_n) a - y(w)
                 = (c_x + T_x(w)' c_n) x + c_n' U(w)          (cost rows)
          y(w) - q_j' T_a(w) a >= q_j' (T_x(w) x + U(w)) + q_cj  (cut rows)
          xi(w) + mu - z(w) >= 0,  xi >= 0                    (tail rows)
          l <= a <= u

The continuation ``y`` and the cut rows are dropped at the last stage.  With
``alpha == 0`` the tail block becomes ``w >= z(w)`` with objective ``lam * w``.

Cut rows are added lazily: the LP is first solved with one cut per outcome
and the most violated cut of each outcome is appended until none is
violated.  The result is an optimal solution of the full LP; duals of rows
never added are zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lp
from .model import GE, MdpModel, outcome_arrays
from .value import Cut, CutSet

VIOLATION_TOL = 1e-9


class StageError(RuntimeError):
    pass


class MissingCutsError(StageError):
    def __init__(self, t, d):
        super().__init__(f"no cuts for stage {t}, state {d}")
        self.t, self.d = t, d


class StageInfeasibleError(StageError):
    """No admissible action: complete recourse fails at this state."""

    def __init__(self, t, d, x):
        super().__init__(f"stage LP infeasible at t={t}, d={d}, x={np.array2string(np.asarray(x))}")
        self.t, self.d, self.x = t, d, np.asarray(x)


class StageNumericalError(StageError):
    def __init__(self, t, d, x, status, message=""):
        super().__init__(f"stage LP {status} at t={t}, d={d}, x={np.array2string(np.asarray(x))}"
                         + (f": {message}" if message else ""))
        self.t, self.d, self.x = t, d, np.asarray(x)


@dataclass(frozen=True, eq=False)
class StageLp:
    """An assembled stage LP together with its variable and row layout.

    ``cut_rows`` lists the ``(outcome, cut index)`` pair behind each cut row,
    in row order.
    """

    problem: lp.LpProblem
    m: int
    num_outcomes: int
    robust: bool
    terminal: bool
    a: slice
    mu: int | None
    xi: slice | None
    w: int | None
    z: slice
    y: slice | None
    struct_eq: np.ndarray    # indices into eq rows, aligned with the model rows
    struct_ge: np.ndarray
    cost_rows: slice         # eq rows
    tail_rows: slice         # ge rows
    cut_rows_start: int      # ge rows
    cut_rows: tuple


@dataclass(frozen=True, eq=False)
class StageDuals:
    """Dual values of the stage LP, each the sensitivity of the optimum to its row.

    ``cuts[w]`` is aligned with the cut list of the successor of outcome
    ``w`` (empty at the last stage).
    """

    structural: np.ndarray
    cost: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    cuts: tuple
    tail: np.ndarray


@dataclass(frozen=True, eq=False)
class StageSolution:
    t: int
    d: int
    x: np.ndarray
    action: np.ndarray
    value: float
    duals: StageDuals
    outcome_values: np.ndarray  # z(w): stage cost plus continuation
    iterations: int
    lp_solves: int


def _continuation(model, t, d, next_cuts):
    """Per-outcome (slopes, intercepts) of the successor cut sets, or None at the end."""
    if t + 1 >= model.horizon:
        return None
    if next_cuts is None:
        raise MissingCutsError(t + 1, -1)
    out = []
    for nd in outcome_arrays(model, d).next_d:
        slopes, icepts = next_cuts.arrays(t + 1, int(nd))
        if icepts.size == 0:
            raise MissingCutsError(t + 1, int(nd))
        out.append((slopes, icepts))
    return out


def _assemble(model: MdpModel, t, d, x, cont, active) -> StageLp:
    con = model.constraints[d]
    oa = outcome_arrays(model, d)
    risk = model.risk
    x = np.asarray(x, dtype=float)
    m, K = model.m, oa.probs.size
    robust = risk.robust
    terminal = cont is None

    # variable layout
    a = slice(0, m)
    pos = m
    if robust:
        w, mu, xi = pos, None, None
        pos += 1
    else:
        w, mu, xi = None, pos, slice(pos + 1, pos + 1 + K)
        pos += 1 + K
    z = slice(pos, pos + K)
    pos += K
    y = None if terminal else slice(pos, pos + K)
    if y is not None:
        pos += K
    nv = pos

    c = np.zeros(nv)
    c[z] = (1.0 - risk.lam) * oa.probs
    if robust:
        c[w] = risk.lam
    else:
        c[mu] = risk.lam
        c[xi] = risk.lam / risk.alpha * oa.probs
    lower = np.full(nv, -np.inf)
    upper = np.full(nv, np.inf)
    lower[a], upper[a] = con.lower, con.upper
    if xi is not None:
        lower[xi] = 0.0

    struct_rhs = con.b_vec - con.x_mat @ x
    is_eq = np.array([s != GE for s in con.senses], dtype=bool)
    struct_eq = np.flatnonzero(is_eq)
    struct_ge = np.flatnonzero(~is_eq)

    # equality rows: structural, then cost definitions
    n_seq = struct_eq.size
    E = np.zeros((n_seq + K, nv))
    f = np.empty(n_seq + K)
    E[:n_seq, a] = con.a_mat[struct_eq]
    f[:n_seq] = struct_rhs[struct_eq]
    rows = np.arange(n_seq, n_seq + K)
    E[rows, z.start + np.arange(K)] = 1.0
    E[n_seq:, a] = -oa.cost_a
    if y is not None:
        E[rows, y.start + np.arange(K)] = -1.0
    f[n_seq:] = oa.cost_x @ x + oa.cost_0

    # inequality rows: structural, tail, cuts
    cut_rows = [] if terminal else [(k, j) for k in range(K) for j in active[k]]
    n_sge = struct_ge.size
    start = n_sge + K
    G = np.zeros((start + len(cut_rows), nv))
    h = np.zeros(start + len(cut_rows))
    G[:n_sge, a] = con.a_mat[struct_ge]
    h[:n_sge] = struct_rhs[struct_ge]
    rows = np.arange(n_sge, n_sge + K)
    G[rows, z.start + np.arange(K)] = -1.0
    if robust:
        G[n_sge:start, w] = 1.0
    else:
        G[rows, xi.start + np.arange(K)] = 1.0
        G[n_sge:start, mu] = 1.0
    if cut_rows:
        drift = oa.t_x @ x + oa.u  # (K, n)
        for r, (k, j) in enumerate(cut_rows, start=start):
            q, qc = cont[k][0][j], cont[k][1][j]
            G[r, y.start + k] = 1.0
            G[r, a] = -(q @ oa.t_a[k])
            h[r] = q @ drift[k] + qc

    problem = lp.LpProblem(c, E, f, G, h, lower, upper)
    return StageLp(problem, m, K, robust, terminal, a, mu, xi, w, z, y,
                   struct_eq, struct_ge, slice(n_seq, n_seq + K),
                   slice(n_sge, start), start, tuple(cut_rows))


def build_stage_lp(model: MdpModel, t: int, d: int, x, next_cuts: CutSet | None,
                   active=None) -> StageLp:
    """Assemble the stage LP.

    ``active[w]`` optionally restricts the cut rows of outcome ``w`` to a
    subset of its successor's cuts; by default every cut gets a row.
    """
    cont = _continuation(model, t, d, next_cuts)
    if cont is not None and active is None:
        active = [list(range(icepts.size)) for _, icepts in cont]
    return _assemble(model, t, d, x, cont, active)


def _unpack(model, t, d, x, stage: StageLp, sol: lp.LpSolution, cont, lp_solves, iters):
    con = model.constraints[d]
    k = con.num_rows
    structural = np.zeros(k)
    structural[stage.struct_eq] = sol.duals_eq[:stage.struct_eq.size]
    structural[stage.struct_ge] = sol.duals_ge[:stage.struct_ge.size]
    red = sol.reduced_costs[stage.a]
    cuts = ()
    if cont is not None:
        per = [np.zeros(icepts.size) for _, icepts in cont]
        for r, (kk, j) in enumerate(stage.cut_rows, start=stage.cut_rows_start):
            per[kk][j] = sol.duals_ge[r]
        cuts = tuple(per)
    duals = StageDuals(structural, sol.duals_eq[stage.cost_rows].copy(),
                       np.maximum(red, 0.0), np.maximum(-red, 0.0), cuts,
                       sol.duals_ge[stage.tail_rows].copy())
    return StageSolution(t, d, np.array(x, dtype=float), sol.primal[stage.a].copy(),
                         sol.objective, duals, sol.primal[stage.z].copy(), iters, lp_solves)


def _check(sol, t, d, x):
    if sol.status is lp.Status.INFEASIBLE:
        raise StageInfeasibleError(t, d, x)
    if not sol.optimal:
        raise StageNumericalError(t, d, x, sol.status.value, sol.message)


def solve_stage(model: MdpModel, t: int, d: int, x, next_cuts: CutSet | None, *,
                lazy_cuts: bool = True, backend: str | None = None) -> StageSolution:
    """Optimal greedy action and value of the stage LP at ``(t, d, x)``.

    ``lazy_cuts=False`` puts every cut row into a single LP; the default
    grows the cut rows on demand and reaches the same optimum.
    """
    x = np.asarray(x, dtype=float)
    cont = _continuation(model, t, d, next_cuts)
    if cont is None or not lazy_cuts:
        active = None if cont is None else [list(range(ic.size)) for _, ic in cont]
        stage = _assemble(model, t, d, x, cont, active)
        sol = lp.solve(stage.problem, backend=backend)
        _check(sol, t, d, x)
        return _unpack(model, t, d, x, stage, sol, cont, 1, sol.iterations)

    oa = outcome_arrays(model, d)
    con = model.constraints[d]
    a0 = np.clip(0.0, con.lower, con.upper)
    x0 = oa.step(x, a0)
    active = [[int(np.argmax(sl @ x0[k] + ic))] for k, (sl, ic) in enumerate(cont)]
    solves = iters = 0
    while True:
        stage = _assemble(model, t, d, x, cont, active)
        sol = lp.solve(stage.problem, backend=backend)
        solves += 1
        iters += sol.iterations
        _check(sol, t, d, x)
        nxt = oa.step(x, sol.primal[stage.a])
        yv = sol.primal[stage.y]
        grew = False
        for k, (sl, ic) in enumerate(cont):
            vals = sl @ nxt[k] + ic
            j = int(np.argmax(vals))
            if vals[j] > yv[k] + VIOLATION_TOL * (1.0 + abs(yv[k])) and j not in active[k]:
                active[k].append(j)
                grew = True
        if not grew:
            return _unpack(model, t, d, x, stage, sol, cont, solves, iters)


def greedy_action(model: MdpModel, cuts: CutSet | None, t: int, d: int, x, **kw) -> np.ndarray:
    """Minimizer of the cut-approximated stage objective."""
    return solve_stage(model, t, d, x, cuts, **kw).action


def cut_slope(model: MdpModel, stage: StageSolution, next_cuts: CutSet | None) -> np.ndarray:
    """Gradient of the stage value with respect to ``x`` implied by the duals."""
    con = model.constraints[stage.d]
    oa = outcome_arrays(model, stage.d)
    du = stage.duals
    e_x = -con.x_mat.T @ du.structural + du.cost @ oa.cost_x
    for k, dk in enumerate(du.cuts):
        if np.any(dk):
            slopes, _ = next_cuts.arrays(stage.t + 1, int(oa.next_d[k]))
            e_x += oa.t_x[k].T @ (slopes.T @ dk)
    return e_x


def extract_cut(model: MdpModel, t: int, d: int, x_hat, stage: StageSolution,
                next_cuts: CutSet | None, iteration: int = 0) -> Cut:
    """Supporting cut of the stage value at ``x_hat``, tight there by construction."""
    if stage.t != t or stage.d != d or not np.array_equal(stage.x, np.asarray(x_hat, dtype=float)):
        raise ValueError("stage solution does not belong to (t, d, x_hat)")
    if not np.isfinite(stage.value):
        raise ValueError("stage solution is not optimal")
    e_x = cut_slope(model, stage, next_cuts)
    e_c = stage.value - e_x @ stage.x
    return Cut(e_x, e_c, iteration, t, d, stage.x.copy())
