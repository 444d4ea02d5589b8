"""Dense two-phase bounded revised simplex with dual values.

Problem form::

    minimize    c @ z
    subject to  E @ z == f        (duals_eq, free sign)
                G @ z >= h        (duals_ge, >= 0)
                lower <= z <= upper

Sign conventions (relied upon by :mod:`rddp.bellman`): every row dual is
the derivative of the optimal objective with respect to that row's
right-hand side, so ``duals_ge >= 0`` for a minimization.  Reduced costs
``c - E.T @ duals_eq - G.T @ duals_ge`` are positive only on variables
resting at their lower bound and negative only at their upper bound.

The pivoting loop runs in the compiled ``_kernel`` extension when it is
importable and in ``_kernel_py`` otherwise; set ``RDDP_PURE_PYTHON=1`` to
force the fallback.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field

import numpy as np

from . import _kernel_py

try:
    if os.environ.get("RDDP_PURE_PYTHON"):
        raise ImportError("pure Python backend requested")
    from . import _kernel as _kernel_c
except ImportError:
    _kernel_c = None

BACKENDS = ("compiled", "python") if _kernel_c is not None else ("python",)
DEFAULT_BACKEND = BACKENDS[0]

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-8
OPT_TOL = 1e-9
HARRIS_TOL = 1e-9
REFACTOR_EVERY = 50


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True, eq=False)
class LpProblem:
    """A dense LP in the form documented at module level.

    Missing row blocks may be passed as ``None``; missing bounds default to
    ``z >= 0`` being *not* assumed: variables are free unless bounded.
    """

    objective: np.ndarray
    eq_matrix: np.ndarray | None = None
    eq_rhs: np.ndarray | None = None
    ge_matrix: np.ndarray | None = None
    ge_rhs: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).ravel()
        n = c.size
        if n == 0:
            raise ValueError("LP needs at least one variable")

        def rows(mat, rhs, name):
            if mat is None:
                return np.zeros((0, n)), np.zeros(0)
            mat = np.asarray(mat, dtype=float).reshape(-1, n)
            rhs = np.asarray(rhs, dtype=float).ravel()
            if rhs.size != mat.shape[0]:
                raise ValueError(f"{name}: {mat.shape[0]} rows but {rhs.size} right-hand sides")
            return mat, rhs

        E, f = rows(self.eq_matrix, self.eq_rhs, "eq_rows")
        G, h = rows(self.ge_matrix, self.ge_rhs, "ge_rows")
        lo = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float).ravel()
        hi = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).ravel()
        if lo.size != n or hi.size != n:
            raise ValueError("bound vectors must match the number of variables")
        for name, val in (("objective", c), ("eq_matrix", E), ("eq_rhs", f),
                          ("ge_matrix", G), ("ge_rhs", h), ("lower", lo), ("upper", hi)):
            object.__setattr__(self, name, val)

    @property
    def num_vars(self) -> int:
        return self.objective.size

    @property
    def num_rows(self) -> int:
        return self.eq_matrix.shape[0] + self.ge_matrix.shape[0]


@dataclass
class LpSolution:
    status: Status
    primal: np.ndarray | None = None
    duals_eq: np.ndarray | None = None
    duals_ge: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    objective: float = float("nan")
    iterations: int = 0
    message: str = ""
    checks: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def _initial_value(lo, hi):
    if np.isfinite(lo):
        return lo, _kernel_py.AT_LOWER
    if np.isfinite(hi):
        return hi, _kernel_py.AT_UPPER
    return 0.0, _kernel_py.FREE


def solve(problem: LpProblem, *, backend: str | None = None,
          max_iterations: int | None = None) -> LpSolution:
    """Solve ``problem`` and return primal values, row duals and status.

    Every optimal return has passed primal feasibility, strong duality and
    complementary slackness checks; a failed check is reported as
    ``NUMERICAL_FAILURE`` rather than silently returned.
    """
    kernel = _pick(backend)
    c = problem.objective
    n = c.size
    E, f = problem.eq_matrix, problem.eq_rhs
    G, h = problem.ge_matrix, problem.ge_rhs
    lo, hi = problem.lower, problem.upper
    if np.any(lo > hi):
        return LpSolution(Status.INFEASIBLE, message="empty variable box")
    me, mg = E.shape[0], G.shape[0]
    m = me + mg

    if m == 0:
        return _solve_box_only(problem)

    # columns: structural | ge slacks | artificials
    N = n + mg + m
    A = np.zeros((m, N))
    A[:me, :n] = E
    A[me:, :n] = G
    A[me:, n:n + mg] = -np.eye(mg)
    b = np.concatenate([f, h])
    lo_all = np.concatenate([lo, np.zeros(mg), np.zeros(m)])
    hi_all = np.concatenate([hi, np.full(mg, np.inf), np.zeros(m)])

    x = np.zeros(N)
    state = np.empty(N, dtype=np.int8)
    for j in range(n):
        x[j], state[j] = _initial_value(lo[j], hi[j])
    state[n:] = _kernel_py.AT_LOWER
    resid = b - A[:, :n] @ x[:n]
    basis = np.empty(m, dtype=np.intp)
    for i in range(m):
        art = n + mg + i
        if i >= me and resid[i] <= 0.0:
            s = n + (i - me)
            basis[i] = s
            x[s] = -resid[i]
        else:
            sign = 1.0 if resid[i] >= 0.0 else -1.0
            A[i, art] = sign
            hi_all[art] = np.inf
            basis[i] = art
            x[art] = abs(resid[i])
    state[basis] = _kernel_py.BASIC
    binv = np.zeros((m, m))
    binv[np.arange(m), np.arange(m)] = [A[i, basis[i]] for i in range(m)]

    limit = max_iterations or max(1000, 50 * (m + N))
    bland_after = 3 * (m + N)
    total_iters = 0

    art_cols = np.arange(n + mg, N)
    if np.any(basis >= n + mg):
        c1 = np.zeros(N)
        c1[art_cols] = 1.0
        code, it = kernel.iterate(A, b, c1, lo_all, hi_all, x, basis, state, binv,
                                  limit, PIVOT_TOL, HARRIS_TOL, OPT_TOL,
                                  REFACTOR_EVERY, bland_after)
        total_iters += it
        if code != _kernel_py.OPTIMAL:
            return LpSolution(Status.NUMERICAL_FAILURE, iterations=total_iters,
                              message=f"phase 1 stopped with code {code}")
        if not kernel.refactor(A, b, x, basis, binv):
            return LpSolution(Status.NUMERICAL_FAILURE, iterations=total_iters,
                              message="singular basis after phase 1")
        infeas = float(np.sum(np.abs(x[art_cols])))
        if infeas > FEAS_TOL * (1.0 + float(np.max(np.abs(b)))):
            return LpSolution(Status.INFEASIBLE, iterations=total_iters,
                              message=f"phase 1 residual {infeas:.3e}")
        _drive_out_artificials(kernel, A, x, basis, state, binv, n + mg)
        x[art_cols] = 0.0
        hi_all[art_cols] = 0.0
        if not kernel.refactor(A, b, x, basis, binv):
            return LpSolution(Status.NUMERICAL_FAILURE, iterations=total_iters,
                              message="singular basis entering phase 2")
    hi_all[art_cols] = 0.0

    c2 = np.zeros(N)
    c2[:n] = c
    code, it = kernel.iterate(A, b, c2, lo_all, hi_all, x, basis, state, binv,
                              limit, PIVOT_TOL, HARRIS_TOL, OPT_TOL,
                              REFACTOR_EVERY, bland_after)
    total_iters += it
    if code == _kernel_py.UNBOUNDED:
        return LpSolution(Status.UNBOUNDED, iterations=total_iters)
    if code != _kernel_py.OPTIMAL:
        return LpSolution(Status.NUMERICAL_FAILURE, iterations=total_iters,
                          message=f"phase 2 stopped with code {code}")
    if not kernel.refactor(A, b, x, basis, binv):
        return LpSolution(Status.NUMERICAL_FAILURE, iterations=total_iters,
                          message="singular final basis")

    z = x[:n].copy()
    # nonbasic structurals sit exactly on their bounds; clip basic drift
    z = np.minimum(np.maximum(z, lo), hi)
    y = binv.T @ c2[basis]
    return _finish(problem, z, y[:me], y[me:], total_iters)


def _drive_out_artificials(kernel, A, x, basis, state, binv, first_art):
    m = A.shape[0]
    for r in range(m):
        if basis[r] < first_art:
            continue
        row = binv[r] @ A[:, :first_art]
        row[state[:first_art] == _kernel_py.BASIC] = 0.0
        j = int(np.argmax(np.abs(row)))
        if abs(row[j]) > 1e-7:
            kernel.pivot_in(A, x, basis, state, binv, r, j)
        # else: redundant row, artificial stays basic at zero


def _solve_box_only(problem: LpProblem) -> LpSolution:
    c, lo, hi = problem.objective, problem.lower, problem.upper
    z = np.where(c > 0, lo, np.where(c < 0, hi, np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))))
    if not np.all(np.isfinite(z)):
        return LpSolution(Status.UNBOUNDED)
    return _finish(problem, z, np.zeros(0), np.zeros(0), 0)


def _finish(problem, z, y_eq, y_ge, iters) -> LpSolution:
    c, lo, hi = problem.objective, problem.lower, problem.upper
    E, f, G, h = problem.eq_matrix, problem.eq_rhs, problem.ge_matrix, problem.ge_rhs
    red = c - E.T @ y_eq - G.T @ y_ge
    obj = float(c @ z)
    checks = check_optimality(problem, z, y_eq, y_ge, red)
    sol = LpSolution(Status.OPTIMAL, primal=z, duals_eq=y_eq, duals_ge=y_ge,
                     reduced_costs=red, objective=obj, iterations=iters, checks=checks)
    failed = [k for k, v in checks.items() if not v[1]]
    if failed:
        sol.status = Status.NUMERICAL_FAILURE
        sol.message = "self-check failed: " + ", ".join(
            f"{k}={checks[k][0]:.3e}" for k in failed)
    return sol


def check_optimality(problem, z, y_eq, y_ge, red):
    """Residuals of the optimality certificate as ``{name: (value, ok)}``."""
    c, lo, hi = problem.objective, problem.lower, problem.upper
    E, f, G, h = problem.eq_matrix, problem.eq_rhs, problem.ge_matrix, problem.ge_rhs
    obj = float(c @ z)
    scale = 1.0 + max(float(np.max(np.abs(z), initial=0.0)), 1.0)
    out = {}

    eq_res = float(np.max(np.abs(E @ z - f), initial=0.0))
    ge_slack = G @ z - h
    ge_res = float(max(-np.min(ge_slack, initial=0.0), 0.0))
    bnd_res = float(max(np.max(lo - z, initial=0.0), np.max(z - hi, initial=0.0), 0.0))
    primal = max(eq_res, ge_res, bnd_res)
    out["primal_feasibility"] = (primal, primal <= FEAS_TOL * scale)

    dual_ge = float(max(-np.min(y_ge, initial=0.0), 0.0))
    # a reduced cost may only push against a finite bound
    pos_bad = np.where(np.isfinite(lo), 0.0, np.maximum(red, 0.0))
    neg_bad = np.where(np.isfinite(hi), 0.0, np.maximum(-red, 0.0))
    dual_res = max(dual_ge, float(np.max(pos_bad, initial=0.0)), float(np.max(neg_bad, initial=0.0)))
    out["dual_feasibility"] = (dual_res, dual_res <= 1e-9 * (1.0 + float(np.max(np.abs(c)))))

    red_lo = np.where(np.isfinite(lo), np.maximum(red, 0.0) * np.where(np.isfinite(lo), lo, 0.0), 0.0)
    red_hi = np.where(np.isfinite(hi), np.minimum(red, 0.0) * np.where(np.isfinite(hi), hi, 0.0), 0.0)
    dual_obj = float(f @ y_eq + h @ y_ge + red_lo.sum() + red_hi.sum())
    gap = abs(obj - dual_obj)
    out["strong_duality"] = (gap, gap <= 1e-7 * (1.0 + abs(obj)))

    cs_rows = float(np.max(np.abs(y_ge * ge_slack), initial=0.0))
    # infinite-bound sign violations are already counted as dual infeasibility
    dist_lo = np.where(np.isfinite(lo), z - np.where(np.isfinite(lo), lo, 0.0), 0.0)
    dist_hi = np.where(np.isfinite(hi), np.where(np.isfinite(hi), hi, 0.0) - z, 0.0)
    cs_lo = np.maximum(red, 0.0) * dist_lo
    cs_hi = np.maximum(-red, 0.0) * dist_hi
    cs = max(cs_rows, float(np.max(cs_lo, initial=0.0)), float(np.max(cs_hi, initial=0.0)))
    out["complementary_slackness"] = (cs, cs <= 1e-7 * (1.0 + abs(obj)))
    return out


def _pick(backend):
    name = backend or DEFAULT_BACKEND
    if name == "compiled":
        if _kernel_c is None:
            raise RuntimeError("compiled simplex kernel is not available")
        return _kernel_c
    if name == "python":
        return _kernel_py
    raise ValueError(f"unknown backend {name!r}")


__all__ = ["LpProblem", "LpSolution", "Status", "solve", "check_optimality",
           "BACKENDS", "DEFAULT_BACKEND"]
