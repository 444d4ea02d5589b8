"""Exact nested-risk value on the full scenario tree.

The nested recursion ``v_t(d, x) = min_a rho(cost + v_{t+1})`` is written as
one extensive-form LP: each tree node carries its own action and state
variables, an epigraph variable ``V`` for its value, and the AV@R (or worst
case) epigraph of its children's ``cost + V``.  Because the risk mapping is
monotone, minimizing ``V`` at the root makes every epigraph tight on the
optimal path, so the LP optimum is the exact value.  The LP is solved with
HiGHS through scipy; it is a verification tool for small trees only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .model import GE, MdpModel, outcome_arrays

MAX_TREE_NODES = 100_000


class TreeTooLargeError(ValueError):
    def __init__(self, nodes, limit):
        super().__init__(f"scenario tree has at least {nodes} nodes, limit is {limit}")
        self.nodes, self.limit = nodes, limit


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class OracleResult:
    value: float
    action: np.ndarray   # optimal first-stage action
    nodes: int


def tree_size(model: MdpModel, d: int, stages: int, limit: int = MAX_TREE_NODES) -> int:
    """Number of decision nodes in a tree of ``stages`` levels rooted at ``d``."""
    counts = np.zeros(model.num_d)
    counts[d] = 1.0
    total = 0.0
    for _ in range(stages):
        total += counts.sum()
        if total > limit:
            return int(total)
        nxt = np.zeros(model.num_d)
        for dd in np.flatnonzero(counts):
            for nd in outcome_arrays(model, int(dd)).next_d:
                nxt[nd] += counts[dd]
        counts = nxt
    return int(total)


class _Builder:
    def __init__(self):
        self.nv = 0
        self.cost, self.lo, self.hi = [], [], []
        self.eq, self.eq_rhs = [], []
        self.ub, self.ub_rhs = [], []

    def var(self, count, lo=-np.inf, hi=np.inf, cost=0.0):
        start = self.nv
        self.nv += count
        self.cost.append(np.broadcast_to(np.asarray(cost, dtype=float), (count,)))
        self.lo.append(np.broadcast_to(np.asarray(lo, dtype=float), (count,)))
        self.hi.append(np.broadcast_to(np.asarray(hi, dtype=float), (count,)))
        return np.arange(start, start + count)

    def row(self, kind, cols, vals, rhs):
        (self.eq if kind == "eq" else self.ub).append((np.asarray(cols), np.asarray(vals, dtype=float)))
        (self.eq_rhs if kind == "eq" else self.ub_rhs).append(float(rhs))

    def matrix(self, rows):
        if not rows:
            return None
        r = np.concatenate([np.full(len(c), i) for i, (c, _) in enumerate(rows)])
        c = np.concatenate([c for c, _ in rows])
        v = np.concatenate([v for _, v in rows])
        return sparse.csr_matrix((v, (r, c)), shape=(len(rows), self.nv))


def exact_value(model: MdpModel, t: int, d: int, x, *, max_nodes: int = MAX_TREE_NODES) -> OracleResult:
    """Exact ``v*_t(d, x)`` from the extensive form of stages ``t .. horizon-1``."""
    stages = model.horizon - t
    x = np.asarray(x, dtype=float)
    if stages <= 0:
        return OracleResult(0.0, np.zeros(model.m), 0)
    size = tree_size(model, d, stages, max_nodes)
    if size > max_nodes:
        raise TreeTooLargeError(size, max_nodes)

    risk = model.risk
    b = _Builder()
    root_v = None
    root_a = None
    # (d, state variable indices, remaining stages, V variable index)
    stack = []
    xv = b.var(model.n, lo=x, hi=x)
    vv = b.var(1, cost=1.0)[0]
    stack.append((d, xv, stages, vv))
    root_v = vv
    while stack:
        dd, xv, left, vv = stack.pop()
        con = model.constraints[dd]
        oa = outcome_arrays(model, dd)
        K = oa.probs.size
        av = b.var(model.m, lo=con.lower, hi=con.upper)
        if root_a is None:
            root_a = av
        # A a (sense) b - X x  ->  A a + X x (sense) b
        for i in range(con.num_rows):
            cols = np.concatenate([av, xv])
            vals = np.concatenate([con.a_mat[i], con.x_mat[i]])
            if con.senses[i] == GE:
                b.row("ub", cols, -vals, -con.b_vec[i])
            else:
                b.row("eq", cols, vals, con.b_vec[i])
        zv = b.var(K)
        for k in range(K):
            # z = cost_a a + cost_x x + cost_0 + V_child
            cols = [zv[k:k + 1], av, xv]
            vals = [[1.0], -oa.cost_a[k], -oa.cost_x[k]]
            if left > 1:
                child_x = b.var(model.n)
                child_v = b.var(1)[0]
                for i in range(model.n):
                    b.row("eq", np.concatenate([child_x[i:i + 1], xv, av]),
                          np.concatenate([[1.0], -oa.t_x[k][i], -oa.t_a[k][i]]), oa.u[k][i])
                cols.append([child_v])
                vals.append([-1.0])
                stack.append((int(oa.next_d[k]), child_x, left - 1, child_v))
            b.row("eq", np.concatenate(cols), np.concatenate(vals), oa.cost_0[k])
        # V >= (1 - lam) p.z + lam * tail
        p = oa.probs
        if risk.robust:
            w = b.var(1)[0]
            for k in range(K):
                b.row("ub", [zv[k], w], [1.0, -1.0], 0.0)
            b.row("ub", np.concatenate([[vv], zv, [w]]),
                  np.concatenate([[-1.0], (1.0 - risk.lam) * p, [risk.lam]]), 0.0)
        else:
            mu = b.var(1)[0]
            xi = b.var(K, lo=0.0)
            for k in range(K):
                b.row("ub", [zv[k], mu, xi[k]], [1.0, -1.0, -1.0], 0.0)
            b.row("ub", np.concatenate([[vv], zv, [mu], xi]),
                  np.concatenate([[-1.0], (1.0 - risk.lam) * p, [risk.lam],
                                  risk.lam / risk.alpha * p]), 0.0)

    res = linprog(np.concatenate(b.cost),
                  A_ub=b.matrix(b.ub), b_ub=np.array(b.ub_rhs) if b.ub else None,
                  A_eq=b.matrix(b.eq), b_eq=np.array(b.eq_rhs) if b.eq else None,
                  bounds=np.column_stack([np.concatenate(b.lo), np.concatenate(b.hi)]),
                  method="highs", options={"primal_feasibility_tolerance": 1e-10,
                                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise OracleError(f"extensive-form LP failed: {res.message}")
    return OracleResult(float(res.x[root_v]), res.x[root_a].copy(), size)


def exact_oracle(model: MdpModel, **kw) -> float:
    """Exact value at the initial state."""
    return exact_value(model, 0, model.initial_d, model.initial_x, **kw).value
