import itertools

import numpy as np
import pytest

from rddp import lp
from rddp.instances import tiny_model


@pytest.fixture(params=lp.BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def tiny():
    return tiny_model()


def vertex_optimum(problem: lp.LpProblem, tol=1e-9):
    """Best objective over all basic feasible solutions, or None if there are none.

    Every bound must be finite.  Each vertex is the solution of all equality
    rows plus ``n - n_eq`` active inequalities (rows or bounds).
    """
    E, f = problem.eq_matrix, problem.eq_rhs
    n = problem.num_vars
    I = np.eye(n)
    ineq = np.vstack([problem.ge_matrix, I, -I])
    rhs = np.concatenate([problem.ge_rhs, problem.lower, -problem.upper])
    k = n - E.shape[0]
    combos = np.array(list(itertools.combinations(range(ineq.shape[0]), k)), dtype=int).reshape(-1, k)
    best = None
    for chunk in np.array_split(combos, max(1, len(combos) // 20000)):
        M = np.concatenate([np.broadcast_to(E, (len(chunk),) + E.shape), ineq[chunk]], axis=1)
        b = np.concatenate([np.broadcast_to(f, (len(chunk), f.size)), rhs[chunk]], axis=1)
        ok = np.abs(np.linalg.det(M)) > 1e-9
        if not ok.any():
            continue
        z = np.linalg.solve(M[ok], b[ok][..., None])[..., 0]
        feas = (np.all(np.abs(z @ E.T - f) <= 1e-7, axis=1)
                & np.all(z @ ineq.T - rhs >= -1e-7, axis=1))
        if feas.any():
            v = float(np.min(z[feas] @ problem.objective))
            best = v if best is None else min(best, v)
    return best


def random_bounded_lp(rng, max_vars=8, max_rows=6, infeasible_share=0.1):
    n = int(rng.integers(1, max_vars + 1))
    rows = int(rng.integers(0, max_rows + 1))
    n_eq = int(rng.integers(0, min(rows, n - 1) + 1)) if n > 1 else 0
    n_ge = rows - n_eq
    lo = -rng.uniform(0, 3, n)
    hi = rng.uniform(0, 3, n)
    if rng.random() < 0.3:
        # integer data makes degenerate vertices common
        E = rng.integers(-2, 3, (n_eq, n)).astype(float)
        G = rng.integers(-2, 3, (n_ge, n)).astype(float)
        lo, hi = np.floor(lo), np.ceil(hi)
        z0 = rng.integers(lo, hi + 1).astype(float)
        slack = rng.integers(0, 2, n_ge).astype(float)
    else:
        E = rng.normal(size=(n_eq, n))
        G = rng.normal(size=(n_ge, n))
        z0 = rng.uniform(lo, hi)
        slack = rng.uniform(0, 1, n_ge) * (rng.random(n_ge) < 0.6)
    f = E @ z0
    h = G @ z0 - slack
    if n_ge and rng.random() < infeasible_share:
        h[0] += 50.0
    c = rng.normal(size=n)
    return lp.LpProblem(c, E, f, G, h, lo, hi)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion and assert it."""
    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
