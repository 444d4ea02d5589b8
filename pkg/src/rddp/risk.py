"""One-step risk mappings on finite distributions.

``rho(Z) = (1 - lam) * E_p[Z] + lam * AVaR_alpha(Z)`` with
``AVaR_alpha(Z) = max {E_q[Z] : 0 <= q <= p / alpha, sum(q) = 1}``;
``alpha == 0`` means the worst atom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lp
from .model import RiskParams

MAX_ABS_VALUE = 1e6


@dataclass(frozen=True, eq=False)
class FiniteDistribution:
    """Realizations ``values`` with reference probabilities ``probs``.

    Zero-probability atoms are dropped on construction.  Values must satisfy
    ``max|Z| <= 1e6`` so the absolute 1e-9 tolerances used throughout stay
    meaningful.
    """

    probs: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).ravel()
        z = np.asarray(self.values, dtype=float).ravel()
        if p.size != z.size or p.size == 0:
            raise ValueError("probs and values must be non-empty and of equal length")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be non-negative and sum to 1")
        if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > MAX_ABS_VALUE:
            raise ValueError(f"values must be finite with magnitude <= {MAX_ABS_VALUE:g}")
        keep = p > 0
        object.__setattr__(self, "probs", p[keep])
        object.__setattr__(self, "values", z[keep])

    @classmethod
    def uniform(cls, values) -> "FiniteDistribution":
        z = np.asarray(values, dtype=float).ravel()
        return cls(np.full(z.size, 1.0 / z.size), z)

    def mean(self) -> float:
        return float(self.probs @ self.values)


def _check_alpha(alpha):
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")


def avar_weights(dist: FiniteDistribution, alpha: float) -> np.ndarray:
    """Maximizing ``q`` in the AV@R envelope (ties broken by atom index)."""
    _check_alpha(alpha)
    order = np.argsort(-dist.values, kind="stable")
    cap = dist.probs[order] / alpha
    filled = np.concatenate([[0.0], np.cumsum(cap)[:-1]])
    q_sorted = np.minimum(cap, np.maximum(0.0, 1.0 - filled))
    q = np.empty_like(q_sorted)
    q[order] = q_sorted
    return q


def avar_primal(dist: FiniteDistribution, alpha: float) -> float:
    """AV@R by greedily filling the largest values up to ``p / alpha``."""
    return float(avar_weights(dist, alpha) @ dist.values)


@dataclass(frozen=True)
class AvarDual:
    value: float
    mu: float
    xi: np.ndarray


def avar_dual(dist: FiniteDistribution, alpha: float, *, backend=None) -> AvarDual:
    """AV@R as ``min mu + p @ xi / alpha  s.t.  xi + mu >= Z, xi >= 0``.

    The optimal ``mu`` is an alpha-quantile (value at risk) of ``Z``.
    """
    _check_alpha(alpha)
    k = dist.values.size
    c = np.concatenate([[1.0], dist.probs / alpha])
    G = np.hstack([np.ones((k, 1)), np.eye(k)])
    lower = np.concatenate([[-np.inf], np.zeros(k)])
    sol = lp.solve(lp.LpProblem(c, ge_matrix=G, ge_rhs=dist.values, lower=lower), backend=backend)
    if not sol.optimal:
        raise RuntimeError(f"AV@R dual LP failed: {sol.status.value} {sol.message}")
    return AvarDual(sol.objective, float(sol.primal[0]), sol.primal[1:].copy())


def worst_case(dist: FiniteDistribution) -> float:
    return float(np.max(dist.values))


def rho(dist: FiniteDistribution, risk: RiskParams) -> float:
    lam = risk.lam
    tail = worst_case(dist) if risk.alpha == 0.0 else avar_primal(dist, risk.alpha)
    return (1.0 - lam) * dist.mean() + lam * tail
