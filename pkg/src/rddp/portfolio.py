"""Dynamic portfolio benchmark: three stocks, cash and a discretized market state.

Log returns and the market state follow a Gaussian VAR(1)::

    ln r' = a_r + b_r z + e,    z' = a_z + b_z z + v,    (e, v) ~ N(0, sigma)

The market state lives on a uniform grid; outcomes come from a 3-point
Gauss-Hermite rule on ``e`` with ``v`` replaced by ``E[v | e]``, and the next
market state is snapped to the grid.  Holdings are ``x = (x_1, x_2, x_3,
cash)`` and trades are split into buys and sells so proportional fees stay
linear.  The stage cost is the loss of total wealth.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .model import GE, CostSpec, MdpModel, Outcome, RiskParams, StageConstraints

NUM_ASSETS = 3

# standard normal 3-point Gauss-Hermite rule
HERMITE_NODES = np.array([-np.sqrt(3.0), 0.0, np.sqrt(3.0)])
HERMITE_WEIGHTS = np.array([1.0, 4.0, 1.0]) / 6.0


def _default_sigma():
    upper = np.array([
        [0.002894, 0.003532, 0.003910, -0.000115],
        [0.0, 0.004886, 0.005712, -0.000144],
        [0.0, 0.0, 0.007259, -0.000163],
        [0.0, 0.0, 0.0, 0.052900],
    ])
    return upper + np.triu(upper, 1).T


@dataclass(frozen=True, eq=False)
class PortfolioParams:
    a_r: np.ndarray = field(default_factory=lambda: np.array([0.0053, 0.0067, 0.0072]))
    b_r: np.ndarray = field(default_factory=lambda: np.array([0.0028, 0.0049, 0.0062]))
    a_z: float = 0.0
    b_z: float = 0.97
    sigma: np.ndarray = field(default_factory=_default_sigma)
    r_f: float = 1.00042
    delta_plus: np.ndarray = field(default_factory=lambda: np.full(NUM_ASSETS, 0.004))
    delta_minus: np.ndarray = field(default_factory=lambda: np.full(NUM_ASSETS, 0.004))
    grid_size: int = 19
    quad_points: int = 3
    grid_halfwidth_sd: float = 2.0
    horizon: int = 5
    initial_wealth: float = 1.0
    wealth_cap: float | None = None
    joint_market_noise: bool = False
    lam: float = 0.0
    alpha: float = 1.0

    def __post_init__(self):
        for name in ("a_r", "b_r", "delta_plus", "delta_minus"):
            v = np.array(getattr(self, name), dtype=float).reshape(NUM_ASSETS)
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        s = np.array(self.sigma, dtype=float).reshape(NUM_ASSETS + 1, NUM_ASSETS + 1)
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)
        if self.wealth_cap is None:
            object.__setattr__(self, "wealth_cap", 10.0 * float(self.initial_wealth))
        problems = []
        if not np.allclose(s, s.T, atol=0.0, rtol=1e-12):
            problems.append("sigma must be symmetric")
        elif np.linalg.eigvalsh(s).min() < -1e-12:
            problems.append("sigma must be positive semidefinite")
        if self.grid_size < 1 or self.grid_size % 2 == 0:
            problems.append(f"grid_size must be odd so 0 is a grid point (got {self.grid_size})")
        if self.quad_points != 3:
            problems.append("only the 3-point quadrature rule is available")
        if np.any(self.delta_plus < 0) or np.any(self.delta_minus < 0):
            problems.append("fees must be non-negative")
        if np.any(self.delta_minus >= 1):
            problems.append("sell fees must be below 1")
        if self.horizon < 1:
            problems.append("horizon must be >= 1")
        if not self.initial_wealth > 0 or not self.wealth_cap > 0:
            problems.append("initial_wealth and wealth_cap must be positive")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def risk(self) -> RiskParams:
        return RiskParams(self.lam, self.alpha)

    def replace(self, **changes) -> "PortfolioParams":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return PortfolioParams(**kw)

    def to_json(self) -> str:
        doc = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in asdict(self).items()}
        return json.dumps(doc, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PortfolioParams":
        return cls(**json.loads(text))


def default_params() -> PortfolioParams:
    return PortfolioParams()


def stationary_sd(params: PortfolioParams) -> float:
    if abs(params.b_z) >= 1.0:
        raise ValueError(f"market state is not stationary (|b_z| = {abs(params.b_z)} >= 1)")
    return float(np.sqrt(params.sigma[3, 3] / (1.0 - params.b_z ** 2)))


def market_grid(params: PortfolioParams) -> np.ndarray:
    """Uniform grid symmetric about 0 spanning ``grid_halfwidth_sd`` stationary sds."""
    w = params.grid_halfwidth_sd * stationary_sd(params)
    half = params.grid_size // 2
    if half == 0:
        return np.zeros(1)
    return np.arange(-half, half + 1) * (w / half)


def snap(grid: np.ndarray, z: float) -> int:
    """Nearest grid index; ties go to the lower index."""
    dist = np.abs(grid - z)
    return int(np.flatnonzero(dist == dist.min())[0])


def quadrature(params: PortfolioParams, z: float) -> list[tuple[float, np.ndarray, float]]:
    """Outcome atoms ``(prob, gross returns, next market state)`` from state ``z``.

    With ``joint_market_noise`` the rule runs over all four noise dimensions
    (81 atoms); otherwise over ``e`` only with ``v`` at its conditional mean.
    """
    s = params.sigma
    see = s[:NUM_ASSETS, :NUM_ASSETS]
    if np.linalg.eigvalsh(see).min() <= 0:
        raise ValueError("return block of sigma must be positive definite")
    mean_r = params.a_r + params.b_r * z
    mean_z = params.a_z + params.b_z * z
    out = []
    if params.joint_market_noise:
        chol = np.linalg.cholesky(s)
        for idx in itertools.product(range(3), repeat=NUM_ASSETS + 1):
            noise = chol @ HERMITE_NODES[list(idx)]
            prob = float(np.prod(HERMITE_WEIGHTS[list(idx)]))
            out.append((prob, np.exp(mean_r + noise[:NUM_ASSETS]), float(mean_z + noise[3])))
        return out
    chol = np.linalg.cholesky(see)
    beta = np.linalg.solve(see, s[:NUM_ASSETS, 3])
    for idx in itertools.product(range(3), repeat=NUM_ASSETS):
        e = chol @ HERMITE_NODES[list(idx)]
        prob = float(np.prod(HERMITE_WEIGHTS[list(idx)]))
        out.append((prob, np.exp(mean_r + e), float(mean_z + beta @ e)))
    return out


def _psd_factor(s):
    vals, vecs = np.linalg.eigh(s)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def transition_matrices(params: PortfolioParams, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(T_x, T_a)`` for gross returns ``r``; actions are ``(buys, sells)``."""
    rf = params.r_f
    t_x = np.diag(np.append(r, rf))
    t_a = np.zeros((NUM_ASSETS + 1, 2 * NUM_ASSETS))
    for i in range(NUM_ASSETS):
        t_a[i, i] = r[i]
        t_a[i, NUM_ASSETS + i] = -r[i]
    t_a[NUM_ASSETS, :NUM_ASSETS] = -rf * (1.0 + params.delta_plus)
    t_a[NUM_ASSETS, NUM_ASSETS:] = rf * (1.0 - params.delta_minus)
    return t_x, t_a


def trade_constraints(params: PortfolioParams) -> StageConstraints:
    """Cash after trades and fees stays >= 0; each holding after trades stays >= 0."""
    n, m = NUM_ASSETS + 1, 2 * NUM_ASSETS
    A = np.zeros((n, m))
    X = np.zeros((n, n))
    A[0, :NUM_ASSETS] = -(1.0 + params.delta_plus)
    A[0, NUM_ASSETS:] = 1.0 - params.delta_minus
    X[0, NUM_ASSETS] = 1.0
    for i in range(NUM_ASSETS):
        A[1 + i, i] = 1.0
        A[1 + i, NUM_ASSETS + i] = -1.0
        X[1 + i, i] = 1.0
    return StageConstraints(A, np.zeros(n), X, np.zeros(m), np.full(m, params.wealth_cap),
                            (GE,) * n)


def build_instance(params: PortfolioParams | None = None) -> MdpModel:
    params = params or default_params()
    grid = market_grid(params)
    con = trade_constraints(params)
    outcomes = []
    for z in grid:
        atoms = []
        for prob, r, z_next in quadrature(params, z):
            t_x, t_a = transition_matrices(params, r)
            atoms.append(Outcome(prob, snap(grid, z_next), t_x, t_a, np.zeros(NUM_ASSETS + 1)))
        outcomes.append(tuple(atoms))
    n, m = NUM_ASSETS + 1, 2 * NUM_ASSETS
    w0 = float(params.initial_wealth)
    return MdpModel(
        params.horizon, n, m, (con,) * grid.size, tuple(outcomes),
        CostSpec(np.zeros(m), np.ones(n), -np.ones(n)), params.risk,
        snap(grid, 0.0), np.array([0.0, 0.0, 0.0, w0]), np.zeros(n), np.full(n, w0))


def continuous_step(params: PortfolioParams, grid: np.ndarray):
    """Transition sampling the Gaussian dynamics instead of the quadrature atoms.

    Returns ``step(rng, d, x, a, z) -> (d', x', z')`` where ``z`` is the
    unsnapped market state (None means the grid value of ``d``) and ``d'``
    is the grid index used for the policy lookup.
    """
    chol = _psd_factor(params.sigma)

    def step(rng, d, x, a, z):
        z = grid[d] if z is None else z
        noise = chol @ rng.standard_normal(NUM_ASSETS + 1)
        r = np.exp(params.a_r + params.b_r * z + noise[:NUM_ASSETS])
        z_next = params.a_z + params.b_z * z + noise[NUM_ASSETS]
        t_x, t_a = transition_matrices(params, r)
        return snap(grid, z_next), t_x @ x + t_a @ a, z_next

    return step


def wealth(x) -> float:
    return float(np.sum(x))
