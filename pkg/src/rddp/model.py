"""Hybrid linearly controlled MDP data and its instance-file format.

A model has discrete states ``d`` (each with its own finite outcome set)
and a continuous state ``x`` in R^n.  In state ``(d, x)`` the admissible
actions are::

    W(d, x) = {a : A_d a (= or >=) b_d - X_d x,  l_d <= a <= u_d}

and outcome ``w`` moves the system to ``(next_d(w), T_x(w) x + T_a(w) a + U(w))``
at cost ``c_a @ a + c_x @ x + c_n @ x'``.

``horizon`` counts decision stages: stages are ``0 .. horizon - 1`` and the
value after the last stage is zero.  Constraint data are stationary.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields

import numpy as np

EQ = "eq"
GE = "ge"
_SENSES = {"eq": EQ, "=": EQ, "==": EQ, "ge": GE, ">=": GE}


class ModelFormatError(ValueError):
    """Instance text could not be parsed; the message names the field."""


class ModelValidationError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid model:\n  " + "\n  ".join(self.violations))


def _frozen(a, ndim, dtype=float):
    arr = np.array(a, dtype=dtype, ndmin=ndim)
    arr.setflags(write=False)
    return arr


class _ArrayEq:
    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
                if not np.array_equal(np.asarray(a), np.asarray(b)):
                    return False
            elif a != b:
                return False
        return True

    __hash__ = None


@dataclass(frozen=True, eq=False)
class RiskParams(_ArrayEq):
    """Weight ``lam`` on AV@R at tail level ``alpha``; ``alpha == 0`` is the worst case."""

    lam: float = 0.0
    alpha: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "alpha", float(self.alpha))

    @property
    def robust(self) -> bool:
        return self.alpha == 0.0


@dataclass(frozen=True, eq=False)
class Outcome(_ArrayEq):
    prob: float
    next_d: int
    t_x: np.ndarray
    t_a: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "prob", float(self.prob))
        object.__setattr__(self, "next_d", int(self.next_d))
        object.__setattr__(self, "t_x", _frozen(self.t_x, 2))
        object.__setattr__(self, "t_a", _frozen(self.t_a, 2))
        object.__setattr__(self, "u", _frozen(self.u, 1))

    def step(self, x, a):
        return self.t_x @ x + self.t_a @ a + self.u


@dataclass(frozen=True, eq=False)
class StageConstraints(_ArrayEq):
    """Rows ``a_mat @ a (sense) b_vec - x_mat @ x`` plus the box ``[lower, upper]``.

    ``senses`` holds one of ``"eq"`` / ``"ge"`` per row (default all ``"eq"``).
    With no rows pass ``a_mat`` as ``np.zeros((0, m))``.
    """

    a_mat: np.ndarray
    b_vec: np.ndarray
    x_mat: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    senses: tuple = None

    def __post_init__(self):
        b = _frozen(self.b_vec, 1)
        k = b.size
        object.__setattr__(self, "a_mat", _frozen(self.a_mat, 2))
        object.__setattr__(self, "x_mat", _frozen(self.x_mat, 2))
        object.__setattr__(self, "b_vec", b)
        object.__setattr__(self, "lower", _frozen(self.lower, 1))
        object.__setattr__(self, "upper", _frozen(self.upper, 1))
        senses = (EQ,) * k if self.senses is None else tuple(_SENSES.get(s, s) for s in self.senses)
        object.__setattr__(self, "senses", senses)

    @property
    def num_rows(self) -> int:
        return self.b_vec.size

    @property
    def eq_rows(self) -> np.ndarray:
        return np.array([s == EQ for s in self.senses], dtype=bool)


@dataclass(frozen=True, eq=False)
class CostSpec(_ArrayEq):
    c_a: np.ndarray
    c_x: np.ndarray
    c_n: np.ndarray

    def __post_init__(self):
        for name in ("c_a", "c_x", "c_n"):
            object.__setattr__(self, name, _frozen(getattr(self, name), 1))

    def __call__(self, x, a, x_next):
        return float(self.c_a @ a + self.c_x @ x + self.c_n @ x_next)


@dataclass(frozen=True, eq=False)
class MdpModel(_ArrayEq):
    """The complete problem.

    ``state_lower``/``state_upper`` bound the continuous states the solver
    is asked to certify; the initial cut seeds are valid lower bounds on the
    value function for every start state inside this box.
    """

    horizon: int
    n: int
    m: int
    constraints: tuple
    outcomes: tuple
    cost: CostSpec
    risk: RiskParams
    initial_d: int
    initial_x: np.ndarray
    state_lower: np.ndarray
    state_upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "initial_d", int(self.initial_d))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        # zero-probability atoms never influence any risk value
        outs = tuple(tuple(o for o in per_d if o.prob != 0.0) for per_d in self.outcomes)
        object.__setattr__(self, "outcomes", outs)
        for name in ("initial_x", "state_lower", "state_upper"):
            object.__setattr__(self, name, _frozen(getattr(self, name), 1))

    @property
    def num_d(self) -> int:
        return len(self.constraints)

    def replace(self, **changes) -> "MdpModel":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return MdpModel(**kw)


def validate(model: MdpModel) -> list[str]:
    """Return every violated well-formedness condition; empty means valid.

    Besides shape and range checks this solves one LP per discrete state to
    confirm some action is admissible at ``x = 0``.  That is only a smoke
    test of complete recourse, which cannot be checked for all ``x``.
    """
    from . import lp

    v = []
    n, m = model.n, model.m
    if model.horizon < 1:
        v.append(f"horizon must be >= 1 (got {model.horizon})")
    if n < 1 or m < 1:
        v.append(f"dimensions must be positive (n={n}, m={m})")
    lam, alpha = model.risk.lam, model.risk.alpha
    if not 0.0 <= lam <= 1.0:
        v.append(f"risk lambda {lam} outside [0, 1]")
    if not 0.0 <= alpha <= 1.0:
        v.append(f"risk alpha {alpha} outside [0, 1]")
    nd = model.num_d
    if nd < 1:
        v.append("model has no discrete states")
    if len(model.outcomes) != nd:
        v.append(f"{len(model.outcomes)} outcome lists for {nd} discrete states")

    for name, vec, size in (("cost.c_a", model.cost.c_a, m), ("cost.c_x", model.cost.c_x, n),
                            ("cost.c_n", model.cost.c_n, n)):
        if vec.shape != (size,):
            v.append(f"{name} has shape {vec.shape}, expected ({size},)")
        elif not np.all(np.isfinite(vec)):
            v.append(f"{name} has non-finite entries")

    shapes_ok = True
    for d, con in enumerate(model.constraints):
        k = con.num_rows
        for name, arr, shape in (("A", con.a_mat, (k, m)), ("X", con.x_mat, (k, n)),
                                 ("l", con.lower, (m,)), ("u", con.upper, (m,))):
            if arr.shape != shape:
                v.append(f"state {d}: constraints.{name} has shape {arr.shape}, expected {shape}")
                shapes_ok = False
            elif not np.all(np.isfinite(arr)):
                v.append(f"state {d}: constraints.{name} has non-finite entries (finite action bounds are required)")
                shapes_ok = False
        if len(con.senses) != k or any(s not in (EQ, GE) for s in con.senses):
            v.append(f"state {d}: constraint senses must be 'eq' or 'ge', one per row")
            shapes_ok = False
        if not np.all(np.isfinite(con.b_vec)):
            v.append(f"state {d}: constraints.b has non-finite entries")
            shapes_ok = False
        if con.lower.shape == con.upper.shape and np.any(con.lower > con.upper):
            bad = np.flatnonzero(con.lower > con.upper).tolist()
            v.append(f"state {d}: bound order violated (lower > upper) at action components {bad}")
            shapes_ok = False

    for d, outs in enumerate(model.outcomes):
        if not outs:
            v.append(f"state {d}: no outcomes with positive probability")
            continue
        total = math.fsum(o.prob for o in outs)
        if abs(total - 1.0) > 1e-12:
            v.append(f"state {d}: outcome probabilities sum to {total!r}, expected 1")
        for i, o in enumerate(outs):
            where = f"state {d} outcome {i}"
            if not 0.0 < o.prob <= 1.0:
                v.append(f"{where}: probability {o.prob} outside (0, 1]")
            if not 0 <= o.next_d < nd:
                v.append(f"{where}: next_d {o.next_d} is not a discrete state index")
            for name, arr, shape in (("Tx", o.t_x, (n, n)), ("Ta", o.t_a, (n, m)), ("U", o.u, (n,))):
                if arr.shape != shape:
                    v.append(f"{where}: {name} has shape {arr.shape}, expected {shape}")
                elif not np.all(np.isfinite(arr)):
                    v.append(f"{where}: {name} has non-finite entries")

    if not 0 <= model.initial_d < max(nd, 1):
        v.append(f"initial d {model.initial_d} is not a discrete state index")
    if model.initial_x.shape != (n,):
        v.append(f"initial x has shape {model.initial_x.shape}, expected ({n},)")
    box_ok = model.state_lower.shape == (n,) and model.state_upper.shape == (n,)
    if not box_ok:
        v.append(f"state_box bounds must both have shape ({n},)")
    elif not (np.all(np.isfinite(model.state_lower)) and np.all(np.isfinite(model.state_upper))):
        v.append("state_box bounds must be finite")
    elif np.any(model.state_lower > model.state_upper):
        v.append("state_box bound order violated (lower > upper)")
    elif model.initial_x.shape == (n,) and (
            np.any(model.initial_x < model.state_lower) or np.any(model.initial_x > model.state_upper)):
        v.append("initial x lies outside state_box")

    if shapes_ok and n >= 1 and m >= 1:
        for d, con in enumerate(model.constraints):
            eq = con.eq_rows
            sol = lp.solve(lp.LpProblem(np.zeros(m), con.a_mat[eq], con.b_vec[eq],
                                        con.a_mat[~eq], con.b_vec[~eq], con.lower, con.upper))
            if sol.status is lp.Status.INFEASIBLE:
                v.append(f"state {d}: no admissible action at x = 0 (complete recourse smoke check)")
    return v


def check(model: MdpModel) -> MdpModel:
    """Raise :class:`ModelValidationError` unless ``model`` validates clean."""
    violations = validate(model)
    if violations:
        raise ModelValidationError(violations)
    return model


# -- instance file ------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            raise ValueError(f"cannot serialize non-finite real {v}")
        return format(v, ".17g")
    if isinstance(v, str):
        return json.dumps(v)
    raise TypeError(type(v))


def _dump(obj, indent=0, inline=False):
    pad = "  " * indent
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if inline or not obj:
            return "{" + ", ".join(f"{json.dumps(k)}: {_dump(v, inline=True)}" for k, v in obj.items()) + "}"
        items = [f'{pad}  {json.dumps(k)}: {_dump(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if inline or all(not isinstance(e, (dict,)) for e in obj):
            return "[" + ", ".join(_dump(e, inline=True) for e in obj) + "]"
        items = [pad + "  " + _dump(e, indent + 1) for e in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    return _fmt(obj)


def to_dict(model: MdpModel) -> dict:
    states = []
    for con, outs in zip(model.constraints, model.outcomes):
        states.append({
            "constraints": {
                "A": con.a_mat, "b": con.b_vec, "X": con.x_mat,
                "l": con.lower, "u": con.upper, "sense": list(con.senses),
            },
            "outcomes": [
                {"prob": o.prob, "next_d": o.next_d, "Tx": o.t_x, "Ta": o.t_a, "U": o.u}
                for o in outs
            ],
        })
    return {
        "horizon": model.horizon,
        "n": model.n,
        "m": model.m,
        "risk": {"lambda": model.risk.lam, "alpha": model.risk.alpha},
        "initial": {"d": model.initial_d, "x": model.initial_x},
        "state_box": {"lower": model.state_lower, "upper": model.state_upper},
        "states": states,
        "cost": {"ca": model.cost.c_a, "cx": model.cost.c_x, "cn": model.cost.c_n},
    }


def save_model(model: MdpModel) -> str:
    """Serialize to the JSON instance format, reals at 17 significant digits."""
    return _dump(to_dict(model)) + "\n"


def _get(obj, key, path):
    if not isinstance(obj, dict):
        raise ModelFormatError(f"{path or 'document'}: expected an object")
    if key not in obj:
        where = f"{path}." if path else ""
        raise ModelFormatError(f"missing required field '{where}{key}'")
    return obj[key]


def _array(value, shape, path):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: not a numeric array ({exc})") from None
    if shape == (-1,):
        if arr.ndim != 1:
            raise ModelFormatError(f"{path}: expected a flat array")
        return arr
    size = int(np.prod(shape))
    if arr.size != size:
        raise ModelFormatError(f"{path}: expected {size} entries for shape {shape}, got {arr.size}")
    return arr.reshape(shape)


def _int(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ModelFormatError(f"{path}: expected an integer, got {value!r}")
    return int(value)


def _real(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelFormatError(f"{path}: expected a real number, got {value!r}")
    return float(value)


def from_dict(doc: dict) -> MdpModel:
    horizon = _int(_get(doc, "horizon", ""), "horizon")
    n = _int(_get(doc, "n", ""), "n")
    m = _int(_get(doc, "m", ""), "m")
    risk = _get(doc, "risk", "")
    risk = RiskParams(_real(_get(risk, "lambda", "risk"), "risk.lambda"),
                      _real(_get(risk, "alpha", "risk"), "risk.alpha"))
    init = _get(doc, "initial", "")
    initial_d = _int(_get(init, "d", "initial"), "initial.d")
    initial_x = _array(_get(init, "x", "initial"), (n,), "initial.x")
    box = _get(doc, "state_box", "")
    lower = _array(_get(box, "lower", "state_box"), (n,), "state_box.lower")
    upper = _array(_get(box, "upper", "state_box"), (n,), "state_box.upper")
    cost = _get(doc, "cost", "")
    cost = CostSpec(_array(_get(cost, "ca", "cost"), (m,), "cost.ca"),
                    _array(_get(cost, "cx", "cost"), (n,), "cost.cx"),
                    _array(_get(cost, "cn", "cost"), (n,), "cost.cn"))
    states = _get(doc, "states", "")
    if not isinstance(states, list):
        raise ModelFormatError("states: expected an array")
    constraints, outcomes = [], []
    for d, st in enumerate(states):
        p = f"states[{d}]"
        con = _get(st, "constraints", p)
        b = _array(_get(con, "b", p + ".constraints"), (-1,), p + ".constraints.b")
        k = b.size
        senses = con.get("sense") if isinstance(con, dict) else None
        if senses is not None:
            if not isinstance(senses, list) or len(senses) != k or any(s not in _SENSES for s in senses):
                raise ModelFormatError(f"{p}.constraints.sense: expected {k} entries from 'eq'/'ge'")
        constraints.append(StageConstraints(
            _array(_get(con, "A", p + ".constraints"), (k, m), p + ".constraints.A"),
            b,
            _array(_get(con, "X", p + ".constraints"), (k, n), p + ".constraints.X"),
            _array(_get(con, "l", p + ".constraints"), (m,), p + ".constraints.l"),
            _array(_get(con, "u", p + ".constraints"), (m,), p + ".constraints.u"),
            senses,
        ))
        outs = _get(st, "outcomes", p)
        if not isinstance(outs, list):
            raise ModelFormatError(f"{p}.outcomes: expected an array")
        per_d = []
        for i, o in enumerate(outs):
            q = f"{p}.outcomes[{i}]"
            per_d.append(Outcome(
                _real(_get(o, "prob", q), q + ".prob"),
                _int(_get(o, "next_d", q), q + ".next_d"),
                _array(_get(o, "Tx", q), (n, n), q + ".Tx"),
                _array(_get(o, "Ta", q), (n, m), q + ".Ta"),
                _array(_get(o, "U", q), (n,), q + ".U"),
            ))
        outcomes.append(per_d)
    return MdpModel(horizon, n, m, constraints, outcomes, cost, risk,
                    initial_d, initial_x, lower, upper)


def load_model(text: str | bytes, *, validate_model: bool = True) -> MdpModel:
    """Parse an instance file.

    Raises :class:`ModelFormatError` naming the offending line or field, and
    :class:`ModelValidationError` (after a successful parse) when the model
    violates its invariants and ``validate_model`` is true.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    model = from_dict(doc)
    if validate_model:
        check(model)
    return model


@dataclass(frozen=True, eq=False)
class OutcomeArrays:
    """Outcome data of one discrete state stacked along a leading axis."""

    probs: np.ndarray      # (K,)
    next_d: np.ndarray     # (K,)
    t_x: np.ndarray        # (K, n, n)
    t_a: np.ndarray        # (K, n, m)
    u: np.ndarray          # (K, n)
    cost_a: np.ndarray     # (K, m): c_a + T_a' c_n
    cost_x: np.ndarray     # (K, n): c_x + T_x' c_n
    cost_0: np.ndarray     # (K,):   c_n' U

    def step(self, x, a) -> np.ndarray:
        """Next continuous state for every outcome, shape ``(K, n)``."""
        return self.t_x @ x + self.t_a @ a + self.u

    def costs(self, x, a) -> np.ndarray:
        return self.cost_a @ a + self.cost_x @ x + self.cost_0


def outcome_arrays(model: MdpModel, d: int) -> OutcomeArrays:
    cache = model.__dict__.setdefault("_outcome_arrays", {})
    hit = cache.get(d)
    if hit is None:
        outs = model.outcomes[d]
        t_x = np.array([o.t_x for o in outs])
        t_a = np.array([o.t_a for o in outs])
        u = np.array([o.u for o in outs])
        c = model.cost
        hit = cache[d] = OutcomeArrays(
            probs=np.array([o.prob for o in outs]),
            next_d=np.array([o.next_d for o in outs], dtype=int),
            t_x=t_x, t_a=t_a, u=u,
            cost_a=c.c_a + np.einsum("kij,i->kj", t_a, c.c_n),
            cost_x=c.c_x + np.einsum("kij,i->kj", t_x, c.c_n),
            cost_0=u @ c.c_n,
        )
    return hit
