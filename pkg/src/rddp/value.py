"""Piecewise-affine lower approximations of stage value functions."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class Cut:
    """Affine minorant ``q_x @ x + q_c`` of the stage-``t`` value in state ``d``.

    ``iteration`` is 0 for seed cuts; ``x_hat`` is the expansion point (None
    for seeds).
    """

    q_x: np.ndarray
    q_c: float
    iteration: int = 0
    t: int = -1
    d: int = -1
    x_hat: np.ndarray | None = None

    def __post_init__(self):
        q = np.array(self.q_x, dtype=float, ndmin=1)
        q.setflags(write=False)
        object.__setattr__(self, "q_x", q)
        object.__setattr__(self, "q_c", float(self.q_c))
        if not (np.all(np.isfinite(q)) and np.isfinite(self.q_c)):
            raise ValueError("cut coefficients must be finite")

    def __call__(self, x) -> float:
        return float(self.q_x @ x + self.q_c)


class CutSet:
    """Cut collections ``J_t(d)`` for stages ``0 .. horizon - 1``.

    Stage ``horizon`` is the terminal boundary and evaluates to zero.  An
    empty collection evaluates to ``-inf``.
    """

    def __init__(self, horizon: int, num_d: int, n: int):
        self.horizon = horizon
        self.num_d = num_d
        self.n = n
        self._cuts = {(t, d): [] for t in range(horizon) for d in range(num_d)}
        self._stacked = {}

    def cuts(self, t: int, d: int) -> list[Cut]:
        return self._cuts[(t, d)]

    def __len__(self) -> int:
        return sum(len(v) for v in self._cuts.values())

    def add_cut(self, t: int, d: int, cut: Cut) -> "CutSet":
        if cut.q_x.shape != (self.n,):
            raise ValueError(f"cut slope has shape {cut.q_x.shape}, expected ({self.n},)")
        if not (0 <= t < self.horizon and 0 <= d < self.num_d):
            raise IndexError(f"no cut collection for (t={t}, d={d})")
        self._cuts[(t, d)].append(cut)
        self._stacked.pop((t, d), None)
        return self

    def arrays(self, t: int, d: int) -> tuple[np.ndarray, np.ndarray]:
        """Stacked ``(slopes, intercepts)`` of ``J_t(d)``, shapes ``(k, n)`` and ``(k,)``."""
        key = (t, d)
        hit = self._stacked.get(key)
        if hit is None:
            cuts = self._cuts[key]
            slopes = np.array([c.q_x for c in cuts], dtype=float).reshape(len(cuts), self.n)
            icepts = np.array([c.q_c for c in cuts], dtype=float)
            hit = self._stacked[key] = (slopes, icepts)
        return hit

    def evaluate(self, t: int, d: int, x) -> float:
        if t == self.horizon:
            return 0.0
        slopes, icepts = self.arrays(t, d)
        if icepts.size == 0:
            return -np.inf
        return float(np.max(slopes @ np.asarray(x, dtype=float) + icepts))

    def uncovered(self) -> list[tuple[int, int]]:
        """(t, d) pairs whose collection is empty."""
        return [k for k, v in sorted(self._cuts.items()) if not v]

    def copy(self) -> "CutSet":
        out = CutSet(self.horizon, self.num_d, self.n)
        for key, cuts in self._cuts.items():
            out._cuts[key] = list(cuts)
        return out

    def to_csv(self) -> str:
        """CSV with header ``iter,t,d,qc,qx_0,...``; reals at 17 significant digits."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "t", "d", "qc"] + [f"qx_{i}" for i in range(self.n)])
        for (t, d), cuts in sorted(self._cuts.items()):
            for c in cuts:
                w.writerow([c.iteration, t, d, format(c.q_c, ".17g")]
                           + [format(v, ".17g") for v in c.q_x])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, horizon: int, num_d: int) -> "CutSet":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0][:4] != ["iter", "t", "d", "qc"]:
            raise ValueError("cut file must start with header iter,t,d,qc,qx_0,...")
        n = len(rows[0]) - 4
        out = cls(horizon, num_d, n)
        for lineno, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            if len(row) != n + 4:
                raise ValueError(f"line {lineno}: expected {n + 4} fields, got {len(row)}")
            it, t, d = int(row[0]), int(row[1]), int(row[2])
            out.add_cut(t, d, Cut(np.array(row[4:], dtype=float), float(row[3]), it, t, d))
        return out



def evaluate(cuts: CutSet, t: int, d: int, x) -> float:
    """Max over ``J_t(d)``; 0 at the terminal stage, ``-inf`` when empty."""
    return cuts.evaluate(t, d, x)


def add_cut(cuts: CutSet, t: int, d: int, cut: Cut) -> CutSet:
    return cuts.add_cut(t, d, cut)
