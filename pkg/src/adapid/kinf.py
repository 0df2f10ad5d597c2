"""Class-K-infinity comparison functions with numeric inversion.

Functions are small expression trees over power terms ``c * r**p``.  Every
node evaluates vectorised over ``r`` and knows its inverse: power terms are
inverted in closed form, a pointwise minimum inverts to the maximum of the
component inverses (and a maximum to the minimum), everything else falls back
to doubling-then-bisection.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractViolation

#: 64 log-spaced points on [1e-6, 1e6] used for K-infinity membership checks
VERIFY_GRID = np.logspace(-6, 6, 64)

INVERSE_RTOL = 1e-10


class XiFunction:
    """Base class; subclasses implement ``__call__`` and ``to_dict``."""

    def __call__(self, r):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def scaled(self, c: float) -> "XiFunction":
        """Return ``r -> c * self(r)``."""
        raise NotImplementedError

    def inverse(self, y: float) -> float:
        return _bisect_inverse(self, y)

    def verify(self, grid: np.ndarray | None = None) -> bool:
        """Check zero at zero and strict increase on ``grid``."""
        grid = VERIFY_GRID if grid is None else np.asarray(grid, dtype=float)
        vals = np.asarray(self(grid), dtype=float)
        if float(np.asarray(self(0.0))) != 0.0:
            return False
        if not np.all(np.isfinite(vals)) or vals[0] <= 0.0:
            return False
        return bool(np.all(np.diff(vals) > 0.0))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @staticmethod
    def from_dict(d: dict) -> "XiFunction":
        kind = d["type"]
        if kind == "power":
            return PowerTerm(float(d["c"]), float(d["p"]))
        if kind in ("min", "max", "sum"):
            parts = tuple(XiFunction.from_dict(x) for x in d["parts"])
            return {"min": MinOf, "max": MaxOf, "sum": SumOf}[kind](parts)
        if kind == "tabulated":
            return Tabulated(tuple(d["grid"]), tuple(d["values"]))
        raise ContractViolation(f"unknown XiFunction type {kind!r}")

    @staticmethod
    def from_json(text: str) -> "XiFunction":
        return XiFunction.from_dict(json.loads(text))


@dataclass(frozen=True)
class PowerTerm(XiFunction):
    c: float
    p: float

    def __post_init__(self):
        if not (self.c > 0 and self.p > 0):
            raise ContractViolation(f"PowerTerm needs c > 0 and p > 0, got c={self.c}, p={self.p}")

    def __call__(self, r):
        return self.c * np.abs(np.asarray(r, dtype=float)) ** self.p

    def inverse(self, y):
        return float((y / self.c) ** (1.0 / self.p))

    def scaled(self, c):
        return PowerTerm(self.c * c, self.p)

    def to_dict(self):
        return {"type": "power", "c": self.c, "p": self.p}


@dataclass(frozen=True)
class MinOf(XiFunction):
    parts: tuple

    def __post_init__(self):
        if not self.parts:
            raise ContractViolation("MinOf needs at least one part")
        object.__setattr__(self, "parts", tuple(self.parts))

    def __call__(self, r):
        return np.minimum.reduce([np.asarray(f(r), dtype=float) for f in self.parts])

    def inverse(self, y):
        # min of increasing functions reaches y once its largest inverse does
        return max(f.inverse(y) for f in self.parts)

    def scaled(self, c):
        return MinOf(tuple(f.scaled(c) for f in self.parts))

    def to_dict(self):
        return {"type": "min", "parts": [f.to_dict() for f in self.parts]}


@dataclass(frozen=True)
class MaxOf(XiFunction):
    parts: tuple

    def __post_init__(self):
        if not self.parts:
            raise ContractViolation("MaxOf needs at least one part")
        object.__setattr__(self, "parts", tuple(self.parts))

    def __call__(self, r):
        return np.maximum.reduce([np.asarray(f(r), dtype=float) for f in self.parts])

    def inverse(self, y):
        return min(f.inverse(y) for f in self.parts)

    def scaled(self, c):
        return MaxOf(tuple(f.scaled(c) for f in self.parts))

    def to_dict(self):
        return {"type": "max", "parts": [f.to_dict() for f in self.parts]}


@dataclass(frozen=True)
class SumOf(XiFunction):
    parts: tuple

    def __post_init__(self):
        if not self.parts:
            raise ContractViolation("SumOf needs at least one part")
        object.__setattr__(self, "parts", tuple(self.parts))

    def __call__(self, r):
        return np.add.reduce([np.asarray(f(r), dtype=float) for f in self.parts])

    def scaled(self, c):
        return SumOf(tuple(f.scaled(c) for f in self.parts))

    def to_dict(self):
        return {"type": "sum", "parts": [f.to_dict() for f in self.parts]}


@dataclass(frozen=True)
class Tabulated(XiFunction):
    """Piecewise-linear function through ``(grid, values)``, starting at (0, 0).

    Beyond the last grid point the final segment's slope is continued.
    """

    grid: tuple
    values: tuple

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.shape != v.shape or g.size < 2:
            raise ContractViolation("Tabulated needs matching grid/values with >= 2 points")
        if g[0] != 0.0 or v[0] != 0.0:
            raise ContractViolation("Tabulated must start at (0, 0)")
        if np.any(np.diff(g) <= 0) or np.any(np.diff(v) <= 0):
            raise ContractViolation("Tabulated grid and values must be strictly increasing")
        object.__setattr__(self, "grid", tuple(float(x) for x in g))
        object.__setattr__(self, "values", tuple(float(x) for x in v))

    def _slope(self):
        return (self.values[-1] - self.values[-2]) / (self.grid[-1] - self.grid[-2])

    def __call__(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        out = np.interp(r, self.grid, self.values)
        beyond = r > self.grid[-1]
        return np.where(beyond, self.values[-1] + self._slope() * (r - self.grid[-1]), out)

    def inverse(self, y):
        if y > self.values[-1]:
            return float(self.grid[-1] + (y - self.values[-1]) / self._slope())
        return float(np.interp(y, self.values, self.grid))

    def scaled(self, c):
        return Tabulated(self.grid, tuple(c * v for v in self.values))

    def to_dict(self):
        return {"type": "tabulated", "grid": list(self.grid), "values": list(self.values)}


def _bisect_inverse(f: XiFunction, y: float, max_iter: int = 400) -> float:
    if y == 0.0:
        return 0.0
    # relative tolerance, tighter than the 1e-10 * max(1, y) contract for y < 1
    tol = INVERSE_RTOL * y
    lo, hi = 0.0, 1.0
    while float(f(hi)) < y:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise ContractViolation("function does not reach the requested value; not K-infinity")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fm = float(f(mid))
        if abs(fm - y) <= tol or hi - lo <= 4 * np.finfo(float).eps * hi:
            return mid
        if fm < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def invert_xi(xi: XiFunction, y: float) -> float:
    """Return ``r >= 0`` with ``xi(r) = y`` (to 1e-10 relative)."""
    y = float(y)
    if not y >= 0.0:
        raise ContractViolation(f"cannot invert a K-infinity function at negative value {y}")
    if not xi.verify():
        raise ContractViolation("function failed the K-infinity grid check")
    return xi.inverse(y)


def simplify(xi: XiFunction) -> XiFunction:
    """Merge same-exponent power terms inside min/max nodes."""
    if isinstance(xi, (MinOf, MaxOf)):
        parts = [simplify(f) for f in xi.parts]
        pick = min if isinstance(xi, MinOf) else max
        merged: dict[float, float] = {}
        rest = []
        for f in parts:
            if isinstance(f, PowerTerm):
                merged[f.p] = pick(merged.get(f.p, f.c), f.c)
            else:
                rest.append(f)
        out = [PowerTerm(c, p) for p, c in sorted(merged.items())] + rest
        if len(out) == 1:
            return out[0]
        return type(xi)(tuple(out))
    if isinstance(xi, SumOf):
        return SumOf(tuple(simplify(f) for f in xi.parts))
    return xi


def min_of(parts: Sequence[XiFunction]) -> XiFunction:
    return simplify(MinOf(tuple(parts)))


def max_of(parts: Sequence[XiFunction]) -> XiFunction:
    return simplify(MaxOf(tuple(parts)))
