"""Loss functions for residuals and prior terms, with their structural constants.

Scalar losses (``power``, ``huber``) act on residuals; vector losses
(``scaled_sq_norm``, ``quadratic_form``) act on parameter deviations.  Each
loss carries a generalized-triangle-inequality constant ``alpha`` with

    l(x - y) >= alpha * l(x) - l(y)

and a generalized-homogeneity function ``f`` with

    l(x) >= f(1 / |r|) * l(r * x)    for r != 0.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .errors import ConfigurationError, ContractViolation
from .kinf import MaxOf, MinOf, PowerTerm, XiFunction
from .sphere import sphere_extremes

SCALAR_KINDS = ("power", "huber")
VECTOR_KINDS = ("scaled_sq_norm", "quadratic_form")

DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class LossSpec:
    """A loss ``psi`` (scalar) or ``psi0`` (vector).

    Use the constructors :meth:`power`, :meth:`huber`, :meth:`scaled_sq_norm`
    and :meth:`quadratic_form` rather than filling fields by hand.
    ``scale`` multiplies the scalar losses (``power`` with ``scale=0.5`` is
    ``e**2 / 2``).
    """

    kind: str
    p: float | None = None
    h: float | None = None
    gamma0: float | None = None
    W: tuple | None = None
    scale: float = 1.0
    dim: int | None = field(default=None)

    def __post_init__(self):
        k = self.kind
        if k == "power":
            if self.p is None or not self.p > 0:
                raise ContractViolation(f"power loss needs p > 0, got {self.p}")
        elif k == "huber":
            if self.h is None or not self.h > 0:
                raise ContractViolation(f"huber loss needs h > 0, got {self.h}")
        elif k == "scaled_sq_norm":
            if self.gamma0 is None or not self.gamma0 > 0:
                raise ContractViolation(f"scaled_sq_norm needs gamma0 > 0, got {self.gamma0}")
        elif k == "quadratic_form":
            W = np.asarray(self.W, dtype=float)
            if W.ndim != 2 or W.shape[0] != W.shape[1]:
                raise ContractViolation("quadratic_form weight must be a square matrix")
            if not np.allclose(W, W.T, rtol=0, atol=1e-12 * max(1.0, np.abs(W).max())):
                raise ContractViolation("quadratic_form weight must be symmetric")
            if np.linalg.eigvalsh(W).min() <= 0:
                raise ContractViolation("quadratic_form weight must be positive definite")
            object.__setattr__(self, "W", tuple(tuple(float(v) for v in row) for row in W))
            object.__setattr__(self, "dim", W.shape[0])
        else:
            raise ContractViolation(f"unknown loss kind {k!r}")
        if not self.scale > 0:
            raise ContractViolation(f"loss scale must be positive, got {self.scale}")

    # -- constructors ----------------------------------------------------
    @classmethod
    def power(cls, p: float, scale: float = 1.0) -> "LossSpec":
        return cls("power", p=float(p), scale=float(scale))

    @classmethod
    def huber(cls, h: float, scale: float = 1.0) -> "LossSpec":
        return cls("huber", h=float(h), scale=float(scale))

    @classmethod
    def scaled_sq_norm(cls, gamma0: float, dim: int | None = None) -> "LossSpec":
        return cls("scaled_sq_norm", gamma0=float(gamma0), dim=dim)

    @classmethod
    def quadratic_form(cls, W) -> "LossSpec":
        return cls("quadratic_form", W=np.asarray(W, dtype=float))

    # -- properties ------------------------------------------------------
    @property
    def is_scalar(self) -> bool:
        return self.kind in SCALAR_KINDS

    @property
    def weight(self) -> np.ndarray:
        """Matrix of a quadratic vector loss (``gamma0 * I`` needs ``n``)."""
        if self.kind == "quadratic_form":
            return np.array(self.W)
        raise ContractViolation("weight only defined for quadratic_form; use weight_matrix(n)")

    def weight_matrix(self, n: int) -> np.ndarray:
        if self.kind == "quadratic_form":
            if self.dim != n:
                raise ContractViolation(f"quadratic_form has dimension {self.dim}, expected {n}")
            return np.array(self.W)
        if self.kind == "scaled_sq_norm":
            return self.gamma0 * np.eye(n)
        raise ContractViolation(f"{self.kind} loss is not quadratic")

    @property
    def is_quadratic(self) -> bool:
        return self.kind in VECTOR_KINDS or (self.kind == "power" and self.p == 2.0)

    @property
    def is_convex(self) -> bool:
        return not (self.kind == "power" and self.p < 1.0)

    @property
    def is_smooth(self) -> bool:
        """Continuously differentiable everywhere."""
        return not (self.kind == "power" and self.p <= 1.0)

    @property
    def kernel_args(self) -> tuple[int, float, float]:
        if self.kind == "power":
            return kernels.POWER, self.p, self.scale
        if self.kind == "huber":
            return kernels.HUBER, self.h, self.scale
        raise ContractViolation(f"{self.kind} is not a scalar loss")

    # -- evaluation ------------------------------------------------------
    def __call__(self, arg):
        """Evaluate elementwise (scalar kinds) or row-wise (vector kinds)."""
        if self.is_scalar:
            return kernels.loss_values(*self.kernel_args, arg)
        a = np.asarray(arg, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1)
        if self.kind == "scaled_sq_norm":
            return self.gamma0 * np.einsum("...i,...i->...", a, a)
        W = np.array(self.W)
        return np.einsum("...i,ij,...j->...", a, W, a)

    # -- serialisation ---------------------------------------------------
    def to_dict(self) -> dict:
        if self.kind == "power":
            d = {"kind": "power", "p": self.p}
        elif self.kind == "huber":
            d = {"kind": "huber", "h": self.h}
        elif self.kind == "scaled_sq_norm":
            d = {"kind": "scaled_sq_norm", "gamma0": self.gamma0}
        else:
            d = {"kind": "quadratic_form", "W": [list(r) for r in self.W]}
        if self.scale != 1.0:
            d["scale"] = self.scale
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LossSpec":
        try:
            kind = d["kind"]
            scale = float(d.get("scale", 1.0))
            if kind == "power":
                return cls.power(d["p"], scale)
            if kind == "huber":
                return cls.huber(d["h"], scale)
            if kind == "scaled_sq_norm":
                return cls.scaled_sq_norm(d["gamma0"])
            if kind == "quadratic_form":
                return cls.quadratic_form(d["W"])
        except KeyError as exc:
            raise ConfigurationError(f"loss spec {d!r} is missing field {exc}") from None
        except ContractViolation as exc:
            raise ConfigurationError(str(exc)) from None
        raise ConfigurationError(f"unknown loss kind {d.get('kind')!r}")

    @classmethod
    def parse(cls, text: str) -> "LossSpec":
        """Parse a JSON fragment or the shorthand ``power:2`` / ``huber:1``."""
        text = text.strip()
        if text.startswith("{"):
            return cls.from_dict(json.loads(text))
        kind, _, val = text.partition(":")
        try:
            v = float(val)
        except ValueError:
            raise ConfigurationError(f"cannot parse loss spec {text!r}") from None
        return cls.from_dict({"power": {"kind": "power", "p": v},
                              "huber": {"kind": "huber", "h": v},
                              "scaled_sq_norm": {"kind": "scaled_sq_norm", "gamma0": v},
                              }.get(kind, {"kind": kind}))


def _check_arg(spec: LossSpec, arg) -> np.ndarray:
    a = np.asarray(arg, dtype=float)
    if spec.is_scalar:
        if a.ndim != 0:
            raise ContractViolation(f"{spec.kind} loss takes a scalar, got shape {a.shape}")
        return a
    if a.ndim == 0:
        a = a.reshape(1)
    if a.ndim != 1 or (spec.dim is not None and a.shape[0] != spec.dim):
        raise ContractViolation(
            f"{spec.kind} loss of dimension {spec.dim} got argument of shape {a.shape}")
    return a


def eval_loss(spec: LossSpec, arg) -> float:
    """Evaluate ``spec`` at a single argument matching its arity."""
    return float(spec(_check_arg(spec, arg)))


def gti_constant(spec: LossSpec) -> float:
    """Generalized-triangle-inequality constant of ``spec``."""
    if spec.kind == "power":
        p = spec.p
        return 2.0 ** (1.0 - 1.0 / p) if p <= 1.0 else 2.0 ** (1.0 - p)
    # huber and quadratics: l(x) <= 4 l(x/2) plus convexity gives 1/2
    return 0.5


def gh_function(spec: LossSpec) -> XiFunction:
    """The generalized-homogeneity function ``f`` as a K-infinity function."""
    if spec.kind == "power":
        return PowerTerm(1.0, spec.p)
    if spec.kind == "huber":
        return MinOf((PowerTerm(1.0, 1.0), PowerTerm(1.0, 2.0)))
    return PowerTerm(1.0, 2.0)


def gh_reciprocal(spec: LossSpec) -> XiFunction:
    """``r -> 1 / f(1 / r)`` for the loss's homogeneity function ``f``."""
    if spec.kind == "power":
        return PowerTerm(1.0, spec.p)
    if spec.kind == "huber":
        return MaxOf((PowerTerm(1.0, 1.0), PowerTerm(1.0, 2.0)))
    return PowerTerm(1.0, 2.0)


def gh_value(spec: LossSpec, s) -> float:
    """Value ``f(s)`` of the generalized-homogeneity function, ``s > 0``."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0):
        raise ContractViolation(f"gh_value needs s > 0, got {s}")
    out = gh_function(spec)(s_arr)
    return float(out) if out.ndim == 0 else out


@dataclass
class PropertyReport:
    passed: dict
    margins: dict
    n_samples: int
    seed: int
    tol: float

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    @property
    def worst_margin(self) -> float:
        return min(self.margins.values())

    def __str__(self):
        parts = [f"{k}={'pass' if v else 'FAIL'}({self.margins[k]:.3g})"
                 for k, v in self.passed.items()]
        return " ".join(parts)


def _random_args(rng, m, n, lo=-3.0, hi=1.0):
    """Random points with log-uniform magnitudes in [10**lo, 10**hi]."""
    D = rng.standard_normal((m, n))
    D /= np.linalg.norm(D, axis=1, keepdims=True)
    mag = 10.0 ** rng.uniform(lo, hi, size=(m, 1))
    return D * mag


def verify_properties(spec, n_samples: int = 10_000, seed: int = 0, tol: float = DEFAULT_TOL,
                      *, alpha: float | None = None, gh: Callable | None = None,
                      dim: int | None = None) -> PropertyReport:
    """Check positive-definiteness, symmetry, GTI and GH on seeded samples.

    ``spec`` is a :class:`LossSpec` or any callable loss.  ``alpha`` and
    ``gh`` override (or, for plain callables, supply) the claimed GTI constant
    and homogeneity function, so that wrong claims can be tested.  Failures
    are reported, never raised.
    """
    if n_samples < 1 or tol < 0:
        raise ContractViolation("need n_samples >= 1 and tol >= 0")
    squeeze = True
    if isinstance(spec, LossSpec):
        squeeze = spec.is_scalar
        n = 1 if spec.is_scalar else (spec.dim or dim or 2)
        alpha = gti_constant(spec) if alpha is None else alpha
        gh = gh_function(spec) if gh is None else gh
    else:
        n = dim or 1
        if alpha is None or gh is None:
            raise ContractViolation("callable losses need explicit alpha and gh")

    def ell(z):
        z = np.asarray(z, dtype=float)
        return np.asarray(spec(z[..., 0] if n == 1 and squeeze else z), dtype=float)

    rng = np.random.default_rng(seed)
    margins = {}

    # positive definiteness: zero only at zero, probed along rays through the origin
    zero = float(ell(np.zeros((1, n)))[0])
    dirs = _random_args(rng, 8, n, 0.0, 0.0)
    radii = np.concatenate([-np.logspace(-6, 2, 33)[::-1], np.logspace(-6, 2, 33)])
    ray = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, n)
    rv = ell(ray)
    bad = rv <= 0.0
    margins["positive_definite"] = -abs(zero) if not np.any(bad) else -float(np.linalg.norm(ray[bad], axis=1).max())

    # symmetry
    X = _random_args(rng, n_samples, n)
    margins["symmetric"] = -float(np.max(np.abs(ell(X) - ell(-X))))

    # generalized triangle inequality; half the pairs are collinear
    X = _random_args(rng, n_samples, n)
    Y = _random_args(rng, n_samples, n)
    half = n_samples // 2
    Y[:half] = X[:half] * rng.uniform(-2.0, 2.0, size=(half, 1))
    Y[: min(half, 64)] = 0.5 * X[: min(half, 64)]
    margins["gti"] = float(np.min(ell(X - Y) - (alpha * ell(X) - ell(Y))))

    # generalized homogeneity
    X = _random_args(rng, n_samples, n)
    r = 10.0 ** rng.uniform(-2.0, 2.0, size=n_samples) * rng.choice([-1.0, 1.0], n_samples)
    f = np.asarray(gh(1.0 / np.abs(r)), dtype=float)
    margins["gh"] = float(np.min(ell(X) - f * ell(r[:, None] * X)))

    passed = {k: v >= -tol for k, v in margins.items()}
    return PropertyReport(passed, margins, n_samples, seed, tol)


@dataclass
class SandwichBounds:
    """Lower/upper K-infinity bounds of a vector loss on norm shells."""

    xi1: XiFunction
    xi2: XiFunction
    D1: float
    D2: float
    exact: bool

    def __iter__(self):
        return iter((self.xi1, self.xi2))


def sandwich_bounds(spec: LossSpec, norm: str = "euclidean", n: int | None = None,
                    n_samples: int = 10_000, seed: int = 0) -> SandwichBounds:
    """``xi1(r) = D1 f(r)`` and ``xi2(r) = D2 / f(1/r)`` with sphere extremes D1, D2.

    Quadratic losses use the extreme eigenvalues of their weight (exact);
    anything else is sampled on the unit sphere and flagged inexact.
    """
    if norm != "euclidean":
        raise ConfigurationError(f"only the euclidean norm is supported, got {norm!r}")
    n = n or spec.dim or 1
    if spec.kind in VECTOR_KINDS:
        ev = np.linalg.eigvalsh(spec.weight_matrix(n))
        D1, D2, exact = float(ev[0]), float(ev[-1]), True
    else:
        ext = sphere_extremes(lambda D: np.asarray(spec(D[:, 0] if n == 1 else D)), n,
                              n_samples=n_samples, seed=seed)
        D1, D2, exact = ext.fmin, ext.fmax, ext.exact
    if not D1 > 0:
        raise ContractViolation("loss vanishes on the unit sphere; not positive definite")
    xi1 = gh_function(spec).scaled(D1)
    xi2 = gh_reciprocal(spec).scaled(D2)
    return SandwichBounds(xi1, xi2, D1, D2, exact)
