"""Generalized persistence of excitation on regressor streams.

A regressor sequence is persistently exciting with respect to a scalar loss
``psi`` over windows of length T when every window satisfies

    gamma1 <= sum_k psi(x_k . u) <= gamma2     for all unit vectors u.

For ``psi(e) = c e**2`` the window sum is ``c u^T G u`` with the window Gram
matrix ``G``, so the constants are its extreme eigenvalues (exact).  Other
losses are handled by seeded sampling of the unit sphere plus pattern-search
refinement, which yields an upper estimate of gamma1 and a lower estimate of
gamma2.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, PECertificationError
from .kinf import XiFunction
from .losses import LossSpec, gh_function, gh_reciprocal
from .sphere import DEFAULT_SAMPLES, DEFAULT_STARTS, refine, sample_sphere

GAMMA_FLOOR = 1e-10


def _regressors(data) -> np.ndarray:
    X = getattr(data, "X", data)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X


def _eigen_exact(loss: LossSpec) -> bool:
    return loss.kind == "power" and loss.p == 2.0


def _check_scalar(loss: LossSpec):
    if not loss.is_scalar:
        raise ContractViolation(f"excitation is defined for scalar losses, got {loss.kind}")


def window_gamma(window, loss: LossSpec, n_samples: int = DEFAULT_SAMPLES,
                 n_refine: int = DEFAULT_STARTS, seed: int = 0,
                 method: str = "auto") -> tuple[float, float]:
    """Infimum and supremum over unit ``u`` of ``sum_k psi(x_k . u)`` for one window.

    Parameters
    ----------
    window : array_like, shape (T, n)
        Regressors of the window.
    loss : LossSpec
        Scalar loss.
    method : {"auto", "eigen", "sampling"}
        ``"auto"`` uses eigenvalues when the loss is ``c e**2``.
    """
    _check_scalar(loss)
    W = _regressors(window)
    if W.shape[0] == 0:
        raise ContractViolation("empty window")
    if method == "eigen" or (method == "auto" and _eigen_exact(loss)):
        if not _eigen_exact(loss):
            raise ContractViolation("eigenvalue method needs the loss c*e**2")
        ev = np.linalg.eigvalsh(W.T @ W) * loss.scale
        return max(float(ev[0]), 0.0), max(float(ev[-1]), 0.0)
    n = W.shape[1]

    def fn(D):
        return np.asarray(loss(W @ D.T)).sum(axis=0)

    rng = np.random.default_rng(seed)
    D = np.vstack([sample_sphere(n, n_samples, rng), _gram_directions(W.T @ W)])
    vals = fn(D)
    if n == 1:
        return float(vals.min()), float(vals.max())
    order = np.argsort(vals)
    k = min(n_refine, len(D))
    _, lo = refine(fn, D[order[:k]], sense=1)
    _, hi = refine(fn, D[order[-k:]], sense=-1)
    return float(lo.min()), float(hi.max())


@dataclass
class PECertificate:
    """Excitation constants of a regressor stream over its observed windows.

    ``method`` is ``{"type": "eigen_exact"}`` or
    ``{"type": "sphere_sampling", "n_samples": ..., "refinements": ...}``.
    Window starts are 1-based; ``windows`` gives the first and last start.
    """

    T: int
    gamma1: float
    gamma2: float
    loss: LossSpec
    method: dict
    windows_checked: int
    is_pe: bool
    norm: str = "euclidean"
    gamma_floor: float = GAMMA_FLOOR
    windows: tuple = (1, 1)
    argmin_window: int = 1
    n: int = 1

    def __post_init__(self):
        if not 0.0 <= self.gamma1 <= self.gamma2:
            raise ContractViolation(
                f"certificate needs 0 <= gamma1 <= gamma2, got {self.gamma1}, {self.gamma2}")

    @property
    def exact(self) -> bool:
        """True when the constants are exact rather than sampled estimates."""
        return self.method.get("type") == "eigen_exact" or self.n == 1

    def to_dict(self) -> dict:
        return {"T": self.T, "gamma1": self.gamma1, "gamma2": self.gamma2,
                "loss": self.loss.to_dict(), "norm": self.norm, "method": dict(self.method),
                "windows_checked": self.windows_checked, "is_pe": self.is_pe,
                "gamma_floor": self.gamma_floor, "windows": list(self.windows),
                "argmin_window": self.argmin_window, "n": self.n, "exact": self.exact}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "PECertificate":
        return cls(T=int(d["T"]), gamma1=float(d["gamma1"]), gamma2=float(d["gamma2"]),
                   loss=LossSpec.from_dict(d["loss"]), method=dict(d["method"]),
                   windows_checked=int(d["windows_checked"]), is_pe=bool(d["is_pe"]),
                   norm=d.get("norm", "euclidean"),
                   gamma_floor=float(d.get("gamma_floor", GAMMA_FLOOR)),
                   windows=tuple(d.get("windows", (1, 1))),
                   argmin_window=int(d.get("argmin_window", 1)), n=int(d.get("n", 1)))


def _gram_directions(G: np.ndarray) -> np.ndarray:
    """Extreme eigenvectors of Gram matrices, shape (..., 2, n).

    The smallest one spans the null space of a rank-deficient window, where
    every loss sum vanishes; sampling alone only gets close to it.
    """
    _, V = np.linalg.eigh(G)
    return np.stack([V[..., 0], V[..., -1]], axis=-2)


def _window_grams(X: np.ndarray, T: int) -> np.ndarray:
    outer = X[:, :, None] * X[:, None, :]
    c = np.concatenate([np.zeros((1,) + outer.shape[1:]), np.cumsum(outer, axis=0)])
    return c[T:] - c[:-T]


def certify_pe(data, loss: LossSpec, T: int, gamma_floor: float = GAMMA_FLOOR,
               method: str = "auto", n_samples: int = DEFAULT_SAMPLES,
               n_refine: int = DEFAULT_STARTS, refine_windows: int = 5,
               seed: int = 0) -> PECertificate:
    """Excitation constants over every length-``T`` window of ``data``.

    Parameters
    ----------
    data : Trajectory or array_like, shape (N, n)
        Regressor stream.
    refine_windows : int
        With sampling, the number of windows with the smallest (largest)
        sampled sums that are refined by local search.  Refinement can only
        lower the minimum and raise the maximum, so the rest keep their
        sampled values.

    Returns
    -------
    PECertificate
        ``gamma1`` is the smallest and ``gamma2`` the largest window constant.
    """
    _check_scalar(loss)
    X = _regressors(data)
    N, n = X.shape
    T = int(T)
    if T < 1:
        raise ContractViolation(f"window length must be >= 1, got {T}")
    if N < T:
        raise ContractViolation(f"trajectory has {N} samples, shorter than T={T}")
    m = N - T + 1
    use_eigen = method == "eigen" or (method == "auto" and _eigen_exact(loss))
    if use_eigen:
        if not _eigen_exact(loss):
            raise ContractViolation("eigenvalue method needs the loss c*e**2")
        ev = np.linalg.eigvalsh(_window_grams(X, T)) * loss.scale
        lows, highs = np.maximum(ev[:, 0], 0.0), np.maximum(ev[:, -1], 0.0)
        meth = {"type": "eigen_exact"}
    else:
        rng = np.random.default_rng(seed)
        D = sample_sphere(n, n_samples, rng)
        per = np.asarray(loss(X @ D.T))
        c = np.concatenate([np.zeros((1, per.shape[1])), np.cumsum(per, axis=0)])
        sums = c[T:] - c[:-T]
        lows, highs = sums.min(axis=1), sums.max(axis=1)
        if n > 1:
            U = _gram_directions(_window_grams(X, T))
            Xw = np.lib.stride_tricks.sliding_window_view(X, T, axis=0)
            own = np.asarray(loss(np.einsum("wnt,wdn->wdt", Xw, U))).sum(axis=-1)
            lows = np.minimum(lows, own.min(axis=1))
            highs = np.maximum(highs, own.max(axis=1))
            k = min(n_refine, D.shape[0])
            for w in np.argsort(lows)[:refine_windows]:
                Wx = X[w:w + T]
                fn = lambda U, Wx=Wx: np.asarray(loss(Wx @ U.T)).sum(axis=0)
                _, v = refine(fn, D[np.argsort(sums[w])[:k]], sense=1)
                lows[w] = min(lows[w], float(v.min()))
            for w in np.argsort(highs)[-refine_windows:]:
                Wx = X[w:w + T]
                fn = lambda U, Wx=Wx: np.asarray(loss(Wx @ U.T)).sum(axis=0)
                _, v = refine(fn, D[np.argsort(sums[w])[-k:]], sense=-1)
                highs[w] = max(highs[w], float(v.max()))
        meth = {"type": "sphere_sampling", "n_samples": int(D.shape[0]),
                "refinements": int(n_refine)}
    w = int(np.argmin(lows))
    g1, g2 = float(lows[w]), float(highs.max())
    return PECertificate(T=T, gamma1=g1, gamma2=g2, loss=loss, method=meth,
                         windows_checked=m, is_pe=g1 > gamma_floor, gamma_floor=gamma_floor,
                         windows=(1, m), argmin_window=w + 1, n=n)


def scan_T(data, loss: LossSpec, candidates=None, **kwargs):
    """Certify for each T in ``candidates`` (default n, 2n, 4n).

    Returns the first persistently exciting certificate (or None) and the
    list of all certificates computed.
    """
    X = _regressors(data)
    n = X.shape[1]
    candidates = candidates or (n, 2 * n, 4 * n)
    certs = []
    for T in candidates:
        if T > X.shape[0]:
            break
        cert = certify_pe(X, loss, T, **kwargs)
        certs.append(cert)
        if cert.is_pe:
            return cert, certs
    return None, certs


@dataclass(frozen=True)
class KInfinityPair:
    """Lower and upper bounds ``alpha(|theta|) <= window sum <= beta(|theta|)``."""

    alpha: XiFunction
    beta: XiFunction

    def __post_init__(self):
        for name in ("alpha", "beta"):
            if not getattr(self, name).verify():
                raise ContractViolation(f"{name} is not K-infinity on the check grid")

    def to_dict(self) -> dict:
        return {"alpha": self.alpha.to_dict(), "beta": self.beta.to_dict()}


def kinf_from_gamma(cert: PECertificate) -> KInfinityPair:
    """``alpha(r) = gamma1 f(r)`` and ``beta(r) = gamma2 / f(1/r)``."""
    if not cert.is_pe:
        raise PECertificationError(
            f"PE certification failed: gamma1={cert.gamma1:.3g} <= floor {cert.gamma_floor:.3g}")
    return KInfinityPair(gh_function(cert.loss).scaled(cert.gamma1),
                         gh_reciprocal(cert.loss).scaled(cert.gamma2))


def gamma_from_kinf(pair: KInfinityPair) -> tuple[float, float]:
    return float(pair.alpha(1.0)), float(pair.beta(1.0))
