"""Adaptive optimal identifier: theta_hat_t minimises the forgetting objective

    V_t(theta) = sum_{k<=t} lam**(t-k) psi(y_k - x_k . theta) + lam**t psi0(theta - theta0).

Each :func:`step` appends one sample and re-minimises ``V_t``.  Smooth convex
losses use damped Newton (or plain gradient) steps with Armijo backtracking.
``|e|`` uses iteratively reweighted least squares followed by steepest descent
along the minimum-norm subgradient with exact line searches; a proximal
subgradient method is available as an alternative inner solver.  ``|e|**p``
with ``p < 1`` runs a local solve and a vertex search from several starts.
Quadratic losses additionally admit the closed-form recursive least-squares
update :func:`rls_step`, which serves as an exact reference.
"""
from __future__ import annotations

import csv
import functools
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import lsq_linear

from . import kernels
from .errors import ConfigurationError, ContractViolation, NumericalError
from .losses import LossSpec, verify_properties

log = logging.getLogger(__name__)

MODES = ("auto", "rls", "gradient", "irls", "prox_subgradient", "multistart")
INNER_MODES = ("irls", "prox_subgradient", "gradient")
FLAGS_OK = ("ok",)


@dataclass(frozen=True)
class SolverSettings:
    mode: str = "auto"
    max_iters: int = 200
    step_rule: str = "newton"
    n_starts: int = 8
    inner: str = "irls"
    grad_tol: float = 1e-9
    value_tol: float = 1e-9
    warm_start: bool = True
    n_probes: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown solver mode {self.mode!r}; choose from {MODES}")
        if self.step_rule not in ("newton", "armijo"):
            raise ConfigurationError(f"unknown step rule {self.step_rule!r}")
        if not (self.grad_tol > 0 and self.value_tol > 0):
            raise ConfigurationError("solver tolerances must be positive")
        if self.inner not in INNER_MODES:
            raise ConfigurationError(f"unknown inner solver {self.inner!r}; choose from {INNER_MODES}")
        if self.n_starts < 1 or self.max_iters < 1:
            raise ConfigurationError("n_starts and max_iters must be >= 1")

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict | None) -> "SolverSettings":
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown solver settings {sorted(unknown)}")
        return cls(**d)


@functools.lru_cache(maxsize=64)
def _loss_report(spec: LossSpec):
    return verify_properties(spec, n_samples=2000, seed=0)


@dataclass(frozen=True, eq=False)
class IdentifierConfig:
    lam: float
    psi: LossSpec
    psi0: LossSpec
    theta0: np.ndarray
    solver: SolverSettings = field(default_factory=SolverSettings)
    truncation_eps: float = 1e-12
    check_losses: bool = True

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ConfigurationError(f"forgetting factor must lie in (0, 1), got {self.lam}")
        th = np.atleast_1d(np.asarray(self.theta0, dtype=float))
        object.__setattr__(self, "theta0", th)
        if not self.psi.is_scalar:
            raise ConfigurationError("psi must be a scalar loss (power or huber)")
        if self.psi0.is_scalar:
            raise ConfigurationError("psi0 must be a vector loss (scaled_sq_norm or quadratic_form)")
        if self.psi0.dim is not None and self.psi0.dim != th.size:
            raise ConfigurationError(f"psi0 has dimension {self.psi0.dim}, theta0 has {th.size}")
        if self.truncation_eps < 0:
            raise ConfigurationError("truncation_eps must be >= 0")
        if self.check_losses:
            for name, spec in (("psi", self.psi), ("psi0", self.psi0)):
                rep = _loss_report(spec)
                if not all(rep.passed[k] for k in ("positive_definite", "symmetric", "gti")):
                    raise ConfigurationError(f"{name} fails loss property checks: {rep}")
        if self.solver.mode == "rls" and not rls_compatible(self):
            raise ConfigurationError("closed-form RLS needs psi = c*e**2 and a quadratic psi0")

    @property
    def n(self) -> int:
        return self.theta0.size

    @property
    def W(self) -> np.ndarray:
        return self.psi0.weight_matrix(self.n)

    def resolved_mode(self) -> str:
        if self.solver.mode != "auto":
            return self.solver.mode
        if rls_compatible(self):
            return "rls"
        if self.psi.kind == "power" and self.psi.p < 1.0:
            return "multistart"
        if self.psi.kind == "power" and self.psi.p == 1.0:
            return "irls"
        return "gradient"

    def to_dict(self):
        return {"lambda": self.lam, "psi": self.psi.to_dict(), "psi0": self.psi0.to_dict(),
                "theta0": self.theta0.tolist(), "solver": self.solver.to_dict(),
                "truncation_eps": self.truncation_eps}

    @classmethod
    def from_dict(cls, d: dict, theta0=None) -> "IdentifierConfig":
        """Build from a config fragment; ``theta0`` overrides the fragment's value."""
        try:
            th = d["theta0"] if theta0 is None else theta0
            return cls(lam=float(d["lambda"]), psi=LossSpec.from_dict(d["psi"]),
                       psi0=LossSpec.from_dict(d["psi0"]), theta0=th,
                       solver=SolverSettings.from_dict(d.get("solver")),
                       truncation_eps=float(d.get("truncation_eps", 1e-12)))
        except KeyError as exc:
            raise ConfigurationError(f"identifier config missing {exc}") from None


def rls_compatible(config: IdentifierConfig) -> bool:
    return config.psi.kind == "power" and config.psi.p == 2.0 and config.psi0.kind in (
        "scaled_sq_norm", "quadratic_form")


@dataclass
class IdentifierState:
    """Identifier after ``t`` samples; treat as immutable.

    ``X``, ``y`` and ``k`` hold the retained history (sample times ``k``);
    their weights are ``lam**(t - k)``.  ``P`` is the RLS matrix when the
    configuration admits it.
    """

    config: IdentifierConfig
    t: int
    X: np.ndarray
    y: np.ndarray
    k: np.ndarray
    theta_hat: np.ndarray
    v_opt: float
    P: np.ndarray | None = None
    iters: int = 0
    flag: str = "ok"
    stationarity: float = 0.0
    trunc_mass: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def weights(self) -> np.ndarray:
        return self.config.lam ** (self.t - self.k).astype(float)

    @property
    def prior_weight(self) -> float:
        return self.config.lam ** self.t


def initial_state(config: IdentifierConfig) -> IdentifierState:
    n = config.n
    P = None
    if rls_compatible(config):
        P = config.psi.scale * np.linalg.inv(config.W)
    return IdentifierState(config=config, t=0, X=np.empty((0, n)), y=np.empty(0),
                           k=np.empty(0, dtype=int), theta_hat=config.theta0.copy(),
                           v_opt=0.0, P=P)


# -- objective -----------------------------------------------------------------

class _Objective:
    """V_t for a fixed state, with derivatives of its smooth parts."""

    def __init__(self, state: IdentifierState):
        cfg = state.config
        self.cfg = cfg
        self.X, self.y, self.w = state.X, state.y, state.weights
        self.mu = state.prior_weight
        self.theta0 = cfg.theta0
        self.kargs = cfg.psi.kernel_args
        self.Q = 2.0 * self.mu * cfg.W  # Hessian of the prior term

    def prior(self, theta):
        d = np.atleast_2d(theta) - self.theta0
        return self.mu * np.asarray(self.cfg.psi0(d), dtype=float)

    def value(self, theta) -> float:
        return float(self.values(np.atleast_2d(theta))[0])

    def values(self, thetas) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        if self.X.shape[0]:
            data = kernels.data_values(*self.kargs, self.X, self.y, self.w, thetas)
        else:
            data = np.zeros(thetas.shape[0])
        return data + self.prior(thetas)

    def derivs(self, theta):
        if self.X.shape[0]:
            v, g, H = kernels.data_term(*self.kargs, self.X, self.y, self.w, theta)
        else:
            n = theta.size
            v, g, H = 0.0, np.zeros(n), np.zeros((n, n))
        d = theta - self.theta0
        return v + float(self.prior(theta)[0]), g + self.Q @ d, H + self.Q

    def residuals(self, theta):
        return self.y - self.X @ theta


def cost_eval(state: IdentifierState, theta) -> float:
    """V_t(theta) over the retained history."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size != state.config.n:
        raise ContractViolation(f"theta has dimension {theta.size}, expected {state.config.n}")
    return _Objective(state).value(theta)


# -- solvers -------------------------------------------------------------------

def _armijo(obj, theta, v, g, d, max_halvings=60):
    slope = float(g @ d)
    a = 1.0
    for _ in range(max_halvings):
        cand = theta + a * d
        vc = obj.value(cand)
        if vc <= v + 1e-4 * a * slope + 1e-15 * abs(v):
            return cand, vc
        a *= 0.5
    return None, None


def _descent(obj, theta, s: SolverSettings):
    """Damped Newton / gradient descent; returns (theta, iterations)."""
    v, g, H = obj.derivs(theta)
    it = 0
    for it in range(1, s.max_iters + 1):
        if np.linalg.norm(g) <= s.grad_tol:
            return theta, it - 1
        d = None
        if s.step_rule == "newton":
            try:
                L = np.linalg.cholesky(H)
                d = -np.linalg.solve(L.T, np.linalg.solve(L, g))
            except np.linalg.LinAlgError:
                mu = 1e-10 * (1.0 + np.trace(np.abs(H)))
                try:
                    d = -np.linalg.solve(H + mu * np.eye(H.shape[0]), g)
                except np.linalg.LinAlgError:
                    d = None
            if d is not None and not (np.all(np.isfinite(d)) and g @ d < 0):
                d = None
        if d is None:
            lmax = max(np.linalg.eigvalsh(H)[-1], 1e-12) if H.size else 1.0
            d = -g / lmax
        new, vn = _armijo(obj, theta, v, g, d)
        if new is None and s.step_rule == "newton":
            lmax = max(np.linalg.eigvalsh(H)[-1], 1e-12)
            new, vn = _armijo(obj, theta, v, g, -g / lmax)
        if new is None:
            return theta, it
        step = np.linalg.norm(new - theta)
        theta = new
        v, g, H = obj.derivs(theta)
        if step <= 1e-15 * (1.0 + np.linalg.norm(theta)):
            return theta, it
    return theta, it


def _prox_subgradient(obj, theta, s: SolverSettings):
    """Subgradient steps on the data term, exact prox on the quadratic prior."""
    n = theta.size
    eye = np.eye(n)
    best, vbest = theta.copy(), obj.value(theta)
    _, g, _ = obj.derivs(theta)
    a0 = 0.1 * (1.0 + np.linalg.norm(theta)) / max(np.linalg.norm(g), 1e-12)
    it = 0
    for it in range(1, s.max_iters + 1):
        gd = g - obj.Q @ (theta - obj.theta0)  # data-term subgradient
        a = a0 / np.sqrt(it)
        z = theta - a * gd
        theta = np.linalg.solve(eye + a * obj.Q, z + a * obj.Q @ obj.theta0)
        v, g, _ = obj.derivs(theta)
        if v < vbest:
            best, vbest = theta.copy(), v
    return best, it


def _kink_candidates(obj, theta):
    """Points pinning small residuals to zero; V is piecewise smooth between kinks."""
    cfg = obj.cfg
    n = theta.size
    out = []
    if obj.X.shape[0] == 0:
        return out
    r = obj.residuals(theta)
    scale = 1.0 + np.abs(obj.y)
    for delta in (1e-10, 1e-8, 1e-6, 1e-4, 1e-2):
        A = np.abs(r) <= delta * scale
        XA = obj.X[A]
        if cfg.psi.kind == "power" and cfg.psi.p == 1.0:
            s = np.sign(r[~A])
            c = -(obj.X[~A].T @ (obj.w[~A] * s)) * cfg.psi.scale
            m = XA.shape[0]
            K = np.block([[obj.Q, XA.T], [XA, np.zeros((m, m))]])
            rhs = np.concatenate([obj.Q @ obj.theta0 - c, obj.y[A]])
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
            out.append(sol[:n])
        if XA.shape[0]:
            # least-norm correction of theta satisfying the pinned residuals
            out.append(theta + np.linalg.lstsq(XA, r[A], rcond=None)[0])
    # interpolate the n best-fitting samples
    idx = np.argsort(np.abs(r))[:n]
    out.append(np.linalg.lstsq(obj.X[idx], obj.y[idx], rcond=None)[0])
    return [c for c in out if np.all(np.isfinite(c))]


def _polish(obj, theta, rounds=5):
    v = obj.value(theta)
    for _ in range(rounds):
        cands = _kink_candidates(obj, theta)
        if not cands:
            break
        vals = obj.values(np.array(cands))
        j = int(np.argmin(vals))
        if vals[j] < v:
            theta, v = cands[j], float(vals[j])
        else:
            break
    return theta


def _irls(obj, theta, s: SolverSettings):
    """Reweighted least squares for c|e|**p, p <= 1, with smoothing continuation.

    Each pass minimises the quadratic majoriser of
    c (e**2 + eps**2)**(p/2) at the current residuals; eps shrinks geometrically
    and the active-set polish then lands exactly on the kinks.
    """
    if obj.X.shape[0] == 0:
        return obj.theta0.copy(), 0
    psi = obj.cfg.psi
    if psi.kind != "power" or psi.p >= 2.0:
        # the majoriser needs |e|**p concave in e**2
        return _descent(obj, theta, s)
    p, c = psi.p, psi.scale
    X, y = obj.X, obj.y
    ys = 1.0 + np.abs(y).max()
    per_level = max(1, min(25, s.max_iters // 8))
    it = 0
    for eps in ys * 10.0 ** -np.arange(1, 9):
        for _ in range(per_level):
            r = y - X @ theta
            a = obj.w * c * p * (r * r + eps * eps) ** (0.5 * p - 1.0)
            A = (X * a[:, None]).T @ X + obj.Q
            b = X.T @ (a * y) + obj.Q @ obj.theta0
            try:
                new = np.linalg.solve(A, b)
            except np.linalg.LinAlgError:
                new = np.linalg.lstsq(A, b, rcond=None)[0]
            it += 1
            done = np.linalg.norm(new - theta) <= 1e-12 * (1.0 + np.linalg.norm(theta))
            theta = new
            if done:
                break
    return theta, it


def _min_norm_subgradient(obj, theta, atol=1e-9):
    """Minimum-norm element of the subdifferential of V_t for psi = c|e|."""
    c = obj.cfg.psi.scale
    r = obj.residuals(theta)
    A = np.abs(r) <= atol * (1.0 + np.abs(obj.y))
    g = obj.Q @ (theta - obj.theta0) - obj.X[~A].T @ (obj.w[~A] * c * np.sign(r[~A]))
    if not np.any(A):
        return g
    # pinned residuals contribute -w c u x with any u in [-1, 1]
    M = -(obj.X[A] * (obj.w[A] * c)[:, None]).T
    u = lsq_linear(M, -g, bounds=(-1.0, 1.0), method="bvls").x
    return g + M @ u


def _line_min_l1(obj, theta, d):
    """Exact minimiser a >= 0 of V_t(theta + a d) for psi = c|e|."""
    c = obj.cfg.psi.scale
    r = obj.residuals(theta)
    b = obj.X @ d
    q0 = float(d @ obj.Q @ (theta - obj.theta0))
    q1 = float(d @ obj.Q @ d)
    tiny = 1e-12 * (1.0 + np.abs(obj.y))
    s0 = np.where(np.abs(r) > tiny, np.sign(r), -np.sign(b))
    slope0 = q0 - float(np.sum(obj.w * c * b * s0))
    with np.errstate(divide="ignore", invalid="ignore"):
        ak = np.where(b != 0, r / b, -1.0)
    pos = (ak > 0) & (np.abs(r) > tiny)
    order = np.argsort(ak[pos])
    a_sorted = ak[pos][order]
    # the slope jumps up by 2 w c |b| at every residual zero crossing
    jumps = 2.0 * (obj.w * c * np.abs(b))[pos][order]
    passed = np.concatenate([[0.0], np.cumsum(jumps)])
    before = slope0 + q1 * a_sorted + passed[:-1]
    after = before + jumps
    m = a_sorted.size
    hit = np.nonzero(before >= 0)[0]
    jb = int(hit[0]) if hit.size else m
    hit = np.nonzero(after >= 0)[0]
    ja = int(hit[0]) if hit.size else m
    if jb <= ja:
        # root inside the segment ending at breakpoint jb
        if q1 <= 0:
            return float(a_sorted[jb - 1]) if jb else 0.0
        lo = a_sorted[jb - 1] if jb else 0.0
        return float(max(lo, -(slope0 + passed[jb]) / q1))
    return float(a_sorted[ja])


def _l1_refine(obj, theta, max_rounds=50):
    """Steepest descent along the negative minimum-norm subgradient, snapping to kinks."""
    v = obj.value(theta)
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        g = _min_norm_subgradient(obj, theta)
        if np.linalg.norm(g) <= 1e-13 * _grad_scale(obj, theta):
            break
        a = _line_min_l1(obj, theta, -g)
        cand = theta - a * g
        polished = _polish(obj, cand)
        if obj.value(polished) <= obj.value(cand):
            cand = polished
        vc = obj.value(cand)
        if not vc < v:
            break
        theta, v = cand, vc
    # near the optimum the value no longer resolves progress; break ties on stationarity
    gbest = np.linalg.norm(_min_norm_subgradient(obj, theta))
    for cand in _kink_candidates(obj, theta):
        if obj.value(cand) <= v + 8 * np.finfo(float).eps * abs(v):
            gc = np.linalg.norm(_min_norm_subgradient(obj, cand))
            if gc < gbest:
                theta, gbest = cand, gc
    return theta, rounds


def _nonsmooth_local(obj, theta, s, inner="irls"):
    if inner == "prox_subgradient":
        theta, it = _prox_subgradient(obj, theta, s)
    else:
        theta, it = _irls(obj, theta, s)
    theta = _polish(obj, theta)
    psi = obj.cfg.psi
    if psi.kind == "power" and psi.p == 1.0 and obj.X.shape[0]:
        theta, extra = _l1_refine(obj, theta)
        it += extra
    return theta, it


def _vertex_search(obj, theta, k_near=16, max_rounds=50, seen=None):
    """Swap search over interpolating vertices for c|e|**p, p < 1.

    Local minimisers of a concave-in-|e| loss sit where residuals vanish, so
    neighbouring vertices are tried by exchanging one pinned sample for one of
    the ``k_near`` closest unpinned ones.  ``seen`` collects explored vertices
    across calls so repeated descents stop early.
    """
    X, y = obj.X, obj.y
    m, n = X.shape
    if m < n:
        return theta, 0
    v = obj.value(theta)
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        order = np.argsort(np.abs(obj.residuals(theta)))
        pinned, near = order[:n], order[n:n + k_near]
        if seen is not None:
            key = frozenset(pinned.tolist())
            if key in seen:
                break
            seen.add(key)
        subsets = [pinned]
        for i in range(n):
            for j in near:
                sub = pinned.copy()
                sub[i] = j
                subsets.append(sub)
        S = np.array(subsets)
        A, b = X[S], y[S]
        ok = np.abs(np.linalg.det(A)) > 1e-12
        if not np.any(ok):
            break
        cand = np.linalg.solve(A[ok], b[ok][..., None])[..., 0]
        vals = obj.values(cand)
        j = int(np.argmin(vals))
        if not vals[j] < v:
            break
        theta, v = cand[j], float(vals[j])
    return _polish(obj, theta), rounds


def _multistart(obj, theta, s: SolverSettings, t: int):
    rng = np.random.default_rng([s.seed, t])
    n = theta.size
    starts = [theta, np.zeros(n), obj.theta0]
    spread = 1.0 + np.linalg.norm(theta)
    while len(starts) < max(s.n_starts, 1):
        starts.append(theta + spread * rng.standard_normal(n))
    starts = starts[: s.n_starts]
    if s.inner == "gradient":
        inner = _descent
    else:
        def inner(o, th, st):
            return _nonsmooth_local(o, th, st, s.inner)
    psi = obj.cfg.psi
    vertices = psi.kind == "power" and psi.p < 1.0
    seen: set = set()
    best, vbest, total = theta, np.inf, 0
    for i, st in enumerate(starts):
        st = np.array(st, dtype=float)
        if not vertices:
            cands = [inner(obj, st, s)]
        elif i == 0:
            first = inner(obj, st, s)
            cands = [first, _vertex_search(obj, first[0], seen=seen),
                     _vertex_search(obj, st, seen=seen)]
        else:
            # smoothing forgets where it started; the vertex search does not
            cands = [_vertex_search(obj, st, seen=seen)]
        for cand, it in cands:
            total += it
            vc = obj.value(cand)
            if vc < vbest:
                best, vbest = cand, vc
    return best, total


def _stationarity(obj, theta, cfg) -> float:
    """Norm of the minimum-norm (sub)gradient of V_t at theta; NaN if nonconvex."""
    psi = cfg.psi
    v, g, _ = obj.derivs(theta)
    if psi.is_smooth:
        return float(np.linalg.norm(g))
    if not psi.is_convex or obj.X.shape[0] == 0:
        return float(np.linalg.norm(g)) if psi.is_convex else float("nan")
    # rebuilt outside the kernel: the kernel's sign at a kink is round-off
    return float(np.linalg.norm(_min_norm_subgradient(obj, theta)))


def _certify(obj, theta, v, prev, s: SolverSettings, t: int):
    """Lowest probe value and its point; probes surround theta at several radii."""
    n = theta.size
    rng = np.random.default_rng([s.seed, t, 7])
    spread = 1.0 + np.linalg.norm(theta)
    scales = np.array([1e-4, 1e-2, 1.0, 10.0])
    m = s.n_probes
    P = theta + (spread * scales[np.arange(m) % 4])[:, None] * rng.standard_normal((m, n))
    P = np.vstack([P, prev, obj.theta0, np.zeros(n)])
    vals = obj.values(P)
    j = int(np.argmin(vals))
    return float(vals[j]), P[j]


def _append(state: IdentifierState, x, y):
    cfg = state.config
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != cfg.n:
        raise ContractViolation(f"regressor has dimension {x.size}, expected {cfg.n}")
    t = state.t + 1
    X = np.vstack([state.X, x[None, :]])
    yy = np.append(state.y, float(y))
    k = np.append(state.k, t)
    mass = cfg.lam * state.trunc_mass
    if cfg.truncation_eps > 0:
        w = cfg.lam ** (t - k).astype(float)
        keep = w >= cfg.truncation_eps
        if not np.all(keep):
            drop = ~keep
            mass += float(np.dot(w[drop], cfg.psi(yy[drop])))
            X, yy, k = X[keep], yy[keep], k[keep]
    return t, X, yy, k, mass


def step(state: IdentifierState, sample) -> IdentifierState:
    """Consume one ``(x_t, y_t)`` sample and re-minimise the objective."""
    cfg = state.config
    mode = cfg.resolved_mode()
    if mode == "rls":
        return rls_step(state, sample)
    x, y = sample
    t, X, yy, k, mass = _append(state, x, y)
    new = replace(state, t=t, X=X, y=yy, k=k, trunc_mass=mass, P=None, diagnostics={})
    obj = _Objective(new)
    s = cfg.solver
    start = state.theta_hat.copy() if s.warm_start else cfg.theta0.copy()

    def solve(th):
        if mode == "gradient":
            return _descent(obj, th, s)
        if mode in ("prox_subgradient", "irls"):
            return _nonsmooth_local(obj, th, s, mode)
        return _multistart(obj, th, s, t)

    theta, iters = solve(start)
    v = obj.value(theta)
    flag = "ok"
    vtol = max(s.value_tol, _value_resolution(obj, theta))
    vp, pbest = _certify(obj, theta, v, state.theta_hat, s, t)
    if vp < v - vtol:
        theta2, it2 = solve(pbest)
        iters += it2
        v2 = obj.value(theta2)
        if v2 < v:
            theta, v = theta2, v2
        vp, pbest = _certify(obj, theta, v, state.theta_hat, s, t)
        if vp < v - vtol:
            flag = "suboptimal"
    stat = _stationarity(obj, theta, cfg)
    if flag == "ok":
        if not cfg.psi.is_convex:
            flag = "nonconvex"
        elif not stat <= max(s.grad_tol, 1e-13 * _grad_scale(obj, theta)):
            flag = "unconverged"
    if flag != "ok":
        log.debug("t=%d solver flag %s (stationarity %.3g)", t, flag, stat)
    new.theta_hat = theta
    new.v_opt = v
    new.iters = iters
    new.flag = flag
    new.stationarity = stat
    new.diagnostics = {"mode": mode, "probe_min": vp}
    if state.P is not None and rls_compatible(cfg):
        new.P = _rls_P(state.P, np.asarray(x, dtype=float).reshape(-1), cfg.lam)
    return new


def _value_resolution(obj, theta) -> float:
    """Round-off floor of V_t near theta.

    For c|e|**p with p < 1 a residual of size eps costs c*eps**p, so a
    residual pinned at zero carries an error of order sqrt(machine eps).
    """
    psi = obj.cfg.psi
    if obj.X.shape[0] == 0 or psi.kind != "power" or psi.p >= 1.0:
        return 0.0
    size = np.abs(obj.y) + np.abs(obj.X) @ np.abs(theta)
    err = 8 * np.finfo(float).eps * (1.0 + size)
    return float(np.sum(obj.w * psi.scale * err ** psi.p))


def _grad_scale(obj, theta) -> float:
    """Magnitude of the gradient's summands, for a round-off aware tolerance."""
    if obj.X.shape[0] == 0:
        return 0.0
    r = obj.residuals(theta)
    d1, _ = kernels.loss_derivatives(*obj.kargs, r)
    return float(np.sum(obj.w * np.abs(d1) * np.linalg.norm(obj.X, axis=1)))


def _rls_P(P, x, lam):
    Px = P @ x
    denom = lam + x @ Px
    P = (P - np.outer(Px, Px) / denom) / lam
    return 0.5 * (P + P.T)


def rls_step(state: IdentifierState, sample) -> IdentifierState:
    """Exact recursive least-squares update for psi = c*e**2 and quadratic psi0.

    With R_t = sum lam**(t-k) x_k x_k^T + lam**t W / c the minimiser solves
    R_t theta = sum lam**(t-k) x_k y_k + lam**t W theta0 / c; ``P = R_t^-1``
    is propagated by the matrix inversion lemma.
    """
    cfg = state.config
    if not rls_compatible(cfg) or state.P is None:
        raise ConfigurationError("closed-form RLS needs psi = c*e**2 and a quadratic psi0")
    x, y = sample
    x = np.asarray(x, dtype=float).reshape(-1)
    t, X, yy, k, mass = _append(state, x, y)
    P = state.P
    Px = P @ x
    denom = cfg.lam + x @ Px
    gain = Px / denom
    theta = state.theta_hat + gain * (float(y) - x @ state.theta_hat)
    P = _rls_P(P, x, cfg.lam)
    ev = np.linalg.eigvalsh(P)
    if not (np.all(np.isfinite(P)) and ev[0] > 0):
        raise NumericalError(
            f"RLS matrix lost positive definiteness at t={t} (min eigenvalue {ev[0]:.3g}); "
            "regularise the prior or raise the forgetting factor")
    new = replace(state, t=t, X=X, y=yy, k=k, trunc_mass=mass, P=P, theta_hat=theta,
                  iters=0, flag="ok", diagnostics={"mode": "rls"})
    obj = _Objective(new)
    new.v_opt = obj.value(theta)
    new.stationarity = float(np.linalg.norm(obj.derivs(theta)[1]))
    return new


# -- whole-trajectory runs -----------------------------------------------------

@dataclass
class EstimateRun:
    """Estimates theta_hat_0..theta_hat_N with per-step solver diagnostics."""

    thetas: np.ndarray
    v_opt: np.ndarray
    iters: np.ndarray
    flags: list
    stationarity: np.ndarray
    final: IdentifierState

    def write_csv(self, path) -> None:
        n = self.thetas.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"theta_hat_{i + 1}" for i in range(n)]
                       + ["v_opt", "solver_iters", "flag"])
            for t in range(self.thetas.shape[0]):
                w.writerow([t] + ["%.17g" % v for v in self.thetas[t]]
                           + ["%.17g" % self.v_opt[t], int(self.iters[t]), self.flags[t]])


def run(config: IdentifierConfig, X, y, use_rls: bool = False) -> EstimateRun:
    """Run the identifier over every sample of ``(X, y)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] != y.size:
        raise ContractViolation("X and y lengths differ")
    state = initial_state(config)
    advance = rls_step if use_rls else step
    thetas = [state.theta_hat]
    vs, its, flags, stats = [state.v_opt], [0], ["ok"], [0.0]
    for i in range(y.size):
        state = advance(state, (X[i], y[i]))
        thetas.append(state.theta_hat)
        vs.append(state.v_opt)
        its.append(state.iters)
        flags.append(state.flag)
        stats.append(state.stationarity)
    return EstimateRun(np.array(thetas), np.array(vs), np.array(its), flags,
                       np.array(stats), state)


# -- coercivity ------------------------------------------------------------------

@dataclass
class CoercivityReport:
    radii: np.ndarray
    envelope: np.ndarray
    lower_bound: np.ndarray | None
    growth_exponent: float

    @property
    def bound_holds(self) -> bool:
        if self.lower_bound is None:
            return True
        return bool(np.all(self.envelope >= self.lower_bound - 1e-9))


def coercivity_probe(state: IdentifierState, radii=None, xi=None, n_dirs: int = 256,
                     seed: int = 0) -> CoercivityReport:
    """Minimum of V_t over sampled directions on spheres of growing radius.

    If ``xi`` (a lower comparison function for the excitation functional) is
    given, the report carries the coercivity lower bound
    ``xi(r) - sum lam**(t-k) psi(y_k) - lam**t psi0(theta0)``.
    """
    cfg = state.config
    radii = np.asarray(2.0 ** np.arange(0, 11) if radii is None else radii, dtype=float)
    rng = np.random.default_rng(seed)
    n = cfg.n
    D = rng.standard_normal((n_dirs, n)) if n > 1 else np.array([[1.0], [-1.0]])
    D /= np.linalg.norm(D, axis=1, keepdims=True)
    obj = _Objective(state)
    env = np.array([obj.values(r * D).min() for r in radii])
    lower = None
    if xi is not None:
        offset = float(np.dot(state.weights, cfg.psi(state.y))) + float(
            obj.prior(np.zeros(n))[0])
        lower = np.asarray(xi(radii), dtype=float) - offset
    pos = (radii > 0) & (env > 0)
    growth = float("nan")
    if pos.sum() >= 2:
        r2, e2 = radii[pos][-2:], env[pos][-2:]
        growth = float(np.log(e2[1] / e2[0]) / np.log(r2[1] / r2[0]))
    return CoercivityReport(radii, env, lower, growth)
