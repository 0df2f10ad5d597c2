"""Input-to-state stability bound for the forgetting identifier.

For any exact minimiser of V_t the estimation error obeys

    |theta_hat_t - theta_true| <= xi^-1(b_t),
    b_t = 2 lam**t psi0(theta_hat_0 - theta_true) + 2 sum_k lam**(t-k) psi(v_k),

where ``xi`` is a K-infinity lower bound of

    G_t(theta) = a_psi sum_k lam**(t-k) psi(x_k . theta) + a_psi0 lam**t psi0(theta)

with ``a_psi``, ``a_psi0`` the generalized-triangle-inequality constants.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigurationError, ContractViolation
from .kinf import PowerTerm, SumOf, XiFunction, invert_xi, min_of
from .losses import LossSpec, gti_constant, sandwich_bounds
from .pe import PECertificate, kinf_from_gamma
from .signals import FLOAT_FMT

__all__ = ["build_xi_general", "build_xi_example", "build_g2", "gt_value", "bound_rhs",
           "invert_xi", "BoundTrajectory", "check_iss", "asymptotic_bound", "constants_label"]

#: solver flags under which a bound violation is attributed to the solver
SOLVER_DOUBT = ("suboptimal", "unconverged", "nonconvex")


def _check_pair(psi: LossSpec, psi0: LossSpec, lam: float):
    missing = []
    if not psi.is_scalar:
        missing.append(f"psi must be a scalar loss (got {psi.kind})")
    if psi0.is_scalar:
        missing.append(f"psi0 must be a vector loss (got {psi0.kind})")
    if missing:
        raise ConfigurationError("cannot build the bound: " + "; ".join(missing))
    if not 0.0 < lam < 1.0:
        raise ConfigurationError(f"forgetting factor must lie in (0, 1), got {lam}")


def build_xi_general(cert: PECertificate, psi: LossSpec, psi0: LossSpec, lam: float,
                     T: int | None = None) -> XiFunction:
    """Lower bound ``g1 = min(g11, g12)`` of G_t.

    ``g11(r) = a_psi lam**(2T-1) alpha(r)`` with ``alpha`` from the excitation
    certificate and ``g12(r) = a_psi0 lam**(T-1) xi1(r)`` with ``xi1`` the
    lower sandwich bound of ``psi0``.
    """
    _check_pair(psi, psi0, lam)
    T = cert.T if T is None else int(T)
    if cert.loss != psi:
        raise ConfigurationError("certificate was issued for a different loss")
    alpha = kinf_from_gamma(cert).alpha
    g11 = alpha.scaled(gti_constant(psi) * lam ** (2 * T - 1))
    xi1 = sandwich_bounds(psi0, n=cert.n).xi1
    g12 = xi1.scaled(gti_constant(psi0) * lam ** (T - 1))
    return min_of([g11, g12])


def build_xi_example(a: float, p: float, lam: float, T: int, gamma0: float) -> XiFunction:
    """Closed form for ``psi = |e|**p``, ``psi0 = gamma0 |theta|**2`` and ``alpha(r) = a r**p``."""
    a_psi = gti_constant(LossSpec.power(p))
    return min_of([PowerTerm(a * a_psi * lam ** (2 * T - 1), p),
                   PowerTerm(0.5 * gamma0 * lam ** (T - 1), 2.0)])


def build_g2(cert: PECertificate, psi: LossSpec, psi0: LossSpec, lam: float) -> XiFunction:
    """Upper bound of G_t valid for every t covered by the certificate.

    Splitting the data sum into length-T blocks counted back from t, each
    block weighs at most ``lam**(jT) beta(r)``; the oldest partial block lies
    inside an observed window.  Hence
    ``G_t <= a_psi beta(r) / (1 - lam**T) + a_psi0 xi2(r)``.
    """
    _check_pair(psi, psi0, lam)
    beta = kinf_from_gamma(cert).beta
    xi2 = sandwich_bounds(psi0, n=cert.n).xi2
    return SumOf((beta.scaled(gti_constant(psi) / (1.0 - lam ** cert.T)),
                  xi2.scaled(gti_constant(psi0))))


def gt_value(thetas, X, lam: float, psi: LossSpec, psi0: LossSpec) -> np.ndarray:
    """G_t at each row of ``thetas`` with t = len(X) (X holds x_1..x_t)."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    X = np.asarray(X, dtype=float).reshape(-1, thetas.shape[1])
    t = X.shape[0]
    w = lam ** np.arange(t - 1, -1, -1, dtype=float)
    data = w @ np.asarray(psi(X @ thetas.T)) if t else np.zeros(thetas.shape[0])
    prior = lam ** t * np.asarray(psi0(thetas), dtype=float)
    return gti_constant(psi) * data + gti_constant(psi0) * prior


def bound_rhs(noise, psi: LossSpec, psi0: LossSpec, eta0, lam: float) -> np.ndarray:
    """``b_0 .. b_N`` with ``b_0 = 2 psi0(eta0)`` and ``b_t = lam b_(t-1) + 2 psi(v_t)``."""
    if not 0.0 < lam < 1.0:
        raise ConfigurationError(f"forgetting factor must lie in (0, 1), got {lam}")
    v = np.asarray(noise, dtype=float).reshape(-1)
    b0 = 2.0 * float(psi0(np.asarray(eta0, dtype=float)))
    return kernels.forgetting_scan(lam, b0, 2.0 * np.asarray(psi(v), dtype=float))


@dataclass
class BoundTrajectory:
    """Error against bound for t = 0..N."""

    t: np.ndarray
    err: np.ndarray
    b: np.ndarray
    xi_inv_b: np.ndarray
    violated: np.ndarray
    solver_flag: list
    tol: float = 1e-6

    @property
    def margin(self) -> np.ndarray:
        """``xi^-1(b_t) - err_t``; negative where the bound is exceeded."""
        return self.xi_inv_b - self.err

    @property
    def n_violations(self) -> int:
        return int(np.sum(self.violated))

    def _explained(self) -> np.ndarray:
        return np.array([f in SOLVER_DOUBT for f in self.solver_flag], dtype=bool)

    @property
    def unexplained(self) -> np.ndarray:
        """Times of violations with no solver doubt at the same t."""
        return self.t[self.violated & ~self._explained()]

    @property
    def solver_flagged(self) -> np.ndarray:
        """Times of violations co-flagged by the solver."""
        return self.t[self.violated & self._explained()]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "err", "b", "xi_inv_b", "violated", "solver_flag"])
            for i in range(len(self.t)):
                w.writerow([int(self.t[i]), FLOAT_FMT % self.err[i], FLOAT_FMT % self.b[i],
                            FLOAT_FMT % self.xi_inv_b[i], int(self.violated[i]),
                            self.solver_flag[i]])


def check_iss(estimates, theta_true, b, xi: XiFunction, flags=None,
              tol: float = 1e-6) -> BoundTrajectory:
    """Compare ``|theta_hat_t - theta_true|`` with ``xi^-1(b_t)`` at every t.

    Parameters
    ----------
    estimates : array_like, shape (N + 1, n)
        ``theta_hat_0 .. theta_hat_N``.
    b : array_like, shape (N + 1,)
        Output of :func:`bound_rhs`.
    flags : sequence of str, optional
        Solver flags for t = 0..N; defaults to all ``"ok"``.
    """
    E = np.atleast_2d(np.asarray(estimates, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    if E.shape[0] != b.size:
        raise ContractViolation(f"{E.shape[0]} estimates but {b.size} bound values")
    flags = ["ok"] * b.size if flags is None else [str(f) for f in flags]
    if len(flags) != b.size:
        raise ContractViolation(f"{len(flags)} solver flags but {b.size} bound values")
    if not xi.verify():
        raise ContractViolation("xi failed the K-infinity grid check")
    err = np.linalg.norm(E - np.asarray(theta_true, dtype=float)[None, :], axis=1)
    xi_inv = np.array([xi.inverse(float(x)) for x in b])
    return BoundTrajectory(t=np.arange(b.size), err=err, b=b, xi_inv_b=xi_inv,
                           violated=err > xi_inv + tol, solver_flag=flags, tol=tol)


def asymptotic_bound(psi: LossSpec, lam: float, noise_sup: float, xi: XiFunction) -> float:
    """``xi^-1(2 psi(noise_sup) / (1 - lam))``; the limsup of the error under ``|v_t| <= noise_sup``."""
    if not 0.0 < lam < 1.0:
        raise ConfigurationError(f"forgetting factor must lie in (0, 1), got {lam}")
    if not noise_sup >= 0.0:
        raise ContractViolation(f"noise bound must be >= 0, got {noise_sup}")
    return invert_xi(xi, 2.0 / (1.0 - lam) * float(psi(float(noise_sup))))


def constants_label(cert: PECertificate) -> str:
    """``"exact-constants"`` unless the excitation constants were sampled.

    Prior sandwich constants are eigenvalues and always exact.
    """
    return "exact-constants" if cert.exact else "estimated-constants"
