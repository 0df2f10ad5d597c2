"""Extremes of a function over the Euclidean unit sphere.

Used for the sphere constants of vector losses and for the excitation
constants of regressor windows when no eigenvalue shortcut applies.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

DEFAULT_SAMPLES = 4096
DEFAULT_STARTS = 10
# pattern-search step schedule for the local refinement
STEPS = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


@dataclass
class SphereExtremes:
    fmin: float
    fmax: float
    argmin: np.ndarray
    argmax: np.ndarray
    exact: bool
    n_samples: int
    n_starts: int


def sample_sphere(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """``m`` directions drawn uniformly on the unit sphere of R^n."""
    if n == 1:
        return np.array([[1.0], [-1.0]])
    D = rng.standard_normal((m, n))
    D /= np.linalg.norm(D, axis=1, keepdims=True)
    return D


def refine(fn: Callable[[np.ndarray], np.ndarray], starts: np.ndarray,
           sense: int = 1, steps=STEPS, max_sweeps: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Coordinate pattern search on the sphere, all starts in lockstep.

    ``fn`` maps an (m, n) array of unit directions to m values.  ``sense=1``
    minimises, ``sense=-1`` maximises.  Returns refined directions and values.
    """
    D = np.array(starts, dtype=float)
    m, n = D.shape
    vals = sense * fn(D)
    eye = np.eye(n)
    for step in steps:
        for _ in range(max_sweeps):
            # candidates: every start moved by +-step along every axis
            cand = D[:, None, :] + step * np.concatenate([eye, -eye])[None, :, :]
            cand /= np.linalg.norm(cand, axis=2, keepdims=True)
            cv = sense * fn(cand.reshape(-1, n)).reshape(m, 2 * n)
            j = np.argmin(cv, axis=1)
            best = cv[np.arange(m), j]
            improved = best < vals
            if not np.any(improved):
                break
            D[improved] = cand[np.arange(m), j][improved]
            vals = np.where(improved, best, vals)
    return D, sense * vals


def sphere_extremes(fn: Callable[[np.ndarray], np.ndarray], n: int,
                    n_samples: int = DEFAULT_SAMPLES, n_starts: int = DEFAULT_STARTS,
                    seed: int = 0) -> SphereExtremes:
    """Estimate min and max of ``fn`` on the unit sphere.

    For n == 1 the sphere is {-1, 1} and the result is exact.  Otherwise the
    minimum is an upper estimate and the maximum a lower estimate of the true
    extremes.
    """
    rng = np.random.default_rng(seed)
    D = sample_sphere(n, n_samples, rng)
    vals = fn(D)
    if n == 1:
        i, j = int(np.argmin(vals)), int(np.argmax(vals))
        return SphereExtremes(float(vals[i]), float(vals[j]), D[i], D[j], True, 2, 0)
    k = min(n_starts, len(D))
    lo = np.argsort(vals)[:k]
    hi = np.argsort(vals)[-k:]
    Dmin, vmin = refine(fn, D[lo], sense=1)
    Dmax, vmax = refine(fn, D[hi], sense=-1)
    i, j = int(np.argmin(vmin)), int(np.argmax(vmax))
    return SphereExtremes(float(vmin[i]), float(vmax[j]), Dmin[i], Dmax[j], False,
                          n_samples, k)
