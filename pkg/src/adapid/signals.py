"""Synthetic data from the linear regression model y_t = x_t . theta + v_t."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, IngestionError, SchemaError

FLOAT_FMT = "%.17g"


# -- regressor generators ----------------------------------------------------

@dataclass(frozen=True)
class IidUniform:
    low: float = -1.0
    high: float = 1.0

    def sample(self, rng, horizon, n):
        return rng.uniform(self.low, self.high, size=(horizon, n))

    def to_dict(self):
        return {"kind": "iid_uniform", "low": self.low, "high": self.high}


@dataclass(frozen=True)
class RotatingBasis:
    """Cycles e_1, ..., e_n, e_1, ..."""

    def sample(self, rng, horizon, n):
        return np.eye(n)[np.arange(horizon) % n]

    def to_dict(self):
        return {"kind": "rotating_basis"}


@dataclass(frozen=True)
class SinusoidBank:
    """Component i is sin (even i) or cos (odd i) of frequency ``frequencies[i // 2]``.

    Phases are drawn from the seed.  Exciting for generic frequencies but not
    certified here; use :func:`adapid.pe.certify_pe`.
    """

    frequencies: tuple = (0.3, 1.1)

    def sample(self, rng, horizon, n):
        freqs = np.asarray(self.frequencies, dtype=float)
        phase = rng.uniform(0.0, 2 * np.pi, size=n)
        t = np.arange(1, horizon + 1)[:, None]
        idx = np.arange(n)
        w = freqs[(idx // 2) % len(freqs)]
        ang = w[None, :] * t + phase[None, :]
        return np.where(idx % 2 == 0, np.sin(ang), np.cos(ang))

    def to_dict(self):
        return {"kind": "sinusoid_bank", "frequencies": list(self.frequencies)}


@dataclass(frozen=True)
class ConstantDirection:
    """The same regressor every step; never persistently exciting for n > 1."""

    v: tuple = (1.0,)

    def sample(self, rng, horizon, n):
        v = np.asarray(self.v, dtype=float)
        if v.shape != (n,):
            raise ConfigurationError(f"constant direction has length {v.size}, expected {n}")
        return np.tile(v, (horizon, 1))

    def to_dict(self):
        return {"kind": "constant_direction", "v": list(self.v)}


@dataclass(frozen=True)
class CustomRegressors:
    """Regressors read from a CSV with columns ``x_1..x_n`` (other columns ignored)."""

    path: str

    def sample(self, rng, horizon, n):
        header, rows = _read_csv(self.path)
        cols = [f"x_{i + 1}" for i in range(n)]
        missing = [c for c in cols if c not in header]
        if missing:
            raise SchemaError(f"{self.path}: missing columns {missing}")
        idx = [header.index(c) for c in cols]
        if len(rows) < horizon:
            raise IngestionError(f"{self.path}: {len(rows)} rows, need {horizon}")
        X = np.empty((horizon, n))
        for r in range(horizon):
            for j, c in enumerate(idx):
                X[r, j] = _parse_cell(rows[r][c], r + 2, header[c], self.path)
        return X

    def to_dict(self):
        return {"kind": "custom", "path": self.path}


# -- noise models --------------------------------------------------------------

@dataclass(frozen=True)
class NoNoise:
    def sample(self, rng, horizon):
        return np.zeros(horizon)

    @property
    def bound(self):
        return 0.0

    def to_dict(self):
        return {"kind": "none"}


@dataclass(frozen=True)
class UniformBounded:
    vbar: float

    def __post_init__(self):
        if not self.vbar >= 0:
            raise ConfigurationError(f"noise bound must be >= 0, got {self.vbar}")

    def sample(self, rng, horizon):
        return rng.uniform(-self.vbar, self.vbar, size=horizon)

    @property
    def bound(self):
        return self.vbar

    def to_dict(self):
        return {"kind": "uniform_bounded", "bound": self.vbar}


@dataclass(frozen=True)
class GaussianClipped:
    sigma: float
    clip: float

    def sample(self, rng, horizon):
        return np.clip(rng.normal(0.0, self.sigma, size=horizon), -self.clip, self.clip)

    @property
    def bound(self):
        return self.clip

    def to_dict(self):
        return {"kind": "gaussian_clipped", "sigma": self.sigma, "clip": self.clip}


def regressor_from_dict(d: dict):
    kind = d.get("kind")
    try:
        if kind == "iid_uniform":
            return IidUniform(float(d.get("low", -1.0)), float(d.get("high", 1.0)))
        if kind == "rotating_basis":
            return RotatingBasis()
        if kind == "sinusoid_bank":
            return SinusoidBank(tuple(float(f) for f in d["frequencies"]))
        if kind == "constant_direction":
            return ConstantDirection(tuple(float(x) for x in d["v"]))
        if kind == "custom":
            return CustomRegressors(str(d["path"]))
    except KeyError as exc:
        raise ConfigurationError(f"regressor spec {d!r} missing {exc}") from None
    raise ConfigurationError(f"unknown regressor kind {kind!r}")


def noise_from_dict(d: dict | None):
    if d is None:
        return NoNoise()
    kind = d.get("kind")
    try:
        if kind in ("none", None):
            return NoNoise()
        if kind == "uniform_bounded":
            return UniformBounded(float(d["bound"]))
        if kind == "gaussian_clipped":
            return GaussianClipped(float(d["sigma"]), float(d["clip"]))
    except KeyError as exc:
        raise ConfigurationError(f"noise spec {d!r} missing {exc}") from None
    raise ConfigurationError(f"unknown noise kind {kind!r}")


@dataclass
class SystemConfig:
    theta_true: np.ndarray
    regressor: object = field(default_factory=IidUniform)
    noise: object = field(default_factory=NoNoise)
    horizon: int = 100
    seed: int = 0

    def __post_init__(self):
        self.theta_true = np.atleast_1d(np.asarray(self.theta_true, dtype=float))
        if self.theta_true.ndim != 1 or self.theta_true.size < 1:
            raise ConfigurationError("theta_true must be a non-empty vector")
        if int(self.horizon) < 1:
            raise ConfigurationError(f"horizon must be >= 1, got {self.horizon}")
        self.horizon = int(self.horizon)

    @property
    def n(self) -> int:
        return self.theta_true.size

    def to_dict(self):
        return {"theta_true": self.theta_true.tolist(), "regressor": self.regressor.to_dict(),
                "noise": self.noise.to_dict(), "horizon": self.horizon, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "SystemConfig":
        try:
            return cls(theta_true=d["theta_true"],
                       regressor=regressor_from_dict(d.get("regressor", {"kind": "iid_uniform"})),
                       noise=noise_from_dict(d.get("noise")),
                       horizon=d.get("horizon", 100), seed=int(d.get("seed", 0)))
        except KeyError as exc:
            raise ConfigurationError(f"system config missing {exc}") from None


@dataclass
class Trajectory:
    """Samples (t, x_t, y_t, v_t) for t = 1..N.

    ``v`` is None when the noise is unknown (ingested without a ``v`` column);
    ``theta_true`` is None when the generating parameter is unknown.
    """

    t: np.ndarray
    X: np.ndarray
    y: np.ndarray
    v: np.ndarray | None = None
    theta_true: np.ndarray | None = None
    noise_bound: float | None = None
    config: dict | None = None

    def __len__(self):
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def noise_known(self) -> bool:
        return self.v is not None

    def records(self):
        for i in range(len(self)):
            yield int(self.t[i]), self.X[i], float(self.y[i]), (
                None if self.v is None else float(self.v[i]))

    def write_csv(self, path) -> None:
        header = ["t"] + [f"x_{i + 1}" for i in range(self.n)] + ["y"]
        if self.v is not None:
            header.append("v")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i in range(len(self)):
                row = [str(int(self.t[i]))] + [FLOAT_FMT % x for x in self.X[i]]
                row.append(FLOAT_FMT % self.y[i])
                if self.v is not None:
                    row.append(FLOAT_FMT % self.v[i])
                w.writerow(row)


def generate_trajectory(config: SystemConfig) -> Trajectory:
    """Simulate ``config.horizon`` samples; deterministic in ``config.seed``."""
    reg_ss, noise_ss = np.random.SeedSequence(config.seed).spawn(2)
    X = np.asarray(config.regressor.sample(np.random.default_rng(reg_ss), config.horizon,
                                           config.n), dtype=float)
    v = np.asarray(config.noise.sample(np.random.default_rng(noise_ss), config.horizon),
                   dtype=float)
    y = X @ config.theta_true + v
    return Trajectory(t=np.arange(1, config.horizon + 1), X=X, y=y, v=v,
                      theta_true=config.theta_true.copy(), noise_bound=config.noise.bound,
                      config=config.to_dict())


def _read_csv(path):
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise IngestionError(f"{path}: empty file")
    return [c.strip() for c in rows[0]], rows[1:]


def _parse_cell(text, row, col, path):
    try:
        return float(text)
    except ValueError:
        raise IngestionError(f"{path}: row {row}, column {col!r}: non-numeric value {text!r}") from None


def ingest_trajectory(path, theta_true=None) -> Trajectory:
    """Read a ``t,x_1,...,x_n,y[,v]`` CSV file."""
    path = Path(path)
    header, rows = _read_csv(path)
    if not header or header[0] != "t":
        raise SchemaError(f"{path}: header must start with 't', got {header[:1]}")
    has_v = header[-1] == "v"
    ycol = len(header) - 2 if has_v else len(header) - 1
    if header[ycol] != "y":
        raise SchemaError(f"{path}: expected 'y' column, header is {header}")
    xcols = header[1:ycol]
    if not xcols or xcols != [f"x_{i + 1}" for i in range(len(xcols))]:
        raise SchemaError(f"{path}: regressor columns must be x_1..x_n, got {xcols}")
    if not rows:
        raise IngestionError(f"{path}: no records")
    data = np.empty((len(rows), len(header)))
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise SchemaError(f"{path}: row {r + 2} has {len(row)} columns, header has {len(header)}")
        for c, cell in enumerate(row):
            data[r, c] = _parse_cell(cell, r + 2, header[c], path)
    t = data[:, 0].astype(int)
    if not np.array_equal(t, np.arange(1, len(rows) + 1)):
        raise SchemaError(f"{path}: time stamps must run 1..{len(rows)} consecutively")
    X = data[:, 1:ycol].copy()
    y = data[:, ycol].copy()
    v = data[:, -1].copy() if has_v else None
    th = None if theta_true is None else np.asarray(theta_true, dtype=float)
    bound = None if v is None else float(np.max(np.abs(v)))
    return Trajectory(t=t, X=X, y=y, v=v, theta_true=th, noise_bound=bound)
