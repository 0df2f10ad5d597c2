"""Batch experiments: simulate, identify, certify excitation, bound, check.

A run directory holds ``config.json``, ``summary.json``, ``summary.txt`` and
one ``trial_NNN`` directory per trial with ``trajectory.csv``,
``estimates.csv``, ``certificate.json``, ``xi.json``, ``bound.csv`` and
``trial.json``.  Every number in the summaries can be recomputed from those
files by :func:`verify_run`.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (AdapidError, ConfigurationError, IngestionError,
                     PECertificationError)
from .identifier import IdentifierConfig, run
from .iss import (asymptotic_bound, bound_rhs, build_xi_general, check_iss,
                  constants_label)
from .kinf import XiFunction
from .pe import GAMMA_FLOOR, PECertificate, certify_pe, scan_T
from .signals import SystemConfig, generate_trajectory, ingest_trajectory
from .svg import line_chart

log = logging.getLogger(__name__)

TRIAL_FILES = ("trajectory.csv", "estimates.csv", "certificate.json", "xi.json",
               "bound.csv", "trial.json")
CONFIG_KEYS = {"name", "system", "identifier", "pe", "trials", "seed", "output_dir",
               "emit_plots", "tolerance", "tail_fraction"}
PE_KEYS = {"T", "scan", "method", "n_samples", "gamma_floor", "refine_windows", "seed"}
# relative tolerance when comparing recomputed numbers with persisted ones
VERIFY_RTOL = 1e-9


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


@dataclass
class ExperimentConfig:
    """One experiment: a system, an identifier, excitation settings and trial count.

    ``system.theta_true`` is a list or ``{"random": {"dim": n, "scale": s}}``;
    ``identifier.theta0`` is a list, ``"zeros"``, ``"true"`` or
    ``{"random": {"scale": s}}`` (drawn around zero).  Trial ``i`` uses seed
    ``seed + i`` for everything it draws.
    """

    system: dict
    identifier: dict
    pe: dict
    trials: int = 1
    seed: int = 0
    output_dir: str | None = None
    emit_plots: bool = False
    tolerance: float = 1e-6
    tail_fraction: float = 0.2
    name: str = "experiment"

    def __post_init__(self):
        if int(self.trials) < 1:
            raise ConfigurationError(f"trials must be >= 1, got {self.trials}")
        self.trials = int(self.trials)
        self.seed = int(self.seed)
        unknown = set(self.pe) - PE_KEYS
        if unknown:
            raise ConfigurationError(f"unknown pe settings {sorted(unknown)}")
        if ("T" in self.pe) == ("scan" in self.pe):
            raise ConfigurationError("pe needs exactly one of 'T' or 'scan'")
        if not 0.0 < self.tail_fraction <= 1.0:
            raise ConfigurationError("tail_fraction must lie in (0, 1]")
        # fail early on malformed fragments
        sysc = self.system_for(0)
        self.identifier_for(0, sysc.theta_true)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigurationError("experiment config must be a JSON object")
        unknown = set(d) - CONFIG_KEYS
        if unknown:
            raise ConfigurationError(f"unknown config keys {sorted(unknown)}")
        for key in ("system", "identifier", "pe"):
            if key not in d:
                raise ConfigurationError(f"experiment config missing {key!r}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise IngestionError(f"cannot read config {path}: {exc}") from exc
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return {"name": self.name, "system": self.system, "identifier": self.identifier,
                "pe": self.pe, "trials": self.trials, "seed": self.seed,
                "output_dir": self.output_dir, "emit_plots": self.emit_plots,
                "tolerance": self.tolerance, "tail_fraction": self.tail_fraction}

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def trial_seed(self, i: int) -> int:
        return self.seed + i

    def system_for(self, i: int) -> SystemConfig:
        d = dict(self.system)
        th = d.get("theta_true")
        if isinstance(th, dict):
            spec = th.get("random", {})
            dim = int(spec.get("dim", 2))
            rng = np.random.default_rng([self.trial_seed(i), 1])
            d["theta_true"] = (float(spec.get("scale", 1.0)) * rng.standard_normal(dim)).tolist()
        d["seed"] = self.trial_seed(i)
        return SystemConfig.from_dict(d)

    def identifier_for(self, i: int, theta_true) -> IdentifierConfig:
        d = dict(self.identifier)
        th0 = d.get("theta0", "zeros")
        n = np.asarray(theta_true).size
        if th0 == "zeros":
            th0 = np.zeros(n)
        elif th0 == "true":
            th0 = np.array(theta_true, dtype=float)
        elif isinstance(th0, dict):
            scale = float(th0.get("random", {}).get("scale", 1.0))
            th0 = scale * np.random.default_rng([self.trial_seed(i), 2]).standard_normal(n)
        elif isinstance(th0, str):
            raise ConfigurationError(f"unknown theta0 setting {th0!r}")
        d["theta0"] = th0
        cfg = IdentifierConfig.from_dict(d)
        if cfg.n != n:
            raise ConfigurationError(f"theta0 has dimension {cfg.n}, system has {n}")
        return cfg


def certify(pe: dict, X, psi) -> PECertificate:
    """Certificate for the settings fragment ``pe`` (fixed ``T`` or a scan)."""
    kw = {"gamma_floor": float(pe.get("gamma_floor", GAMMA_FLOOR)),
          "method": pe.get("method", "auto"), "seed": int(pe.get("seed", 0))}
    if "n_samples" in pe:
        kw["n_samples"] = int(pe["n_samples"])
    if "refine_windows" in pe:
        kw["refine_windows"] = int(pe["refine_windows"])
    if "T" in pe:
        return certify_pe(X, psi, int(pe["T"]), **kw)
    cert, certs = scan_T(X, psi, [int(t) for t in pe["scan"]], **kw)
    if cert is None:
        if not certs:
            raise ConfigurationError("every T in the scan exceeds the trajectory length")
        return certs[-1]
    return cert


def _trial_dir(root: Path, i: int) -> Path:
    return root / f"trial_{i:03d}"


def _summarise(bt, est_flags, cert, label, asym, tail_start, iters_total) -> dict:
    tail = bt.err[tail_start:]
    return {
        "certificate": {"T": cert.T, "gamma1": cert.gamma1, "gamma2": cert.gamma2,
                        "method": cert.method["type"], "exact": cert.exact},
        "constants": label,
        "initial_error": float(bt.err[0]),
        "final_error": float(bt.err[-1]),
        "worst_margin": float(np.min(bt.margin)),
        "violations": bt.n_violations,
        "unexplained_violations": [int(t) for t in bt.unexplained],
        "solver_flagged_violations": [int(t) for t in bt.solver_flagged],
        "solver_flags": dict(sorted(Counter(est_flags).items())),
        "solver_iters_total": int(iters_total),
        "asymptotic_bound": asym,
        "tail_start": int(tail_start),
        "tail_max_error": float(tail.max()),
        "asymptotic_ok": None if asym is None else bool(tail.max() <= asym + bt.tol),
        "passed": bt.unexplained.size == 0,
    }


def run_trial(cfg: ExperimentConfig, i: int, root) -> dict:
    """Run trial ``i`` and write its directory; returns the contents of ``trial.json``."""
    try:
        return _run_trial(cfg, i, Path(root))
    except AdapidError as exc:
        raise type(exc)(f"trial {i}: {exc}") from exc


def _run_trial(cfg: ExperimentConfig, i: int, root: Path) -> dict:
    tdir = _trial_dir(root, i)
    tdir.mkdir(parents=True, exist_ok=True)
    sysc = cfg.system_for(i)
    traj = generate_trajectory(sysc)
    idc = cfg.identifier_for(i, traj.theta_true)
    traj.write_csv(tdir / "trajectory.csv")
    cert = certify(cfg.pe, traj.X, idc.psi)
    (tdir / "certificate.json").write_text(cert.to_json() + "\n")
    if not cert.is_pe:
        raise PECertificationError(
            f"PE certification failed (gamma1={cert.gamma1:.3g} <= floor "
            f"{cert.gamma_floor:.3g} at T={cert.T}); no bound emitted")
    est = run(idc, traj.X, traj.y)
    est.write_csv(tdir / "estimates.csv")
    xi = build_xi_general(cert, idc.psi, idc.psi0, idc.lam)
    (tdir / "xi.json").write_text(_dump(xi.to_dict()))
    b = bound_rhs(traj.v, idc.psi, idc.psi0, idc.theta0 - traj.theta_true, idc.lam)
    bt = check_iss(est.thetas, traj.theta_true, b, xi, est.flags, cfg.tolerance)
    bt.write_csv(tdir / "bound.csv")
    asym = asymptotic_bound(idc.psi, idc.lam, traj.noise_bound, xi)
    N = len(traj)
    tail_start = N - int(math.floor(cfg.tail_fraction * N))
    trial = {"index": i, "seed": cfg.trial_seed(i), "theta_true": traj.theta_true.tolist(),
             "theta0": idc.theta0.tolist(), "noise_bound": traj.noise_bound,
             "lambda": idc.lam, "psi": idc.psi.to_dict(), "psi0": idc.psi0.to_dict(),
             "horizon": N}
    trial.update(_summarise(bt, est.flags, cert, constants_label(cert), asym, tail_start,
                            int(np.sum(est.iters))))
    (tdir / "trial.json").write_text(_dump(trial))
    if cfg.emit_plots:
        emit_trial_plot(tdir, svg=True)
    return trial


@dataclass
class RunReport:
    name: str
    config_hash: str
    version: str
    trials: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(t["passed"] for t in self.trials)

    def to_dict(self) -> dict:
        return {"name": self.name, "config_hash": self.config_hash, "version": self.version,
                "passed": self.passed, "n_trials": len(self.trials),
                "unexplained_violations": sum(len(t["unexplained_violations"])
                                              for t in self.trials),
                "solver_flagged_violations": sum(len(t["solver_flagged_violations"])
                                                 for t in self.trials),
                "trials": [{k: t[k] for k in ("index", "seed", "final_error", "worst_margin",
                                               "violations", "constants", "asymptotic_ok",
                                               "passed")}
                           for t in self.trials]}

    def text(self) -> str:
        d = self.to_dict()
        lines = [f"experiment {self.name}  (config {self.config_hash}, adapid {self.version})",
                 f"trials: {d['n_trials']}  unexplained violations: "
                 f"{d['unexplained_violations']}  solver-flagged violations: "
                 f"{d['solver_flagged_violations']}",
                 "",
                 f"{'trial':>5} {'seed':>6} {'final err':>12} {'worst margin':>13} "
                 f"{'viol':>5} {'asym':>5}  constants"]
        for t in self.trials:
            asym = "-" if t["asymptotic_ok"] is None else ("ok" if t["asymptotic_ok"] else "FAIL")
            lines.append(f"{t['index']:>5} {t['seed']:>6} {t['final_error']:>12.4e} "
                         f"{t['worst_margin']:>13.4e} {t['violations']:>5} {asym:>5}  "
                         f"{t['constants']}")
        lines += ["", "bound dominance: " + ("PASS" if self.passed else "FAIL")]
        return "\n".join(lines) + "\n"


def run_experiment(cfg: ExperimentConfig, out=None, jobs: int = 1) -> RunReport:
    """Run every trial and write the run directory.

    Output is a function of the config alone; ``jobs > 1`` runs trials in
    worker processes without changing any file.
    """
    root = Path(out or cfg.output_dir or f"runs/{cfg.name}")
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.json").write_text(_dump(cfg.to_dict()))
    if jobs > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            trials = list(pool.map(run_trial, [cfg] * cfg.trials, range(cfg.trials),
                                   [root] * cfg.trials))
    else:
        trials = [run_trial(cfg, i, root) for i in range(cfg.trials)]
    report = RunReport(cfg.name, cfg.config_hash(), __version__, trials)
    (root / "summary.json").write_text(_dump(report.to_dict()))
    (root / "summary.txt").write_text(report.text())
    return report


# -- plot data -----------------------------------------------------------------

def _read_table(path: Path) -> tuple[list, list]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise IngestionError(f"{path}: empty file")
    return rows[0], rows[1:]


def emit_trial_plot(tdir, svg: bool = True) -> None:
    tdir = Path(tdir)
    header, rows = _read_table(tdir / "bound.csv")
    col = {h: j for j, h in enumerate(header)}
    t = np.array([float(r[col["t"]]) for r in rows])
    err = np.array([float(r[col["err"]]) for r in rows])
    bound = np.array([float(r[col["xi_inv_b"]]) for r in rows])
    viol = np.array([r[col["violated"]] == "1" for r in rows])
    with open(tdir / "error_vs_bound.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "err", "bound"])
        for a, e, bd in zip(t, err, bound):
            w.writerow([int(a), "%.17g" % e, "%.17g" % bd])
    if svg:
        chart = line_chart(t, {"error": err, "bound": bound}, markers=viol,
                           title=f"{tdir.name}: error and bound (log scale)")
        (tdir / "error_vs_bound.svg").write_text(chart)


def emit_plot_data(run_dir, svg: bool = True) -> list:
    """Write ``error_vs_bound.csv`` (and an SVG chart) in every trial directory."""
    root = Path(run_dir)
    tdirs = sorted(p for p in root.glob("trial_*") if p.is_dir()) if root.is_dir() else []
    if not tdirs:
        raise IngestionError(f"{root}: no trial directories; expected trial_NNN/bound.csv")
    missing = [str(p / "bound.csv") for p in tdirs if not (p / "bound.csv").is_file()]
    if missing:
        raise IngestionError(f"missing expected files: {', '.join(missing)}")
    for p in tdirs:
        emit_trial_plot(p, svg=svg)
    return tdirs


# -- verification ----------------------------------------------------------------

@dataclass
class VerifyResult:
    consistent: bool
    passed: bool
    problems: list

    @property
    def exit_code(self) -> int:
        return 0 if self.consistent and self.passed else 1


def _load_json(path: Path):
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IngestionError(f"{path}: invalid JSON ({exc})") from None


def _close(a, b) -> bool:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return a.shape == b.shape and bool(np.all(
        (a == b) | (np.abs(a - b) <= VERIFY_RTOL * np.maximum(np.abs(a), np.abs(b)))))


def _read_estimates(path: Path):
    header, rows = _read_table(path)
    n = sum(h.startswith("theta_hat_") for h in header)
    if n == 0 or header[0] != "t" or header[-1] != "flag":
        raise IngestionError(f"{path}: unexpected header {header}")
    thetas = np.array([[float(x) for x in r[1:1 + n]] for r in rows])
    iters = np.array([int(r[n + 2]) for r in rows])
    return thetas, iters, [r[-1] for r in rows]


def verify_run(run_dir, rerun: bool = False) -> VerifyResult:
    """Recompute every reported number from the persisted files.

    With ``rerun`` the identifier is also re-run and its estimates compared
    with ``estimates.csv``.
    """
    root = Path(run_dir)
    for name in ("config.json", "summary.json"):
        if not (root / name).is_file():
            raise IngestionError(f"{root}: missing {name}; expected the output of 'adapid run'")
    cfg = ExperimentConfig.from_dict(_load_json(root / "config.json"))
    summary = _load_json(root / "summary.json")
    problems = []
    if summary.get("config_hash") != cfg.config_hash():
        problems.append("config hash does not match config.json")
    trials = []
    for i in range(cfg.trials):
        tdir = _trial_dir(root, i)
        missing = [f for f in TRIAL_FILES if not (tdir / f).is_file()]
        if missing:
            raise IngestionError(f"{tdir}: missing {', '.join(missing)}")
        trials.append(_verify_trial(cfg, i, tdir, problems, rerun))
    report = RunReport(cfg.name, cfg.config_hash(), summary.get("version", ""), trials)
    expected = report.to_dict()
    for key in ("passed", "n_trials", "unexplained_violations", "solver_flagged_violations"):
        if summary.get(key) != expected[key]:
            problems.append(f"summary {key}: stored {summary.get(key)!r}, "
                            f"recomputed {expected[key]!r}")
    return VerifyResult(not problems, report.passed, problems)


def _verify_trial(cfg, i, tdir: Path, problems: list, rerun: bool) -> dict:
    stored = _load_json(tdir / "trial.json")
    traj = ingest_trajectory(tdir / "trajectory.csv", theta_true=stored["theta_true"])
    idc = cfg.identifier_for(i, traj.theta_true)
    thetas, iters, flags = _read_estimates(tdir / "estimates.csv")
    where = f"trial {i}"
    if not _close(thetas[0], stored["theta0"]):
        problems.append(f"{where}: estimates.csv row 0 differs from theta0")
    cert = PECertificate.from_dict(_load_json(tdir / "certificate.json"))
    fresh = certify(cfg.pe, traj.X, idc.psi)
    if not (_close(cert.gamma1, fresh.gamma1) and _close(cert.gamma2, fresh.gamma2)
            and cert.T == fresh.T):
        problems.append(f"{where}: certificate does not match the trajectory")
    xi = XiFunction.from_dict(_load_json(tdir / "xi.json"))
    rebuilt = build_xi_general(cert, idc.psi, idc.psi0, idc.lam)
    grid = np.logspace(-6, 6, 25)
    if not _close(xi(grid), rebuilt(grid)):
        problems.append(f"{where}: xi.json does not match the certificate")
    if rerun:
        est = run(idc, traj.X, traj.y)
        if not (_close(est.thetas, thetas) and est.flags == flags):
            problems.append(f"{where}: re-running the identifier gives different estimates")
    b = bound_rhs(traj.v, idc.psi, idc.psi0, thetas[0] - traj.theta_true, idc.lam)
    bt = check_iss(thetas, traj.theta_true, b, xi, flags, cfg.tolerance)
    header, rows = _read_table(tdir / "bound.csv")
    csv_vals = np.array([[float(x) for x in r[1:4]] for r in rows]) if rows else np.zeros((0, 3))
    if not _close(csv_vals, np.column_stack([bt.err, bt.b, bt.xi_inv_b])):
        problems.append(f"{where}: bound.csv differs from the recomputed bound")
    if [r[4] == "1" for r in rows] != bt.violated.tolist():
        problems.append(f"{where}: violation flags in bound.csv differ")
    vbar = float(stored["noise_bound"])
    if traj.noise_bound > vbar:
        problems.append(f"{where}: noise exceeds the stored bound {vbar}")
    asym = asymptotic_bound(idc.psi, idc.lam, vbar, xi)
    recomputed = _summarise(bt, flags, cert, constants_label(cert), asym,
                            stored["tail_start"], int(np.sum(iters)))
    for key, val in recomputed.items():
        ok = _close(val, stored.get(key)) if isinstance(val, float) else val == stored.get(key)
        if not ok:
            problems.append(f"{where}: {key} stored {stored.get(key)!r}, recomputed {val!r}")
    out = dict(stored)
    out.update(recomputed)
    return out
