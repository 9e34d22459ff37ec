"""Synthetic-truth experiments: configuration, replication runs, summaries.

One experiment draws a single truth and data set from the master seed, then
runs EnKF, subspace least squares and the best approximation on
``replications`` subspaces. In ``R`` mode every replication draws its own
ensemble from the prior; in ``KL`` mode the subspace is fixed and only the
perturbation noise differs.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import eki
from .baselines import LsSettings, best_approximation, subspace_ls
from .errors import ConfigError, EkiError, EmptyInput
from .field import (
    Field,
    GaussianMeasure,
    WeightedNorm,
    covariance_darcy,
    covariance_elliptic,
    kl_ensemble,
    random_ensemble,
    sample_prior,
)
from .forward import DarcyGrid, DarcyModel, EllipticModel, ForwardModel, well_lattice
from .numerics import RandomStream, derive_seed

__all__ = [
    "REFERENCE_ERRORS",
    "ExperimentConfig",
    "RunRecord",
    "Summary",
    "Truth",
    "load_records",
    "make_truth",
    "run_experiment",
    "run_replication",
    "summarize",
    "table1",
]

log = logging.getLogger(__name__)

MODEL_DEFAULTS = {
    "elliptic": {"beta": 10.0, "gamma": 0.01},
    "darcy": {"beta": 0.5, "gamma": 7.0},
}

# Relative errors reported for the elliptic and groundwater studies.
REFERENCE_ERRORS = {
    "elliptic": {
        "EnKF_R": 0.257, "LS_R": 0.264, "BA_R": 0.111,
        "EnKF_KL": 0.270, "LS_KL": 0.250, "BA_KL": 0.070,
    },
    "darcy": {
        "EnKF_R": 0.597, "LS_R": 0.581, "BA_R": 0.367,
        "EnKF_KL": 0.591, "LS_KL": 0.569, "BA_KL": 0.278,
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    """All inputs of an experiment; ``None`` model parameters take model defaults.

    Elliptic: ``beta``, ``gamma``, ``modes``. Darcy: ``beta``, ``gamma``,
    ``alpha``, ``mean``, ``grid`` (cells per side), ``truncation`` (cosine
    modes per axis), ``wells`` (wells per side of the lattice).
    """

    model: str = "elliptic"
    ensemble_mode: str = "R"
    J: int = 100
    tau: float = 1.1
    max_iterations: int = 30
    seed: int = 0
    replications: int = 1
    perturb: bool = True
    beta: float | None = None
    gamma: float | None = None
    modes: int = 512
    alpha: float = 1.3
    mean: float = 4.0
    grid: int = 40
    truncation: int = 32
    wells: int = 10

    def resolved(self) -> "ExperimentConfig":
        defaults = MODEL_DEFAULTS.get(self.model)
        if defaults is None:
            raise ConfigError(f"unknown model {self.model!r}")
        updates = {k: v for k, v in defaults.items() if getattr(self, k) is None}
        cfg = dataclasses.replace(self, **updates)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.model not in MODEL_DEFAULTS:
            raise ConfigError(f"unknown model {self.model!r}")
        if self.ensemble_mode not in ("R", "KL"):
            raise ConfigError("ensemble_mode must be 'R' or 'KL'")
        if self.J < 2:
            raise ConfigError("J must be >= 2")
        if self.tau <= 1:
            raise ConfigError("tau must exceed 1")
        if self.max_iterations < 1 or self.replications < 1:
            raise ConfigError("max_iterations and replications must be >= 1")
        if self.beta is not None and self.beta <= 0:
            raise ConfigError("beta must be positive")
        if self.gamma is not None and self.gamma < 0:
            raise ConfigError("gamma must be non-negative")
        if self.model == "elliptic" and self.modes < 1:
            raise ConfigError("modes must be >= 1")
        if self.model == "darcy":
            if self.alpha <= 1:
                raise ConfigError("alpha must exceed 1")
            if self.grid < 8 or self.truncation < 2 or self.wells < 1:
                raise ConfigError("grid >= 8, truncation >= 2 and wells >= 1 required")
        if self.ensemble_mode == "KL" and self.J > self.n_modes:
            raise ConfigError(f"J={self.J} exceeds the {self.n_modes} prior modes")

    @property
    def n_modes(self) -> int:
        return self.modes if self.model == "elliptic" else self.truncation**2 - 1

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(d) - set(names)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)


def build_prior(config: ExperimentConfig) -> GaussianMeasure:
    if config.model == "elliptic":
        return covariance_elliptic(config.beta, config.modes)
    return covariance_darcy(config.beta, config.alpha, config.truncation)


def build_model(config: ExperimentConfig) -> ForwardModel:
    if config.model == "elliptic":
        return EllipticModel(config.modes)
    grid = DarcyGrid(config.grid)
    return DarcyModel(grid, config.truncation, config.mean, well_lattice(config.wells, grid.length))


@dataclass(eq=False)
class Truth:
    u: Field
    y: np.ndarray
    eta: np.ndarray
    seeds: dict


def make_truth(config: ExperimentConfig, stream: RandomStream | None = None, model=None, prior=None) -> Truth:
    """Draw ``u ~ prior`` and data ``y = G(u) + eta``, ``eta ~ N(0, gamma^2 I)``.

    ``gamma = 0`` gives noiseless data.
    """
    config = config.resolved()
    if stream is None:
        stream = RandomStream(derive_seed(config.seed, "truth"), "truth")
    prior = build_prior(config) if prior is None else prior
    model = build_model(config) if model is None else model
    u = sample_prior(prior, stream.child(purpose="truth-field"))
    clean = model.evaluate(u)
    if config.gamma > 0:
        eta = WeightedNorm.white(config.gamma).sample(stream.child(purpose="truth-noise"), clean.size)
    else:
        eta = np.zeros(clean.size)
    return Truth(u, clean + eta, eta, {"truth": stream.seed})


@dataclass(eq=False)
class RunRecord:
    """One replication's results; ``wall_time`` is kept out of the JSON."""

    config: dict
    replication: int
    seeds: dict
    truth: dict
    noise_level: float
    history: list[dict]
    errors: dict
    enkf_report_iteration: int
    stop_iteration: int
    converged: bool
    ls: dict = dc_field(default_factory=dict)
    failures: dict = dc_field(default_factory=dict)
    wall_time: float = dc_field(default=0.0, compare=False)

    @property
    def mode(self) -> str:
        return self.config["ensemble_mode"]

    @property
    def enkf_errors(self) -> np.ndarray:
        return np.array([h["relative_error"] for h in self.history], dtype=float)

    @property
    def misfits(self) -> np.ndarray:
        return np.array([h["misfit"] for h in self.history], dtype=float)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("wall_time")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        return cls(**json.loads(text))

    def write(self, out_dir) -> Path:
        """Write the record, its two curve CSVs and a timing sidecar."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"run_{self.replication:03d}"
        path = out / f"{stem}.json"
        path.write_text(self.to_json())
        with open(out / f"{stem}_error.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "relative_error"])
            for h in self.history:
                w.writerow([h["iteration"], repr(h["relative_error"])])
        with open(out / f"{stem}_misfit.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "misfit", "noise_level"])
            for h in self.history:
                w.writerow([h["iteration"], repr(h["misfit"]), repr(self.noise_level)])
        (out / f"{stem}.timing.json").write_text(json.dumps({"wall_time": self.wall_time}) + "\n")
        return path


def _relative(u: Field, truth: Field) -> float:
    return (u - truth).norm() / truth.norm()


def run_replication(
    config: ExperimentConfig,
    index: int,
    truth: Truth,
    prior: GaussianMeasure | None = None,
    model: ForwardModel | None = None,
) -> RunRecord:
    """EnKF, least squares and best approximation on one subspace."""
    t0 = time.perf_counter()
    config = config.resolved()
    prior = build_prior(config) if prior is None else prior
    model = build_model(config) if model is None else model
    gamma = WeightedNorm.white(config.gamma)
    rep_seed = derive_seed(config.seed, "replication", index)
    if config.ensemble_mode == "R":
        A = random_ensemble(prior, config.J, rep_seed, "ensemble")
    else:
        A = kl_ensemble(prior, config.J)
    noise_level = gamma.norm(truth.eta)
    rule = eki.StoppingRule(config.tau, noise_level, config.max_iterations)

    failures = {}
    errors = {"enkf": None, "enkf_at_stop": None, "ls": None, "ba": None}
    history, stop, converged = [], 0, False
    report = 1 if config.ensemble_mode == "R" else config.max_iterations
    try:
        result = eki.run(
            A, model, truth.y, gamma, rule,
            RandomStream(rep_seed, "perturbation"),
            truth=truth.u, perturb=config.perturb, stop_on_discrepancy=False,
        )
        history = [d.to_dict() for d in result.history]
        stop, converged = result.stop_iteration, result.converged
        errors["enkf"] = history[report]["relative_error"]
        errors["enkf_at_stop"] = history[stop]["relative_error"]
    except EkiError as exc:
        failures["enkf"] = f"{type(exc).__name__}: {exc}"

    ls_info = {}
    try:
        if config.model == "elliptic":
            ls = subspace_ls(model, A, truth.y, gamma, LsSettings(), prior=prior)
        else:
            ls = subspace_ls(model, A, truth.y, gamma, LsSettings(stopping=rule))
        errors["ls"] = _relative(ls.field, truth.u)
        ls_info = {"misfit": ls.misfit, "iterations": ls.iterations, "converged": ls.converged}
    except EkiError as exc:
        failures["ls"] = f"{type(exc).__name__}: {exc}"

    errors["ba"] = _relative(best_approximation(A, truth.u), truth.u)

    return RunRecord(
        config=config.to_dict(),
        replication=index,
        seeds={"master": config.seed, "replication": rep_seed, **truth.seeds},
        truth={"norm": truth.u.norm(), "noise_norm": float(np.linalg.norm(truth.eta))},
        noise_level=noise_level,
        history=history,
        errors=errors,
        enkf_report_iteration=report,
        stop_iteration=stop,
        converged=converged,
        ls=ls_info,
        failures=failures,
        wall_time=time.perf_counter() - t0,
    )


def run_experiment(config: ExperimentConfig, out_dir=None) -> list[RunRecord]:
    """All replications of ``config``; records are written to ``out_dir`` if given."""
    config = config.resolved()
    if config.gamma <= 0:
        raise ConfigError("experiments need gamma > 0")
    prior = build_prior(config)
    model = build_model(config)
    truth = make_truth(config, model=model, prior=prior)
    records = []
    for index in range(config.replications):
        rec = run_replication(config, index, truth, prior, model)
        log.info(
            "replication %d: enkf=%.4g ls=%s ba=%.4g",
            index, rec.errors["enkf"] or float("nan"), rec.errors["ls"], rec.errors["ba"],
        )
        if out_dir is not None:
            rec.write(out_dir)
        records.append(rec)
    return records


def load_records(directory) -> list[RunRecord]:
    paths = sorted(Path(directory).glob("run_[0-9][0-9][0-9].json"))
    return [RunRecord.from_json(p.read_text()) for p in paths]


@dataclass
class Summary:
    """Mean relative error per method, one row per (model, method)."""

    rows: list[dict]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "method", "mean_relative_error", "replications", "J", "reference"])
        for r in self.rows:
            ref = "" if r["reference"] is None else repr(r["reference"])
            w.writerow([r["model"], r["method"], repr(r["mean"]), r["n"], r["J"], ref])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"{'model':<9} {'method':<8} {'mean':>8} {'ref':>7} {'n':>4} {'J':>5}"]
        for r in self.rows:
            ref = "" if r["reference"] is None else f"{r['reference']:.3f}"
            lines.append(
                f"{r['model']:<9} {r['method']:<8} {r['mean']:>8.3f} {ref:>7} {r['n']:>4} {r['J']:>5}"
            )
        return "\n".join(lines)

    def value(self, method: str, model: str | None = None) -> float:
        for r in self.rows:
            if r["method"] == method and (model is None or r["model"] == model):
                return r["mean"]
        raise KeyError(method)


def summarize(records) -> Summary:
    """Average each method's reported relative error over replications."""
    records = list(records)
    if not records:
        raise EmptyInput("no records to summarize")
    groups: dict[tuple, list[RunRecord]] = {}
    for rec in records:
        key = (rec.config["model"], rec.config["ensemble_mode"], rec.config["J"])
        groups.setdefault(key, []).append(rec)
    rows = []
    for (model, mode, J), recs in groups.items():
        for method, key in (("EnKF", "enkf"), ("LS", "ls"), ("BA", "ba")):
            vals = [r.errors[key] for r in recs if r.errors.get(key) is not None]
            name = f"{method}_{mode}"
            rows.append({
                "model": model,
                "method": name,
                "mean": float(np.mean(vals)) if vals else float("nan"),
                "n": len(vals),
                "J": J,
                "reference": REFERENCE_ERRORS[model].get(name),
            })
    return Summary(rows)


def table1(column: str, replications: int | None = None, seed: int = 0, J: int = 100, out_dir=None):
    """Both ensemble modes for one column of the relative-error table.

    ``column`` is ``"elliptic"`` or ``"groundwater"``. The groundwater study
    runs on a 32 x 32 grid. Returns ``(summary, records)``.
    """
    if column == "elliptic":
        base = ExperimentConfig(model="elliptic", J=J, seed=seed, replications=replications or 100)
    elif column == "groundwater":
        base = ExperimentConfig(model="darcy", J=J, seed=seed, grid=32, replications=replications or 20)
    else:
        raise ConfigError("column must be 'elliptic' or 'groundwater'")
    records = []
    for mode in ("R", "KL"):
        reps = base.replications if mode == "R" else 1
        cfg = dataclasses.replace(base, ensemble_mode=mode, replications=reps)
        sub = None if out_dir is None else Path(out_dir) / mode
        records.extend(run_experiment(cfg, sub))
    return summarize(records), records
