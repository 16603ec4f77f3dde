"""Prepackaged simulation studies emitting plot-ready tables.

Three experiments, each a deterministic function of its config seed:

- coverage_table: coverage of oracle- and bootstrap-calibrated confidence
  sets for well-specified least squares, misspecified least squares
  (Student-t noise), and logistic regression at n = 100, d = 5, across
  confidence levels 0.95 down to 0.75.
- effdim_error: mean |d_n/d* - 1| of the empirical effective dimension over
  an (n, d) grid for well-specified least squares and logistic regression,
  where d* = d.
- confset_shape: boundary points of bootstrap-calibrated Wald ellipses for
  a 2-d logistic model under three design covariances, showing how the
  set's shape tracks the local curvature.

A process that fails entirely still yields rows (NaN coverage, all
replications counted as failures) so partial runs remain inspectable.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .bootstrap import (
    BootstrapConfig,
    CoverageConfig,
    CoverageRow,
    CoverageTable,
    bootstrap_quantile,
    coverage_experiment,
    write_coverage_csv,
)
from .errors import ScmestError
from .estimate import fit_erm
from .gof import phase_seed
from .inference import effective_dim_empirical
from .losses import model_for_data
from .simdata import Process, generate, loss_kind_for, theta0_equispaced

__all__ = [
    "CoverageTableExperiment",
    "EffDimErrorExperiment",
    "ConfsetShapeExperiment",
    "EffDimRow",
    "ShapeRow",
    "run_coverage_table",
    "run_effdim_error",
    "run_confset_shape",
    "write_effdim_csv",
    "write_shape_csv",
    "write_coverage_csv",
]

_COVERAGE_PROCESSES = ("linear_wellspec", "linear_misspec_t", "logistic_wellspec")


@dataclass(frozen=True)
class CoverageTableExperiment:
    """Config of the coverage study: three processes at n = 100, d = 5."""

    processes: tuple[str, ...] = _COVERAGE_PROCESSES
    n: int = 100
    d: int = 5
    deltas: tuple[float, ...] = (0.95, 0.9, 0.85, 0.8, 0.75)
    reps: int = 1000
    B: int = 2000
    seed: int = 0
    methods: tuple[str, ...] = ("oracle", "bootwald", "bootlr")


def run_coverage_table(config: CoverageTableExperiment | None = None) -> CoverageTable:
    """Coverage of all methods across the configured processes.

    Each process runs under its own derived seed phase; a process that
    errors out contributes NaN rows with every replication marked failed.
    """
    config = config or CoverageTableExperiment()
    rows: list[CoverageRow] = []
    for p_idx, kind in enumerate(config.processes):
        proc = Process(kind=kind, theta0=theta0_equispaced(config.d))
        cov_cfg = CoverageConfig(
            process=proc,
            n=config.n,
            deltas=config.deltas,
            reps=config.reps,
            B=config.B,
            seed=phase_seed(config.seed, 100 + p_idx),
            methods=config.methods,
        )
        try:
            rows.extend(coverage_experiment(cov_cfg).rows)
        except ScmestError:
            for m in config.methods:
                for level in config.deltas:
                    rows.append(
                        CoverageRow(
                            model=kind,
                            method=m,
                            delta=level,
                            coverage=math.nan,
                            stderr=math.nan,
                            reps=0,
                            failures=config.reps,
                        )
                    )
    return CoverageTable(rows=tuple(rows))


@dataclass(frozen=True)
class EffDimErrorExperiment:
    """Config of the effective-dimension error study on well-specified models."""

    models: tuple[str, ...] = ("squared", "logistic")
    d_grid: tuple[int, ...] = (5, 10, 15, 20)
    n_grid: tuple[int, ...] = (2000, 4000, 6000, 8000, 10000)
    reps: int = 100
    seed: int = 0


@dataclass(frozen=True)
class EffDimRow:
    model: str
    d: int
    n: int
    mean_abs_err: float
    stderr: float
    reps: int


_PROCESS_FOR_MODEL = {"squared": "linear_wellspec", "logistic": "logistic_wellspec"}


def run_effdim_error(config: EffDimErrorExperiment | None = None) -> tuple[EffDimRow, ...]:
    """Mean |d_n/d - 1| over the (model, d, n) grid; d* = d by well-specification."""
    config = config or EffDimErrorExperiment()
    rows = []
    for m_idx, model_kind in enumerate(config.models):
        proc_kind = _PROCESS_FOR_MODEL[model_kind]
        for d_idx, d in enumerate(config.d_grid):
            proc = Process(kind=proc_kind, theta0=np.ones(d))
            for n_idx, n in enumerate(config.n_grid):
                base = phase_seed(config.seed, 1000 * m_idx + 10 * d_idx + n_idx)
                errs = np.empty(config.reps)
                for r in range(config.reps):
                    data = generate(proc, n, base + r)
                    model = model_for_data(model_kind, data.X)
                    fit = fit_erm(model, data)
                    errs[r] = abs(effective_dim_empirical(fit).value / d - 1.0)
                rows.append(
                    EffDimRow(
                        model=model_kind,
                        d=d,
                        n=n,
                        mean_abs_err=float(np.mean(errs)),
                        stderr=float(np.std(errs, ddof=1) / math.sqrt(config.reps)),
                        reps=config.reps,
                    )
                )
    return tuple(rows)


def write_effdim_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# schema_version=1\n")
        writer = csv.writer(fh)
        writer.writerow(["model", "d", "n", "mean_abs_err", "stderr", "reps"])
        for row in rows:
            writer.writerow(
                [row.model, row.d, row.n, f"{row.mean_abs_err:.17g}", f"{row.stderr:.17g}", row.reps]
            )


@dataclass(frozen=True)
class ConfsetShapeExperiment:
    """Config of the confidence-set shape study: 2-d logistic, three designs.

    The three covariances are diagonal, positively correlated, and
    negatively correlated.  Radii are bootstrap-calibrated Wald at tail
    mass delta.
    """

    sigmas: tuple = (
        ((2.0, 0.0), (0.0, 1.0)),
        ((2.0, 1.0), (1.0, 1.0)),
        ((2.0, -1.0), (-1.0, 1.0)),
    )
    theta0: tuple[float, float] = (-1.0, 2.0)
    n: int = 1000
    B: int = 2000
    delta: float = 0.05
    boundary_points: int = 128
    seed: int = 0


@dataclass(frozen=True)
class ShapeRow:
    sigma: str
    t: float
    x1: float
    x2: float


def run_confset_shape(config: ConfsetShapeExperiment | None = None) -> tuple[ShapeRow, ...]:
    """Boundary points of the Wald ellipse under each design covariance.

    The boundary is center + sqrt(sq_radius) H_n^{-1/2} (cos t, sin t),
    computed through the eigendecomposition of H_n(theta_n).
    """
    config = config or ConfsetShapeExperiment()
    rows = []
    theta0 = np.asarray(config.theta0, dtype=float)
    for s_idx, sigma in enumerate(config.sigmas):
        cov = np.asarray(sigma, dtype=float)
        label = "(%g %g; %g %g)" % (cov[0, 0], cov[0, 1], cov[1, 0], cov[1, 1])
        proc = Process(kind="logistic_wellspec", theta0=theta0, x_cov=cov)
        data = generate(proc, config.n, phase_seed(config.seed, 200 + s_idx))
        model = model_for_data("logistic", data.X)
        fit = fit_erm(model, data)
        bq = bootstrap_quantile(
            model,
            data,
            fit,
            BootstrapConfig(delta=config.delta, B=config.B, seed=phase_seed(config.seed, 300 + s_idx)),
            kind="wald",
        )
        evals, evecs = np.linalg.eigh(fit.aggregates_at_opt.H_n)
        half = evecs @ np.diag(1.0 / np.sqrt(evals)) @ evecs.T
        ts = np.linspace(0.0, 2.0 * math.pi, config.boundary_points, endpoint=False)
        circle = np.stack([np.cos(ts), np.sin(ts)])
        pts = fit.theta_n[:, None] + math.sqrt(bq.quantile) * (half @ circle)
        for t, (x1, x2) in zip(ts, pts.T):
            rows.append(ShapeRow(sigma=label, t=float(t), x1=float(x1), x2=float(x2)))
    return tuple(rows)


def write_shape_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# schema_version=1\n")
        writer = csv.writer(fh)
        writer.writerow(["sigma", "t", "x1", "x2"])
        for row in rows:
            writer.writerow([row.sigma, f"{row.t:.17g}", f"{row.x1:.17g}", f"{row.x2:.17g}"])
