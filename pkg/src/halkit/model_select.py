"""K-fold cross-validation of the variation budget ``M``."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .basis import build_basis, design_matrix
from .data import DensityDataset, RegressionDataset, SurvivalDataset
from .density import build_density_basis, fit_density
from .errors import DomainError
from .losses import DensityOracle, pl_risk
from .regression import fit_regression
from .runtime import STREAM_FOLDS, make_rng, parallel_map
from .solver import DEFAULT_MAX_ITER, DEFAULT_TOL
from .survival import fit_hazard

log = logging.getLogger(__name__)

TASKS = ("regression", "hazard", "density")
DEFAULT_GRID = tuple(2.0**k for k in range(-2, 11))
DEFAULT_K = 5


def cv_folds(n: int, K: int, seed: int) -> list[np.ndarray]:
    """Seeded shuffle split into ``K`` folds whose sizes differ by at most one."""
    if K < 2:
        raise DomainError("cross-validation needs K >= 2")
    if n < K:
        raise DomainError(f"cannot split {n} rows into {K} folds")
    perm = make_rng(seed, STREAM_FOLDS).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, K)]


@dataclass
class CvReport:
    task: str
    grid: list[float]
    K: int
    seed: int
    folds: list[list[int]]
    fold_risks: list[list[float | None]]
    mean_risk: list[float]
    se_risk: list[float]
    selected_M: float
    one_se_M: float
    clipped_rows: int = 0
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "grid": [float(m) for m in self.grid],
            "K": int(self.K),
            "seed": int(self.seed),
            "folds": [[int(i) for i in f] for f in self.folds],
            "fold_risks": [[None if r is None else float(r) for r in row] for row in self.fold_risks],
            "mean_risk": [float(v) for v in self.mean_risk],
            "se_risk": [float(v) for v in self.se_risk],
            "selected_M": float(self.selected_M),
            "one_se_M": float(self.one_se_M),
            "clipped_rows": int(self.clipped_rows),
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "CvReport":
        return cls(**{k: doc[k] for k in cls.__dataclass_fields__})


def _check_grid(grid) -> list[float]:
    g = [float(m) for m in grid]
    if not g:
        raise DomainError("M grid must be nonempty")
    if any(m <= 0 or not np.isfinite(m) for m in g):
        raise DomainError("M grid values must be positive and finite")
    if any(b <= a for a, b in zip(g, g[1:])):
        raise DomainError("M grid must be strictly increasing")
    return g


def _task_of(data, task):
    expected = {"regression": RegressionDataset, "hazard": SurvivalDataset, "density": DensityDataset}
    if task not in expected:
        raise DomainError(f"unknown task {task!r}; expected one of {TASKS}")
    if not isinstance(data, expected[task]):
        raise DomainError(f"task {task!r} needs a {expected[task].__name__}")


def _fold_path(data, task, grid, solver_opts, test_rows):
    """Held-out risks along the grid for one fold (largest M first, warm-started)."""
    n = data.n
    test_mask = np.zeros(n, dtype=bool)
    test_mask[test_rows] = True
    train, test = data.take(np.flatnonzero(~test_mask)), data.take(np.flatnonzero(test_mask))
    risks: dict[float, float] = {}
    notes: list[str] = []
    clipped = 0
    if task == "hazard" and (train.status.sum() == 0 or test.status.sum() == 0):
        return None, [], 0
    if task == "regression":
        basis = None
    elif task == "hazard":
        basis = build_basis(train.points())
    else:
        basis = build_density_basis(train)
    init = None
    for M in sorted(grid, reverse=True):
        if task == "regression":
            model = fit_regression(train, M, basis=basis, init=init, **solver_opts)
            basis = model.basis
            z, clipped = model.transform.apply(test.x)
            r = design_matrix(model.basis, z).astype(float) @ model.beta - test.y
            risk = float(r @ r / test.n)
            report = model.report
        elif task == "hazard":
            model = fit_hazard(train, M, basis=basis, init=init, **solver_opts)
            risk = pl_risk(model.inner, test)
            report = model.report
        else:
            model = fit_density(train, M, basis=basis, init=init, **solver_opts)
            risk = DensityOracle(basis, test)(model.inner.beta)[0]
            report = model.report
        if not report.converged:
            notes.append(f"fit at M={M!r} did not certify (gap {report.fw_gap:.3g})")
        init = report.beta_hat
        risks[M] = risk
    return [risks[M] for M in grid], notes, clipped


def cv_select_M(data, task: str, M_grid=None, K: int = DEFAULT_K, seed: int = 0, *,
                tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> CvReport:
    """Pick ``M`` by K-fold cross-validated held-out risk.

    Each fold's basis is built from its training rows only.  The selected
    ``M`` minimizes the mean held-out risk (ties go to the smaller ``M``);
    ``one_se_M`` is the smallest ``M`` within one standard error of that
    minimum.  Hazard folds without events are skipped and noted.
    """
    _task_of(data, task)
    grid = _check_grid(DEFAULT_GRID if M_grid is None else M_grid)
    folds = cv_folds(data.n, K, seed)
    opts = {"tol": tol, "max_iter": max_iter}
    results = parallel_map(partial(_fold_path, data, task, grid, opts), folds)
    warnings: list[str] = []
    fold_risks: list[list[float | None]] = []
    clipped = 0
    for k, (risks, notes, c) in enumerate(results):
        if risks is None:
            warnings.append(f"fold {k} skipped: no events in its training or held-out rows")
            fold_risks.append([None] * len(grid))
            continue
        warnings.extend(f"fold {k}: {msg}" for msg in notes)
        fold_risks.append(risks)
        clipped += c
    used = np.array([r for r in fold_risks if r[0] is not None], dtype=float)
    if used.shape[0] == 0:
        raise DomainError("every fold was skipped; cross-validation has nothing to score")
    with np.errstate(invalid="ignore", over="ignore"):
        mean = used.mean(axis=0)
        se = used.std(axis=0, ddof=1) / np.sqrt(used.shape[0]) if used.shape[0] > 1 else np.zeros(len(grid))
    if not np.any(np.isfinite(mean)):
        raise DomainError("held-out risk is not finite for any M in the grid")
    best = int(np.argmin(np.where(np.isnan(mean), np.inf, mean)))
    band = mean[best] + (se[best] if np.isfinite(se[best]) else 0.0)
    one_se = next(i for i in range(len(grid)) if mean[i] <= band)
    for w in warnings:
        log.warning("cv: %s", w)
    return CvReport(
        task=task, grid=grid, K=K, seed=int(seed), folds=[f.tolist() for f in folds],
        fold_risks=fold_risks, mean_risk=mean.tolist(), se_risk=se.tolist(),
        selected_M=grid[best], one_se_M=grid[one_se], clipped_rows=clipped, warnings=warnings,
    )
