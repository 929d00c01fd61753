"""Dataset containers and their CSV schemas.

Survival CSV: ``w1..w{d-1}, time, status``.  Density CSV: ``u, w1..w{d-1}``.
Regression CSV: ``x1..xd, y``.  Headers are required.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .basis import check_unit_cube
from .errors import DomainError, ShapeError


def _frozen(a, ndim, dtype=float):
    a = np.array(a, dtype=dtype)
    if ndim == 2 and a.ndim == 1:
        a = a[:, None]
    if a.ndim != ndim:
        raise ShapeError(f"expected a {ndim}-d array, got shape {a.shape}")
    a.setflags(write=False)
    return a


def _covariates(w, n):
    if w is None:
        return np.empty((n, 0))
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        w = w.reshape(n, -1) if w.size else np.empty((n, 0))
    return w


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Right-censored observations ``(w, time, status)`` with time truncated at 1."""

    time: np.ndarray
    status: np.ndarray
    w: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        t = _frozen(self.time, 1)
        s = np.asarray(self.status)
        if not np.all((s == 0) | (s == 1)):
            raise DomainError("status must be 0 or 1")
        s = _frozen(s, 1, dtype=int)
        w = _frozen(_covariates(self.w, t.size), 2)
        if s.size != t.size or w.shape[0] != t.size:
            raise ShapeError("time, status and covariates must have the same number of rows")
        bad = np.flatnonzero(~((t >= 0) & (t <= 1)))
        if bad.size:
            raise DomainError(f"row {bad[0]}: time {t[bad[0]]!r} lies outside [0, 1]")
        bad = np.flatnonzero((t == 1.0) & (s == 1))
        if bad.size:
            raise DomainError(
                f"row {bad[0]}: an observation at time 1 must be censored (status 0)"
            )
        if w.size:
            check_unit_cube(w, "covariate row")
        object.__setattr__(self, "time", t)
        object.__setattr__(self, "status", s)
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.time.size

    @property
    def d(self) -> int:
        """Dimension of the (time, w) space."""
        return 1 + self.w.shape[1]

    def points(self) -> np.ndarray:
        return np.column_stack([self.time, self.w])

    def take(self, rows) -> "SurvivalDataset":
        rows = np.asarray(rows, dtype=int)
        return SurvivalDataset(self.time[rows], self.status[rows], self.w[rows])


@dataclass(frozen=True, eq=False)
class RegressionDataset:
    """Pairs ``(x, y)``; ``bound`` records ``B`` with ``|y| <= B``."""

    x: np.ndarray
    y: np.ndarray
    bound: float | None = None

    def __post_init__(self):
        x = _frozen(self.x, 2)
        y = _frozen(self.y, 1)
        if x.shape[0] != y.size:
            raise ShapeError("x and y must have the same number of rows")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DomainError("regression data must be finite")
        b = float(np.abs(y).max()) if self.bound is None and y.size else self.bound
        if b is not None and y.size and np.abs(y).max() > b:
            raise DomainError(f"|y| exceeds the declared bound {b}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "bound", b)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def take(self, rows) -> "RegressionDataset":
        rows = np.asarray(rows, dtype=int)
        return RegressionDataset(self.x[rows], self.y[rows], self.bound)


@dataclass(frozen=True, eq=False)
class DensityDataset:
    """Draws ``(u, w)`` with ``u`` the scalar outcome; all coordinates in [0, 1]."""

    u: np.ndarray
    w: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        u = _frozen(self.u, 1)
        w = _frozen(_covariates(self.w, u.size), 2)
        if w.shape[0] != u.size:
            raise ShapeError("u and w must have the same number of rows")
        check_unit_cube(np.column_stack([u, w]), "row")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.u.size

    @property
    def d(self) -> int:
        return 1 + self.w.shape[1]

    def points(self) -> np.ndarray:
        return np.column_stack([self.u, self.w])

    def take(self, rows) -> "DensityDataset":
        rows = np.asarray(rows, dtype=int)
        return DensityDataset(self.u[rows], self.w[rows])


# --- CSV -------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, header, columns) -> None:
    """Write equal-length columns with shortest round-trip float formatting."""
    rows = zip(*[np.asarray(c).tolist() for c in columns])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DomainError(f"{path}: empty file, a header row is required") from None
        rows = [r for r in reader if r]
    if any(len(r) != len(header) for r in rows):
        raise ShapeError(f"{path}: ragged rows")
    try:
        data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    except ValueError as exc:
        raise DomainError(f"{path}: non-numeric value ({exc})") from None
    return {h: data[:, k] for k, h in enumerate(header)}


def _w_columns(cols: dict) -> np.ndarray:
    names = sorted((k for k in cols if k.startswith("w") and k[1:].isdigit()), key=lambda k: int(k[1:]))
    n = len(next(iter(cols.values()))) if cols else 0
    return np.column_stack([cols[k] for k in names]) if names else np.empty((n, 0))


def _require(cols, names, path):
    missing = [c for c in names if c not in cols]
    if missing:
        raise DomainError(f"{path}: missing column(s) {', '.join(missing)}")


def read_survival_csv(path) -> SurvivalDataset:
    cols = read_csv(path)
    _require(cols, ["time", "status"], path)
    return SurvivalDataset(cols["time"], cols["status"].astype(int), _w_columns(cols))


def write_survival_csv(path, data: SurvivalDataset) -> None:
    k = data.w.shape[1]
    header = [f"w{j + 1}" for j in range(k)] + ["time", "status"]
    write_csv(path, header, [data.w[:, j] for j in range(k)] + [data.time, data.status])


def read_density_csv(path) -> DensityDataset:
    cols = read_csv(path)
    _require(cols, ["u"], path)
    return DensityDataset(cols["u"], _w_columns(cols))


def write_density_csv(path, data: DensityDataset) -> None:
    k = data.w.shape[1]
    write_csv(path, ["u"] + [f"w{j + 1}" for j in range(k)], [data.u] + [data.w[:, j] for j in range(k)])


def read_regression_csv(path) -> RegressionDataset:
    cols = read_csv(path)
    _require(cols, ["y"], path)
    names = sorted((k for k in cols if k.startswith("x") and k[1:].isdigit()), key=lambda k: int(k[1:]))
    if not names:
        raise DomainError(f"{path}: no x1..xd columns")
    return RegressionDataset(np.column_stack([cols[k] for k in names]), cols["y"])


def write_regression_csv(path, data: RegressionDataset) -> None:
    header = [f"x{j + 1}" for j in range(data.d)] + ["y"]
    write_csv(path, header, [data.x[:, j] for j in range(data.d)] + [data.y])


def ensure_parent(path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p
