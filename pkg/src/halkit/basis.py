"""Zero-order indicator bases over coordinate sections, and the models built on them.

A basis function is the indicator ``1{knot <= x_s}`` where ``x_s`` is the
restriction of ``x`` to a nonempty set of coordinates ``s`` (the *section*).
Internally every function is stored by its *full* knot vector, which carries
the section knot on the members of ``s`` and 0 elsewhere; because
``1{0 <= x_j}`` is identically one on ``[0, 1]``, two basis functions are the
same function exactly when their full knot vectors agree.  Columns are
deduplicated on that key, which keeps the l1 norm of the coefficients equal
to the sectional variation norm of the fitted function.

Sections use 0-based coordinate indices throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConsistencyError, DomainError, ShapeError, SizeError

# Largest tensor grid (number of vertices) svn_bruteforce will evaluate.
_BRUTEFORCE_MAX_VERTICES = 13**3
_CHUNK_ENTRIES = 4_000_000


def sections(d: int) -> list[tuple[int, ...]]:
    """All nonempty subsets of ``range(d)`` in ascending binary-mask order."""
    return [tuple(j for j in range(d) if mask >> j & 1) for mask in range(1, 2**d)]


def _as_points(points, d: int | None = None) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if d == 1 else x[None, :]
    if x.ndim != 2:
        raise ShapeError(f"expected a 2-d array of points, got shape {x.shape}")
    if d is not None and x.shape[1] != d:
        raise ShapeError(f"points have dimension {x.shape[1]}, expected {d}")
    return x


def check_unit_cube(x: np.ndarray, what: str = "point") -> None:
    """Raise DomainError naming the first row/coordinate outside [0, 1]."""
    bad = ~((x >= 0.0) & (x <= 1.0))
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise DomainError(
            f"{what} {i} coordinate {j} = {x[i, j]!r} lies outside [0, 1]"
        )


@dataclass(frozen=True)
class BasisFunction:
    """Indicator ``x -> 1{knot <= x[section]}``."""

    section: tuple[int, ...]
    knot: tuple[float, ...]

    def __post_init__(self):
        sec = tuple(int(j) for j in self.section)
        knot = tuple(float(v) for v in self.knot)
        if not sec:
            raise DomainError("a basis function needs a nonempty section")
        if list(sec) != sorted(set(sec)) or sec[0] < 0:
            raise DomainError(f"section {sec} must be sorted, unique and nonnegative")
        if len(knot) != len(sec):
            raise ShapeError(f"knot {knot} does not match section {sec}")
        for v in knot:
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"knot coordinate {v!r} lies outside [0, 1]")
        object.__setattr__(self, "section", sec)
        object.__setattr__(self, "knot", knot)

    def full_knot(self, d: int) -> np.ndarray:
        if self.section[-1] >= d:
            raise ShapeError(f"section {self.section} does not fit dimension {d}")
        out = np.zeros(d)
        out[list(self.section)] = self.knot
        return out

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.all(x[list(self.section)] >= np.asarray(self.knot)))


class BasisSet:
    """Ordered, duplicate-free collection of basis functions plus optional intercept.

    Column 0 is the intercept when ``has_intercept`` is true.
    """

    def __init__(self, d: int, functions: Sequence[BasisFunction], has_intercept: bool = True):
        if int(d) < 1:
            raise DomainError("dimension must be a positive integer")
        self.d = int(d)
        self.has_intercept = bool(has_intercept)
        self.functions: tuple[BasisFunction, ...] = tuple(functions)
        rows = [f.full_knot(self.d) for f in self.functions]
        if self.has_intercept:
            rows.insert(0, np.zeros(self.d))
        knots = np.array(rows, dtype=float).reshape(len(rows), self.d)
        keys = {r.tobytes() for r in knots}
        if len(keys) != len(knots):
            raise ConsistencyError("basis contains two copies of the same function")
        knots.setflags(write=False)
        self._knots = knots

    @property
    def column_count(self) -> int:
        return self._knots.shape[0]

    def __len__(self) -> int:
        return self.column_count

    @property
    def knot_matrix(self) -> np.ndarray:
        """Full knot vectors, one row per column (intercept row is all zeros)."""
        return self._knots

    def column_function(self, k: int) -> BasisFunction | None:
        """The basis function of column ``k``; None for the intercept."""
        if self.has_intercept:
            if k == 0:
                return None
            k -= 1
        return self.functions[k]

    def section_of_columns(self) -> list[tuple[int, ...]]:
        secs = [f.section for f in self.functions]
        return ([()] if self.has_intercept else []) + secs

    def subset(self, columns: Iterable[int]) -> "BasisSet":
        """Basis made of the given non-intercept columns (intercept kept if present)."""
        off = 1 if self.has_intercept else 0
        cols = sorted({int(c) for c in columns if int(c) >= off})
        return BasisSet(self.d, [self.functions[c - off] for c in cols], self.has_intercept)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, BasisSet)
            and self.d == other.d
            and self.has_intercept == other.has_intercept
            and self.functions == other.functions
        )

    def __repr__(self) -> str:
        return f"BasisSet(d={self.d}, columns={self.column_count}, intercept={self.has_intercept})"


def _build(points, include_intercept: bool, section_filter=None):
    x = _as_points(points)
    if x.shape[0] == 0:
        raise DomainError("need at least one point to build a basis")
    check_unit_cube(x)
    d = x.shape[1]
    seen: dict[bytes, int] = {}
    if include_intercept:
        seen[np.zeros(d).tobytes()] = 0
    functions: list[BasisFunction] = []
    # column index of every (section, point) candidate, in candidate order
    index_of: dict[tuple[int, ...], np.ndarray] = {}
    offset = 1 if include_intercept else 0
    for sec in sections(d):
        if section_filter is not None and not section_filter(sec):
            continue
        cols = np.empty(x.shape[0], dtype=int)
        full = np.zeros(d)
        for i, row in enumerate(x):
            full[:] = 0.0
            full[list(sec)] = row[list(sec)]
            key = full.tobytes()
            col = seen.get(key)
            if col is None:
                col = len(functions) + offset
                seen[key] = col
                functions.append(BasisFunction(sec, tuple(row[list(sec)])))
            cols[i] = col
        index_of[sec] = cols
    return BasisSet(d, functions, include_intercept), index_of


def build_basis(points, include_intercept: bool = True) -> BasisSet:
    """HAL basis with one indicator per (nonempty section, data point).

    Candidates are generated section by section (ascending binary mask), points
    in input order; a candidate identical as a function to an earlier column is
    dropped.  Before deduplication there are ``n * (2**d - 1) (+1)`` columns.
    """
    return _build(points, include_intercept)[0]


def hal_column_index(points, include_intercept: bool = True):
    """Like :func:`build_basis` but also return, per section, the column of each point."""
    return _build(points, include_intercept)


def design_matrix(basis: BasisSet, points) -> np.ndarray:
    """Boolean matrix with entry (i, k) set iff column k's knot is below point i."""
    x = _as_points(points, basis.d)
    knots = basis.knot_matrix
    n, m = x.shape[0], knots.shape[0]
    out = np.empty((n, m), dtype=bool)
    step = max(1, _CHUNK_ENTRIES // max(m, 1))
    active = [j for j in range(basis.d) if np.any(knots[:, j] > 0)]
    for lo in range(0, n, step):
        block = np.ones((min(step, n - lo), m), dtype=bool)
        for j in active:
            block &= x[lo:lo + step, j, None] >= knots[None, :, j]
        out[lo:lo + step] = block
    return out


class DomainTransform:
    """Per-coordinate affine map ``(x - min) / (max - min)`` into the unit cube."""

    def __init__(self, mins, maxs):
        self.mins = np.asarray(mins, dtype=float).copy()
        self.maxs = np.asarray(maxs, dtype=float).copy()
        if self.mins.shape != self.maxs.shape or self.mins.ndim != 1:
            raise ShapeError("transform mins and maxs must be 1-d arrays of equal length")
        if np.any(self.maxs < self.mins):
            raise DomainError("transform has max < min")

    @classmethod
    def identity(cls, d: int) -> "DomainTransform":
        return cls(np.zeros(d), np.ones(d))

    @classmethod
    def fit(cls, x) -> "DomainTransform":
        x = _as_points(x)
        return cls(x.min(axis=0), x.max(axis=0))

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.mins == 0.0) and np.all(self.maxs == 1.0))

    def apply(self, x, clip: bool = True) -> tuple[np.ndarray, int]:
        """Transformed points and the number of rows that needed clipping."""
        x = _as_points(x, self.mins.size)
        span = self.maxs - self.mins
        span = np.where(span > 0, span, 1.0)
        z = (x - self.mins) / span
        outside = np.any((z < 0) | (z > 1), axis=1)
        if clip:
            z = np.clip(z, 0.0, 1.0)
        return z, int(outside.sum())

    def __eq__(self, other):
        return (
            isinstance(other, DomainTransform)
            and np.array_equal(self.mins, other.mins)
            and np.array_equal(self.maxs, other.maxs)
        )


@dataclass(frozen=True, eq=False)
class HalModel:
    """``f(x) = sum_k beta_k h_k(x)`` over a BasisSet, with its variation budget."""

    basis: BasisSet
    beta: np.ndarray
    M: float
    transform: DomainTransform = None  # type: ignore[assignment]
    report: object = field(default=None, compare=False)

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float).ravel()
        if beta.size != self.basis.column_count:
            raise ShapeError(
                f"beta has {beta.size} entries, basis has {self.basis.column_count} columns"
            )
        if self.M < 0:
            raise DomainError("variation budget M must be nonnegative")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "M", float(self.M))
        if self.transform is None:
            object.__setattr__(self, "transform", DomainTransform.identity(self.basis.d))

    @property
    def d(self) -> int:
        return self.basis.d

    def __call__(self, points) -> np.ndarray:
        """Evaluate at points already in the unit cube (rows = points)."""
        x = _as_points(points, self.d)
        nz = np.flatnonzero(self.beta)
        if nz.size == 0:
            return np.zeros(x.shape[0])
        knots = self.basis.knot_matrix[nz]
        out = np.empty(x.shape[0])
        step = max(1, _CHUNK_ENTRIES // nz.size)
        for lo in range(0, x.shape[0], step):
            block = np.ones((min(step, x.shape[0] - lo), nz.size), dtype=bool)
            for j in range(self.d):
                block &= x[lo:lo + step, j, None] >= knots[None, :, j]
            out[lo:lo + step] = block @ self.beta[nz]
        return out

    def predict(self, raw_points) -> np.ndarray:
        """Evaluate at raw inputs, applying (and clipping to) the domain transform."""
        z, _ = self.transform.apply(raw_points)
        return self(z)

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.beta)


def evaluate(model: HalModel, x) -> float:
    """Model value at a single point of the transformed domain."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != model.d:
        raise ShapeError(f"point has dimension {x.size}, model expects {model.d}")
    return float(model(x[None, :])[0])


def svn(model: HalModel) -> float:
    """Sectional variation norm of a deduplicated model: the l1 norm of beta."""
    return float(np.abs(model.beta).sum())


def _axis_grids(knots: np.ndarray, d: int) -> list[np.ndarray]:
    return [np.unique(np.concatenate([[0.0, 1.0], knots[:, j]])) for j in range(d)]


def svn_bruteforce(f, d: int | None = None, grids: Sequence[Sequence[float]] | None = None) -> float:
    """Sectional variation norm from quasi-volumes on the finest grid.

    ``f`` is a HalModel or a vectorized callable on ``(N, d)`` arrays that is
    piecewise constant on the tensor grid built from ``grids`` (0 and 1 are
    always added).  Returns ``|f(0)|`` plus, for every nonempty section, the
    summed absolute quasi-volumes of the section over the grid cells.
    """
    if isinstance(f, HalModel):
        d = f.d
        if grids is None:
            grids = _axis_grids(f.basis.knot_matrix, d)
        fn: Callable = f
    else:
        if d is None or grids is None:
            raise ShapeError("a callable needs both d and its grid breakpoints")
        fn = f
    axes = [np.unique(np.concatenate([[0.0, 1.0], np.asarray(g, dtype=float).ravel()])) for g in grids]
    if len(axes) != d:
        raise ShapeError(f"got {len(axes)} grids for dimension {d}")
    if np.prod([a.size for a in axes]) > _BRUTEFORCE_MAX_VERTICES:
        limit = int(round(_BRUTEFORCE_MAX_VERTICES ** (1.0 / d))) - 1
        raise SizeError(
            f"brute-force grid too large: at d={d} at most {limit} cells per axis are allowed"
        )
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    values = np.asarray(fn(pts), dtype=float).reshape(mesh[0].shape)
    total = abs(values[(0,) * d])
    for sec in sections(d):
        index = tuple(slice(None) if j in sec else 0 for j in range(d))
        face = values[index]
        for ax in range(face.ndim):
            face = np.diff(face, axis=ax)
        total += np.abs(face).sum()
    return float(total)


def gram_entry(a: BasisFunction | None, b: BasisFunction | None, d: int) -> float:
    """Lebesgue inner product of two basis functions on the unit cube (None = intercept)."""
    ka = np.zeros(d) if a is None else a.full_knot(d)
    kb = np.zeros(d) if b is None else b.full_knot(d)
    return float(np.prod(1.0 - np.maximum(ka, kb)))


def gram_matrix(basis: BasisSet, columns=None, other: BasisSet | None = None, other_columns=None) -> np.ndarray:
    """Matrix of Lebesgue inner products between basis columns.

    With no ``other`` basis the matrix is square over ``columns``.
    """
    if other is None and other_columns is None:
        other_columns = columns
    ka = basis.knot_matrix if columns is None else basis.knot_matrix[np.asarray(columns)]
    ob = basis if other is None else other
    kb = ob.knot_matrix if other_columns is None else ob.knot_matrix[np.asarray(other_columns)]
    g = np.ones((ka.shape[0], kb.shape[0]))
    for j in range(basis.d):
        g *= 1.0 - np.maximum(ka[:, None, j], kb[None, :, j])
    return g


def l2_distance(a: HalModel, b: HalModel) -> float:
    """Exact Lebesgue L2 distance between two models on the unit cube."""
    if a.d != b.d:
        raise ShapeError("models live on different dimensions")
    sa, sb = a.support(), b.support()
    ba, bb = a.beta[sa], b.beta[sb]
    val = (
        ba @ gram_matrix(a.basis, sa) @ ba
        - 2.0 * ba @ gram_matrix(a.basis, sa, b.basis, sb) @ bb
        + bb @ gram_matrix(b.basis, sb) @ bb
    )
    return float(np.sqrt(max(val, 0.0)))
