"""Squared-error HAL regression and basis-size counts.

``erm_basis_count`` counts the distinct coordinatewise maxima of nonempty
subsets of the data.  Those maxima are the knots an unrestricted empirical
risk minimizer can need, as opposed to the ``n (2**d - 1) + 1`` data-point
knots of the HAL sieve.
"""

from __future__ import annotations

import itertools
import logging

import numba
import numpy as np

from .basis import BasisSet, DomainTransform, HalModel, _as_points, build_basis, design_matrix
from .data import RegressionDataset
from .errors import DomainError, SizeError
from .losses import LeastSquaresOracle
from .solver import DEFAULT_MAX_ITER, DEFAULT_TOL, minimize_l1ball

log = logging.getLogger(__name__)

RESCALE_MODES = ("auto", "always", "never")
MAX_COUNT_N = 5000
MAX_COUNT_D = 4


def fit_regression(data: RegressionDataset, M: float, *, rescale: str = "auto",
                   basis: BasisSet | None = None, init=None, tol: float = DEFAULT_TOL,
                   max_iter: int = DEFAULT_MAX_ITER, step_rule: str = "apg") -> HalModel:
    """Least-squares HAL fit over ``||beta||_1 <= M``.

    Parameters
    ----------
    rescale : {"auto", "always", "never"}
        Min-max map of the inputs onto the unit cube.  ``"auto"`` applies it
        only when some input lies outside [0, 1]; ``"never"`` rejects such
        inputs.  The transform is stored on the model and reused (with
        clipping) at prediction time.
    """
    if M < 0:
        raise DomainError(f"variation budget must be nonnegative, got {M}")
    if rescale not in RESCALE_MODES:
        raise DomainError(f"rescale must be one of {RESCALE_MODES}")
    if data.n == 0:
        raise DomainError("cannot fit a regression to an empty dataset")
    inside = bool(np.all((data.x >= 0) & (data.x <= 1)))
    if rescale == "always" or (rescale == "auto" and not inside):
        transform = DomainTransform.fit(data.x)
    else:
        transform = DomainTransform.identity(data.d)
    z, _ = transform.apply(data.x, clip=False)
    if basis is None:
        basis = build_basis(z)
    A = design_matrix(basis, z).astype(float)
    report = minimize_l1ball(LeastSquaresOracle(A, data.y), M, init, tol=tol,
                             max_iter=max_iter, step_rule=step_rule)
    if not report.converged:
        log.warning("regression fit at M=%g did not certify (gap %.3g)", M, report.fw_gap)
    return HalModel(basis, report.beta_hat, M, transform, report)


def hal_basis_count(n: int, d: int) -> int:
    """Columns of the full HAL design before deduplication: ``n (2**d - 1) + 1``."""
    if int(n) < 1 or int(d) < 1:
        raise DomainError("n and d must be positive")
    return int(n) * (2 ** int(d) - 1) + 1


@numba.njit(cache=True)
def _count_tuples(R):
    """Number of tuples ``(p_0..p_{d-1})`` with ``p_j`` holding the max of coordinate ``j``.

    ``R`` holds per-coordinate ranks (distinct within each column).  The
    first ``d - 2`` entries are enumerated; the last two are counted with a
    sweep over coordinate ``d - 2`` and a Fenwick tree on coordinate ``d - 1``.
    """
    n, d = R.shape
    k = d - 2
    order = np.argsort(R[:, d - 2])
    tree = np.zeros(n + 1, np.int64)
    idx = np.zeros(max(k, 1), np.int64)
    total = 0
    while True:
        ok = True
        for a in range(k):
            for b in range(k):
                if R[idx[b], a] > R[idx[a], a]:
                    ok = False
        if ok:
            lo_c = -1
            lo_e = -1
            for a in range(k):
                lo_c = max(lo_c, R[idx[a], d - 2])
                lo_e = max(lo_e, R[idx[a], d - 1])
            for pos in range(n):
                i = order[pos]
                member = True
                for a in range(k):
                    if R[i, a] > R[idx[a], a]:
                        member = False
                        break
                if not member:
                    continue
                r = R[i, d - 1]
                if r >= lo_e:
                    j = r + 1
                    while j <= n:
                        tree[j] += 1
                        j += j & -j
                if R[i, d - 2] >= lo_c:
                    # inserted points with rank >= r in the last coordinate
                    below = 0
                    j = r
                    while j > 0:
                        below += tree[j]
                        j -= j & -j
                    inserted = 0
                    j = n
                    while j > 0:
                        inserted += tree[j]
                        j -= j & -j
                    total += inserted - below
            tree[:] = 0
        # advance the odometer over the enumerated prefix
        a = k - 1
        while a >= 0:
            idx[a] += 1
            if idx[a] < n:
                break
            idx[a] = 0
            a -= 1
        if a < 0:
            break
    return total


def _count_lattice(x: np.ndarray) -> int:
    """Direct check of every lattice point of observed coordinate values."""
    axes = [np.unique(x[:, j]) for j in range(x.shape[1])]
    size = int(np.prod([a.size for a in axes]))
    if size * x.shape[0] > 10**8:
        raise SizeError("tied coordinates make this instance too large for the lattice count")
    total = 0
    grid = np.array(list(itertools.product(*axes)))
    step = max(1, 10**7 // (x.shape[0] * x.shape[1]))
    for lo in range(0, grid.shape[0], step):
        z = grid[lo:lo + step]
        below = np.all(x[None, :, :] <= z[:, None, :], axis=2)
        mx = np.where(below[:, :, None], x[None, :, :], -np.inf).max(axis=1)
        total += int(np.all(mx == z, axis=1).sum())
    return total


def erm_basis_count(points) -> int:
    """Number of distinct coordinatewise maxima over nonempty subsets of ``points``.

    Duplicate points are collapsed first.  A lattice point ``z`` built from
    observed coordinate values is counted iff the coordinatewise max of the
    points below it equals ``z``.
    """
    x = np.unique(_as_points(points), axis=0)
    n, d = x.shape
    if n == 0:
        return 0
    if n > MAX_COUNT_N or d > MAX_COUNT_D:
        raise SizeError(f"erm_basis_count supports n <= {MAX_COUNT_N} and d <= {MAX_COUNT_D}")
    if d == 1:
        return n
    if any(np.unique(x[:, j]).size < n for j in range(d)):
        return _count_lattice(x)
    ranks = np.argsort(np.argsort(x, axis=0, kind="stable"), axis=0, kind="stable").astype(np.int64)
    return int(_count_tuples(np.ascontiguousarray(ranks)))


def erm_count_bruteforce(points) -> int:
    """Enumerate all nonempty subsets (small inputs only)."""
    x = np.unique(_as_points(points), axis=0)
    if x.shape[0] > 16:
        raise SizeError("subset enumeration is limited to 16 distinct points")
    maxima = set()
    for mask in range(1, 2 ** x.shape[0]):
        rows = [i for i in range(x.shape[0]) if mask >> i & 1]
        maxima.add(tuple(x[rows].max(axis=0)))
    return len(maxima)
