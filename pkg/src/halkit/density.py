"""Conditional density estimation with an exactly normalized HAL log-density.

``p(u | w) = exp(g(u, w)) / int_0^1 exp(g(z, w)) dz`` where ``g`` is a HAL
model over ``(u, w)`` whose sections all contain the outcome coordinate 0.
Columns depending on ``w`` alone would cancel against the normalizer, so
they are left out of the basis.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .basis import BasisSet, HalModel, _build
from .data import DensityDataset
from .errors import ConsistencyError, DomainError, ShapeError
from .losses import DensityOracle, slice_first
from .solver import DEFAULT_MAX_ITER, DEFAULT_TOL, SolveReport, minimize_l1ball
from .stepfn import PiecewiseConstantFn

log = logging.getLogger(__name__)


def build_density_basis(data: DensityDataset) -> BasisSet:
    """One column per (point, section containing the outcome); no intercept.

    Before deduplication there are ``n * 2**(d-1)`` columns.
    """
    if data.n == 0:
        raise DomainError("need at least one draw to build a density basis")
    return _build(data.points(), False, lambda sec: 0 in sec)[0]


@dataclass(frozen=True, eq=False)
class DensityModel:
    """Normalized conditional density built on a HAL log-density ``g``."""

    inner: HalModel
    report: SolveReport | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        b = self.inner.basis
        if b.has_intercept or any(0 not in s for s in b.section_of_columns()):
            raise ConsistencyError("a density basis needs every section to contain the outcome")

    @property
    def M(self) -> float:
        return self.inner.M

    @property
    def d(self) -> int:
        return self.inner.d

    def _slice(self, w) -> tuple[PiecewiseConstantFn, float]:
        """``u -> g(u, w)`` and its log-normalizer, cached by which columns ``w`` switches on."""
        w = np.asarray(w if w is not None else [], dtype=float).ravel()
        if w.size != self.d - 1:
            raise ShapeError(f"covariate vector has {w.size} entries, model expects {self.d - 1}")
        if np.any((w < 0) | (w > 1)):
            raise DomainError("covariates must lie in [0, 1]")
        sup = self.inner.support()
        key = np.all(w >= self.inner.basis.knot_matrix[sup, 1:], axis=1).tobytes()
        hit = self._cache.get(key)
        if hit is None:
            g = slice_first(self.inner, w)
            hit = (g, float(logsumexp(g.values, b=g.lengths)))
            self._cache[key] = hit
        return hit

    def log_normalizer(self, w=None) -> float:
        return self._slice(w)[1]

    def log_density(self, u, w=None) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if np.any((u < 0) | (u > 1)):
            raise DomainError("u must lie in [0, 1]")
        g, z = self._slice(w)
        return g(u) - z

    def total_mass(self, w=None) -> float:
        """``int_0^1 p(u | w) du`` summed exactly over the pieces."""
        g, z = self._slice(w)
        return float(np.exp(g.values - z) @ g.lengths)


def fit_density(data: DensityDataset, M: float, *, basis: BasisSet | None = None, init=None,
                tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                step_rule: str = "apg") -> DensityModel:
    """Minimize the empirical conditional log-density loss over ``||beta||_1 <= M``."""
    if M < 0:
        raise DomainError(f"variation budget must be nonnegative, got {M}")
    if basis is None:
        basis = build_density_basis(data)
    report = minimize_l1ball(DensityOracle(basis, data), M, init, tol=tol,
                             max_iter=max_iter, step_rule=step_rule)
    if not report.converged:
        log.warning("density fit at M=%g did not certify (gap %.3g)", M, report.fw_gap)
    return DensityModel(HalModel(basis, report.beta_hat, M, report=report), report)


def density_eval(model: DensityModel, u, w=None) -> np.ndarray:
    """``p(u | w)``, bounded between ``exp(-2M)`` and ``exp(2M)``."""
    return np.exp(model.log_density(u, w))


def conditional_cdf(model: DensityModel, u, w=None) -> np.ndarray:
    """``int_0^u p(z | w) dz`` by exact piece sums."""
    u = np.asarray(u, dtype=float)
    if np.any((u < 0) | (u > 1)):
        raise DomainError("u must lie in [0, 1]")
    g, z = model._slice(w)
    dens = np.exp(g.values - z)
    edges = g.edges
    cum = np.concatenate([[0.0], np.cumsum(dens * g.lengths)])
    k = np.searchsorted(edges, u, side="right") - 1
    return cum[k] + (u - edges[k]) * dens[k]
