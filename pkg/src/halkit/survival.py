"""Conditional hazard estimation from right-censored data.

The log-hazard ``f(t, w)`` is a HAL model over ``(t, w)`` with time as
coordinate 0.  Survival curves and the induced densities are computed in
closed form on the model's time partition.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .basis import BasisSet, HalModel, build_basis
from .data import SurvivalDataset
from .errors import DomainError, ShapeError, UnsupportedError
from .losses import PoissonHazardOracle, pl_risk, slice_first
from .solver import DEFAULT_MAX_ITER, DEFAULT_TOL, SolveReport, minimize_l1ball
from .stepfn import PiecewiseConstantFn

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class HazardModel:
    """Log-hazard model ``log alpha(t, w) = f(t, w)``."""

    inner: HalModel
    report: SolveReport | None = None

    @property
    def M(self) -> float:
        return self.inner.M

    @property
    def d(self) -> int:
        return self.inner.d

    def _w(self, w) -> np.ndarray:
        w = np.asarray(w if w is not None else [], dtype=float).ravel()
        if w.size != self.d - 1:
            raise ShapeError(f"covariate vector has {w.size} entries, model expects {self.d - 1}")
        return w

    def time_slice(self, w=None) -> PiecewiseConstantFn:
        """``t -> f(t, w)`` as a step function."""
        return slice_first(self.inner, self._w(w))

    def log_hazard(self, t, w=None) -> np.ndarray:
        return self.time_slice(w)(t)

    def hazard(self, t, w=None) -> np.ndarray:
        return np.exp(self.log_hazard(t, w))


def fit_hazard(data: SurvivalDataset, M: float, *, basis: BasisSet | None = None, init=None,
               tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
               step_rule: str = "apg") -> HazardModel:
    """Minimize the partial-likelihood risk over ``||beta||_1 <= M``.

    The basis defaults to all sections of the observed ``(time, w)`` points.
    A fit that fails to certify is returned with ``report.converged`` false
    and a logged warning.
    """
    if data.n == 0:
        raise DomainError("cannot fit a hazard to an empty dataset")
    if M < 0:
        raise DomainError(f"variation budget must be nonnegative, got {M}")
    if basis is None:
        basis = build_basis(data.points())
    report = minimize_l1ball(PoissonHazardOracle(basis, data), M, init, tol=tol,
                             max_iter=max_iter, step_rule=step_rule)
    if not report.converged:
        log.warning("hazard fit at M=%g did not certify (gap %.3g)", M, report.fw_gap)
    return HazardModel(HalModel(basis, report.beta_hat, M, report=report), report)


def _grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float).ravel()
    if np.any((t < 0) | (t > 1)):
        raise DomainError("time grid must lie in [0, 1]")
    if np.any(np.diff(t) < 0):
        raise DomainError("time grid must be sorted")
    return t


def survival_curve(model: HazardModel, w, t_grid) -> np.ndarray:
    """``S(t | w) = exp(-int_0^t exp f(s, w) ds)`` on a sorted grid."""
    return model.time_slice(w).survival(_grid(t_grid))


class HazardDensity:
    """Density ``p(u | w) = alpha(u | w) S(u | w)`` induced by a hazard model on [0, 1].

    It integrates to ``1 - S(1 | w)`` over [0, 1]; the missing mass is the
    deficiency.
    """

    def __init__(self, model: HazardModel):
        self.model = model

    def __call__(self, u, w=None) -> np.ndarray:
        f = self.model.time_slice(w)
        u = np.asarray(u, dtype=float)
        if np.any((u < 0) | (u > 1)):
            raise DomainError("u must lie in [0, 1]")
        # in log space: past a piece with overflowing rate the density is 0, not inf * 0
        with np.errstate(over="ignore"):
            return np.exp(f(u) - f.integral_exp(u))

    def cdf(self, u, w=None) -> np.ndarray:
        """``int_0^u p`` summed exactly over the pieces of the time partition."""
        f = self.model.time_slice(w)
        u = np.asarray(u, dtype=float)
        edges = f.edges
        with np.errstate(over="ignore", invalid="ignore"):
            rates = np.exp(f.values)
            # zero-length pieces add nothing even when their rate overflows
            lam = np.concatenate([[0.0], np.cumsum(np.where(f.lengths > 0, f.lengths * rates, 0.0))])
        # mass of full pieces: S(a) - S(b) = S(a) * (1 - exp(-rate * length))
        piece = np.exp(-lam[:-1]) * -np.expm1(-np.diff(lam))
        cum = np.concatenate([[0.0], np.cumsum(piece)])
        k = np.clip(np.searchsorted(edges, u, side="right") - 1, 0, edges.size - 1)
        part = u - edges[k]
        with np.errstate(invalid="ignore"):
            inner = np.where(part > 0, part * rates[k], 0.0)
        return cum[k] + np.exp(-lam[k]) * -np.expm1(-inner)

    def total_mass(self, w=None) -> float:
        return float(self.cdf(1.0, w))

    def deficiency(self, w=None) -> float:
        """``S(1 | w)``: the mass the hazard places beyond 1."""
        return float(self.model.time_slice(w).survival(1.0))


def hazard_to_density(model: HazardModel) -> HazardDensity:
    return HazardDensity(model)


# --- empirical risk minimization is ill-posed --------------------------------

def first_decrease(f0: PiecewiseConstantFn, times) -> int | None:
    """Index ``j`` of the first adjacent pair of sorted distinct times where ``f0`` drops."""
    t = np.unique(np.asarray(times, dtype=float))
    v = f0(t)
    drops = np.flatnonzero(v[:-1] > v[1:])
    return int(drops[0]) if drops.size else None


class Counterexample(NamedTuple):
    f_check: PiecewiseConstantFn
    old_risk: float
    new_risk: float


def improve_risk_counterexample(f0: PiecewiseConstantFn, data: SurvivalDataset) -> Counterexample | None:
    """Lower the empirical risk of a log-hazard that decreases between observed times.

    At the first adjacent distinct times ``a < b`` with ``f0(a) > f0(b)``,
    the function is replaced on ``[a + eps, b)`` by ``V``, the minimum of
    ``f0`` over ``[a, b]``.  ``eps`` is half the distance from ``a`` to the
    first breakpoint of ``f0`` inside ``(a, b)``, or half of ``b - a`` when
    there is none.  The result agrees with ``f0`` at every observed time, has
    no larger variation, and has strictly smaller risk.  Returns None when
    ``f0`` is nondecreasing across the observed times.
    """
    if data.w.shape[1]:
        raise UnsupportedError("the counterexample construction needs data without covariates")
    times = np.unique(data.time)
    j = first_decrease(f0, times)
    if j is None:
        return None
    a, b = times[j], times[j + 1]
    bp = f0.breakpoints
    inside = bp[(bp > a) & (bp < b)]
    eps = 0.5 * ((inside[0] if inside.size else b) - a)
    # values taken on [a, b]: the piece holding a, every piece starting inside, and f0(b)
    closed = np.concatenate([[a], inside, [b]])
    V = float(f0(closed).min())
    new_bp = np.union1d(bp, [a + eps, b])
    new_bp = new_bp[new_bp <= 1.0]
    left = np.concatenate([[0.0], new_bp])
    vals = np.where((left >= a + eps) & (left < b), V, f0(left))
    f_check = PiecewiseConstantFn(new_bp, vals).canonical()
    return Counterexample(f_check, pl_risk(f0, data), pl_risk(f_check, data))


# --- exact L2 distances between step-hazard laws ------------------------------

class StepHazardDistances(NamedTuple):
    survival: float
    hazard: float
    density: float


def _exp_integral(r, length):
    """``int_0^length exp(-r s) ds`` without cancellation for small ``r``."""
    r = np.asarray(r, dtype=float)
    safe = np.where(r == 0, 1.0, r)
    return np.where(r == 0, length, -np.expm1(-safe * length) / safe)


def step_hazard_distances(hp: PiecewiseConstantFn, hq: PiecewiseConstantFn) -> StepHazardDistances:
    """Lebesgue L2 distances on [0, 1] between two hazards, their survivals and densities.

    ``hp`` and ``hq`` are the hazards themselves (nonnegative step functions),
    not log-hazards.  All three integrals are evaluated piece by piece in
    closed form on the common refinement.
    """
    if np.any(hp.values < 0) or np.any(hq.values < 0):
        raise DomainError("hazards must be nonnegative")
    bp = np.union1d(hp.breakpoints, hq.breakpoints)
    edges = np.concatenate([[0.0], bp])
    ell = np.diff(np.concatenate([edges, [1.0]]))
    a, b = hp(edges), hq(edges)
    A = np.exp(-np.concatenate([[0.0], np.cumsum(a * ell)[:-1]]))
    B = np.exp(-np.concatenate([[0.0], np.cumsum(b * ell)[:-1]]))
    i_pp, i_pq, i_qq = _exp_integral(2 * a, ell), _exp_integral(a + b, ell), _exp_integral(2 * b, ell)
    s2 = (B * B * i_qq - 2 * A * B * i_pq + A * A * i_pp).sum()
    q2 = (b * b * B * B * i_qq - 2 * a * b * A * B * i_pq + a * a * A * A * i_pp).sum()
    h2 = (ell * (b - a) ** 2).sum()
    return StepHazardDistances(*(float(np.sqrt(max(v, 0.0))) for v in (s2, h2, q2)))
