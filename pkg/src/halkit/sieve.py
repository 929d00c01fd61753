"""L2(Lebesgue) projection onto the HAL sieve and its explicit approximating element.

A projection target supplies the moments ``m_k = int h_k f`` for each basis
column and its squared norm ``int f^2``; the projection then minimizes
``beta' G beta - 2 beta' m`` over the l1 ball, where ``G`` is the Gram
matrix.  Moments are exact for indicator sums and the product target
``prod_j x_j``, and use a fixed scrambled Sobol point set otherwise.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np
from scipy.stats import qmc

from .basis import (BasisFunction, BasisSet, HalModel, _as_points, design_matrix, gram_matrix,
                    hal_column_index)
from .errors import DomainError, NumericalError, ShapeError
from .solver import DEFAULT_MAX_ITER, DEFAULT_TOL, QuadraticOracle, minimize_l1ball

QMC_LOG2_POINTS = 14
QMC_SEED = 0


def qmc_points(d: int, log2_points: int = QMC_LOG2_POINTS, seed: int = QMC_SEED) -> np.ndarray:
    """The shared scrambled Sobol point set used for every Monte Carlo integral."""
    return qmc.Sobol(d, scramble=True, seed=seed).random_base2(log2_points)


class Target:
    """A function on the unit cube with known (or estimated) basis moments."""

    d: int

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def moments(self, basis: BasisSet) -> np.ndarray:
        raise NotImplementedError

    def sq_norm(self) -> float:
        raise NotImplementedError


class HalTarget(Target):
    """A finite indicator sum, given as a HalModel; all integrals exact."""

    def __init__(self, model: HalModel):
        self.model = model
        self.d = model.d

    def __call__(self, x):
        return self.model(_as_points(x, self.d))

    def moments(self, basis):
        s = self.model.support()
        return gram_matrix(basis, None, self.model.basis, s) @ self.model.beta[s]

    def sq_norm(self):
        s = self.model.support()
        b = self.model.beta[s]
        return float(b @ gram_matrix(self.model.basis, s) @ b)


def step_target(knot) -> HalTarget:
    """``x -> 1{knot <= x}`` (componentwise)."""
    knot = np.atleast_1d(np.asarray(knot, dtype=float))
    d = knot.size
    fn = BasisFunction(tuple(range(d)), tuple(knot))
    return HalTarget(HalModel(BasisSet(d, [fn], has_intercept=False), [1.0], 1.0))


class ProductTarget(Target):
    """``x -> prod_j x_j``; for ``d = 1`` this is the identity."""

    def __init__(self, d: int = 1):
        self.d = int(d)

    def __call__(self, x):
        return np.prod(_as_points(x, self.d), axis=1)

    def moments(self, basis):
        return np.prod((1.0 - basis.knot_matrix**2) / 2.0, axis=1)

    def sq_norm(self):
        return 3.0 ** -self.d


class EvaluatorTarget(Target):
    """Any vectorized evaluator; integrals use the shared quasi-Monte Carlo points."""

    def __init__(self, fn: Callable, d: int, points: np.ndarray | None = None):
        self.fn = fn
        self.d = int(d)
        self.points = qmc_points(self.d) if points is None else _as_points(points, self.d)
        vals = np.asarray(fn(self.points), dtype=float).ravel()
        bad = np.flatnonzero(~np.isfinite(vals))
        if bad.size:
            raise NumericalError(f"target evaluator is not finite at quadrature point {bad[0]}")
        self.values = vals

    def __call__(self, x):
        return np.asarray(self.fn(_as_points(x, self.d)), dtype=float)

    def moments(self, basis):
        return self.values @ design_matrix(basis, self.points) / self.values.size

    def sq_norm(self):
        return float(self.values @ self.values / self.values.size)


class MomentTarget(Target):
    """Moments supplied directly, one per column of a fixed basis."""

    def __init__(self, moments, sq_norm: float = float("nan")):
        self._m = np.asarray(moments, dtype=float)
        self._sq = float(sq_norm)

    def moments(self, basis):
        if self._m.size != basis.column_count:
            raise ShapeError(f"{self._m.size} moments for {basis.column_count} columns")
        return self._m

    def sq_norm(self):
        return self._sq


def as_target(target, d: int) -> Target:
    if isinstance(target, Target):
        return target
    if isinstance(target, HalModel):
        return HalTarget(target)
    if callable(target):
        return EvaluatorTarget(target, d)
    return MomentTarget(target)


def project_L2(target, basis: BasisSet, M: float, *, tol: float = DEFAULT_TOL,
               max_iter: int = DEFAULT_MAX_ITER, step_rule: str = "apg") -> HalModel:
    """L2(Lebesgue)-closest element of ``{sum beta_k h_k : ||beta||_1 <= M}`` to ``target``.

    ``target`` is a :class:`Target`, a HalModel, a vectorized evaluator, or
    an array of moments.  The solve report's objective is
    ``||f - target||^2 - ||target||^2``.
    """
    if M < 0:
        raise DomainError(f"variation budget must be nonnegative, got {M}")
    t = as_target(target, basis.d)
    m = t.moments(basis)
    oracle = QuadraticOracle(gram_matrix(basis), m, 0.0)
    report = minimize_l1ball(oracle, M, tol=tol, max_iter=max_iter, step_rule=step_rule)
    return HalModel(basis, report.beta_hat, M, report=report)


def l2_error(model: HalModel, target) -> float:
    """``||model - target||`` in L2(Lebesgue), exact whenever the target's moments are."""
    t = as_target(target, model.d)
    s = model.support()
    b = model.beta[s]
    sq = b @ gram_matrix(model.basis, s) @ b - 2.0 * b @ t.moments(model.basis)[s] + t.sq_norm()
    return float(np.sqrt(max(sq, 0.0)))


def sieve_element(points, derivative_oracles: Mapping[tuple, Callable], f_star_at_zero: float) -> HalModel:
    """Explicit sieve approximation built from section derivatives at the data.

    Column ``(s, i)`` gets ``(1/n) * 1{X_{s,i} > 0} * D_s(X_{s,i})`` where
    ``D_s`` is ``derivative_oracles[s]`` (sections with no oracle get zero),
    and the intercept is ``f_star_at_zero``.  Oracles take an ``(n, |s|)``
    array and return ``n`` values.  Coefficients of coinciding columns add.
    """
    x = _as_points(points)
    n, d = x.shape
    basis, index_of = hal_column_index(x)
    beta = np.zeros(basis.column_count)
    beta[0] = float(f_star_at_zero)
    for sec, oracle in derivative_oracles.items():
        sec = tuple(int(j) for j in sec)
        if sec not in index_of:
            raise ShapeError(f"section {sec} does not exist in dimension {d}")
        xs = x[:, list(sec)]
        vals = np.asarray(oracle(xs), dtype=float).ravel()
        if vals.size != n:
            raise ShapeError(f"oracle for section {sec} returned {vals.size} values for {n} points")
        bad = np.flatnonzero(~np.isfinite(vals))
        if bad.size:
            raise NumericalError(f"derivative oracle for section {sec} is not finite at point {bad[0]}")
        positive = np.all(xs > 0, axis=1)
        np.add.at(beta, index_of[sec], np.where(positive, vals, 0.0) / n)
    return HalModel(basis, beta, float(np.abs(beta).sum()))


def sup_error(model, reference: Callable, grid) -> float:
    """Largest absolute difference between two evaluators over a grid of points."""
    g = np.asarray(grid, dtype=float)
    if g.size == 0:
        raise DomainError("sup_error needs a nonempty grid")
    d = model.d if isinstance(model, HalModel) else (g.shape[1] if g.ndim == 2 else 1)
    g = _as_points(g, d)
    return float(np.abs(np.asarray(model(g)) - np.asarray(reference(g))).max())
