"""Empirical risks, their gradients, and solver oracles for the three HAL losses.

All risks are empirical means.  Integrals over the first coordinate (time for
hazards, the outcome ``u`` for densities) are computed exactly: the models
are step functions in that coordinate, so each integral is a finite sum over
the pieces of a known partition.

The hazard and density oracles use a factorization of the design: a column's
indicator at ``(t, w)`` is ``1{knot_t <= t} * 1{knot_w <= w}``, so the model
on a grid of first-coordinate values and a set of covariate rows is the
product ``(C * beta) @ B.T`` of a covariate-pattern matrix ``C`` and a
first-coordinate indicator matrix ``B``.  Covariate rows that switch on the
same columns share one pattern, which is where repeated normalizers are
cached.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .basis import BasisSet, HalModel, design_matrix
from .data import DensityDataset, RegressionDataset, SurvivalDataset
from .errors import ConsistencyError, DomainError, ShapeError
from .solver import ObjectiveOracle, QuadraticOracle
from .stepfn import PiecewiseConstantFn


# --- squared error -----------------------------------------------------------

class LeastSquaresOracle(ObjectiveOracle):
    """``mean((A beta - y)^2)`` over a dense design."""

    def __init__(self, A, y):
        self.A = np.asarray(A, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if self.A.shape[0] != self.y.size:
            raise ShapeError("design rows and responses differ in number")
        if self.y.size == 0:
            raise DomainError("squared-error risk of an empty dataset is undefined")
        self.dimension = self.A.shape[1]

    def __call__(self, beta):
        r = self.A @ beta - self.y
        n = self.y.size
        return float(r @ r / n), (2.0 / n) * (self.A.T @ r)

    def hessian(self, beta, columns):
        a = self.A[:, np.asarray(columns, dtype=int)]
        return (2.0 / self.y.size) * (a.T @ a)

    def restrict(self, columns):
        a = self.A[:, np.asarray(columns, dtype=int)]
        n = self.y.size
        return QuadraticOracle(a.T @ a / n, a.T @ self.y / n, float(self.y @ self.y / n))


def sq_error_risk(model: HalModel, data: RegressionDataset):
    """Mean squared error of ``model`` on ``data`` and its gradient in beta."""
    if data.n == 0:
        raise DomainError("squared-error risk of an empty dataset is undefined")
    z, _ = model.transform.apply(data.x)
    A = design_matrix(model.basis, z).astype(float)
    return LeastSquaresOracle(A, data.y)(model.beta)


# --- first-coordinate factorization -----------------------------------------

def first_knots(basis: BasisSet) -> np.ndarray:
    """Sorted distinct positive first-coordinate knots (the model's breakpoints there)."""
    k = np.unique(basis.knot_matrix[:, 0])
    return k[k > 0]


class _Factors:
    """Indicator matrices ``B`` (edges x columns) and ``C`` (patterns x columns)."""

    def __init__(self, basis: BasisSet, edges, w):
        knots = basis.knot_matrix
        edges = np.asarray(edges, dtype=float)
        w = np.asarray(w, dtype=float)
        if w.shape[1] != basis.d - 1:
            raise ConsistencyError(
                f"covariates have {w.shape[1]} columns, basis expects {basis.d - 1}"
            )
        self.B = (knots[None, :, 0] <= edges[:, None]).astype(float)
        c = np.ones((w.shape[0], knots.shape[0]), dtype=bool)
        for j in range(1, basis.d):
            c &= w[:, j - 1, None] >= knots[None, :, j]
        if c.shape[0]:
            patterns, inverse, counts = np.unique(c, axis=0, return_inverse=True, return_counts=True)
        else:
            patterns = c
            inverse = np.empty(0, dtype=int)
            counts = np.empty(0, dtype=int)
        self.C = patterns.astype(float)
        self.pattern = np.asarray(inverse).ravel()
        self.counts = counts

    def values(self, beta, B=None, C=None):
        B = self.B if B is None else B
        C = self.C if C is None else C
        return (C * beta) @ B.T


class _FactoredOracle(ObjectiveOracle):
    """Shared plumbing for oracles built on :class:`_Factors`."""

    # coefficients act on a log scale, where Newton steps far from the
    # current point are unreliable
    newton_step_limit = 2.0

    def _live(self):
        """Mask of (pattern, edge) cells that carry weight in the risk."""
        raise NotImplementedError

    def step_size(self, direction):
        """Largest change of the linear predictor over cells that carry weight.

        Coordinates touching only weightless cells enter the risk linearly,
        so moving them needs no cap.
        """
        dv = (self.C * direction) @ self.B.T
        live = self._live()
        return float(np.abs(dv[live]).max()) if live.any() else 0.0

    def _init_common(self, B, C, linear, n):
        self.B, self.C, self.linear, self.n = B, C, linear, n
        self.dimension = B.shape[1]

    def restrict(self, columns):
        cols = np.asarray(columns, dtype=int)
        new = object.__new__(type(self))
        new.__dict__.update(self.__dict__)
        new._init_common(self.B[:, cols], self.C[:, cols], self.linear[cols], self.n)
        return new

    def _grad(self, weights):
        return ((weights @ self.B) * self.C).sum(axis=0) / self.n - self.linear

    def _stack(self, columns):
        """Design rows for every (pattern, edge) pair on ``columns``: shape (P * J, k)."""
        cols = np.asarray(columns, dtype=int)
        return (self.C[:, None, cols] * self.B[None, :, cols]).reshape(-1, cols.size)


class PoissonHazardOracle(_FactoredOracle):
    """Partial-likelihood risk of a HAL log-hazard, written over person-period pieces."""

    def __init__(self, basis: BasisSet, data: SurvivalDataset):
        if data.n == 0:
            raise DomainError("hazard risk of an empty dataset is undefined")
        if basis.d != data.d:
            raise ConsistencyError(f"basis has d={basis.d}, data has d={data.d}")
        times = np.unique(np.concatenate([data.time[data.time > 0], first_knots(basis)]))
        left = np.concatenate([[0.0], times[:-1]])
        right = times
        f = _Factors(basis, left, data.w)
        exposure = np.clip(np.minimum(right[None, :], data.time[:, None]) - left[None, :], 0.0, None)
        agg = np.zeros((f.C.shape[0], left.size))
        np.add.at(agg, f.pattern, exposure)
        events = data.status == 1
        ev = design_matrix(basis, data.points()[events]).sum(axis=0).astype(float) / data.n
        self.exposure = agg
        self._init_common(f.B, f.C, ev, data.n)

    def __call__(self, beta):
        wexp = self._weighted_rates(beta)
        value = wexp.sum() / self.n - self.linear @ beta
        return float(value), self._grad(wexp)

    def _live(self):
        return self.exposure > 0

    def _weighted_rates(self, beta):
        """``exposure * exp(f)``, with cells of zero exposure exactly zero."""
        v = (self.C * beta) @ self.B.T
        live = self.exposure > 0
        return np.where(live, self.exposure * np.exp(np.where(live, v, 0.0)), 0.0)

    def hessian(self, beta, columns):
        wexp = self._weighted_rates(beta)
        X = self._stack(columns)
        return X.T @ (X * wexp.reshape(-1, 1)) / self.n


class DensityOracle(_FactoredOracle):
    """Conditional log-density risk ``mean(log int_0^1 exp g(z, W) dz - g(U, W))``."""

    def __init__(self, basis: BasisSet, data: DensityDataset):
        if data.n == 0:
            raise DomainError("density risk of an empty dataset is undefined")
        if basis.d != data.d:
            raise ConsistencyError(f"basis has d={basis.d}, data has d={data.d}")
        k = first_knots(basis)
        edges = np.concatenate([[0.0], k[k < 1.0]])
        lengths = np.diff(np.concatenate([edges, [1.0]]))
        f = _Factors(basis, edges, data.w)
        self.log_lengths = np.log(lengths)
        self.weights = f.counts.astype(float)
        lin = design_matrix(basis, data.points()).sum(axis=0).astype(float) / data.n
        self._init_common(f.B, f.C, lin, data.n)

    def __call__(self, beta):
        v = (self.C * beta) @ self.B.T + self.log_lengths
        lse = logsumexp(v, axis=1)
        value = self.weights @ lse / self.n - self.linear @ beta
        pi = np.exp(v - lse[:, None]) * self.weights[:, None]
        return float(value), self._grad(pi)

    def _live(self):
        return np.broadcast_to(np.isfinite(self.log_lengths), (self.C.shape[0], self.B.shape[0]))

    def hessian(self, beta, columns):
        v = (self.C * beta) @ self.B.T + self.log_lengths
        pi = softmax(v, axis=1)
        X = self._stack(columns)
        P, J = pi.shape
        mean = np.einsum("pj,pjk->pk", pi, X.reshape(P, J, -1))
        second = X.T @ (X * (pi * self.weights[:, None]).reshape(-1, 1))
        return (second - mean.T @ (mean * self.weights[:, None])) / self.n


# --- partial likelihood --------------------------------------------------------

def slice_first(model: HalModel, w) -> PiecewiseConstantFn:
    """The step function ``t -> f(t, w)`` of a model whose first coordinate is time."""
    w = np.asarray(w, dtype=float).ravel()
    if w.size != model.d - 1:
        raise ShapeError(f"covariate vector has {w.size} entries, model expects {model.d - 1}")
    bp = first_knots(model.basis)
    left = np.concatenate([[0.0], bp])
    pts = np.column_stack([left, np.broadcast_to(w, (left.size, w.size))])
    return PiecewiseConstantFn(bp, model(pts))


def _row_slices(f, data: SurvivalDataset, breakpoints):
    """Yield ``(rows, step_fn)`` groups covering every row of ``data``."""
    extra = np.unique(data.time)
    if breakpoints is not None:
        extra = np.union1d(extra, np.asarray(breakpoints, dtype=float))
    if isinstance(f, PiecewiseConstantFn):
        yield np.arange(data.n), f.refine(extra)
        return
    if data.w.shape[1]:
        uw, inv = np.unique(data.w, axis=0, return_inverse=True)
        inv = np.asarray(inv).ravel()
    else:
        uw, inv = np.empty((1, 0)), np.zeros(data.n, dtype=int)
    for k, w in enumerate(uw):
        rows = np.flatnonzero(inv == k)
        if isinstance(f, HalModel):
            yield rows, slice_first(f, w).refine(extra)
        else:
            yield rows, PiecewiseConstantFn.from_callable(lambda t, w=w: np.array([f(s, w) for s in t]), extra)


def pl_risk(f, data: SurvivalDataset, breakpoints=None) -> float:
    """Exact empirical partial-likelihood risk ``mean(int_0^T exp f(u, W) du - D f(T, W))``.

    ``f`` is a HalModel over (time, w), a PiecewiseConstantFn of time, or a
    callable ``f(t, w)`` that is constant between consecutive points of
    ``breakpoints`` merged with the observed times.
    """
    if data.n == 0:
        raise DomainError("partial-likelihood risk of an empty dataset is undefined")
    if isinstance(f, HalModel) and f.d != data.d:
        raise ConsistencyError(f"model has d={f.d}, data has d={data.d}")
    total = 0.0
    for rows, step in _row_slices(f, data, breakpoints):
        t = data.time[rows]
        total += step.integral_exp(t).sum() - (data.status[rows] * step(t)).sum()
    return float(total / data.n)


@dataclass(frozen=True, eq=False)
class PersonPeriodTable:
    """One row per (subject, piece of the unique-time partition) with positive exposure."""

    subject: np.ndarray
    interval: np.ndarray
    w: np.ndarray
    length: np.ndarray
    eval_time: np.ndarray
    event: np.ndarray
    event_time: np.ndarray
    n_subjects: int
    breakpoints: np.ndarray

    def __len__(self) -> int:
        return self.subject.size


def expand_person_period(data: SurvivalDataset, breakpoints=None) -> PersonPeriodTable:
    """Split each subject's follow-up at the distinct observed times.

    ``breakpoints`` adds extra cut points (e.g. a model's own time knots).
    The event indicator sits on the subject's last row and is scored at the
    subject's own time, the right end of that row's piece.
    """
    times = np.unique(data.time[data.time > 0])
    if breakpoints is not None:
        b = np.asarray(breakpoints, dtype=float)
        times = np.union1d(times, b[(b > 0) & (b <= 1)])
    left = np.concatenate([[0.0], times[:-1]])
    cols = {k: [] for k in ("subject", "interval", "length", "eval_time", "event", "event_time")}
    for i, (t, s) in enumerate(zip(data.time, data.status)):
        lengths = np.minimum(times, t) - left
        js = np.flatnonzero(lengths > 0)
        if js.size == 0:
            if s != 1:
                continue
            # an event at time 0 carries no exposure but still scores f(0, w)
            js = np.array([0])
            lengths = np.zeros(1)
        last = js[-1]
        for j in js:
            cols["subject"].append(i)
            cols["interval"].append(j)
            cols["length"].append(lengths[j])
            cols["eval_time"].append(left[j])
            cols["event"].append(int(s) if j == last else 0)
            cols["event_time"].append(t if j == last else np.nan)
    subj = np.asarray(cols["subject"], dtype=int)
    return PersonPeriodTable(
        subject=subj,
        interval=np.asarray(cols["interval"], dtype=int),
        w=data.w[subj] if subj.size else np.empty((0, data.w.shape[1])),
        length=np.asarray(cols["length"], dtype=float),
        eval_time=np.asarray(cols["eval_time"], dtype=float),
        event=np.asarray(cols["event"], dtype=int),
        event_time=np.asarray(cols["event_time"], dtype=float),
        n_subjects=data.n,
        breakpoints=times,
    )


def pl_risk_poisson(model: HalModel, table: PersonPeriodTable):
    """Partial-likelihood risk from person-period rows, with its gradient in beta."""
    if model.d != 1 + table.w.shape[1]:
        raise ConsistencyError(f"model has d={model.d}, table rows have d={1 + table.w.shape[1]}")
    missing = np.setdiff1d(first_knots(model.basis), table.breakpoints)
    if missing.size:
        raise ConsistencyError(
            f"model time knot {missing[0]!r} is not a breakpoint of the table; "
            "expand with the model's knots"
        )
    exp_pts = np.column_stack([table.eval_time, table.w])
    A = design_matrix(model.basis, exp_pts).astype(float)
    ev = table.event == 1
    E = design_matrix(model.basis, np.column_stack([table.event_time[ev], table.w[ev]])).astype(float)
    eta = A @ model.beta
    rate = table.length * np.exp(eta)
    n = table.n_subjects
    value = (rate.sum() - (E @ model.beta).sum()) / n
    grad = (A.T @ rate - E.sum(axis=0)) / n
    return float(value), grad


# --- log-density ----------------------------------------------------------------

def log_normalizer(g, w, breakpoints) -> float:
    """``log int_0^1 exp g(z, w) dz`` for ``g`` constant between sorted breakpoints."""
    bp = np.unique(np.asarray(breakpoints, dtype=float))
    bp = bp[(bp > 0) & (bp < 1)]
    left = np.concatenate([[0.0], bp])
    lengths = np.diff(np.concatenate([left, [1.0]]))
    vals = np.array([g(z, w) for z in left], dtype=float)
    return float(logsumexp(vals, b=lengths))


def density_risk(beta, basis: BasisSet, data: DensityDataset):
    """Mean conditional log-density loss of ``g = sum beta_k h_k`` and its gradient."""
    beta = np.asarray(beta, dtype=float)
    if beta.size != basis.column_count:
        raise ShapeError(f"beta has {beta.size} entries, basis has {basis.column_count} columns")
    return DensityOracle(basis, data)(beta)
