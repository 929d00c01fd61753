"""Univariate right-continuous step functions on [0, 1]."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError


@dataclass(frozen=True, eq=False)
class PiecewiseConstantFn:
    """Step function with ``values[0]`` on ``[0, b_1)`` and ``values[k]`` on ``[b_k, b_{k+1})``.

    Breakpoints are strictly increasing and lie in ``(0, 1]``; the last value
    holds from the last breakpoint through 1.
    """

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.array(self.breakpoints, dtype=float).ravel()
        vals = np.array(self.values, dtype=float).ravel()
        if vals.size != bp.size + 1:
            raise ShapeError(f"{bp.size} breakpoints need {bp.size + 1} values, got {vals.size}")
        if bp.size and (bp[0] <= 0.0 or bp[-1] > 1.0 or np.any(np.diff(bp) <= 0)):
            raise DomainError("breakpoints must be strictly increasing and inside (0, 1]")
        if not np.all(np.isfinite(vals)):
            raise DomainError("step function values must be finite")
        bp.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, c: float) -> "PiecewiseConstantFn":
        return cls(np.empty(0), [c])

    @classmethod
    def from_callable(cls, fn, breakpoints) -> "PiecewiseConstantFn":
        """Sample ``fn`` at the left end of each piece defined by ``breakpoints``."""
        bp = np.unique(np.asarray(breakpoints, dtype=float))
        bp = bp[(bp > 0.0) & (bp <= 1.0)]
        left = np.concatenate([[0.0], bp])
        return cls(bp, np.asarray(fn(left), dtype=float))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.values[np.searchsorted(self.breakpoints, t, side="right")]

    @property
    def edges(self) -> np.ndarray:
        """Left endpoints of the pieces, starting at 0."""
        return np.concatenate([[0.0], self.breakpoints])

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(np.concatenate([self.edges, [1.0]]))

    def refine(self, extra) -> "PiecewiseConstantFn":
        """Same function written over the union of its breakpoints and ``extra``."""
        extra = np.asarray(extra, dtype=float).ravel()
        bp = np.union1d(self.breakpoints, extra[(extra > 0.0) & (extra <= 1.0)])
        return PiecewiseConstantFn(bp, self(np.concatenate([[0.0], bp])))

    def canonical(self) -> "PiecewiseConstantFn":
        """Drop breakpoints at which the value does not change."""
        keep = np.flatnonzero(np.diff(self.values) != 0)
        return PiecewiseConstantFn(self.breakpoints[keep], np.concatenate([self.values[:1], self.values[keep + 1]]))

    def integral_exp(self, upper) -> np.ndarray:
        """``int_0^u exp(f(s)) ds`` for each ``u`` in ``upper`` (exact)."""
        u = np.asarray(upper, dtype=float)
        if np.any((u < 0) | (u > 1)):
            raise DomainError("integration limits must lie in [0, 1]")
        edges = self.edges
        with np.errstate(over="ignore"):
            rates = np.exp(self.values)
        # zero-length pieces contribute nothing even when the rate overflows
        pieces = np.where(self.lengths > 0, self.lengths * np.where(self.lengths > 0, rates, 0.0), 0.0)
        cum = np.concatenate([[0.0], np.cumsum(pieces[:-1])])
        k = np.searchsorted(edges, u, side="right") - 1
        part = u - edges[k]
        return cum[k] + np.where(part > 0, part * np.where(part > 0, rates[k], 0.0), 0.0)

    def survival(self, t) -> np.ndarray:
        """``exp(-int_0^t exp(f))`` when ``f`` is read as a log-hazard."""
        return np.exp(-self.integral_exp(t))

    def svn(self) -> float:
        return float(abs(self.values[0]) + np.abs(np.diff(self.values)).sum())

    def __repr__(self) -> str:
        return f"PiecewiseConstantFn(breakpoints={self.breakpoints.tolist()}, values={self.values.tolist()})"
