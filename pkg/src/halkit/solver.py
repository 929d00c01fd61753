"""Smooth convex minimization over the l1 ball ``{beta : ||beta||_1 <= M}``.

The workhorse is monotone accelerated projected gradient (FISTA with
function-value restart) and a backtracking step.  Oracles that can be
restricted to a subset of coordinates are solved on a growing working set,
with the full gradient used only to certify optimality and to pick new
columns.  Oracles that expose ``hessian(beta, columns)`` additionally get Newton
steps on the current face of the ball (the support of beta, plus the
norm constraint when it is active).  This removes the slow tail of
first-order methods once the support has settled; for quadratics a
single step is the exact face minimizer.

Optimality is certified by the Frank-Wolfe gap, which for the l1 ball is
``<g, beta> + M * max|g|``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import DomainError, NumericalError, ShapeError

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 50_000
STEP_RULES = ("apg", "fw")
# Newton steps are tried with exact and with truncated pseudo-inverses; the
# truncated one avoids huge steps along nearly flat directions
_NEWTON_RCONDS = (None,)


def project_l1(v, M: float) -> np.ndarray:
    """Euclidean projection of ``v`` onto the l1 ball of radius ``M``.

    Sort-based soft threshold; vectors already inside (or on) the ball are
    returned unchanged.
    """
    if M < 0:
        raise DomainError(f"l1 radius must be nonnegative, got {M}")
    v = np.asarray(v, dtype=float)
    a = np.abs(v)
    if a.sum() <= M:
        return v.copy()
    if M == 0:
        return np.zeros_like(v)
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    # the first index always qualifies in exact arithmetic; rounding can hide it when M is tiny
    hits = np.flatnonzero(u * k > css - M)
    rho = hits[-1] if hits.size else 0
    theta = (css[rho] - M) / (rho + 1.0)
    out = np.sign(v) * np.maximum(a - theta, 0.0)
    # rounding can leave the norm a few ulps above M
    s = np.abs(out).sum()
    while s > M:
        out *= (M / s) * (1.0 - 2.0**-52)
        s = np.abs(out).sum()
    return out


def fw_gap(gradient, beta, M: float) -> float:
    """Frank-Wolfe gap ``max_v <g, beta - v>`` over the vertices ``±M e_k``."""
    g = np.asarray(gradient, dtype=float)
    b = np.asarray(beta, dtype=float)
    if g.shape != b.shape:
        raise ShapeError("gradient and beta differ in shape")
    if g.size == 0:
        return 0.0
    return float(g @ b + M * np.abs(g).max())


@dataclass
class SolveReport:
    beta_hat: np.ndarray
    objective: float
    fw_gap: float
    iterations: int
    converged: bool
    M: float = float("nan")
    tol: float = DEFAULT_TOL
    step_rule: str = "apg"

    def certified(self, tol: float | None = None) -> bool:
        t = self.tol if tol is None else tol
        return self.fw_gap <= t * (1.0 + abs(self.objective))

    def to_dict(self) -> dict:
        return {
            "beta_hat": [float(v) for v in self.beta_hat],
            "objective": float(self.objective),
            "fw_gap": float(self.fw_gap),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "M": float(self.M),
            "tol": float(self.tol),
            "step_rule": self.step_rule,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SolveReport":
        return cls(
            beta_hat=np.asarray(doc["beta_hat"], dtype=float),
            objective=doc["objective"],
            fw_gap=doc["fw_gap"],
            iterations=doc["iterations"],
            converged=doc["converged"],
            M=doc.get("M", float("nan")),
            tol=doc.get("tol", DEFAULT_TOL),
            step_rule=doc.get("step_rule", "apg"),
        )


class ObjectiveOracle:
    """Callable returning ``(value, gradient)`` for a coefficient vector.

    Subclasses may implement ``restrict(columns)`` returning an oracle over
    the given coordinates (others held at zero) to enable working-set solves,
    and ``hessian(beta, columns)`` returning the Hessian block on
    ``columns`` to enable Newton polishing.  ``newton_step_limit`` caps the
    size of one Newton step as measured by ``step_size``.
    """

    dimension: int

    def __call__(self, beta: np.ndarray) -> tuple[float, np.ndarray]:
        raise NotImplementedError

    def step_size(self, direction: np.ndarray) -> float:
        """Size of a coefficient change, for the Newton step cap; the largest coordinate change."""
        return float(np.abs(direction).max())


class FunctionOracle(ObjectiveOracle):
    """Wrap a plain ``beta -> (value, gradient)`` function."""

    def __init__(self, fn: Callable[[np.ndarray], tuple[float, np.ndarray]], dimension: int):
        self.fn = fn
        self.dimension = int(dimension)

    def __call__(self, beta):
        return self.fn(beta)


class QuadraticOracle(ObjectiveOracle):
    """``beta' Q beta - 2 b' beta + c`` with symmetric positive semidefinite ``Q``."""

    def __init__(self, Q, b, c: float = 0.0):
        self.Q = np.asarray(Q, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.c = float(c)
        self.dimension = self.b.size

    def __call__(self, beta):
        Qb = self.Q @ beta
        return float(beta @ Qb - 2.0 * self.b @ beta + self.c), 2.0 * (Qb - self.b)

    def restrict(self, columns) -> "QuadraticOracle":
        cols = np.asarray(columns, dtype=int)
        return QuadraticOracle(self.Q[np.ix_(cols, cols)], self.b[cols], self.c)

    def lipschitz(self) -> float:
        if self.dimension == 0:
            return 1.0
        return max(2.0 * float(np.linalg.eigvalsh(self.Q)[-1]), 1e-12)

    def hessian(self, beta, columns):
        cols = np.asarray(columns, dtype=int)
        return 2.0 * self.Q[np.ix_(cols, cols)]


def _check(value, grad, it: int):
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        raise NumericalError(f"non-finite objective or gradient at iteration {it}")


def _evaluate(oracle, beta, it):
    value, grad = oracle(beta)
    value = float(value)
    grad = np.asarray(grad, dtype=float)
    _check(value, grad, it)
    return value, grad


def _trial(oracle, beta):
    """Evaluate a candidate point; a non-finite result just rejects the candidate."""
    with np.errstate(over="ignore", invalid="ignore"):
        value, grad = oracle(beta)
    value = float(value)
    grad = np.asarray(grad, dtype=float)
    if not np.isfinite(value) or not np.all(np.isfinite(grad)):
        return np.inf, grad
    return value, grad


_MAX_DOUBLINGS = 200


def _target(tol, value):
    return tol * (1.0 + abs(value))


@dataclass
class _State:
    x: np.ndarray
    f: float
    g: np.ndarray
    gap: float
    iterations: int = 0
    converged: bool = False
    history: list = field(default_factory=list)


def _initial_lipschitz(oracle, x, f, g, M) -> float:
    if isinstance(oracle, QuadraticOracle):
        return oracle.lipschitz()
    step = project_l1(x - g / max(np.abs(g).max(), 1e-12) * max(M, 1e-3) * 1e-3, M)
    dx = step - x
    nrm = np.linalg.norm(dx)
    if nrm == 0:
        return 1.0
    _, g2 = oracle(step)
    return max(np.linalg.norm(g2 - g) / nrm, 1e-8)


def _lin_solve(K, rhs, rcond):
    """Solve ``K v = rhs``; LU when it is accurate, otherwise a minimum-norm least-squares solve."""
    if rcond is None:
        try:
            with np.errstate(all="ignore"):
                v = np.linalg.solve(K, rhs)
            res = K @ v - rhs
            if np.all(np.isfinite(v)) and np.abs(res).max() <= 1e-9 * (np.abs(rhs).max() + 1e-300):
                return v
        except np.linalg.LinAlgError:
            pass
    cond = rcond if rcond is not None else np.finfo(float).eps * K.shape[0]
    return scipy.linalg.lstsq(K, rhs, cond=cond, lapack_driver="gelsy", check_finite=False)[0]


def _newton_target(oracle, M, x, g, face, sig, on_sphere, rcond, max_drops=30):
    """Minimize the local quadratic model over the face ``face`` with signs ``sig``.

    Primal active-set iteration: take the Newton step on the current face;
    if a coordinate would change sign, stop where the first one reaches
    zero, drop it and repeat, at most ``max_drops`` times.  The model
    value never increases.  Returns ``(target, multiplier)`` or None when
    the face empties.
    """
    H0 = np.asarray(oracle.hessian(x, face), dtype=float)
    z0 = x[face].astype(float)
    z = z0.copy()
    free = np.ones(face.size, dtype=bool)
    lam = 0.0
    for _ in range(min(face.size, max_drops) + 1):
        idx = np.flatnonzero(free)
        if idx.size == 0:
            return None
        gm = g[face][idx] + H0[idx] @ (z - z0)
        H = H0[np.ix_(idx, idx)]
        s = sig[idx]
        if on_sphere:
            k = idx.size
            kkt = np.zeros((k + 1, k + 1))
            kkt[:k, :k] = H
            kkt[:k, k] = s
            kkt[k, :k] = s
            rhs = np.concatenate([-gm, [M - s @ z[idx]]])
            sol = _lin_solve(kkt, rhs, rcond)
            d, lam = sol[:k], sol[k]
            resid = (kkt @ sol - rhs)[:k]
        else:
            d = _lin_solve(H, -gm, rcond)
            resid = H @ d + gm
        zi = z[idx]
        # an inconsistent system means the model is unbounded below along a
        # flat direction; for a symmetric system the residual spans it, so
        # follow that ray until the ratio test stops it
        if np.abs(resid).max() > 1e-9 * (np.abs(gm).max() + 1e-300):
            ray = -resid
            d = d + ray * ((2.0 * M + np.abs(zi).max()) / np.abs(ray).max())
        new = zi + d
        bad = np.sign(new) != s
        if not bad.any():
            z[idx] = new
            break
        # fraction of the step at which each offending coordinate hits zero
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(bad, zi / (zi - new), np.inf)
        frac = np.where(bad & (s * zi <= 0), 0.0, frac)
        alpha = float(np.clip(frac.min(), 0.0, 1.0))
        z[idx] = zi + alpha * d
        hit = bad & (frac <= alpha)
        z[idx[hit]] = 0.0
        free[idx[hit]] = False
    target = np.zeros_like(x)
    target[face] = z
    return target, lam


def _face_newton(oracle, M, state, it, max_steps=25):
    """Active-set Newton steps on faces of the ball near ``state.x``; keeps only improvements.

    Each step solves on the current support (with and without the norm
    constraint), drops coordinates whose sign would flip, and retries with
    coordinates whose gradient exceeds the constraint multiplier added.
    """
    improved = False
    state.gap = fw_gap(state.g, state.x, M)
    limit = getattr(oracle, "newton_step_limit", np.inf)
    slack_unit = 16 * np.finfo(float).eps
    for _ in range(max_steps):
        x, g = state.x, state.g
        sup = np.flatnonzero(x)
        if sup.size == 0:
            break
        sig = np.sign(x[sup])
        # near the optimum objective values differ only by rounding, which
        # scales with the size of the summed terms (bounded via ||beta||_1), so
        # candidates within that slack are ranked by their certificate
        slack = slack_unit * (1.0 + abs(state.f) + np.abs(x).sum())
        best = None
        # truncated solves are only tried when the exact ones all fail
        for rcond in _NEWTON_RCONDS:
            targets = []
            # the sphere step is tried even from interior points: along
            # directions of zero curvature it is the only Newton step that moves
            for on_sphere in (True, False):
                res = _newton_target(oracle, M, x, g, sup, sig, on_sphere, rcond)
                if res is None:
                    continue
                targets.append(res[0])
                lam = abs(res[1]) if on_sphere else 0.0
                out = np.setdiff1d(np.flatnonzero(np.abs(g) > lam * (1 + 1e-9)), sup)
                if out.size:
                    face = np.concatenate([sup, out])
                    fsig = np.concatenate([sig, -np.sign(g[out])])
                    res = _newton_target(oracle, M, x, g, face, fsig, on_sphere, rcond)
                    if res is not None:
                        targets.append(res[0])
            for target in targets:
                d = target - x
                if not np.any(d):
                    continue
                big = oracle.step_size(d) if hasattr(oracle, "step_size") else np.abs(d).max()
                step = min(1.0, limit / big) if big > 0 else 1.0
                for _ in range(12):
                    xn = project_l1(x + step * d, M)
                    fn, gn = _trial(oracle, xn)
                    if np.isfinite(fn):
                        gap = fw_gap(gn, xn, M)
                        if fn < state.f or (fn <= state.f + slack and gap < state.gap):
                            if best is None or (gap, fn) < (best[3], best[1]):
                                best = (xn, fn, gn, gap)
                            break
                    step *= 0.5
            if best is not None:
                break
        if best is None:
            break
        state.x, state.f, state.g, state.gap = best
        improved = True
        if state.gap <= _target(1e-3 * DEFAULT_TOL, state.f):
            break
    return improved


def _apg(oracle, M, x, f, g, max_iter, tol, *, stall_window=10, stall_rtol=1e-10,
         polish_every=20, it0=0) -> _State:
    gap = fw_gap(g, x, M)
    state = _State(x, f, g, gap, iterations=0, history=[f])
    if gap <= _target(tol, f):
        state.converged = True
        return state
    L = _initial_lipschitz(oracle, x, f, g, M)
    can_polish = hasattr(oracle, "hessian")
    failed_face = None

    def polish():
        # retrying a face on which Newton already failed is wasted work
        nonlocal failed_face
        face = np.sign(state.x).tobytes()
        if face == failed_face:
            return False
        ok = _face_newton(oracle, M, state, it0 + it)
        failed_face = None if ok else face
        return ok

    quadratic = isinstance(oracle, QuadraticOracle)
    eps = np.finfo(float).eps
    y, fy, gy = x, f, g
    t = 1.0
    x_prev = x
    for it in range(1, max_iter + 1):
        for _ in range(_MAX_DOUBLINGS):
            z = project_l1(y - gy / L, M)
            fz, gz = _trial(oracle, z)
            dz = z - y
            bound = fy + gy @ dz + 0.5 * L * (dz @ dz)
            if fz <= bound + 10 * eps * max(1.0, abs(fy)) or (quadratic and np.isfinite(fz)):
                break
            L *= 2.0
        else:
            raise NumericalError(f"no finite step found at iteration {it0 + it}")
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        if fz <= state.f:
            x_prev = state.x
            state.x, state.f, state.g = z, fz, gz
            mom = (t - 1.0) / t_new
            t = t_new
            y = state.x + mom * (state.x - x_prev) if mom > 0 else state.x
            fy, gy = _trial(oracle, y) if mom > 0 else (state.f, state.g)
            if not np.isfinite(fy):
                t = 1.0
                y, fy, gy = state.x, state.f, state.g
        else:
            # function-value restart
            t = 1.0
            y, fy, gy = state.x, state.f, state.g
        if not quadratic:
            L *= 0.98
        if can_polish and it % polish_every == 0 and polish():
            t = 1.0
            y, fy, gy = state.x, state.f, state.g
        state.iterations = it
        state.history.append(state.f)
        state.gap = fw_gap(state.g, state.x, M)
        if state.gap <= _target(tol, state.f):
            state.converged = True
            break
        h = state.history
        if len(h) > stall_window:
            old = h[-1 - stall_window]
            if old - state.f < stall_rtol * abs(old):
                if can_polish and polish():
                    state.gap = fw_gap(state.g, state.x, M)
                    t = 1.0
                    y, fy, gy = state.x, state.f, state.g
                    state.history.append(state.f)
                    if state.gap <= _target(tol, state.f):
                        state.converged = True
                        break
                    continue
                break
    return state


def _frank_wolfe(oracle, M, x, f, g, max_iter, tol) -> _State:
    state = _State(x, f, g, fw_gap(g, x, M), history=[f])
    L = _initial_lipschitz(oracle, x, f, g, M)
    for it in range(1, max_iter + 1):
        k = int(np.argmax(np.abs(state.g)))
        v = np.zeros_like(state.x)
        v[k] = -M * np.sign(state.g[k]) if state.g[k] != 0 else 0.0
        d = v - state.x
        gap = -(state.g @ d)
        state.gap = gap
        if gap <= _target(tol, state.f):
            state.converged = True
            break
        dd = d @ d
        for _ in range(_MAX_DOUBLINGS):
            gamma = min(1.0, gap / (L * dd)) if dd > 0 else 0.0
            xn = state.x + gamma * d
            fn, gn = _trial(oracle, xn)
            if fn <= state.f - gamma * gap + 0.5 * gamma**2 * L * dd + 1e-15 * abs(state.f):
                break
            L *= 2.0
        else:
            raise NumericalError(f"no finite step found at iteration {it}")
        L *= 0.9
        if fn <= state.f:
            state.x, state.f, state.g = xn, fn, gn
        state.iterations = it
        state.history.append(state.f)
    state.gap = fw_gap(state.g, state.x, M)
    state.converged = state.gap <= _target(tol, state.f)
    return state


def _working_set(oracle, M, x, f, g, max_iter, tol, *, initial_size=20, max_rounds=500) -> _State:
    n = oracle.dimension
    active = set(np.flatnonzero(x).tolist())
    order = np.argsort(-np.abs(g), kind="stable")
    active.update(order[: max(initial_size, 2 * len(active))].tolist())
    total = 0
    inner_tol = 0.5 * tol
    state = _State(x, f, g, fw_gap(g, x, M), history=[f])
    for _ in range(max_rounds):
        cols = np.array(sorted(active), dtype=int)
        sub = oracle.restrict(cols)
        fs, gs = _evaluate(sub, state.x[cols], total)
        inner = _apg(sub, M, state.x[cols].copy(), fs, gs, max_iter - total, inner_tol, it0=total)
        total += inner.iterations
        xn = np.zeros(n)
        xn[cols] = inner.x
        fn, gn = _evaluate(oracle, xn, total)
        # the restricted and full oracles may round differently
        if fn <= state.f + 1e-12 * (1.0 + abs(state.f)):
            state.x, state.f, state.g = xn, fn, gn
        state.history.extend(inner.history[1:])
        state.gap = fw_gap(state.g, state.x, M)
        state.iterations = total
        if state.gap <= _target(tol, state.f):
            state.converged = True
            break
        if total >= max_iter:
            break
        in_ws = np.zeros(n, dtype=bool)
        in_ws[cols] = True
        ag = np.abs(state.g)
        level = ag[cols].max() if cols.size else 0.0
        outside = np.flatnonzero(~in_ws & (ag > level))
        if outside.size == 0:
            outside = np.flatnonzero(~in_ws & (ag >= level) & (ag > 0))
        if outside.size and ag[outside].max() > level * (1 - 1e-12):
            pick = outside[np.argsort(-ag[outside], kind="stable")][: max(5, cols.size // 2)]
            active.update(pick.tolist())
        else:
            inner_tol *= 0.1
            if inner_tol < 1e-6 * tol:
                break
    return state


def minimize_l1ball(oracle, M: float, init=None, *, max_iter: int = DEFAULT_MAX_ITER,
                    tol: float = DEFAULT_TOL, step_rule: str = "apg",
                    working_set: bool | None = None) -> SolveReport:
    """Minimize a smooth convex objective over ``||beta||_1 <= M``.

    Parameters
    ----------
    oracle : ObjectiveOracle
        Returns ``(value, gradient)``; must expose ``dimension``.
    M : float
        Ball radius.
    init : array, optional
        Warm start; projected onto the ball if infeasible.  Zeros by default.
    max_iter, tol : int, float
        Iteration budget and certificate tolerance; the solve is declared
        converged when ``fw_gap <= tol * (1 + |objective|)``.
    step_rule : {"apg", "fw"}
        Accelerated projected gradient or plain Frank-Wolfe.
    working_set : bool, optional
        Force working-set mode on or off; by default it is used whenever the
        oracle supports ``restrict`` and has more than 40 coordinates.
    """
    if M < 0:
        raise DomainError(f"variation budget must be nonnegative, got {M}")
    if step_rule not in STEP_RULES:
        raise DomainError(f"unknown step rule {step_rule!r}; expected one of {STEP_RULES}")
    dim = int(oracle.dimension)
    x = np.zeros(dim) if init is None else project_l1(np.asarray(init, dtype=float).ravel(), M)
    if x.size != dim:
        raise ShapeError(f"init has {x.size} entries, oracle expects {dim}")
    f, g = _evaluate(oracle, x, 0)
    if M == 0:
        return SolveReport(x, f, fw_gap(g, x, 0.0), 0, True, M, tol, step_rule)
    if step_rule == "fw":
        state = _frank_wolfe(oracle, M, x, f, g, max_iter, tol)
    else:
        use_ws = working_set if working_set is not None else (hasattr(oracle, "restrict") and dim > 40)
        if use_ws:
            state = _working_set(oracle, M, x, f, g, max_iter, tol)
        else:
            state = _apg(oracle, M, x, f, g, max_iter, tol)
    if not state.converged:
        log.warning("l1-ball solve stopped after %d iterations with gap %.3g", state.iterations, state.gap)
    return SolveReport(state.x, state.f, state.gap, state.iterations, state.converged, M, tol, step_rule)
