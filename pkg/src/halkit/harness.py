"""Data generators and experiment drivers.

Every generator draws from Philox streams keyed by
``(seed, experiment, n, rep, stream)``, so a replicate's data never depends
on which other replicates ran or in what order.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np
from scipy import stats

from .basis import BasisFunction, BasisSet, HalModel, l2_distance
from .data import DensityDataset, RegressionDataset, SurvivalDataset, write_csv
from .density import density_eval, fit_density
from .errors import DomainError, NumericalError
from .model_select import DEFAULT_K, cv_select_M
from .regression import erm_basis_count, fit_regression, hal_basis_count
from .runtime import STREAM_CENSOR, STREAM_DATA, STREAM_NOISE, make_rng, parallel_map
from .sieve import sieve_element, sup_error
from .survival import fit_hazard, hazard_to_density

# experiment ids used as RNG stream keys
EXP_SURVIVAL = 1
EXP_DENSITY = 2
EXP_REGRESSION = 3
EXP_DECREASING = 4
EXP_RATE = 5
EXP_COUNT = 6
EXP_COMPARE = 7

FLOOR_ERROR = 1e-7


# --- generators ----------------------------------------------------------------

@dataclass(frozen=True)
class SurvivalParams:
    base_rate: float = 1.0
    young_ratio: float = 0.5
    old_ratio: float = 2.0
    censor_rate: float = 0.3

    def __post_init__(self):
        for name in ("base_rate", "young_ratio", "old_ratio"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive and finite, got {v!r}")
        if not (np.isfinite(self.censor_rate) and self.censor_rate >= 0):
            raise DomainError(f"censor_rate must be nonnegative and finite, got {self.censor_rate!r}")


def _censor_and_truncate(t_event, censor_rate, rng_c):
    c = rng_c.exponential(1.0 / censor_rate, t_event.size) if censor_rate > 0 else np.full(t_event.size, np.inf)
    observed = np.minimum(np.minimum(t_event, c), 1.0)
    status = ((t_event <= c) & (t_event < 1.0)).astype(int)
    return observed, status


def gen_survival_study(n: int, seed: int, params: SurvivalParams | None = None, rep: int = 0) -> SurvivalDataset:
    """Right-censored times with covariates ``(age scaled to [0, 1], treatment)``.

    Untreated hazard is ``base_rate``; treated subjects get ``young_ratio`` or
    ``old_ratio`` times that below or above age 40.  Censoring is exponential
    and independent, drawn from its own stream; follow-up stops at 1.
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    p = params or SurvivalParams()
    rng = make_rng(seed, EXP_SURVIVAL, n, rep, STREAM_DATA)
    age = rng.uniform(20.0, 60.0, n)
    treat = (rng.uniform(size=n) < 0.5).astype(float)
    rate = p.base_rate * np.where(treat == 1, np.where(age < 40, p.young_ratio, p.old_ratio), 1.0)
    t_event = rng.exponential(1.0 / rate)
    rng_c = make_rng(seed, EXP_SURVIVAL, n, rep, STREAM_CENSOR)
    time, status = _censor_and_truncate(t_event, p.censor_rate, rng_c)
    return SurvivalDataset(time, status, np.column_stack([(age - 20.0) / 40.0, treat]))


def gen_decreasing_hazard(n: int, seed: int, rate0: float = 2.0, decay: float = 1.5,
                          censor_rate: float = 0.3, rep: int = 0) -> SurvivalDataset:
    """Times from the strictly decreasing hazard ``rate0 * exp(-decay * t)``, no covariates."""
    if n < 1:
        raise DomainError("n must be at least 1")
    if not (rate0 > 0 and decay > 0 and censor_rate >= 0):
        raise DomainError("rate0 and decay must be positive, censor_rate nonnegative")
    rng = make_rng(seed, EXP_DECREASING, n, rep, STREAM_DATA)
    e = rng.exponential(1.0, n)
    # invert the cumulative hazard (rate0 / decay) * (1 - exp(-decay t)); it is bounded
    arg = 1.0 - e * decay / rate0
    t_event = np.where(arg > 0, -np.log(np.where(arg > 0, arg, 1.0)) / decay, np.inf)
    time, status = _censor_and_truncate(t_event, censor_rate, make_rng(seed, EXP_DECREASING, n, rep, STREAM_CENSOR))
    return SurvivalDataset(time, status)


@dataclass(frozen=True)
class DensitySpec:
    """``uniform`` or a ``mixture``: ``weight * Beta(a, b) + (1 - weight) * Uniform``."""

    kind: str = "uniform"
    a: float = 4.0
    b: float = 2.0
    weight: float = 0.7

    def __post_init__(self):
        if self.kind not in ("uniform", "mixture"):
            raise DomainError(f"unknown density spec {self.kind!r}")
        if not (self.a > 0 and self.b > 0 and np.isfinite(self.a) and np.isfinite(self.b)):
            raise DomainError("beta shape parameters must be positive and finite")
        if not 0.0 <= self.weight <= 1.0:
            raise DomainError("mixture weight must lie in [0, 1]")

    def pdf(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform":
            return np.ones_like(u)
        return self.weight * stats.beta.pdf(u, self.a, self.b) + (1.0 - self.weight)

    @classmethod
    def parse(cls, text: str) -> "DensitySpec":
        """``uniform`` or ``mixture[:a,b,weight]``."""
        name, _, rest = text.partition(":")
        if name == "uniform":
            return cls("uniform")
        if name == "mixture":
            if not rest:
                return cls("mixture")
            try:
                a, b, w = (float(v) for v in rest.split(","))
            except ValueError:
                raise DomainError("mixture spec must be mixture:a,b,weight") from None
            return cls("mixture", a, b, w)
        raise DomainError(f"unknown density spec {text!r}")


def gen_density_data(n: int, seed: int, spec: DensitySpec | None = None, rep: int = 0) -> DensityDataset:
    if n < 1:
        raise DomainError("n must be at least 1")
    spec = spec or DensitySpec()
    rng = make_rng(seed, EXP_DENSITY, n, rep, STREAM_DATA)
    u = rng.uniform(size=n)
    if spec.kind == "mixture":
        pick = rng.uniform(size=n) < spec.weight
        u = np.where(pick, rng.beta(spec.a, spec.b, n), u)
    return DensityDataset(u)


def step_truth() -> HalModel:
    """``x -> 1{x >= 0.5} - 0.5 * 1{x >= 0.8}`` on [0, 1]."""
    fns = [BasisFunction((0,), (0.5,)), BasisFunction((0,), (0.8,))]
    return HalModel(BasisSet(1, fns, has_intercept=False), [1.0, -0.5], 1.5)


def constant_truth(c: float = 0.5) -> HalModel:
    return HalModel(BasisSet(1, [], has_intercept=True), [c], abs(c))


TRUTHS = {"step": step_truth, "constant": constant_truth}


def gen_regression(n: int, seed: int, truth: HalModel, noise_var: float = 0.25, rep: int = 0) -> RegressionDataset:
    """Uniform inputs on the unit cube of the truth's dimension plus Gaussian noise of variance ``noise_var``."""
    if n < 1:
        raise DomainError("n must be at least 1")
    if noise_var < 0:
        raise DomainError("noise variance must be nonnegative")
    x = make_rng(seed, EXP_REGRESSION, n, rep, STREAM_DATA).uniform(size=(n, truth.d))
    noise = make_rng(seed, EXP_REGRESSION, n, rep, STREAM_NOISE).normal(0.0, np.sqrt(noise_var), n)
    return RegressionDataset(x, truth(x) + noise)


# --- reports -----------------------------------------------------------------

@dataclass
class ExperimentReport:
    experiment: str
    config: dict
    columns: list[str]
    rows: list[dict]
    summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(_plain(self.to_dict()), indent=2, sort_keys=True) + "\n"

    def write_csv(self, path) -> None:
        write_csv(path, self.columns, [[r[c] for r in self.rows] for c in self.columns])


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def loglog_slope(n, err) -> dict:
    """OLS fit of ``log(err)`` on ``log(n)``; errors at or below the floor are flagged."""
    n = np.asarray(n, dtype=float)
    err = np.asarray(err, dtype=float)
    at_floor = bool(np.any(err <= FLOOR_ERROR))
    y = np.log(np.maximum(err, 1e-16))
    x = np.log(n)
    if np.ptp(x) == 0:
        raise DomainError("need at least two distinct sample sizes for a slope")
    fit = stats.linregress(x, y)
    return {"slope": float(fit.slope), "slope_se": float(fit.stderr),
            "intercept": float(fit.intercept), "floor_detected": at_floor}


# --- rate study ----------------------------------------------------------------

RATE_TASKS = ("regression", "sieve")


def _rate_cell(cfg: dict, cell):
    n, rep = cell
    if cfg["task"] == "regression":
        truth = TRUTHS[cfg["truth"]]()
        data = gen_regression(n, cfg["seed"], truth, cfg["noise_var"], rep)
        model = fit_regression(data, cfg["M"], rescale="never", tol=cfg["tol"])
        rep_ = model.report
        if not rep_.converged:
            raise NumericalError(
                f"rate study fit did not certify at n={n}, rep={rep}, seed={cfg['seed']} (gap {rep_.fw_gap:.3g})"
            )
        return {"n": n, "rep": rep, "error": l2_distance(model, truth),
                "fw_gap": rep_.fw_gap, "objective": rep_.objective}
    x = make_rng(cfg["seed"], EXP_RATE, n, rep, STREAM_DATA).uniform(size=(n, 1))
    model = sieve_element(x, {(0,): lambda z: np.ones(len(z))}, 0.0)
    grid = np.linspace(0.0, 1.0, cfg["grid"])[:, None]
    return {"n": n, "rep": rep, "error": sup_error(model, lambda g: g[:, 0], grid),
            "fw_gap": 0.0, "objective": float("nan")}


def run_rate_study(task: str = "regression", n_list=(125, 250, 500, 1000, 2000, 4000), reps: int = 20,
                   seed: int = 0, *, truth: str = "step", M: float = 2.0, noise_var: float = 0.25,
                   tol: float = 1e-8, grid: int = 1001) -> ExperimentReport:
    """Error of a fit (or of the explicit sieve element) across sample sizes, and its log-log slope.

    ``task="regression"`` fits HAL least squares at fixed ``M`` to data from
    ``truth`` and records the exact L2 error; ``task="sieve"`` builds the
    unit-derivative sieve element of uniform data (the empirical CDF) and
    records its sup-norm error against the identity over ``grid`` points.
    """
    if task not in RATE_TASKS:
        raise DomainError(f"unknown rate-study task {task!r}; expected one of {RATE_TASKS}")
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])) or n_list[0] < 1:
        raise DomainError("n_list must be positive and strictly increasing")
    if truth not in TRUTHS:
        raise DomainError(f"unknown truth {truth!r}; expected one of {sorted(TRUTHS)}")
    cfg = {"task": task, "n_list": n_list, "reps": int(reps), "seed": int(seed), "truth": truth,
           "M": float(M), "noise_var": float(noise_var), "tol": float(tol), "grid": int(grid)}
    cells = [(n, r) for n in n_list for r in range(reps)]
    rows = parallel_map(partial(_rate_cell, cfg), cells)
    summary = loglog_slope([r["n"] for r in rows], [r["error"] for r in rows])
    summary["mean_error"] = {str(n): float(np.mean([r["error"] for r in rows if r["n"] == n])) for n in n_list}
    if task == "regression":
        summary["max_fw_gap"] = float(max(r["fw_gap"] for r in rows))
    return ExperimentReport(f"rate-{task}", cfg, ["n", "rep", "error"], rows, summary)


# --- basis-count study -----------------------------------------------------------

def _count_cell(seed, cell):
    d, n, rep = cell
    x = make_rng(seed, EXP_COUNT, n, rep, d).uniform(size=(n, d))
    return {"d": d, "n": n, "rep": rep, "erm_count": erm_basis_count(x), "hal_count": hal_basis_count(n, d)}


def basis_count_study(d_list=(2,), n_list=(64, 128, 256, 512), reps: int = 20, seed: int = 7) -> ExperimentReport:
    """ERM basis counts of independent uniform covariates against the HAL count."""
    cells = [(int(d), int(n), r) for d in d_list for n in n_list for r in range(reps)]
    rows = parallel_map(partial(_count_cell, int(seed)), cells)
    means = {}
    for d in d_list:
        for n in n_list:
            vals = [r["erm_count"] for r in rows if r["d"] == d and r["n"] == n]
            m = float(np.mean(vals))
            means[f"{d},{n}"] = {"mean_erm": m, "hal": hal_basis_count(n, d), "ratio": m / hal_basis_count(n, d)}
    cfg = {"d_list": [int(d) for d in d_list], "n_list": [int(n) for n in n_list], "reps": int(reps), "seed": int(seed),
           "covariates": "independent Uniform[0, 1]"}
    return ExperimentReport("basis-count", cfg, ["d", "n", "rep", "erm_count", "hal_count"], rows, {"means": means})


# --- parametrization comparison ----------------------------------------------------

def density_as_survival(data: DensityDataset) -> SurvivalDataset:
    """Read each draw as an event time; a draw at exactly 1 is censored there."""
    return SurvivalDataset(data.u, (data.u < 1.0).astype(int), data.w)


def _l2_on_grid(p_hat, p_true, grid):
    return float(np.sqrt(np.trapezoid((p_hat - p_true) ** 2, grid)))


def run_parametrization_comparison(n: int = 200, seed: int = 0, spec: DensitySpec | None = None, *,
                                   grid=None, K: int = DEFAULT_K, points: int = 1001,
                                   rep: int = 0) -> ExperimentReport:
    """Fit a density directly and through a hazard on the same draws, each with CV-selected ``M``."""
    spec = spec or DensitySpec("uniform")
    data = gen_density_data(n, seed, spec, rep)
    surv = density_as_survival(data)
    u = np.linspace(0.0, 1.0, points)
    truth = spec.pdf(u)

    cv_d = cv_select_M(data, "density", grid, K, seed)
    dens = fit_density(data, cv_d.selected_M)
    cv_h = cv_select_M(surv, "hazard", grid, K, seed)
    haz = fit_hazard(surv, cv_h.selected_M)
    hd = hazard_to_density(haz)

    row = {
        "seed": int(seed),
        "density_M": cv_d.selected_M,
        "hazard_M": cv_h.selected_M,
        "density_mass": dens.total_mass(),
        "hazard_mass": hd.total_mass(),
        "hazard_deficiency": hd.deficiency(),
        "deficiency_bound": float(np.exp(-np.exp(cv_h.selected_M))),
        "density_l2": _l2_on_grid(density_eval(dens, u), truth, u),
        "hazard_l2": _l2_on_grid(hd(u), truth, u),
        "density_converged": bool(dens.report.converged),
        "hazard_converged": bool(haz.report.converged),
    }
    cfg = {"n": int(n), "seed": int(seed), "rep": int(rep), "spec": asdict(spec),
           "grid": cv_d.grid, "K": int(K), "points": int(points)}
    return ExperimentReport("compare-parametrizations", cfg, list(row), [row],
                            {"density_better": row["density_l2"] <= row["hazard_l2"]})
