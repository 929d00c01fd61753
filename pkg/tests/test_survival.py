import numpy as np
import pytest
from scipy import integrate

from halkit.basis import BasisFunction, BasisSet, HalModel, svn_bruteforce
from halkit.data import SurvivalDataset
from halkit.errors import DomainError, UnsupportedError
from halkit.harness import gen_decreasing_hazard, gen_survival_study
from halkit.losses import pl_risk
from halkit.stepfn import PiecewiseConstantFn
from halkit.survival import (HazardModel, first_decrease, fit_hazard, hazard_to_density,
                             improve_risk_counterexample, step_hazard_distances, survival_curve)


def time_model(bp, values):
    """HazardModel in time only whose log-hazard is the given step function."""
    fns = [BasisFunction((0,), (b,)) for b in bp]
    beta = np.concatenate([[values[0]], np.diff(values)])
    return HazardModel(HalModel(BasisSet(1, fns, True), beta, float(np.abs(beta).sum())))


def random_step(rng, k, lo, hi):
    bp = np.sort(rng.uniform(0.01, 0.99, k))
    return PiecewiseConstantFn(bp, rng.uniform(lo, hi, k + 1))


class TestFitHazard:
    def test_single_event(self):
        h = fit_hazard(SurvivalDataset([0.5], [1]), 1.0)
        assert h.report.converged
        assert np.allclose(h.inner.beta, [0.0, 1.0], atol=1e-6)
        assert h.report.objective == pytest.approx(-0.5, abs=1e-8)

    def test_zero_budget(self, rng):
        data = SurvivalDataset(rng.uniform(size=10), rng.integers(0, 2, 10))
        h = fit_hazard(data, 0.0)
        assert np.all(h.inner.beta == 0)
        assert h.report.objective == pytest.approx(data.time.mean(), abs=1e-15)

    def test_all_censored_risk_falls_with_budget(self, rng):
        data = SurvivalDataset(rng.uniform(size=15), np.zeros(15, dtype=int))
        r1, r2 = fit_hazard(data, 1.0).report, fit_hazard(data, 2.0).report
        assert r1.converged and r2.converged
        assert r2.objective <= r1.objective

    def test_with_covariates_certifies(self):
        data = gen_survival_study(60, 3)
        h = fit_hazard(data, 2.0)
        assert h.report.converged
        assert h.report.fw_gap <= 1e-8 * (1 + abs(h.report.objective))
        assert np.abs(h.inner.beta).sum() <= 2.0
        assert pl_risk(h.inner, data) == pytest.approx(h.report.objective, abs=1e-10)

    def test_hazard_bounds(self):
        data = gen_survival_study(40, 5)
        h = fit_hazard(data, 1.5)
        for w in ([0.2, 0.0], [0.8, 1.0]):
            lam = h.hazard(np.linspace(0, 1, 50), w)
            assert np.all(lam >= np.exp(-1.5) - 1e-12) and np.all(lam <= np.exp(1.5) + 1e-12)

    def test_empty_and_negative(self):
        with pytest.raises(DomainError):
            fit_hazard(SurvivalDataset([0.5], [1]), -1.0)


class TestSurvivalCurve:
    def test_unit_hazard(self):
        h = time_model([], [0.0])
        t = np.linspace(0, 1, 11)
        assert np.allclose(survival_curve(h, [], t), np.exp(-t), atol=1e-15)

    def test_two_pieces(self):
        h = time_model([0.5], [np.log(2), 0.0])
        assert survival_curve(h, [], [1.0])[0] == pytest.approx(np.exp(-1.5), abs=1e-15)

    def test_bound_monotone_start(self):
        data = gen_survival_study(50, 2)
        h = fit_hazard(data, 2.0)
        t = np.linspace(0, 1, 101)
        for w in ([0.1, 0.0], [0.9, 1.0], [0.5, 1.0]):
            s = survival_curve(h, w, t)
            assert s[0] == 1.0
            assert np.all(np.diff(s) <= 0)
            assert s[-1] >= np.exp(-np.exp(2.0))

    def test_grid_validation(self):
        h = time_model([], [0.0])
        with pytest.raises(DomainError):
            survival_curve(h, [], [0.5, 0.2])
        with pytest.raises(DomainError):
            survival_curve(h, [], [1.5])


class TestHazardDensity:
    def test_unit_hazard(self):
        p = hazard_to_density(time_model([], [0.0]))
        u = np.linspace(0, 1, 7)
        assert np.allclose(p(u), np.exp(-u))
        assert p.deficiency() == pytest.approx(np.exp(-1), abs=1e-15)

    def test_mass_plus_deficiency(self, rng):
        for _ in range(10):
            f = random_step(rng, 5, -2, 2)
            h = time_model(f.breakpoints, f.values)
            p = hazard_to_density(h)
            assert p.total_mass() + p.deficiency() == pytest.approx(1.0, abs=1e-12)
            quad, _ = integrate.quad(lambda u: float(p(u)), 0, 1, points=f.breakpoints, limit=200, epsabs=1e-13)
            assert p.total_mass() == pytest.approx(quad, abs=1e-10)
            assert p.deficiency() >= np.exp(-np.exp(h.M))

    def test_overflowing_rate(self):
        # log-hazard 1000 after 0.5: all remaining mass sits at 0.5
        p = hazard_to_density(time_model([0.5], [0.0, 1000.0]))
        with np.errstate(over="ignore"):
            v = p(np.array([0.25, 0.75, 1.0]))
        assert np.allclose(v, [np.exp(-0.25), 0.0, 0.0])
        assert p.deficiency() == 0.0
        assert p.total_mass() == pytest.approx(1.0, abs=1e-15)
        assert np.all(np.isfinite(p.cdf(np.linspace(0, 1, 11))))

    def test_cdf_monotone(self, rng):
        f = random_step(rng, 4, -1, 1)
        p = hazard_to_density(time_model(f.breakpoints, f.values))
        c = p.cdf(np.linspace(0, 1, 101))
        assert c[0] == 0 and np.all(np.diff(c) >= 0)


class TestCounterexample:
    def test_worked_example(self):
        data = SurvivalDataset([0.2, 0.8], [1, 1])
        f0 = PiecewiseConstantFn([0.5], [1.0, 0.0])
        res = improve_risk_counterexample(f0, data)
        assert res is not None
        # modified on [0.35, 0.8) to 0, untouched before 0.35
        assert res.f_check(0.34) == 1.0 and res.f_check(0.35) == 0.0 and res.f_check(0.79) == 0.0
        assert np.array_equal(res.f_check(data.time), f0(data.time))
        assert res.new_risk < res.old_risk - 1e-12
        assert res.old_risk == pl_risk(f0, data) and res.new_risk == pl_risk(res.f_check, data)

    def test_nondecreasing_gives_none(self):
        data = SurvivalDataset([0.2, 0.5, 0.8], [1, 0, 1])
        assert improve_risk_counterexample(PiecewiseConstantFn([0.3, 0.6], [-1, 0, 2]), data) is None
        assert improve_risk_counterexample(PiecewiseConstantFn.constant(0.4), data) is None

    def test_covariates_unsupported(self):
        data = SurvivalDataset([0.2, 0.8], [1, 1], [[0.1], [0.2]])
        with pytest.raises(UnsupportedError):
            improve_risk_counterexample(PiecewiseConstantFn([0.5], [1.0, 0.0]), data)

    def test_random_postconditions(self, rng):
        hits = 0
        for _ in range(100):
            data = SurvivalDataset(rng.uniform(size=8), rng.integers(0, 2, 8))
            f0 = random_step(rng, 6, -2, 2)
            res = improve_risk_counterexample(f0, data)
            if res is None:
                assert first_decrease(f0, data.time) is None
                continue
            hits += 1
            assert res.new_risk < res.old_risk - 1e-12
            assert np.array_equal(res.f_check(data.time), f0(data.time))
            grids = [np.union1d(f0.breakpoints, res.f_check.breakpoints)]
            assert svn_bruteforce(res.f_check, 1, grids) <= svn_bruteforce(f0, 1, grids) + 1e-12
        assert hits > 50

    def test_decreasing_truth_fit_has_a_drop(self):
        data = gen_decreasing_hazard(50, 3)
        h = fit_hazard(data, 2.0)
        f0 = h.time_slice()
        assert first_decrease(f0, data.time) is not None
        assert improve_risk_counterexample(f0, data) is not None


class TestStepHazardDistances:
    def test_against_quadrature(self, rng):
        for _ in range(5):
            hp, hq = random_step(rng, 3, 0, 2), random_step(rng, 4, 0, 2)
            dist = step_hazard_distances(hp, hq)
            pts = np.union1d(hp.breakpoints, hq.breakpoints)
            Sp = lambda u: np.exp(-_cum(hp, u))
            Sq = lambda u: np.exp(-_cum(hq, u))
            s2 = integrate.quad(lambda u: (Sq(u) - Sp(u)) ** 2, 0, 1, points=pts, limit=200, epsabs=1e-14)[0]
            q2 = integrate.quad(lambda u: (hq(u) * Sq(u) - hp(u) * Sp(u)) ** 2, 0, 1, points=pts, limit=200,
                                epsabs=1e-14)[0]
            h2 = integrate.quad(lambda u: (hq(u) - hp(u)) ** 2, 0, 1, points=pts, limit=200, epsabs=1e-14)[0]
            assert dist.survival == pytest.approx(np.sqrt(s2), abs=1e-8)
            assert dist.density == pytest.approx(np.sqrt(q2), abs=1e-8)
            assert dist.hazard == pytest.approx(np.sqrt(h2), abs=1e-8)

    def test_inequalities(self, rng):
        M = 2.0
        for _ in range(200):
            hp = random_step(rng, int(rng.integers(0, 6)), 0, M)
            hq = random_step(rng, int(rng.integers(0, 6)), 0, M)
            d = step_hazard_distances(hp, hq)
            assert d.survival <= d.hazard + 1e-10
            assert d.survival <= d.density + 1e-10

    def test_negative_hazard_rejected(self):
        with pytest.raises(DomainError):
            step_hazard_distances(PiecewiseConstantFn.constant(-1.0), PiecewiseConstantFn.constant(1.0))


def _cum(h, u):
    """Cumulative hazard of a nonnegative step function ``h``, summed piece by piece."""
    edges = np.append(h.edges, 1.0)
    upto = np.clip(u - edges[:-1], 0, np.diff(edges))
    return float(upto @ h.values)
