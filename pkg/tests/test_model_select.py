import numpy as np
import pytest

import halkit.model_select as ms
import halkit.regression as reg
from halkit.data import RegressionDataset, SurvivalDataset
from halkit.errors import DomainError
from halkit.harness import DensitySpec, gen_density_data, gen_survival_study
from halkit.model_select import CvReport, cv_folds, cv_select_M


@pytest.fixture(autouse=True)
def single_worker(monkeypatch):
    monkeypatch.setenv("HALKIT_THREADS", "1")


class TestFolds:
    @pytest.mark.parametrize("n,K", [(10, 3), (11, 5), (200, 5), (7, 7)])
    def test_partition_and_sizes(self, n, K):
        folds = cv_folds(n, K, 3)
        sizes = [f.size for f in folds]
        assert max(sizes) - min(sizes) <= 1
        assert np.array_equal(np.sort(np.concatenate(folds)), np.arange(n))

    def test_seeded(self):
        a, b, c = cv_folds(50, 5, 1), cv_folds(50, 5, 1), cv_folds(50, 5, 2)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        assert not all(np.array_equal(x, y) for x, y in zip(a, c))

    def test_errors(self):
        with pytest.raises(DomainError):
            cv_folds(10, 1, 0)
        with pytest.raises(DomainError):
            cv_folds(3, 5, 0)


class TestSelect:
    def test_zero_response_picks_smallest(self, rng):
        data = RegressionDataset(rng.uniform(size=(20, 1)), np.zeros(20))
        r = cv_select_M(data, "regression", [0.5, 1.0, 2.0], K=4, seed=0)
        assert r.mean_risk == [0.0, 0.0, 0.0]
        assert r.selected_M == 0.5 and r.one_se_M == 0.5

    def test_mean_is_fold_average(self, rng):
        x = rng.uniform(size=(30, 1))
        data = RegressionDataset(x, np.sin(5 * x[:, 0]) + 0.2 * rng.normal(size=30))
        r = cv_select_M(data, "regression", [0.25, 1.0, 4.0], K=3, seed=2)
        fr = np.array(r.fold_risks)
        for j in range(3):
            assert r.mean_risk[j] == pytest.approx(sum(fr[:, j]) / 3, abs=1e-14)
        assert r.selected_M == r.grid[int(np.argmin(r.mean_risk))]
        assert r.one_se_M <= r.selected_M

    def test_density_selects_finite_budget(self):
        data = gen_density_data(200, 7, DensitySpec("uniform"))
        r = cv_select_M(data, "density", seed=7)
        assert r.selected_M < max(r.grid)
        # small budgets give held-out risk near zero; the largest overfits
        assert abs(r.mean_risk[0]) < 0.05
        assert r.mean_risk[-1] > r.mean_risk[0]

    def test_byte_identical(self, rng):
        data = gen_survival_study(40, 4)
        a = cv_select_M(data, "hazard", [0.5, 2.0], K=3, seed=5).to_json()
        b = cv_select_M(data, "hazard", [0.5, 2.0], K=3, seed=5).to_json()
        assert a == b
        assert CvReport.from_dict(__import__("json").loads(a)).to_json() == a

    def test_hazard_fold_without_events_skipped(self):
        t = np.linspace(0.1, 0.9, 12)
        status = np.zeros(12, dtype=int)
        folds = cv_folds(12, 3, 0)
        status[folds[0]] = 1
        status[folds[1][0]] = 1
        r = cv_select_M(SurvivalDataset(t, status), "hazard", [0.5, 1.0], K=3, seed=0)
        skipped = [k for k, row in enumerate(r.fold_risks) if row[0] is None]
        assert 2 in skipped
        assert any("skipped" in w for w in r.warnings)

    def test_validation(self, rng):
        data = RegressionDataset(rng.uniform(size=(10, 1)), np.zeros(10))
        with pytest.raises(DomainError):
            cv_select_M(data, "regression", [], K=2)
        with pytest.raises(DomainError):
            cv_select_M(data, "regression", [2.0, 1.0], K=2)
        with pytest.raises(DomainError):
            cv_select_M(data, "regression", [-1.0], K=2)
        with pytest.raises(DomainError):
            cv_select_M(data, "density", [1.0], K=2)
        with pytest.raises(DomainError):
            cv_select_M(data, "classification", [1.0], K=2)


class TestProvenance:
    def _recorder(self, monkeypatch, module, name):
        seen = []
        original = getattr(module, name)

        def wrapped(points, *args, **kwargs):
            seen.append(np.array(points.points() if hasattr(points, "points") else points, dtype=float))
            return original(points, *args, **kwargs)

        monkeypatch.setattr(module, name, wrapped)
        return seen

    def _check(self, seen, full, folds):
        assert len(seen) == len(folds)
        for pts, test in zip(seen, folds):
            held = {tuple(r) for r in full[test]}
            assert not any(tuple(r) in held for r in pts)

    def test_regression(self, monkeypatch, rng):
        x = rng.uniform(size=(25, 2))
        seen = self._recorder(monkeypatch, reg, "build_basis")
        cv_select_M(RegressionDataset(x, x.sum(axis=1)), "regression", [1.0, 2.0], K=5, seed=1)
        self._check(seen, x, cv_folds(25, 5, 1))

    def test_hazard(self, monkeypatch):
        data = gen_survival_study(30, 2)
        seen = self._recorder(monkeypatch, ms, "build_basis")
        cv_select_M(data, "hazard", [1.0], K=3, seed=4)
        kept = [f for f in cv_folds(30, 3, 4)
                if data.status[f].sum() and np.delete(data.status, f).sum()]
        self._check(seen, data.points(), kept)

    def test_density(self, monkeypatch):
        data = gen_density_data(30, 1)
        seen = self._recorder(monkeypatch, ms, "build_density_basis")
        cv_select_M(data, "density", [1.0], K=3, seed=4)
        self._check(seen, data.points(), cv_folds(30, 3, 4))
