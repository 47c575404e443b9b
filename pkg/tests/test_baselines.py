import numpy as np
import pytest

from depgat import baselines as bl
from depgat.dataio import Dataset, FeatureSpec
from depgat.metrics import roc_auc


def brute_force_log_density(x, mean, cov, prior):
    """Direct evaluation of the QDA discriminant for one row."""
    d = x - mean
    return (-0.5 * np.log(np.linalg.det(cov))
            - 0.5 * float(d @ np.linalg.inv(cov) @ d)
            + np.log(prior))


def make_ds(X, y, split):
    p = X.shape[1]
    spec = FeatureSpec(names=[f"x{i}" for i in range(p)], kinds=["real"] * p,
                       levels=[None] * p)
    return Dataset(X=X, y=y, task="classification", n_classes=2, spec=spec,
                   split=split, target_levels=["0", "1"])


class TestQda:
    def test_distant_means_give_perfect_auc(self):
        rng = np.random.default_rng(0)
        X0 = rng.normal(0.0, 1.0, size=(200, 3))
        X1 = rng.normal(10.0, 1.0, size=(200, 3))
        X = np.vstack([X0, X1])
        y = np.array([0] * 200 + [1] * 200)
        scores = bl.qda_fit_predict(X, y, X, n_classes=2)
        assert roc_auc(scores, y) == 1.0

    def test_identical_distributions_near_chance(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(4000, 3))
        y = rng.integers(2, size=4000)
        test = rng.normal(size=(2000, 3))
        y_test = rng.integers(2, size=2000)
        scores = bl.qda_fit_predict(X, y, test, n_classes=2)
        assert roc_auc(scores, y_test) == pytest.approx(0.5, abs=0.05)

    def test_matches_brute_force_log_densities(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(60, 3))
        y = np.array([0] * 30 + [1] * 30)
        X[y == 1] += 0.5
        model = bl.qda_fit(X, y, 2)
        got = bl.qda_log_densities(model, X[:5])
        for i in range(5):
            for c in range(2):
                rows = X[y == c]
                cov = np.cov(rows.T, bias=False) + bl.RIDGE_START * np.eye(3)
                expected = brute_force_log_density(X[i], rows.mean(axis=0), cov,
                                                   rows.shape[0] / X.shape[0])
                assert got[i, c] == pytest.approx(expected, rel=1e-9)

    def test_singular_covariance_ridged(self):
        rng = np.random.default_rng(3)
        base = rng.normal(size=(50, 1))
        X = np.hstack([base, base])        # exactly collinear columns
        y = np.array([0] * 25 + [1] * 25)
        X[y == 1] += 1.0
        scores = bl.qda_fit_predict(X, y, X, n_classes=2)
        assert np.isfinite(scores).all()

    def test_posteriors_normalize(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(80, 2))
        y = rng.integers(2, size=80)
        model = bl.qda_fit(X, y, 2)
        post = bl.qda_posteriors(model, X)
        assert np.abs(post.sum(axis=1) - 1.0).max() < 1e-12

    def test_tiny_class_rejected(self):
        X = np.zeros((3, 2))
        y = np.array([0, 0, 1])
        with pytest.raises(Exception, match="fewer than 2"):
            bl.qda_fit(X, y, 2)


class TestMlpBaseline:
    def separable(self, seed=0):
        rng = np.random.default_rng(seed)
        n = 600
        X = rng.normal(size=(n, 2))
        y = (X[:, 0] + X[:, 1] > 0).astype(np.int64)
        split = np.array(["train"] * 400 + ["valid"] * 100 + ["test"] * 100)
        return make_ds(X, y, split)

    def test_separable_data_high_auc(self):
        result = bl.mlp_baseline(self.separable(), hidden=16, layers=2, epochs=20, seed=0)
        assert result.metric_name == "auc"
        assert result.test_metric > 0.99

    def test_fixed_seed_reproducible(self):
        a = bl.mlp_baseline(self.separable(), hidden=8, layers=1, epochs=3, seed=5)
        b = bl.mlp_baseline(self.separable(), hidden=8, layers=1, epochs=3, seed=5)
        assert np.array_equal(a.test_scores, b.test_scores)

    def test_regression_path(self):
        rng = np.random.default_rng(6)
        n = 400
        X = rng.normal(size=(n, 3))
        y = X @ np.array([1.0, -2.0, 0.5]) + 0.1 * rng.normal(size=n)
        spec = FeatureSpec(names=["a", "b", "c"], kinds=["real"] * 3, levels=[None] * 3)
        ds = Dataset(X=X, y=y, task="regression", n_classes=0, spec=spec,
                     split=np.array(["train"] * 300 + ["valid"] * 50 + ["test"] * 50))
        result = bl.mlp_baseline(ds, hidden=16, layers=2, epochs=60, batch_size=32, seed=0)
        assert result.metric_name == "rmse"
        assert result.test_metric < 1.0      # label std is ~2.3, so this shows real fit
