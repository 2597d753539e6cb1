import numpy as np
import pytest

from fsim.basis import build_direction_set, directions_matrix
from fsim.simulation import (
    SimDesign,
    default_direction_spec,
    default_theta0,
    draw_mixture,
    generate_replicate,
    run_monte_carlo,
    _standardize,
)


class TestDesign:
    def test_validation(self):
        with pytest.raises(ValueError):
            SimDesign(n_train=5)
        with pytest.raises(ValueError):
            SimDesign(n_train=50, noise_ratio=-0.1)

    def test_mixture_two_bucket_frequencies(self):
        rng = np.random.default_rng(123)
        draws = draw_mixture(rng, (10_000, 1)).ravel()
        in_low = (draws >= 5.0) & (draws <= 10.0)
        in_high = (draws >= 20.0) & (draws <= 20.5)
        assert np.all(in_low | in_high)
        assert abs(in_low.mean() - 0.5) < 0.1

    def test_mixture_branch_shared_within_curve(self):
        rng = np.random.default_rng(7)
        abc = draw_mixture(rng, (500, 3))
        low_rows = np.all(abc <= 10.0, axis=1)
        high_rows = np.all(abc >= 20.0, axis=1)
        assert np.all(low_rows | high_rows)


class TestGenerateReplicate:
    def test_noiseless_responses_equal_cubed_projection(self):
        rep = generate_replicate(SimDesign(n_train=20, noise_ratio=0.0, seed=3))
        y_all = np.concatenate([rep.train.y, rep.test.y])
        assert np.array_equal(y_all, rep.true_projections**3)

    def test_seed_determinism(self):
        a = generate_replicate(SimDesign(n_train=15, seed=42))
        b = generate_replicate(SimDesign(n_train=15, seed=42))
        assert np.array_equal(a.train.X, b.train.X)
        assert np.array_equal(a.train.y, b.train.y)
        assert np.array_equal(a.test.y, b.test.y)

    def test_split_sizes(self):
        rep = generate_replicate(SimDesign(n_train=30, n_test=7, seed=0))
        assert rep.train.n == 30 and rep.test.n == 7
        assert rep.true_projections.shape == (37,)

    def test_noise_scale(self):
        # empirical residual variance close to the requested fraction
        d = SimDesign(n_train=3000, n_test=25, noise_ratio=0.1, seed=5)
        rep = generate_replicate(d)
        signal = rep.true_projections**3
        y = np.concatenate([rep.train.y, rep.test.y])
        ratio = np.var(y - signal) / np.var(signal)
        assert ratio == pytest.approx(0.1, rel=0.1)

    def test_projection_bimodality_silhouette(self):
        from sklearn.cluster import KMeans
        from sklearn.metrics import silhouette_score

        hits = 0
        for seed in range(20):
            rep = generate_replicate(SimDesign(n_train=175, n_test=25, seed=1000 + seed))
            p = rep.true_projections.reshape(-1, 1)
            labels = KMeans(2, n_init=10, random_state=0).fit_predict(p)
            if silhouette_score(p, labels) > 0.5:
                hits += 1
        assert hits >= 19  # >= 95% of 20 seeds


class TestTheta0:
    def test_exact_member_of_direction_set(self):
        grid = SimDesign(n_train=50).grid
        theta0 = default_theta0(grid)
        dirs = build_direction_set(default_direction_spec(), grid)
        M = directions_matrix(dirs)
        gaps = np.abs(M - theta0.coefficients).max(axis=1)
        assert gaps.min() == 0.0  # pinned vector is literally in the set
        assert gaps.min() <= 1e-4


class TestMonteCarlo:
    def test_two_replicates_aggregate_is_mean(self):
        res = run_monte_carlo(
            SimDesign(n_train=12, n_test=5, seed=9),
            M=2,
            smoothers=("knn",),
            h_grid_size=4,
            k_max_values=5,
        )
        mseps = [r["msep"] for r in res.records]
        assert len(mseps) == 2 and mseps[0] != mseps[1]
        assert res.summary["knn"][0] == pytest.approx(np.mean(mseps), rel=1e-12)

    def test_determinism(self):
        kwargs = dict(M=2, smoothers=("kernel",), h_grid_size=4, k_max_values=5)
        a = run_monte_carlo(SimDesign(n_train=12, n_test=5, seed=11), **kwargs)
        b = run_monte_carlo(SimDesign(n_train=12, n_test=5, seed=11), **kwargs)
        assert [r["msep"] for r in a.records] == [r["msep"] for r in b.records]
        for key in a.curves["kernel"]:
            assert np.array_equal(a.curves["kernel"][key], b.curves["kernel"][key])

    def test_standardization_uses_training_moments(self):
        rep = generate_replicate(SimDesign(n_train=40, seed=2))
        train, test = _standardize(rep.train, rep.test)
        assert train.y.mean() == pytest.approx(0.0, abs=1e-12)
        assert train.y.std() == pytest.approx(1.0, rel=1e-12)
        mu, sd = rep.train.y.mean(), rep.train.y.std()
        assert np.allclose(test.y, (rep.test.y - mu) / sd)

    def test_failures_recorded_not_dropped(self):
        # a direction spec whose basis domain excludes the data grid fails per replicate
        from fsim.basis import BasisSpec, DirectionSetSpec

        bad_spec = DirectionSetSpec(basis=BasisSpec(2, 0, (2.0, 3.0)))
        res = run_monte_carlo(
            SimDesign(n_train=12, n_test=4, seed=1),
            M=2,
            smoothers=("knn",),
            direction_spec=bad_spec,
            k_max_values=4,
        )
        assert len(res.failures) == 2
        assert res.records == []
