import numpy as np
import pytest

from fsim.curves import Curve, Grid, L2SemiMetric, ProjectionSemiMetric
from fsim.errors import GridMismatchError
from fsim.estimators import (
    Bandwidth,
    Kernel,
    Neighbours,
    SmootherConfig,
    TrainingSet,
    knn_bandwidth,
    predict_batch,
    predict_from_distances,
    smooth,
    smooth_detailed,
    smooth_loo,
)

from conftest import constant_curves_train, constant_direction, random_train


def proj_config(kernel, tuning):
    return SmootherConfig(kernel, ProjectionSemiMetric(constant_direction()), tuning)


class TestKernels:
    def test_epanechnikov_shape(self):
        u = np.array([0.0, 0.5, 0.999, 1.0, 2.0])
        w = Kernel.EPANECHNIKOV.weights(u)
        assert w[0] == 0.75
        assert w[1] == 0.75 * (1 - 0.25)
        assert w[3] == 0.0 and w[4] == 0.0
        assert np.all(w >= 0.0)

    def test_indicator_half_open(self):
        w = Kernel.INDICATOR.weights(np.array([0.0, 0.999, 1.0]))
        assert list(w) == [1.0, 1.0, 0.0]


class TestKnnBandwidth:
    def test_second_order_statistic(self):
        train = constant_curves_train([3.0, 1.0, 2.0], [0.0, 0.0, 0.0])
        x = Curve(train.grid, np.zeros(train.grid.size))
        d = knn_bandwidth(train, ProjectionSemiMetric(constant_direction()), x, 2)
        assert d == pytest.approx(2.0, abs=1e-12)

    def test_zero_for_training_point(self):
        train = constant_curves_train([3.0, 1.0, 2.0], [0.0, 0.0, 0.0])
        d = knn_bandwidth(train, ProjectionSemiMetric(constant_direction()), train.curve(1), 1)
        assert d == 0.0

    def test_matches_full_sort_oracle(self):
        rng = np.random.default_rng(2)
        train = random_train(rng, 10, 15)
        x = Curve(train.grid, rng.normal(size=15))
        sm = L2SemiMetric()
        dists = sorted(sm.distance(train.curve(i), x) for i in range(10))
        for k in range(1, 11):
            assert knn_bandwidth(train, sm, x, k) == pytest.approx(dists[k - 1], abs=1e-12)

    def test_k_out_of_range(self):
        train = constant_curves_train([1.0, 2.0], [0.0, 0.0])
        x = train.curve(0)
        with pytest.raises(ValueError):
            knn_bandwidth(train, L2SemiMetric(), x, 0)
        with pytest.raises(ValueError):
            knn_bandwidth(train, L2SemiMetric(), x, 3)


class TestSmooth:
    @pytest.mark.parametrize("kernel", list(Kernel))
    @pytest.mark.parametrize("tuning", [Bandwidth(0.7), Neighbours(2)])
    def test_constant_response(self, kernel, tuning):
        train = constant_curves_train([0.0, 0.3, 0.9, 2.0], [4.2, 4.2, 4.2, 4.2])
        x = Curve(train.grid, np.full(train.grid.size, 0.1))
        assert smooth(train, proj_config(kernel, tuning), x) == pytest.approx(4.2, abs=1e-12)

    def test_hand_computed_two_term_average(self):
        # distances {0.1, 0.2, 0.9}, Epanechnikov, h=0.5:
        # w = (0.72, 0.63, 0) -> (0.72*2 - 0.63) / 1.35 = 0.6
        train = constant_curves_train([0.1, 0.2, 0.9], [2.0, -1.0, 10.0])
        x = Curve(train.grid, np.zeros(train.grid.size))
        value = smooth(train, proj_config(Kernel.EPANECHNIKOV, Bandwidth(0.5)), x)
        assert value == pytest.approx(0.6, abs=1e-12)

    def test_k_equals_n_minus_1_indicator_is_mean_of_nearest(self):
        train = constant_curves_train([0.1, 0.4, 0.2, 5.0], [1.0, 2.0, 3.0, 100.0])
        x = Curve(train.grid, np.zeros(train.grid.size))
        value = smooth(train, proj_config(Kernel.INDICATOR, Neighbours(3)), x)
        assert value == pytest.approx(2.0, abs=1e-12)  # mean of the 3 nearest responses

    def test_output_in_convex_hull(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            train = random_train(rng, 8, 12)
            x = Curve(train.grid, rng.normal(size=12))
            for cfg in (
                SmootherConfig(Kernel.EPANECHNIKOV, L2SemiMetric(), Bandwidth(float(rng.uniform(0.1, 3)))),
                SmootherConfig(Kernel.INDICATOR, L2SemiMetric(), Neighbours(int(rng.integers(1, 8)))),
            ):
                v = smooth(train, cfg, x)
                assert train.y.min() - 1e-12 <= v <= train.y.max() + 1e-12

    def test_shift_and_scale_equivariance(self):
        rng = np.random.default_rng(17)
        train = random_train(rng, 9, 10)
        x = Curve(train.grid, rng.normal(size=10))
        cfg = SmootherConfig(Kernel.EPANECHNIKOV, L2SemiMetric(), Bandwidth(1.2))
        base = smooth(train, cfg, x)
        shifted = TrainingSet(train.grid, train.X, train.y + 5.0)
        scaled = TrainingSet(train.grid, train.X, train.y * -3.0)
        assert smooth(shifted, cfg, x) == pytest.approx(base + 5.0, rel=1e-12, abs=1e-12)
        assert smooth(scaled, cfg, x) == pytest.approx(-3.0 * base, rel=1e-12, abs=1e-12)

    def test_direction_and_bandwidth_rescale_together(self):
        from fsim.basis import Direction

        rng = np.random.default_rng(23)
        train = random_train(rng, 10, 14)
        x = Curve(train.grid, rng.normal(size=14))
        theta = constant_direction()
        c = 3.0
        scaled = Direction(theta.spec, theta.coefficients * c)
        v1 = smooth(train, SmootherConfig(Kernel.EPANECHNIKOV, ProjectionSemiMetric(theta), Bandwidth(0.8)), x)
        v2 = smooth(
            train, SmootherConfig(Kernel.EPANECHNIKOV, ProjectionSemiMetric(scaled), Bandwidth(0.8 * c)), x
        )
        assert v2 == pytest.approx(v1, rel=1e-12, abs=1e-12)

    def test_zero_denominator_falls_back_to_nearest(self):
        train = constant_curves_train([1.0, 2.0, 5.0], [10.0, 20.0, 50.0])
        x = Curve(train.grid, np.zeros(train.grid.size))
        res = smooth_detailed(train, proj_config(Kernel.EPANECHNIKOV, Bandwidth(1e-6)), x)
        assert res.degenerate and res.value == 10.0

    def test_zero_local_bandwidth_averages_duplicates(self):
        train = constant_curves_train([1.0, 1.0, 1.0, 4.0], [1.0, 3.0, 8.0, 99.0])
        res = smooth_detailed(train, proj_config(Kernel.EPANECHNIKOV, Neighbours(2)), train.curve(0))
        assert res.degenerate and res.value == pytest.approx(4.0, abs=1e-12)

    def test_knn_monotone_distance_transform_invariance_indicator(self):
        rng = np.random.default_rng(31)
        D = np.abs(rng.normal(size=(6, 9))) + 0.05
        y = rng.normal(size=9)
        a = predict_from_distances(D, y, Neighbours(3), Kernel.INDICATOR)
        b = predict_from_distances(D**3, y, Neighbours(3), Kernel.INDICATOR)
        assert np.array_equal(a.values, b.values)


class TestSmoothLoo:
    @pytest.mark.parametrize("kernel", list(Kernel))
    @pytest.mark.parametrize("tuning", [Bandwidth(1.0), Neighbours(3)])
    def test_equals_refit_on_reduced_set(self, kernel, tuning):
        rng = np.random.default_rng(13)
        train = random_train(rng, 6, 9)
        cfg = SmootherConfig(kernel, L2SemiMetric(), tuning)
        for j in range(train.n):
            keep = [i for i in range(train.n) if i != j]
            reduced = TrainingSet(train.grid, train.X[keep], train.y[keep])
            expected = smooth(reduced, cfg, train.curve(j))
            assert smooth_loo(train, cfg, j) == pytest.approx(expected, rel=1e-12, abs=1e-12)

    def test_never_reads_left_out_pair(self):
        rng = np.random.default_rng(41)
        train = random_train(rng, 7, 8)
        cfg = SmootherConfig(Kernel.EPANECHNIKOV, L2SemiMetric(), Neighbours(2))
        j = 3
        base = smooth_loo(train, cfg, j)
        perturbed = TrainingSet(train.grid, train.X, np.where(np.arange(7) == j, 1e6, train.y))
        assert smooth_loo(perturbed, cfg, j) == base

    def test_constant_response(self):
        train = constant_curves_train([0.0, 1.0, 2.0, 5.0], [7.0, 7.0, 7.0, 7.0])
        cfg = proj_config(Kernel.EPANECHNIKOV, Neighbours(2))
        assert smooth_loo(train, cfg, 0) == pytest.approx(7.0, abs=1e-12)

    def test_k_range_for_loo(self):
        train = constant_curves_train([0.0, 1.0, 2.0], [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            smooth_loo(train, proj_config(Kernel.EPANECHNIKOV, Neighbours(2)), 0)


class TestPredictBatch:
    def test_empty_input(self):
        train = constant_curves_train([0.0, 1.0], [1.0, 2.0])
        res = predict_batch(train, proj_config(Kernel.EPANECHNIKOV, Bandwidth(1.0)), np.empty((0, train.grid.size)))
        assert res.values.shape == (0,) and res.degenerate.shape == (0,)

    def test_wide_indicator_bandwidth_gives_sample_mean(self):
        train = constant_curves_train([0.0, 1.0, 2.0, 3.0], [1.0, 2.0, 3.0, 4.0])
        res = predict_batch(train, proj_config(Kernel.INDICATOR, Bandwidth(100.0)), train.X[:1])
        assert res.values[0] == pytest.approx(train.y.mean(), abs=1e-12)

    def test_matches_single_point_smooth(self):
        rng = np.random.default_rng(3)
        train = random_train(rng, 8, 11)
        X_new = rng.normal(size=(5, 11))
        cfg = proj_config(Kernel.EPANECHNIKOV, Neighbours(3))
        res = predict_batch(train, cfg, X_new)
        for i in range(5):
            assert res.values[i] == pytest.approx(
                smooth(train, cfg, Curve(train.grid, X_new[i])), rel=1e-12, abs=1e-12
            )

    def test_grid_mismatch(self):
        train = constant_curves_train([0.0, 1.0], [1.0, 2.0])
        with pytest.raises(GridMismatchError):
            predict_batch(train, proj_config(Kernel.EPANECHNIKOV, Bandwidth(1.0)), np.zeros((2, 4)))


class TestTrainingSet:
    def test_from_curves(self):
        g = Grid.equispaced(0.0, 1.0, 6)
        curves = [Curve(g, np.full(6, float(i))) for i in range(3)]
        train = TrainingSet.from_curves(curves, [1.0, 2.0, 3.0])
        assert train.n == 3
        assert np.array_equal(train.curve(2).values, curves[2].values)

    def test_validation(self):
        g = Grid.equispaced(0.0, 1.0, 6)
        with pytest.raises(ValueError):
            TrainingSet(g, np.zeros((1, 6)), np.zeros(1))
        with pytest.raises(ValueError):
            TrainingSet(g, np.zeros((3, 6)), np.zeros(2))
        with pytest.raises(GridMismatchError):
            TrainingSet(g, np.zeros((3, 5)), np.zeros(3))
