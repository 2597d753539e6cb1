import numpy as np
import pytest

from fsim.basis import BasisSpec
from fsim.curves import (
    Curve,
    Grid,
    L2SemiMetric,
    ProjectionSemiMetric,
    derivative_curve,
    inner_product,
    pairwise_distances,
    read_curves_csv,
    read_responses_csv,
    semi_metric,
    write_curves_csv,
    write_responses_csv,
)
from fsim.errors import BasisFitError, GridMismatchError

from conftest import constant_direction


def grid100():
    return Grid.equispaced(0.0, 1.0, 100)


class TestGrid:
    def test_rejects_short_unsorted_nonfinite(self):
        with pytest.raises(ValueError):
            Grid(np.array([1.0]))
        with pytest.raises(ValueError):
            Grid(np.array([0.0, 2.0, 1.0]))
        with pytest.raises(ValueError):
            Grid(np.array([0.0, np.nan, 1.0]))

    def test_trapezoid_weights_sum_to_range(self):
        g = Grid(np.array([0.0, 0.1, 0.4, 1.0]))
        assert np.isclose(g.weights.sum(), 1.0)


class TestInnerProduct:
    def test_constant_is_exact(self):
        g = grid100()
        one = Curve(g, np.ones(100))
        assert inner_product(one, one) == pytest.approx(1.0, abs=1e-14)

    def test_linear_is_exact(self):
        g = grid100()
        f = Curve(g, g.points)
        one = Curve(g, np.ones(100))
        assert inner_product(f, one) == pytest.approx(0.5, abs=1e-14)

    def test_fourier_orthogonality_against_fine_quadrature(self):
        # oracle: the same trapezoid rule on a 10^6-point grid
        tf = np.linspace(0.0, 1.0, 1_000_000)
        wf = np.empty_like(tf)
        wf[0] = wf[-1] = (tf[1] - tf[0]) / 2
        wf[1:-1] = (tf[2:] - tf[:-2]) / 2
        oracle = np.dot(wf, np.cos(2 * np.pi * tf) * np.sin(4 * np.pi * tf))
        assert abs(oracle) < 1e-12

        g = grid100()
        f = Curve(g, np.cos(2 * np.pi * g.points))
        h = Curve(g, np.sin(4 * np.pi * g.points))
        assert abs(inner_product(f, h)) < 1e-10

    def test_symmetric_and_bilinear(self):
        rng = np.random.default_rng(3)
        g = Grid.equispaced(0.0, 2.0, 37)
        a = Curve(g, rng.normal(size=37))
        b = Curve(g, rng.normal(size=37))
        c = Curve(g, rng.normal(size=37))
        assert inner_product(a, b) == inner_product(b, a)
        lhs = inner_product(Curve(g, 2.5 * a.values + b.values), c)
        rhs = 2.5 * inner_product(a, c) + inner_product(b, c)
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_grid_mismatch(self):
        f = Curve(grid100(), np.ones(100))
        h = Curve(Grid.equispaced(0.0, 1.0, 50), np.ones(50))
        with pytest.raises(GridMismatchError):
            inner_product(f, h)


class TestSemiMetric:
    def test_identity_both_kinds(self):
        g = grid100()
        x = Curve(g, np.sin(g.points))
        theta = constant_direction()
        assert semi_metric(ProjectionSemiMetric(theta), x, x) == 0.0
        assert semi_metric(L2SemiMetric(), x, x) == 0.0

    def test_constant_difference_under_unit_direction(self):
        g = grid100()
        x1 = Curve(g, np.full(100, 1.5))
        x2 = Curve(g, np.full(100, 4.0))
        d = semi_metric(ProjectionSemiMetric(constant_direction()), x1, x2)
        assert d == pytest.approx(2.5, abs=1e-12)

    def test_projection_matches_explicit_weighted_sum(self):
        rng = np.random.default_rng(11)
        g = Grid.equispaced(0.0, 1.0, 23)
        theta = constant_direction()
        tv = theta.eval(g.points)
        curves = [Curve(g, rng.normal(size=23)) for _ in range(3)]
        sm = ProjectionSemiMetric(theta)
        for a in curves:
            for b in curves:
                expected = abs(sum(w * t * (u - v) for w, t, u, v in zip(g.weights, tv, a.values, b.values)))
                assert semi_metric(sm, a, b) == pytest.approx(expected, abs=1e-12)

    def test_semi_not_metric_orthogonal_difference(self):
        # x1 - x2 orthogonal to theta in the quadrature geometry: distance 0 for x1 != x2
        rng = np.random.default_rng(4)
        g = grid100()
        theta = constant_direction()
        tv = theta.eval(g.points)
        v = rng.normal(size=100)
        v -= tv * np.dot(g.weights * tv, v) / np.dot(g.weights * tv, tv)
        x2 = Curve(g, rng.normal(size=100))
        x1 = Curve(g, x2.values + v)
        assert not np.allclose(x1.values, x2.values)
        assert semi_metric(ProjectionSemiMetric(theta), x1, x2) < 1e-12

    def test_direction_scaling_scales_distance(self):
        rng = np.random.default_rng(9)
        g = grid100()
        x1 = Curve(g, rng.normal(size=100))
        x2 = Curve(g, rng.normal(size=100))
        base = constant_direction()
        d1 = semi_metric(ProjectionSemiMetric(base), x1, x2)
        from fsim.basis import Direction

        # powers of two scale exactly; generic factors to rounding
        for c, tol in ((2.0, 0.0), (0.5, 0.0), (3.7, 1e-12)):
            scaled = Direction(base.spec, base.coefficients * c)
            dc = semi_metric(ProjectionSemiMetric(scaled), x1, x2)
            if tol == 0.0:
                assert dc == c * d1
            else:
                assert dc == pytest.approx(c * d1, rel=tol)


class TestPairwise:
    def test_single_curve(self):
        g = grid100()
        D = pairwise_distances(L2SemiMetric(), [Curve(g, g.points)])
        assert D.shape == (1, 1) and D[0, 0] == 0.0

    def test_duplicates_give_zero_offdiagonal(self):
        g = grid100()
        c = Curve(g, np.sin(g.points))
        D = pairwise_distances(ProjectionSemiMetric(constant_direction()), [c, c, c])
        assert np.all(D == 0.0)

    @pytest.mark.parametrize("kind_name", ["projection", "l2"])
    def test_matches_entrywise_loop(self, kind_name):
        rng = np.random.default_rng(21)
        g = Grid.equispaced(0.0, 1.0, 17)
        curves = [Curve(g, rng.normal(size=17)) for _ in range(5)]
        kind = ProjectionSemiMetric(constant_direction()) if kind_name == "projection" else L2SemiMetric()
        D = pairwise_distances(kind, curves)
        assert np.all(D >= 0.0) and np.all(np.diag(D) == 0.0)
        assert np.array_equal(D, D.T)
        for i in range(5):
            for j in range(5):
                assert D[i, j] == pytest.approx(semi_metric(kind, curves[i], curves[j]), abs=1e-12)


class TestDerivatives:
    def test_quadratic_first_derivative(self):
        g = Grid.equispaced(0.0, 1.0, 200)
        x = Curve(g, g.points**2)
        dx = derivative_curve(x, 1, BasisSpec(4, 8, (0.0, 1.0)))
        assert np.max(np.abs(dx.values - 2 * g.points)) < 1e-6

    def test_constant_derivative_is_zero(self):
        g = Grid.equispaced(0.0, 1.0, 60)
        x = Curve(g, np.full(60, 3.25))
        dx = derivative_curve(x, 1, BasisSpec(4, 5, (0.0, 1.0)))
        assert np.max(np.abs(dx.values)) < 1e-9

    def test_cubic_second_derivative_interior(self):
        g = Grid.equispaced(0.0, 1.0, 200)
        x = Curve(g, g.points**3)
        dx = derivative_curve(x, 2, BasisSpec(4, 8, (0.0, 1.0)))
        interior = (g.points > 0.1) & (g.points < 0.9)
        assert np.max(np.abs(dx.values - 6 * g.points)[interior]) < 1e-4

    def test_rank_deficient_design(self):
        g = Grid.equispaced(0.0, 1.0, 10)
        x = Curve(g, g.points)
        with pytest.raises(BasisFitError):
            derivative_curve(x, 1, BasisSpec(4, 20, (0.0, 1.0)))

    def test_order_needs_smooth_basis(self):
        g = Grid.equispaced(0.0, 1.0, 30)
        x = Curve(g, g.points)
        with pytest.raises(ValueError):
            derivative_curve(x, 2, BasisSpec(3, 4, (0.0, 1.0)))


class TestCsv:
    def test_curves_roundtrip(self, tmp_path):
        rng = np.random.default_rng(8)
        g = Grid.equispaced(0.0, 1.0, 12)
        X = rng.normal(size=(4, 12))
        path = tmp_path / "curves.csv"
        write_curves_csv(path, g, X)
        g2, X2 = read_curves_csv(path)
        assert g2.matches(g)
        assert np.array_equal(X, X2)

    def test_empty_curves_roundtrip(self, tmp_path):
        g = Grid.equispaced(0.0, 1.0, 5)
        path = tmp_path / "curves.csv"
        write_curves_csv(path, g, np.empty((0, 5)))
        g2, X2 = read_curves_csv(path)
        assert g2.matches(g) and X2.shape == (0, 5)

    def test_responses_roundtrip(self, tmp_path):
        y = np.array([0.1, -2.5, 3.75])
        path = tmp_path / "responses.csv"
        write_responses_csv(path, y)
        assert np.array_equal(read_responses_csv(path), y)
