"""Discretized functional data: grids, curves, inner products and semi-metrics.

A curve is a real function observed on a fixed strictly increasing grid.
All integrals are composite-trapezoid approximations on that grid, so the
inner product is a weighted dot product and every operation here reduces
to plain array arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import BasisFitError, GridMismatchError

if TYPE_CHECKING:
    from .basis import BasisSpec, Direction


@dataclass(frozen=True, eq=False)
class Grid:
    """Strictly increasing observation abscissae t_1 < ... < t_p."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("grid needs at least two points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("grid points must be finite")
        if not np.all(np.diff(pts) > 0):
            raise ValueError("grid points must be strictly increasing")

    @classmethod
    def equispaced(cls, lo: float, hi: float, num: int) -> "Grid":
        return cls(np.linspace(lo, hi, num))

    @cached_property
    def weights(self) -> np.ndarray:
        """Composite trapezoid quadrature weights (exact for piecewise-linear integrands)."""
        t = self.points
        w = np.empty_like(t)
        w[0] = (t[1] - t[0]) / 2.0
        w[-1] = (t[-1] - t[-2]) / 2.0
        w[1:-1] = (t[2:] - t[:-2]) / 2.0
        return w

    @property
    def size(self) -> int:
        return self.points.size

    @property
    def span(self) -> tuple[float, float]:
        return float(self.points[0]), float(self.points[-1])

    def matches(self, other: "Grid") -> bool:
        return self is other or np.array_equal(self.points, other.points)


@dataclass(frozen=True, eq=False)
class Curve:
    """One curve: values aligned with a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.shape != (self.grid.size,):
            raise GridMismatchError(
                f"curve has {vals.shape} values for a grid of size {self.grid.size}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("curve values must be finite")


def _check_same_grid(f: Curve, g: Curve) -> Grid:
    if not f.grid.matches(g.grid):
        raise GridMismatchError("curves are observed on different grids")
    return f.grid


def inner_product(f: Curve, g: Curve) -> float:
    """Trapezoid approximation of the L2 inner product over the common grid."""
    grid = _check_same_grid(f, g)
    return float(np.dot(grid.weights, f.values * g.values))


def l2_norm(f: Curve) -> float:
    return float(np.sqrt(inner_product(f, f)))


@dataclass(frozen=True)
class ProjectionSemiMetric:
    """d(x1, x2) = |<theta, x1 - x2>| for a fixed functional direction theta.

    A genuine semi-metric: differences orthogonal to theta are invisible.
    """

    direction: "Direction"

    def direction_values(self, grid: Grid) -> np.ndarray:
        lo, hi = self.direction.spec.domain
        glo, ghi = grid.span
        if glo < lo or ghi > hi:
            raise GridMismatchError(
                f"direction domain [{lo}, {hi}] does not cover the grid [{glo}, {ghi}]"
            )
        return self.direction.eval(grid.points)

    def project(self, X: np.ndarray, grid: Grid) -> np.ndarray:
        """Projections <theta, x_i> for rows of X; the 1-D coordinates behind every distance.

        Row-wise dot products: BLAS matrix-vector results can depend on the
        batch shape, which would break bit-reproducibility between fitting
        and later prediction calls on differently sized batches.
        """
        v = grid.weights * self.direction_values(grid)
        return np.array([np.dot(row, v) for row in np.atleast_2d(X)])

    def distance(self, x1: Curve, x2: Curve) -> float:
        grid = _check_same_grid(x1, x2)
        theta = self.direction_values(grid)
        return abs(float(np.dot(grid.weights * theta, x1.values - x2.values)))

    def pairwise(self, X: np.ndarray, grid: Grid) -> np.ndarray:
        p = self.project(X, grid)
        return np.abs(p[:, None] - p[None, :])


@dataclass(frozen=True)
class L2SemiMetric:
    """Whole-curve distance sqrt( integral (x1 - x2)^2 ); used by the fully nonparametric model."""

    def distance(self, x1: Curve, x2: Curve) -> float:
        grid = _check_same_grid(x1, x2)
        diff = x1.values - x2.values
        return float(np.sqrt(np.dot(grid.weights, diff * diff)))

    def pairwise(self, X: np.ndarray, grid: Grid) -> np.ndarray:
        # ||xi - xj||^2 = <xi,xi> + <xj,xj> - 2<xi,xj> in the weighted geometry
        Xw = X * np.sqrt(grid.weights)
        sq = np.einsum("ij,ij->i", Xw, Xw)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (Xw @ Xw.T)
        np.maximum(d2, 0.0, out=d2)
        np.fill_diagonal(d2, 0.0)
        return np.sqrt(d2)


SemiMetric = ProjectionSemiMetric | L2SemiMetric


def semi_metric(kind: SemiMetric, x1: Curve, x2: Curve) -> float:
    """Distance between two curves under the given semi-metric."""
    return kind.distance(x1, x2)


def pairwise_distances(kind: SemiMetric, curves: Sequence[Curve]) -> np.ndarray:
    """Symmetric zero-diagonal matrix D[i, j] = semi_metric(kind, curves[i], curves[j]).

    Row-parallel friendly; each entry is a fixed-order weighted sum, so the
    result is identical however the rows are scheduled.
    """
    if not curves:
        return np.zeros((0, 0))
    grid = curves[0].grid
    for c in curves[1:]:
        if not grid.matches(c.grid):
            raise GridMismatchError("curves are observed on different grids")
    X = np.vstack([c.values for c in curves])
    if isinstance(kind, ProjectionSemiMetric):
        D = kind.pairwise(X, grid)
    else:
        # exact entrywise definition; the einsum shortcut is only used where
        # callers ask for it explicitly
        n = len(curves)
        D = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                D[i, j] = D[j, i] = kind.distance(curves[i], curves[j])
    return D


def derivative_curve(x: Curve, order: int, spec: "BasisSpec") -> Curve:
    """Derivative of a curve via analytic differentiation of a least-squares B-spline fit.

    The curve is fitted (unpenalized) on `spec`, the fitted spline is
    differentiated `order` times, and the result is sampled back on the
    original grid.  Needs spec.order >= order + 2 for a continuous result.
    """
    if order not in (1, 2):
        raise ValueError("derivative order must be 1 or 2")
    return Curve(x.grid, derivative_matrix(x.grid, x.values[None, :], order, spec)[0])


def derivative_matrix(grid: Grid, X: np.ndarray, order: int, spec: "BasisSpec") -> np.ndarray:
    """derivative_curve applied to every row of X, sharing one design factorization.

    Rows are fitted and differentiated one at a time through the same QR
    factors, so results do not depend on how many curves share the call
    (batched least-squares solvers are not bit-stable across batch sizes).
    """
    from scipy.linalg import solve_triangular

    from .basis import eval_basis, spline_derivative_values

    X = np.asarray(X, dtype=float)
    if order == 0:
        return X.copy()
    if order not in (1, 2):
        raise ValueError("derivative order must be 0, 1 or 2")
    if spec.order < order + 2:
        raise ValueError(
            f"basis order {spec.order} too low for a continuous derivative of order {order}"
        )
    design = eval_basis(spec, grid.points)
    if np.linalg.matrix_rank(design) < spec.dimension:
        raise BasisFitError(
            f"rank-deficient spline design: grid of {grid.size} points cannot "
            f"identify {spec.dimension} coefficients"
        )
    Q, R = np.linalg.qr(design)
    out = np.empty_like(X)
    for i in range(X.shape[0]):
        coef = solve_triangular(R, Q.T @ X[i])
        out[i] = spline_derivative_values(spec, coef, order, grid.points)
    return out


# --- CSV formats -----------------------------------------------------------
#
# Curves file: first row = grid points, each subsequent row = one curve.
# Responses file: one value per line, aligned with the curve rows.
# Writes go through a temp file + rename so partial output never lands.


def atomic_savetxt(path, rows, **kwargs) -> None:
    import os

    tmp = f"{path}.tmp"
    np.savetxt(tmp, rows, **kwargs)
    os.replace(tmp, path)


def atomic_write_text(path, text: str) -> None:
    import os

    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_curves_csv(path, grid: Grid, X: np.ndarray) -> None:
    X = np.atleast_2d(np.asarray(X, dtype=float)) if np.size(X) else np.empty((0, grid.size))
    rows = np.vstack([grid.points[None, :], X]) if X.size else grid.points[None, :]
    atomic_savetxt(path, rows, delimiter=",", fmt="%.17g")


def read_curves_csv(path) -> tuple[Grid, np.ndarray]:
    raw = np.loadtxt(path, delimiter=",", ndmin=2)
    grid = Grid(raw[0])
    return grid, raw[1:]


def write_responses_csv(path, y: np.ndarray) -> None:
    atomic_savetxt(path, np.asarray(y, dtype=float), fmt="%.17g")


def read_responses_csv(path) -> np.ndarray:
    return np.loadtxt(path, ndmin=1)
