"""Nadaraya-Watson smoothers with global (kernel) and local (kNN) bandwidths.

Both smoothers share one primitive: a weighted average of responses with
weights K(d_i / h*).  For the kernel smoother h* is a fixed bandwidth; for
the kNN smoother h* is the (k+1)-th smallest training distance at the
evaluation point, so exactly k points receive strictly positive weight
(the boundary point sits at u = 1, where every kernel here vanishes).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _backend
from .curves import Curve, Grid, ProjectionSemiMetric, SemiMetric
from .errors import GridMismatchError


class Kernel(enum.Enum):
    """Nonnegative bounded kernels with support normalized to [0, 1)."""

    EPANECHNIKOV = "epanechnikov"
    INDICATOR = "indicator"

    @property
    def code(self) -> int:
        return _backend.EPANECHNIKOV if self is Kernel.EPANECHNIKOV else _backend.INDICATOR

    def weights(self, u: np.ndarray) -> np.ndarray:
        return _backend._kernel_weights(np.asarray(u, dtype=float), self.code)


@dataclass(frozen=True)
class Bandwidth:
    """Global bandwidth tuning for the kernel smoother."""

    h: float

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("bandwidth must be positive")


@dataclass(frozen=True)
class Neighbours:
    """Neighbour count tuning for the kNN smoother."""

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("neighbour count must be >= 1")


Tuning = Bandwidth | Neighbours


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Paired curves (rows of X on a common grid) and scalar responses."""

    grid: Grid
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if X.ndim != 2 or X.shape[1] != self.grid.size:
            raise GridMismatchError(
                f"curve matrix {X.shape} does not match grid size {self.grid.size}"
            )
        if y.shape != (X.shape[0],):
            raise ValueError("responses must align with curve rows")
        if X.shape[0] < 2:
            raise ValueError("need at least two observations")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("training data must be finite")

    @classmethod
    def from_curves(cls, curves: Sequence[Curve], y) -> "TrainingSet":
        grid = curves[0].grid
        for c in curves[1:]:
            if not grid.matches(c.grid):
                raise GridMismatchError("curves are observed on different grids")
        return cls(grid, np.vstack([c.values for c in curves]), np.asarray(y, dtype=float))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def curve(self, i: int) -> Curve:
        return Curve(self.grid, self.X[i])


@dataclass(frozen=True)
class SmootherConfig:
    kernel: Kernel
    semimetric: SemiMetric
    tuning: Tuning


@dataclass(frozen=True)
class SmoothResult:
    value: float
    degenerate: bool


@dataclass(frozen=True)
class PredictionResult:
    values: np.ndarray
    degenerate: np.ndarray  # bool per prediction


def _distances_to(train: TrainingSet, semimetric: SemiMetric, x: Curve) -> np.ndarray:
    if not train.grid.matches(x.grid):
        raise GridMismatchError("evaluation curve is not on the training grid")
    if isinstance(semimetric, ProjectionSemiMetric):
        p = semimetric.project(train.X, train.grid)
        px = semimetric.project(x.values[None, :], train.grid)[0]
        return np.abs(p - px)
    diff = train.X - x.values[None, :]
    return np.sqrt(np.maximum((diff * diff) @ train.grid.weights, 0.0))


def knn_bandwidth(train: TrainingSet, semimetric: SemiMetric, x: Curve, k: int) -> float:
    """k-th smallest training distance to x: the minimal radius enclosing >= k points."""
    if not 1 <= k <= train.n:
        raise ValueError(f"k must be in [1, {train.n}]")
    d = _distances_to(train, semimetric, x)
    return float(np.partition(d, k - 1)[k - 1])


def _nw(dists: np.ndarray, y: np.ndarray, h: float, kernel: Kernel) -> SmoothResult:
    """The shared weighted-average primitive over a distance vector.

    Degenerate cases: h == 0 averages responses at distance exactly zero;
    an all-zero weight sum returns the nearest response (first index on
    ties).  Both are flagged.
    """
    if h == 0.0:
        at_zero = dists == 0.0
        if at_zero.any():
            return SmoothResult(float(y[at_zero].mean()), True)
        return SmoothResult(float(y[np.argmin(dists)]), True)
    w = _backend._kernel_weights(dists / h, kernel.code)
    den = w.sum()
    if den > 0.0:
        return SmoothResult(float(np.dot(w, y) / den), False)
    return SmoothResult(float(y[np.argmin(dists)]), True)


def _local_bandwidth(dists: np.ndarray, k: int) -> float:
    # (k+1)-th order statistic so exactly k points carry positive weight
    return float(np.partition(dists, k)[k])


def smooth_detailed(train: TrainingSet, config: SmootherConfig, x: Curve) -> SmoothResult:
    d = _distances_to(train, config.semimetric, x)
    if isinstance(config.tuning, Bandwidth):
        h = config.tuning.h
    else:
        k = config.tuning.k
        if k > train.n - 1:
            raise ValueError(f"k must be <= n - 1 = {train.n - 1}")
        h = _local_bandwidth(d, k)
    return _nw(d, train.y, h, config.kernel)


def smooth(train: TrainingSet, config: SmootherConfig, x: Curve) -> float:
    """Smoothed response at x: a convex combination of training responses."""
    return smooth_detailed(train, config, x).value


def smooth_loo_detailed(train: TrainingSet, config: SmootherConfig, j: int) -> SmoothResult:
    if train.n < 3:
        raise ValueError("leave-one-out smoothing needs n >= 3")
    if not 0 <= j < train.n:
        raise IndexError(f"index {j} out of range")
    d = _distances_to(train, config.semimetric, train.curve(j))
    keep = np.arange(train.n) != j
    d, y = d[keep], train.y[keep]
    if isinstance(config.tuning, Bandwidth):
        h = config.tuning.h
    else:
        k = config.tuning.k
        if k > train.n - 2:
            raise ValueError(f"leave-one-out kNN needs k <= n - 2 = {train.n - 2}")
        h = _local_bandwidth(d, k)
    return _nw(d, y, h, config.kernel)


def smooth_loo(train: TrainingSet, config: SmootherConfig, j: int) -> float:
    """smooth() on the training set with observation j removed, evaluated at X_j."""
    return smooth_loo_detailed(train, config, j).value


def predict_from_distances(
    Dnew: np.ndarray, y: np.ndarray, tuning: Tuning, kernel: Kernel
) -> PredictionResult:
    """Batch smoothing given a (new x training) distance matrix."""
    m = Dnew.shape[0]
    values = np.empty(m)
    flags = np.zeros(m, dtype=bool)
    for i in range(m):
        d = Dnew[i]
        if isinstance(tuning, Bandwidth):
            h = tuning.h
        else:
            h = _local_bandwidth(d, tuning.k)
        res = _nw(d, y, h, kernel)
        values[i] = res.value
        flags[i] = res.degenerate
    return PredictionResult(values, flags)


def predict_batch(
    train: TrainingSet, config: SmootherConfig, X_new: np.ndarray
) -> PredictionResult:
    """Smoothed responses for rows of X_new on the training grid."""
    X_new = np.asarray(X_new, dtype=float)
    if X_new.size == 0:
        return PredictionResult(np.empty(0), np.empty(0, dtype=bool))
    X_new = np.atleast_2d(X_new)
    if X_new.shape[1] != train.grid.size:
        raise GridMismatchError(
            f"new curves have {X_new.shape[1]} points, training grid has {train.grid.size}"
        )
    if isinstance(config.tuning, Neighbours) and config.tuning.k > train.n - 1:
        raise ValueError(f"k must be <= n - 1 = {train.n - 1}")
    sm = config.semimetric
    if isinstance(sm, ProjectionSemiMetric):
        p = sm.project(train.X, train.grid)
        q = sm.project(X_new, train.grid)
        Dnew = np.abs(q[:, None] - p[None, :])
    else:
        w = train.grid.weights
        diff2 = (X_new[:, None, :] - train.X[None, :, :]) ** 2
        Dnew = np.sqrt(np.maximum(diff2 @ w, 0.0))
    return predict_from_distances(Dnew, train.y, config.tuning, config.kernel)
