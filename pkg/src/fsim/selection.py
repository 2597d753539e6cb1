"""Leave-one-out cross-validation and joint selection of tuning and direction.

The criterion matrix is indexed (tuning position x direction index).  The
selection rule follows the two-stage argmin: for each tuning value pick the
best direction, then pick the tuning value whose best direction scores
lowest.  Ties break towards the smallest tuning position, then the smallest
direction index, so results are deterministic and permutation-stable.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import _backend
from .basis import Direction, DirectionSetSpec, build_direction_set, directions_matrix, eval_basis
from .curves import Grid, L2SemiMetric, ProjectionSemiMetric
from .errors import DegenerateDirectionError, DegenerateModelError
from .estimators import (
    Bandwidth,
    Kernel,
    Neighbours,
    PredictionResult,
    SmootherConfig,
    TrainingSet,
    Tuning,
    predict_from_distances,
)

KERNEL_SMOOTHER = "kernel"
KNN_SMOOTHER = "knn"


@dataclass(frozen=True)
class HGrid:
    """Fixed bandwidth grid, strictly increasing and positive."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.size == 0:
            raise ValueError("bandwidth grid is empty")
        if not np.all(v > 0):
            raise ValueError("bandwidths must be positive")
        if v.size > 1 and not np.all(np.diff(v) > 0):
            raise ValueError("bandwidth grid must be strictly increasing")


@dataclass(frozen=True)
class HGridPolicy:
    """Re-derive a default bandwidth grid per direction, with a shared size."""

    size: int = 25

    def __post_init__(self):
        if self.size < 2:
            raise ValueError("grid size must be >= 2")


@dataclass(frozen=True)
class KGrid:
    """Neighbour-count grid, strictly increasing integers >= 1."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.int64)
        object.__setattr__(self, "values", v)
        if v.size == 0:
            raise ValueError("neighbour grid is empty")
        if v.min() < 1:
            raise ValueError("neighbour counts must be >= 1")
        if v.size > 1 and not np.all(np.diff(v) > 0):
            raise ValueError("neighbour grid must be strictly increasing")


def _projections(train: TrainingSet, directions: list[Direction]) -> np.ndarray:
    """Projections of every training curve on every direction, shape (D, n)."""
    A = directions_matrix(directions)
    B = eval_basis(directions[0].spec, train.grid.points)
    theta_vals = A @ B.T  # (D, p)
    return theta_vals @ (train.X * train.grid.weights).T


def default_h_grid(train: TrainingSet, direction: Direction, size: int = 25) -> HGrid:
    """Geometric bandwidth grid from the projected-distance distribution.

    Spans the central 90% of the off-diagonal distance multiset (its 0.05
    to 0.95 quantiles), so the largest bandwidths reach 95% of the sample
    while the smallest stay in the near-interpolation regime.  The lower
    end is floored at half the smallest positive distance so every
    bandwidth is positive.
    """
    if train.n < 3:
        raise ValueError("need n >= 3 to derive a bandwidth grid")
    if size < 2:
        raise ValueError("grid size must be >= 2")
    Pt = _projections(train, [direction])
    H, ok = _backend.h_grids_from_projections(Pt, size)
    if not ok[0]:
        raise DegenerateDirectionError(
            "all projected distances vanish; the direction cannot separate the data"
        )
    values = np.unique(H[:, 0])
    return HGrid(values)


def default_k_grid(n: int, max_values: int = 50, frac: float = 0.95) -> KGrid:
    """Neighbour counts {2, ..., floor(frac (n-1))}, thinned to at most max_values."""
    if n < 4:
        raise ValueError("need n >= 4 for a neighbour grid")
    if not 0 < frac <= 1:
        raise ValueError("frac must be in (0, 1]")
    k_max = min(int(np.floor(frac * (n - 1))), n - 2)
    ks = np.arange(2, k_max + 1, dtype=np.int64)
    if ks.size > max_values:
        idx = np.unique(np.round(np.linspace(0, ks.size - 1, max_values)).astype(int))
        ks = ks[idx]
    return KGrid(ks)


def msep(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Mean squared prediction error."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise ValueError("need two aligned nonempty vectors")
    diff = y_true - y_pred
    return float(np.mean(diff * diff))


@dataclass(frozen=True, eq=False)
class CVResult:
    """Criterion grid over (tuning position x direction), with its argmin."""

    criterion: np.ndarray  # (T, D)
    tuning_values: np.ndarray  # (T, D): per-direction tuning value for each cell
    degenerate: np.ndarray  # (T, D) bool
    tuning_kind: str  # "bandwidth" | "neighbours"
    best_row: int
    best_col: int

    @property
    def best_score(self) -> float:
        return float(self.criterion[self.best_row, self.best_col])

    @property
    def best_tuning(self) -> float:
        return float(self.tuning_values[self.best_row, self.best_col])

    @property
    def best_direction(self) -> int:
        return self.best_col

    @property
    def degenerate_count(self) -> int:
        return int(self.degenerate.sum())

    def to_tuning(self) -> Tuning:
        if self.tuning_kind == "bandwidth":
            return Bandwidth(self.best_tuning)
        return Neighbours(int(round(self.best_tuning)))


def _select(criterion: np.ndarray) -> tuple[int, int]:
    # stage 1: best direction per tuning value; stage 2: best tuning value.
    # np.argmin returns the first minimum, which encodes the tie rule.
    best_dir_per_t = np.argmin(criterion, axis=1)
    scores = criterion[np.arange(criterion.shape[0]), best_dir_per_t]
    t = int(np.argmin(scores))
    m = int(best_dir_per_t[t])
    if not np.isfinite(criterion[t, m]):
        raise DegenerateModelError("every (tuning, direction) cell is degenerate")
    return t, m


def cross_validate(
    train: TrainingSet,
    directions: list[Direction],
    grid: HGrid | HGridPolicy | KGrid,
    kernel: Kernel = Kernel.EPANECHNIKOV,
) -> CVResult:
    """LOO CV criterion over the tuning grid and the direction set.

    criterion[t, m] = (1/n) sum_j (Y_j - LOO prediction at X_j)^2 under
    direction m and tuning value t.  Degenerate cells (unusable direction,
    or any leave-one-out fallback) keep a finite value when one exists but
    are flagged; fully unusable directions get +inf columns.
    """
    if not directions:
        raise ValueError("need at least one direction")
    if train.n < 3:
        raise ValueError("leave-one-out cross-validation needs n >= 3")
    Pt = _projections(train, directions)
    D = len(directions)
    if isinstance(grid, KGrid):
        ks = grid.values
        if ks.max() > train.n - 2:
            raise ValueError(f"neighbour counts must be <= n - 2 = {train.n - 2}")
        crit, degen = _backend.cv_knn_projections(Pt, train.y, ks, kernel.code)
        tuning_values = np.tile(ks.astype(float)[:, None], (1, D))
        kind = "neighbours"
    else:
        if isinstance(grid, HGridPolicy):
            H, ok = _backend.h_grids_from_projections(Pt, grid.size)
        else:
            H = np.tile(grid.values[:, None], (1, D))
            ok = np.ones(D, dtype=bool)
        crit, degen = _backend.cv_bandwidth_projections(Pt, train.y, H, kernel.code)
        if not ok.all():
            crit[:, ~ok] = np.inf
            degen[:, ~ok] = True
        tuning_values = H
        kind = "bandwidth"
    t, m = _select(crit)
    return CVResult(crit, tuning_values, degen, kind, t, m)


@dataclass(frozen=True, eq=False)
class FittedFSIM:
    """A selected (direction, tuning) pair plus the training data it smooths over.

    `cv` carries the full criterion grid for freshly fitted models; models
    reloaded from disk keep only the recorded best score (cv is None and
    best_cv_score holds the number).
    """

    direction: Direction
    tuning: Tuning
    kernel: Kernel
    train: TrainingSet
    cv: CVResult | None
    best_cv_score: float = float("nan")

    def __post_init__(self):
        if self.cv is not None:
            object.__setattr__(self, "best_cv_score", self.cv.best_score)

    @property
    def config(self) -> SmootherConfig:
        return SmootherConfig(self.kernel, ProjectionSemiMetric(self.direction), self.tuning)

    def projections(self, X: np.ndarray) -> np.ndarray:
        sm = ProjectionSemiMetric(self.direction)
        return sm.project(np.atleast_2d(X), self.train.grid)

    def predict(self, X_new: np.ndarray) -> PredictionResult:
        from .estimators import predict_batch

        return predict_batch(self.train, self.config, X_new)


def fsim_predict(fit: FittedFSIM, x_new) -> PredictionResult:
    """Predictions for new curves (rows or Curve list) under a fitted model."""
    if isinstance(x_new, np.ndarray):
        X = x_new
    else:
        X = np.vstack([c.values for c in x_new]) if len(x_new) else np.empty((0, fit.train.grid.size))
    return fit.predict(X)


def fit_fsim(
    train: TrainingSet,
    direction_spec: DirectionSetSpec,
    smoother: str = KNN_SMOOTHER,
    kernel: Kernel = Kernel.EPANECHNIKOV,
    h_grid: HGrid | HGridPolicy | None = None,
    k_grid: KGrid | None = None,
    interior_knot_candidates: list[int] | None = None,
) -> FittedFSIM:
    """Build the direction set, run CV, return the fitted model.

    With `interior_knot_candidates`, the whole search repeats per candidate
    basis size and the global CV minimizer wins (first candidate on ties).
    """
    if smoother not in (KERNEL_SMOOTHER, KNN_SMOOTHER):
        raise ValueError(f"unknown smoother {smoother!r}")
    if interior_knot_candidates:
        specs = [
            dataclasses.replace(
                direction_spec, basis=dataclasses.replace(direction_spec.basis, interior_knots=m)
            )
            for m in interior_knot_candidates
        ]
    else:
        specs = [direction_spec]

    best: FittedFSIM | None = None
    for spec in specs:
        directions = build_direction_set(spec, train.grid)
        if smoother == KNN_SMOOTHER:
            grid = k_grid if k_grid is not None else default_k_grid(train.n)
        else:
            grid = h_grid if h_grid is not None else HGridPolicy()
        cv = cross_validate(train, directions, grid, kernel)
        fit = FittedFSIM(directions[cv.best_col], cv.to_tuning(), kernel, train, cv)
        if best is None or cv.best_score < best.cv.best_score:
            best = fit
    assert best is not None
    return best


# --------------------------------------------------------------------------
# Fully nonparametric model on a whole-curve semi-metric (comparator/booster)
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FittedFNM:
    """Nonparametric smoother of responses against whole curves (L2 semi-metric)."""

    grid: Grid
    X: np.ndarray
    y: np.ndarray
    tuning: Tuning
    kernel: Kernel
    cv: CVResult

    def predict(self, X_new: np.ndarray) -> PredictionResult:
        X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
        w = self.grid.weights
        diff2 = (X_new[:, None, :] - self.X[None, :, :]) ** 2
        Dnew = np.sqrt(np.maximum(diff2 @ w, 0.0))
        return predict_from_distances(Dnew, self.y, self.tuning, self.kernel)


def fit_fnm(
    grid: Grid,
    X: np.ndarray,
    y: np.ndarray,
    smoother: str = KNN_SMOOTHER,
    kernel: Kernel = Kernel.EPANECHNIKOV,
    h_grid_size: int = 25,
    k_grid: KGrid | None = None,
) -> FittedFNM:
    """LOO-CV-tuned Nadaraya-Watson fit under the L2 semi-metric (no direction search)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    Dm = L2SemiMetric().pairwise(X, grid)
    if smoother == KNN_SMOOTHER:
        ks = (k_grid if k_grid is not None else default_k_grid(n)).values
        if ks.max() > n - 2:
            raise ValueError(f"neighbour counts must be <= n - 2 = {n - 2}")
        crit, degen = _backend.cv_knn_distances(Dm, y, ks, kernel.code)
        tuning_values = ks.astype(float)
        kind = "neighbours"
    elif smoother == KERNEL_SMOOTHER:
        hvals, ok = _backend._np_h_grid_from_distances(Dm, h_grid_size)
        if not ok:
            raise DegenerateDirectionError("all pairwise distances vanish")
        crit, degen = _backend.cv_bandwidth_distances(Dm, y, hvals, kernel.code)
        tuning_values = hvals
        kind = "bandwidth"
    else:
        raise ValueError(f"unknown smoother {smoother!r}")
    cv = CVResult(
        crit[:, None], tuning_values[:, None], degen[:, None], kind, int(np.argmin(crit)), 0
    )
    return FittedFNM(grid, X, y, cv.to_tuning(), kernel, cv)


def boost_residuals(
    fit: FittedFSIM,
    boost_grid: Grid,
    boost_X: np.ndarray,
    smoother: str = KNN_SMOOTHER,
    kernel: Kernel | None = None,
    h_grid_size: int = 25,
    k_grid: KGrid | None = None,
) -> FittedFNM:
    """Nonparametric fit of the in-sample residuals against companion covariates.

    The residuals are Y_i minus the base model's full (not leave-one-out)
    smoothed value at X_i; the returned model is meant to be added on top
    of the base predictions.
    """
    boost_X = np.asarray(boost_X, dtype=float)
    if boost_X.shape[0] != fit.train.n:
        raise ValueError(
            f"boost covariates have {boost_X.shape[0]} rows, training set has {fit.train.n}"
        )
    base = fit.predict(fit.train.X)
    residuals = fit.train.y - base.values
    return fit_fnm(
        boost_grid,
        boost_X,
        residuals,
        smoother=smoother,
        kernel=kernel if kernel is not None else fit.kernel,
        h_grid_size=h_grid_size,
        k_grid=k_grid,
    )


@dataclass(frozen=True, eq=False)
class BoostedFSIM:
    """Base single-index fit plus a residual smoother on companion covariates."""

    base: FittedFSIM
    residual_model: FittedFNM

    def predict(self, X_new: np.ndarray, X_boost_new: np.ndarray) -> PredictionResult:
        p_base = self.base.predict(X_new)
        p_res = self.residual_model.predict(X_boost_new)
        return PredictionResult(
            p_base.values + p_res.values, p_base.degenerate | p_res.degenerate
        )


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------


def fitted_fsim_fields(fit: FittedFSIM, smoother: str) -> dict[str, str]:
    """Flat key=value fields describing the fitted model (no training data)."""
    from .basis import direction_record

    fields = {"model": "fsim", "smoother": smoother, "kernel": fit.kernel.value}
    fields.update(direction_record(fit.direction))
    if isinstance(fit.tuning, Bandwidth):
        fields["tuning_kind"] = "bandwidth"
        fields["tuning_value"] = repr(float(fit.tuning.h))
    else:
        fields["tuning_kind"] = "neighbours"
        fields["tuning_value"] = str(int(fit.tuning.k))
    fields["cv_best_score"] = repr(float(fit.best_cv_score))
    return fields


def fitted_fsim_from_fields(fields: dict[str, str], train: TrainingSet) -> FittedFSIM:
    from .basis import direction_from_record

    direction = direction_from_record(fields)
    if fields["tuning_kind"] == "bandwidth":
        tuning: Tuning = Bandwidth(float(fields["tuning_value"]))
    else:
        tuning = Neighbours(int(fields["tuning_value"]))
    return FittedFSIM(
        direction,
        tuning,
        Kernel(fields["kernel"]),
        train,
        cv=None,
        best_cv_score=float(fields["cv_best_score"]),
    )


def write_cv_csv(path, cv: CVResult) -> None:
    """Cell-per-row export: direction index, tuning value, criterion, degenerate flag."""
    from .curves import atomic_write_text

    T, D = cv.criterion.shape
    lines = ["direction_index,tuning_value,criterion,degenerate"]
    for t in range(T):
        for m in range(D):
            lines.append(
                f"{m},{cv.tuning_values[t, m]:.17g},{cv.criterion[t, m]:.17g},"
                f"{int(cv.degenerate[t, m])}"
            )
    atomic_write_text(path, "\n".join(lines) + "\n")
