"""B-spline bases and the constructive set of candidate functional directions.

Directions are unit-norm splines theta = sum_j alpha_j e_j over a clamped
B-spline basis.  The candidate set enumerates seed-coefficient vectors over
C^d, keeps those strictly positive at a reference point t0, and normalizes
each survivor in the discrete quadrature geometry of the training grid.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

from .errors import DomainError, EmptyDirectionSetError


@dataclass(frozen=True)
class BasisSpec:
    """Clamped B-spline space: order (degree + 1), equispaced interior knots, domain."""

    order: int
    interior_knots: int
    domain: tuple[float, float]

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("spline order must be >= 1")
        if self.interior_knots < 0:
            raise ValueError("interior knot count must be >= 0")
        lo, hi = self.domain
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ValueError("domain must be a finite increasing interval")
        object.__setattr__(self, "domain", (float(lo), float(hi)))

    @property
    def dimension(self) -> int:
        return self.order + self.interior_knots

    @property
    def degree(self) -> int:
        return self.order - 1

    def knot_vector(self) -> np.ndarray:
        """End knots of multiplicity `order`, interior knots equispaced."""
        lo, hi = self.domain
        interior = np.linspace(lo, hi, self.interior_knots + 2)[1:-1]
        return np.concatenate([np.full(self.order, lo), interior, np.full(self.order, hi)])


def eval_basis(spec: BasisSpec, points: np.ndarray) -> np.ndarray:
    """Matrix B[i, j] = e_j(points[i]) via the de Boor triangular recurrence.

    Rows form a partition of unity on the domain; the right endpoint takes
    the left-limit convention so the last basis function equals one there.
    """
    x = np.atleast_1d(np.asarray(points, dtype=float))
    t = spec.knot_vector()
    p = spec.degree
    lo, hi = spec.domain
    if x.size and (x.min() < lo or x.max() > hi):
        raise DomainError(f"evaluation points outside basis domain [{lo}, {hi}]")

    d = spec.dimension
    out = np.zeros((x.size, d))
    # span index: t[span] <= x < t[span+1], clamped so x == hi lands in the last span
    spans = np.searchsorted(t, x, side="right") - 1
    spans = np.clip(spans, p, d - 1)
    N = np.empty(p + 1)
    left = np.empty(p + 1)
    right = np.empty(p + 1)
    for i in range(x.size):
        xi = x[i]
        s = spans[i]
        N[0] = 1.0
        for j in range(1, p + 1):
            left[j] = xi - t[s + 1 - j]
            right[j] = t[s + j] - xi
            saved = 0.0
            for r in range(j):
                temp = N[r] / (right[r + 1] + left[j - r])
                N[r] = saved + right[r + 1] * temp
                saved = left[j - r] * temp
            N[j] = saved
        out[i, s - p : s + 1] = N[: p + 1]
    return out


def spline_derivative_values(
    spec: BasisSpec, coefficients: np.ndarray, order: int, points: np.ndarray
) -> np.ndarray:
    """Analytic derivative of a spline in this basis, sampled at `points`."""
    spline = BSpline(spec.knot_vector(), coefficients, spec.degree, extrapolate=True)
    return spline.derivative(order)(points)


@dataclass(frozen=True, eq=False)
class Direction:
    """A functional index theta = sum_j alpha_j e_j."""

    spec: BasisSpec
    coefficients: np.ndarray

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float)
        object.__setattr__(self, "coefficients", coef)
        if coef.shape != (self.spec.dimension,):
            raise ValueError(
                f"expected {self.spec.dimension} coefficients, got {coef.shape}"
            )

    def eval(self, points: np.ndarray) -> np.ndarray:
        return eval_basis(self.spec, points) @ self.coefficients

    def __call__(self, t: float) -> float:
        return float(self.eval(np.array([t]))[0])


def eval_direction(direction: Direction, grid) -> "object":
    """The direction as a Curve on the given grid."""
    from .curves import Curve

    return Curve(grid, direction.eval(grid.points))


@dataclass(frozen=True)
class DirectionSetSpec:
    """Recipe for the candidate direction set: basis, seed coefficients, reference point."""

    basis: BasisSpec
    seeds: tuple[float, ...] = (-1.0, 0.0, 1.0)
    t0: float | None = None

    def __post_init__(self):
        seeds = tuple(sorted(float(c) for c in self.seeds))
        if len(set(seeds)) < 2:
            raise ValueError("need at least two distinct seed coefficients")
        object.__setattr__(self, "seeds", seeds)
        lo, hi = self.basis.domain
        t0 = (lo + hi) / 2.0 if self.t0 is None else float(self.t0)
        if not lo <= t0 <= hi:
            raise ValueError(f"t0 = {t0} outside the basis domain [{lo}, {hi}]")
        object.__setattr__(self, "t0", t0)


def build_direction_set(spec: DirectionSetSpec, grid) -> list[Direction]:
    """Enumerate C^d seed vectors, keep theta_init(t0) > 0, normalize on the grid.

    Enumeration is lexicographic over ascending seeds, so the output order is
    deterministic.  Normalization uses the trapezoid inner product on `grid`,
    matching the geometry of every later projection.  Exact duplicate
    coefficient vectors are dropped (first occurrence kept).
    """
    basis = spec.basis
    d = basis.dimension
    cand = np.array(list(itertools.product(spec.seeds, repeat=d)))

    b_t0 = eval_basis(basis, np.array([spec.t0]))[0]
    at_t0 = cand @ b_t0
    cand = cand[at_t0 > 0.0]
    if cand.shape[0] == 0:
        raise EmptyDirectionSetError("no candidate direction satisfies theta(t0) > 0")

    B = eval_basis(basis, grid.points)
    gram = B.T @ (grid.weights[:, None] * B)
    norms_sq = np.einsum("nd,de,ne->n", cand, gram, cand)
    usable = norms_sq > 0.0
    cand, norms_sq = cand[usable], norms_sq[usable]
    if cand.shape[0] == 0:
        raise EmptyDirectionSetError("all surviving candidates have zero quadrature norm")
    alphas = cand / np.sqrt(norms_sq)[:, None]

    _, first = np.unique(alphas, axis=0, return_index=True)
    alphas = alphas[np.sort(first)]
    return [Direction(basis, a) for a in alphas]


def directions_matrix(directions: list[Direction]) -> np.ndarray:
    """Stack direction coefficients as rows."""
    return np.vstack([d.coefficients for d in directions])


# --- serialization ----------------------------------------------------------


def write_direction_set_csv(path, directions: list[Direction]) -> None:
    np.savetxt(path, directions_matrix(directions), delimiter=",", fmt="%.17g")


def read_direction_set_csv(path, spec: BasisSpec) -> list[Direction]:
    rows = np.loadtxt(path, delimiter=",", ndmin=2)
    return [Direction(spec, r) for r in rows]


def direction_record(direction: Direction) -> dict[str, str]:
    lo, hi = direction.spec.domain
    return {
        "basis_order": str(direction.spec.order),
        "basis_interior_knots": str(direction.spec.interior_knots),
        "basis_domain_lo": repr(lo),
        "basis_domain_hi": repr(hi),
        "coefficients": ",".join(repr(float(c)) for c in direction.coefficients),
    }


def direction_from_record(rec: dict[str, str]) -> Direction:
    spec = BasisSpec(
        order=int(rec["basis_order"]),
        interior_knots=int(rec["basis_interior_knots"]),
        domain=(float(rec["basis_domain_lo"]), float(rec["basis_domain_hi"])),
    )
    coef = np.array([float(v) for v in rec["coefficients"].split(",")])
    return Direction(spec, coef)
