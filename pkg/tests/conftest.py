import numpy as np
import pytest

from fsim.basis import BasisSpec, Direction
from fsim.curves import Grid
from fsim.estimators import TrainingSet


@pytest.fixture
def unit_grid() -> Grid:
    return Grid.equispaced(0.0, 1.0, 50)


def constant_direction(domain=(0.0, 1.0)) -> Direction:
    """theta == 1 on the domain: projections equal plain trapezoid means."""
    return Direction(BasisSpec(order=1, interior_knots=0, domain=domain), np.array([1.0]))


def constant_curves_train(values, y, grid=None) -> TrainingSet:
    """Training set of constant curves; with theta == 1 the projections are the constants."""
    g = grid if grid is not None else Grid.equispaced(0.0, 1.0, 11)
    X = np.tile(np.asarray(values, dtype=float)[:, None], (1, g.size))
    return TrainingSet(g, X, np.asarray(y, dtype=float))


def random_train(rng, n, p, domain=(0.0, 1.0)) -> TrainingSet:
    g = Grid.equispaced(domain[0], domain[1], p)
    X = rng.normal(size=(n, p)).cumsum(axis=1) * 0.3 + rng.normal(size=(n, 1))
    y = rng.normal(size=n)
    return TrainingSet(g, X, y)
