import numpy as np
import pytest

from nnsr.imaging import Window
from nnsr.measures import AtomicMeasure


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def gauss5():
    return Window.gaussian(np.linspace(0.0, 1.0, 5), 0.2)


@pytest.fixture
def gauss3():
    return Window.gaussian([0.0, 0.5, 1.0], 0.2)


@pytest.fixture
def two_atoms():
    return AtomicMeasure.from_atoms([(0.4, 0.3, 1.0), (0.7, 0.8, 1.0)])


def random_measure(rng, n_atoms, wmin=0.1, wmax=2.0):
    pts = rng.uniform(0.0, 1.0, size=(n_atoms, 2))
    w = rng.uniform(wmin, wmax, size=n_atoms)
    return AtomicMeasure(pts, w)
