import numpy as np
import pytest

from emulkit.tensorfield import Boundary, BoundarySpec, FieldSet, Trajectory


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_fieldset(rng, extents=(6, 5), orders=(0, 1, 2), names=None):
    dim = len(extents)
    names = names or tuple(f"f{i}" for i in range(len(orders)))
    channels = sum(dim**o for o in orders)
    return FieldSet(names, orders, rng.standard_normal((channels,) + tuple(extents)))


def random_trajectory(rng, length=4, extents=(6, 5), orders=(0, 1), boundary=None):
    dim = len(extents)
    channels = sum(dim**o for o in orders)
    arr = rng.standard_normal((length, channels) + tuple(extents))
    boundary = boundary or BoundarySpec.uniform(Boundary.PERIODIC, dim)
    names = tuple(f"f{i}" for i in range(len(orders)))
    return Trajectory.from_array(names, orders, arr, boundary=boundary)
