import numpy as np
import pytest

from dpbench.data import CATEGORICAL, CONTINUOUS, ColumnMeta, Dataset, synth_regression, with_categorical


class ZeroNoise:
    """Random stream whose uniforms sit at 1/2 and normals at 0, so every sampler returns 0."""

    def random(self, size=None):
        return 0.5 if size is None else np.full(size, 0.5)

    def standard_normal(self, size=None):
        return 0.0 if size is None else np.zeros(size)


@pytest.fixture
def zero_rng():
    return ZeroNoise()


@pytest.fixture
def small_meta():
    return [
        ColumnMeta("age", CONTINUOUS, 0.0, 100.0),
        ColumnMeta("grp", CATEGORICAL, categories=("A", "B")),
    ]


@pytest.fixture
def small_ds(small_meta):
    return Dataset(tuple(small_meta), ((30.0, "A"), (40.0, "A"), (50.0, "B")))


@pytest.fixture(scope="session")
def synth_5000():
    d = synth_regression(5000, 4, [1.0, -2.0, 0.5, 3.0], 0.1, seed=7, bias=10.0)
    return with_categorical(d, "grp", ["a", "b", "c", "d"], seed=8)
