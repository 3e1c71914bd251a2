"""Stream derivation: reproducible, path-separated generators."""

import numpy as np
import pytest

from pckv._rng import stream


def test_same_path_same_draws():
    a = stream(7, 1, 2).random(5)
    b = stream(7, 1, 2).random(5)
    assert np.array_equal(a, b)


def test_different_paths_differ():
    a = stream(7, 1).random(5)
    b = stream(7, 2).random(5)
    c = stream(8, 1).random(5)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_nested_derivation_composes():
    # deriving in two hops must match the flat path
    base = np.random.SeedSequence(5, spawn_key=(3,))
    assert np.array_equal(stream(base, 4).random(4), stream(5, 3, 4).random(4))


def test_generator_passthrough():
    gen = np.random.default_rng(0)
    assert stream(gen) is gen
    with pytest.raises(ValueError):
        stream(gen, 1)
