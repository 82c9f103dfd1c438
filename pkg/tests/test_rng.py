import numpy as np

from corridorlab import rng


def test_same_stream_reproduces():
    a = rng.stream(123, rng.SCENE, 4).standard_normal(16)
    b = rng.stream(123, rng.SCENE, 4).standard_normal(16)
    assert np.array_equal(a, b)


def test_streams_differ_by_tag_and_seed():
    base = rng.stream(5, rng.SCENE).standard_normal(8)
    assert not np.array_equal(base, rng.stream(5, rng.GP).standard_normal(8))
    assert not np.array_equal(base, rng.stream(6, rng.SCENE).standard_normal(8))
    assert not np.array_equal(base, rng.stream(5, rng.SCENE, 1).standard_normal(8))


def test_large_seed_wraps():
    g = rng.stream(2**64 + 3, rng.SCENE)
    h = rng.stream(3, rng.SCENE)
    assert np.array_equal(g.standard_normal(4), h.standard_normal(4))
