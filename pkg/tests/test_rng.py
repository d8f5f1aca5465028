import numpy as np

from neoheb.rng import derive_seed, stream


def test_streams_are_reproducible():
    a = stream(5, "x", 3).random(10)
    b = stream(5, "x", 3).random(10)
    assert np.array_equal(a, b)


def test_named_streams_differ():
    assert derive_seed(1, "run", 0, 0) != derive_seed(1, "run", 0, 1)
    assert derive_seed(1, "run", 0) != derive_seed(2, "run", 0)


def test_sibling_streams_uncorrelated():
    u = [stream(0, "run", i).random(100_000) for i in range(4)]
    c = np.corrcoef(u)
    off = c[~np.eye(4, dtype=bool)]
    assert np.max(np.abs(off)) < 0.01


def test_generator_is_philox():
    assert isinstance(stream(0).bit_generator, np.random.Philox)
