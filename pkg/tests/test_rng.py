import numpy as np

from app.core.rng import Stream, normal_block, substream


def test_blocks_are_reproducible():
    a = normal_block(7, Stream.INPUT_NOISE, 3, 10, 2)
    b = normal_block(7, Stream.INPUT_NOISE, 3, 10, 2)
    assert np.array_equal(a, b)


def test_streams_steps_and_seeds_are_independent():
    base = normal_block(7, Stream.INPUT_NOISE, 3, 10, 2)
    assert not np.allclose(base, normal_block(7, Stream.PROCESS_NOISE, 3, 10, 2))
    assert not np.allclose(base, normal_block(7, Stream.INPUT_NOISE, 4, 10, 2))
    assert not np.allclose(base, normal_block(8, Stream.INPUT_NOISE, 3, 10, 2))


def test_row_assignment_independent_of_block_size():
    small = normal_block(1, Stream.TERMINAL, 0, 5, 3)
    large = normal_block(1, Stream.TERMINAL, 0, 50, 3)
    assert np.array_equal(small, large[:5])


def test_zero_columns():
    assert normal_block(0, Stream.PROCESS_NOISE, 0, 4, 0).shape == (4, 0)


def test_substream_generator():
    g = substream(3, Stream.PROBE)
    assert isinstance(g, np.random.Generator)
    assert g.standard_normal() == substream(3, Stream.PROBE).standard_normal()
