"""
Deterministic random substreams.

Every random draw is keyed by (seed, stream, step). A draw block for one step is
generated in a single call with one row per particle or rollout, so the row a
particle receives does not depend on how the per-particle work is scheduled.
"""

import numpy as np


class Stream:
    """Stream tags used as the first spawn-key component"""
    TERMINAL = 0
    INPUT_NOISE = 1
    PROCESS_NOISE = 2
    ROLLOUT = 3
    ROLLOUT_INIT = 4
    ORACLE = 5
    PROBE = 6


def substream(seed: int, stream: int, step: int = 0) -> np.random.Generator:
    """Generator for the (seed, stream, step) substream"""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream), int(step)))
    return np.random.Generator(np.random.PCG64(seq))


def normal_block(seed: int, stream: int, step: int, rows: int, cols: int) -> np.ndarray:
    """Standard normal draws of shape (rows, cols) for one step"""
    if cols == 0:
        return np.zeros((rows, 0))
    return substream(seed, stream, step).standard_normal((rows, cols))
