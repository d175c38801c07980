"""
Keyed, counter-based random streams.

Every random draw in opnorm-lab comes from a Philox generator whose key is
derived from a tuple of non-negative integers (seed, stream, row, ...). A
stream only depends on its own key, so replications can be added, reordered
or run in parallel without perturbing each other.
"""

from typing import Iterable

import numpy as np

# Stream tags: fixed small integers so keys stay stable across releases.
STREAM_PRIMARY = 0
STREAM_SECONDARY = 1
STREAM_LOADINGS = 2
STREAM_FACTORS = 3
STREAM_NOISE = 4
STREAM_MOMENT_DATA = 5
STREAM_CALIBRATION = 6
STREAM_SAMPLING = 7

SEGMENT_IN_SAMPLE = 0
SEGMENT_PRESAMPLE = 1

_UINT64_MASK = (1 << 64) - 1


def _entropy(keys: Iterable[int]) -> list[int]:
    words = []
    for key in keys:
        key = int(key)
        if key < 0:
            raise ValueError(f"stream keys must be non-negative, got {key}")
        words.append(key & _UINT64_MASK)
    return words


def keyed_generator(*keys: int) -> np.random.Generator:
    """
    Build a Philox generator for the given key path.

    Args:
        *keys (int): Non-negative integers, typically (seed, stream, ...).

    Returns:
        np.random.Generator: Generator whose output depends on keys only.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(_entropy(keys))))


def split_seed(base_seed: int, *path: int) -> int:
    """
    Derive a child 64-bit seed from a base seed and an index path.

    Child j of a base seed never changes when more children are requested.

    Args:
        base_seed (int): Parent seed.
        *path (int): Index path, e.g. (replication,) or (dims, replication).

    Returns:
        int: Derived seed in [0, 2**63).
    """
    seq = np.random.SeedSequence(_entropy([base_seed]), spawn_key=tuple(_entropy(path)))
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def keyed_rows(seed: int, stream: int, segment: int, n_rows: int, n_cols: int,
               draw: str = "normal") -> np.ndarray:
    """
    Draw an n_rows x n_cols array whose row i is keyed by (seed, stream, segment, i).

    Entry (i, j) is the j-th draw of its row stream, so it does not depend on
    how many rows or columns are requested.

    Args:
        seed (int): Base seed.
        stream (int): Stream tag (component).
        segment (int): Time segment (in-sample or presample).
        n_rows (int): Number of rows.
        n_cols (int): Number of columns.
        draw (str): "normal", "rademacher" or "uniform" (on [-1, 1]).

    Returns:
        np.ndarray: Array of shape (n_rows, n_cols).
    """
    out = np.empty((n_rows, n_cols), dtype=np.float64)
    for i in range(n_rows):
        gen = keyed_generator(seed, stream, segment, i)
        if draw == "normal":
            out[i] = gen.standard_normal(n_cols)
        elif draw == "rademacher":
            out[i] = 2.0 * gen.integers(0, 2, size=n_cols) - 1.0
        elif draw == "uniform":
            out[i] = gen.uniform(-1.0, 1.0, size=n_cols)
        else:
            raise ValueError(f"unknown draw kind: {draw}")
    return out
