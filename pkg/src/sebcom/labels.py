"""Greedy anti-confusion label assignment for codebook indices.

Important entries are labeled first and greedily pushed as far apart in
Hamming distance as the label width allows, so that residual channel
bit errors are least likely to confuse two important entries.
"""

from __future__ import annotations

import numpy as np


def hamming_table(width: int) -> np.ndarray:
    """Pairwise Hamming distances between all ``2**width`` labels."""
    size = 1 << width
    vals = np.arange(size, dtype=np.uint64)
    x = vals[:, None] ^ vals[None, :]
    return np.array([[bin(int(v)).count("1") for v in row] for row in x], dtype=np.int64)


def greedy_max_min_labels(order: int, width: int) -> list[int]:
    """Assign ``order`` labels of ``width`` bits, in priority order.

    Each step takes the unused label with maximal minimum Hamming
    distance to every label already assigned; ties take the numerically
    smallest label.  The first pick is label 0.
    """
    if order > (1 << width):
        raise ValueError(f"cannot fit {order} labels in {width} bits")
    if width == 0:
        return [0] * min(order, 1)
    size = 1 << width
    table = hamming_table(width)
    used = np.zeros(size, dtype=bool)
    min_dist = np.full(size, width + 1, dtype=np.int64)
    out: list[int] = []
    for _ in range(order):
        cand = np.where(~used, min_dist, -1)
        pick = int(np.argmax(cand))  # argmax takes the lowest index on ties
        out.append(pick)
        used[pick] = True
        min_dist = np.minimum(min_dist, table[pick])
    return out
