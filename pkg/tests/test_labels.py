import numpy as np
import pytest

from sebcom.labels import greedy_max_min_labels, hamming_table


def greedy_oracle(order, width):
    """Independent re-run of the greedy rule with plain loops."""
    size = 1 << width
    out = []
    for _ in range(order):
        best, best_d = None, -1
        for lab in range(size):
            if lab in out:
                continue
            d = min((bin(lab ^ o).count("1") for o in out), default=width + 1)
            if d > best_d:
                best, best_d = lab, d
        out.append(best)
    return out


def test_two_labels_three_bits():
    assert greedy_max_min_labels(2, 3) == [0b000, 0b111]


def test_four_labels_two_bits_all_used():
    labs = greedy_max_min_labels(4, 2)
    assert sorted(labs) == [0, 1, 2, 3]
    dists = [bin(a ^ b).count("1") for i, a in enumerate(labs) for b in labs[i + 1 :]]
    assert min(dists) == 1  # pigeonhole


def test_matches_independent_greedy():
    for order, width in [(8, 6), (5, 4), (16, 4), (3, 5)]:
        assert greedy_max_min_labels(order, width) == greedy_oracle(order, width)


def test_injective():
    labs = greedy_max_min_labels(100, 7)
    assert len(set(labs)) == 100


def test_overflow_rejected():
    with pytest.raises(ValueError):
        greedy_max_min_labels(5, 2)


def test_hamming_table_symmetry():
    t = hamming_table(4)
    assert np.array_equal(t, t.T)
    assert t[0b0101, 0b1010] == 4
