import numpy as np

from sebcom.prng import Xoshiro256StarStar, derive_seed, splitmix64_stream

# published reference outputs of splitmix64 started at 0
SPLITMIX_SEED0 = [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_splitmix64_reference_vectors():
    assert splitmix64_stream(0, 3) == SPLITMIX_SEED0


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & (2**64 - 1)


def xoshiro_reference(state, n):
    """Independent straight-line transcription of the xoshiro256** step."""
    s = list(state)
    out = []
    for _ in range(n):
        out.append((_rotl((s[1] * 5) & (2**64 - 1), 7) * 9) & (2**64 - 1))
        t = (s[1] << 17) & (2**64 - 1)
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
    return out


def test_xoshiro_matches_reference_step():
    seed = 12345
    state = splitmix64_stream(seed, 4)
    rng = Xoshiro256StarStar(seed)
    assert [rng.next_u64() for _ in range(50)] == xoshiro_reference(state, 50)


def test_same_seed_same_stream():
    a = Xoshiro256StarStar(99).uniforms(100)
    b = Xoshiro256StarStar(99).uniforms(100)
    assert np.array_equal(a, b)


def test_uniform_range_and_moments():
    u = Xoshiro256StarStar(7).uniforms(200_000)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.005
    assert abs(u.var() - 1 / 12) < 0.002


def test_gaussian_moments():
    z = Xoshiro256StarStar(11).gaussians(200_000)
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1.0) < 0.02


def test_gaussians_prefix_consistent():
    # the first n draws do not depend on how many are requested (pairwise)
    a = Xoshiro256StarStar(5).gaussians(10)
    b = Xoshiro256StarStar(5).gaussians(6)
    assert np.array_equal(a[:6], b)


def test_derive_seed_distinct_and_deterministic():
    seeds = {derive_seed(42, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert derive_seed(42, 7) == derive_seed(42, 7)


def test_randint_below_bounds():
    rng = Xoshiro256StarStar(3)
    draws = [rng.randint_below(10) for _ in range(1000)]
    assert min(draws) == 0 and max(draws) == 9


def test_shuffle_is_permutation():
    rng = Xoshiro256StarStar(8)
    items = list(range(50))
    rng.shuffle(items)
    assert sorted(items) == list(range(50))
    assert items != list(range(50))
