import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sebcom import kb as kbmod
from sebcom.kb import (
    COARSE_DIM,
    FINE_DIM,
    Granularity,
    KnowledgeBase,
    Seb,
    admission_threshold,
    apply_update,
    check_poset_axioms,
    decay_and_refresh,
    empirical_mutual_information,
    generate_candidates,
    prune,
    refine,
)
from sebcom.syncproto import kb_hash

from conftest import make_kb


# ---------------------------------------------------------------- poset


def test_valid_poset():
    kb = make_kb(2, 2, seed=0)
    report = check_poset_axioms(kb)
    assert report["valid"] and report["violations"] == []


def test_same_granularity_edge_invalid():
    kb = make_kb(2, 2, seed=0)
    coarse = [s.id for s in kb.sebs_of(Granularity.COARSE)]
    kb.relation.edges = {(coarse[0], coarse[1])}
    report = check_poset_axioms(kb)
    assert not report["valid"]
    assert any("within granularity" in v for v in report["violations"])


def test_wrong_direction_edge_invalid():
    kb = make_kb(1, 1, seed=0)
    c = kb.sebs_of(Granularity.COARSE)[0].id
    f = kb.sebs_of(Granularity.FINE)[0].id
    kb.relation.edges = {(c, f)}  # coarse -> fine is the wrong way up
    assert not check_poset_axioms(kb)["valid"]


def test_dangling_edge_invalid():
    kb = make_kb(1, 1, seed=0)
    kb.relation.edges = {(999, 0)}
    report = check_poset_axioms(kb)
    assert not report["valid"]
    assert any("unknown Seb" in v for v in report["violations"])


# ---------------------------------------------------------------- refine


def test_refine_matches_brute_force():
    kb = make_kb(3, 8, seed=2)
    fine = kb.sebs_of(Granularity.FINE)
    for coarse in kb.sebs_of(Granularity.COARSE):
        ids = refine(kb, coarse.id)
        grid = coarse.centroid.reshape(32, 32)
        quads = [grid[:16, :16], grid[:16, 16:], grid[16:, :16], grid[16:, 16:]]
        for fid, quad in zip(ids, quads):
            flat = quad.reshape(-1)
            dists = [np.sum((s.centroid - flat) ** 2) for s in fine]
            assert fid == fine[int(np.argmin(dists))].id
            assert (fid, coarse.id) in kb.relation.edges


def test_refine_rejects_fine_seb():
    kb = make_kb(1, 1, seed=0)
    with pytest.raises(ValueError):
        refine(kb, kb.sebs_of(Granularity.FINE)[0].id)


def test_refine_unknown_id():
    kb = make_kb(1, 1, seed=0)
    with pytest.raises(KeyError):
        refine(kb, 12345)


# ------------------------------------------------- mutual information


def mi_oracle(counts):
    """Direct double-loop plug-in MI in bits."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    p = counts / total
    px = p.sum(axis=1)
    ps = p.sum(axis=0)
    mi = 0.0
    for i in range(p.shape[0]):
        for j in range(p.shape[1]):
            if p[i, j] > 0:
                mi += p[i, j] * math.log2(p[i, j] / (px[i] * ps[j]))
    return mi


def test_mi_product_table_is_zero():
    counts = np.outer([1, 2, 3], [4, 5])
    r = empirical_mutual_information(counts)
    assert abs(r.mi) < 1e-12


def test_mi_diagonal_table():
    r = empirical_mutual_information(np.eye(4))
    assert r.mi == pytest.approx(2.0, abs=1e-12)
    assert r.h_x == pytest.approx(2.0, abs=1e-12)
    assert r.h_x_given_s == pytest.approx(0.0, abs=1e-12)


def test_mi_small_table_oracle():
    counts = [[3, 1], [1, 3]]
    r = empirical_mutual_information(counts)
    assert r.mi == pytest.approx(mi_oracle(counts), abs=1e-12)
    assert r.h_x_given_s == pytest.approx(r.h_x - r.mi, abs=1e-12)


def test_mi_rejects_bad_input():
    with pytest.raises(ValueError):
        empirical_mutual_information([[1, -1], [0, 1]])
    with pytest.raises(ValueError):
        empirical_mutual_information([[0, 0], [0, 0]])


@settings(deadline=None, max_examples=50)
@given(
    st.lists(
        st.lists(st.integers(min_value=0, max_value=20), min_size=2, max_size=5),
        min_size=2,
        max_size=5,
    ).filter(lambda rows: len({len(r) for r in rows}) == 1 and sum(map(sum, rows)) > 0)
)
def test_mi_properties(rows):
    r = empirical_mutual_information(rows)
    assert -1e-12 <= r.mi <= min(r.h_x, r.h_s) + 1e-9
    assert r.mi == pytest.approx(mi_oracle(rows), abs=1e-9)


# ------------------------------------------------------------ lifecycle


def test_decay_example():
    kb = make_kb(2, 0, seed=1, importances=[1.0, 0.5])
    kb.params.decay_lambda = 1.0
    decay_and_refresh(kb, set())
    assert kb.sebs[0].importance == pytest.approx(math.exp(-1.0))
    assert kb.sebs[0].age == 1


def test_refresh_resets_age_and_floors_importance():
    kb = make_kb(2, 0, seed=1, importances=[0.2, 0.5])
    kb.sebs[0].age = 5
    decay_and_refresh(kb, {0: 0.9})
    assert kb.sebs[0].age == 0
    assert kb.sebs[0].importance == pytest.approx(0.9)
    # floor never lowers importance
    decay_and_refresh(kb, {0: 0.1})
    assert kb.sebs[0].importance == pytest.approx(0.9)


def test_refresh_with_set_keeps_importance():
    kb = make_kb(1, 0, seed=1, importances=[0.4])
    decay_and_refresh(kb, {0})
    assert kb.sebs[0].importance == pytest.approx(0.4)


def test_decay_monotone():
    kb = make_kb(3, 3, seed=4)
    before = {s.id: s.importance for s in kb.sebs.values()}
    decay_and_refresh(kb, set())
    for sid, imp in before.items():
        assert kb.sebs[sid].importance < imp


def test_prune_keeps_survivor_per_granularity():
    kb = make_kb(3, 2, seed=0, importances=[0.01, 0.02, 0.03, 0.01, 0.01])
    removed = prune(kb)
    # highest-importance Seb of each granularity survives even below threshold
    assert set(kb.sebs) == {2, 3}
    assert removed == [0, 1, 4]
    assert all(sid not in {a for e in kb.relation.edges for a in e} for sid in removed)


def test_prune_above_threshold_untouched():
    kb = make_kb(2, 2, seed=0, importances=[0.5, 0.6, 0.7, 0.8])
    assert prune(kb) == []
    assert len(kb.sebs) == 4


def test_admission_threshold_zero_with_one_seb():
    kb = make_kb(1, 0, seed=0)
    assert admission_threshold(kb, Granularity.COARSE) == 0.0


def test_admission_threshold_formula():
    kb = make_kb(3, 0, seed=5)
    cents = kb.centroid_matrix(Granularity.COARSE)
    nn = []
    for i in range(3):
        nn.append(min(np.linalg.norm(cents[i] - cents[j]) for j in range(3) if j != i))
    expected = kb.params.admission_factor * np.mean(nn)
    assert admission_threshold(kb, Granularity.COARSE) == pytest.approx(expected)


def test_generate_candidates_rejects_near_duplicates():
    kb = make_kb(4, 0, seed=6)
    # feed back the existing centroids: every candidate is a duplicate
    feats = kb.centroid_matrix(Granularity.COARSE)
    out = generate_candidates(kb, feats, np.full(4, 0.5), Granularity.COARSE, 4, seed=1)
    assert out == []


def test_generate_candidates_admits_novel():
    kb = make_kb(2, 0, seed=7)
    rng = np.random.default_rng(8)
    feats = rng.uniform(0, 1, (40, COARSE_DIM))
    imps = rng.uniform(0.3, 0.9, 40)
    out = generate_candidates(kb, feats, imps, Granularity.COARSE, 3, seed=2)
    assert out  # random 1024-dim points are far from 2 existing centroids
    for cand in out:
        assert cand.granularity == Granularity.COARSE
        assert 0.0 <= cand.importance <= 1.0
        assert cand.id < 0  # placeholder until admitted


def test_apply_update_fresh_ids_and_version():
    kb = make_kb(2, 2, seed=9)
    v0 = kb.version
    cand = Seb(id=-1, granularity=Granularity.COARSE,
               centroid=np.full(COARSE_DIM, 0.25), importance=0.7)
    apply_update(kb, [cand], removals=[0])
    assert kb.version == v0 + 1
    assert 0 not in kb.sebs
    new_id = max(kb.sebs)
    assert np.allclose(kb.sebs[new_id].centroid, 0.25)
    assert check_poset_axioms(kb)["valid"]
    labels = [s.label for s in kb.sebs.values()]
    assert all(lab is not None for lab in labels)


def test_apply_update_unknown_removal():
    kb = make_kb(2, 2, seed=9)
    with pytest.raises(KeyError):
        apply_update(kb, [], removals=[777])


def test_apply_update_deterministic_hash():
    def build():
        kb = make_kb(3, 3, seed=10)
        cand = Seb(id=-1, granularity=Granularity.FINE,
                   centroid=np.linspace(0, 1, FINE_DIM), importance=0.6)
        apply_update(kb, [cand], removals=[1], importance_updates={0: 0.33})
        return kb

    assert kb_hash(build()) == kb_hash(build())


def test_seb_validation():
    with pytest.raises(ValueError):
        Seb(id=0, granularity=Granularity.FINE, centroid=np.zeros(7), importance=0.5)
    with pytest.raises(ValueError):
        Seb(id=0, granularity=Granularity.FINE, centroid=np.zeros(FINE_DIM), importance=1.5)
    with pytest.raises(ValueError):
        Seb(id=0, granularity=Granularity.FINE, centroid=np.full(FINE_DIM, 2.0), importance=0.5)


def test_bits_per_index():
    kb = make_kb(5, 1, seed=0)
    assert kb.bits_per_index(Granularity.COARSE) == 3
    assert kb.bits_per_index(Granularity.FINE) == 0
    empty = KnowledgeBase()
    with pytest.raises(ValueError):
        empty.bits_per_index(Granularity.COARSE)
