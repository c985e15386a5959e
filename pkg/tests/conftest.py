import numpy as np
import pytest

from sebcom import corpus, semcodec
from sebcom.importance import builtin_saliency
from sebcom.kb import FINE_DIM, COARSE_DIM, Granularity, KnowledgeBase, Seb
from sebcom.semcodec import CodecConfig


def make_kb(n_coarse=4, n_fine=4, seed=0, importances=None):
    """Small hand-built KB with deterministic random centroids."""
    rng = np.random.default_rng(seed)
    kb = KnowledgeBase()
    sid = 0
    for granularity, count, dim in (
        (Granularity.COARSE, n_coarse, COARSE_DIM),
        (Granularity.FINE, n_fine, FINE_DIM),
    ):
        for i in range(count):
            imp = importances[sid] if importances else float(rng.uniform(0.1, 1.0))
            kb.sebs[sid] = Seb(
                id=sid, granularity=granularity, centroid=rng.uniform(0, 1, dim), importance=imp
            )
            sid += 1
    from sebcom.channel import assign_labels
    from sebcom.kb import rebuild_relation

    for granularity in (Granularity.COARSE, Granularity.FINE):
        if kb.sebs_of(granularity):
            assign_labels(kb, granularity)
    rebuild_relation(kb)
    kb.baseline_distortion = 0.01
    return kb


@pytest.fixture(scope="session")
def blob_corpus():
    return corpus.generate_corpus("blobs", 6, 128, 1)


@pytest.fixture(scope="session")
def small_config():
    return CodecConfig(k_coarse=8, k_fine=8, seed=3)


@pytest.fixture(scope="session")
def trained_kb(blob_corpus, small_config):
    return semcodec.build_kb(blob_corpus, small_config, builtin_saliency)
