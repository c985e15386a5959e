"""Explicit knowledge base: semantic bases, refinement poset, lifecycle.

A Seb is a codebook centroid in patch-feature space with granularity,
importance, and age metadata.  Coarse Sebs live on 32x32 patches
(1024-dim features), fine Sebs on 16x16 patches (256-dim).  The
refinement relation records which fine Sebs participate in refining
which coarse Sebs, stored as Hasse (covering) edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, NamedTuple

import numpy as np

from . import vq

COARSE_PATCH = 32
FINE_PATCH = 16
COARSE_DIM = COARSE_PATCH * COARSE_PATCH
FINE_DIM = FINE_PATCH * FINE_PATCH


class Granularity(IntEnum):
    COARSE = 0
    FINE = 1


def granularity_dim(granularity: Granularity) -> int:
    return COARSE_DIM if granularity == Granularity.COARSE else FINE_DIM


@dataclass
class Seb:
    """One semantic base: a centroid plus lifecycle metadata."""

    id: int
    granularity: Granularity
    centroid: np.ndarray
    importance: float
    age: int = 0
    label: int | None = None

    def __post_init__(self):
        self.centroid = np.asarray(self.centroid, dtype=np.float64)
        dim = granularity_dim(self.granularity)
        if self.centroid.shape != (dim,):
            raise ValueError(
                f"centroid length {self.centroid.shape} does not match "
                f"granularity {self.granularity.name} (expected {dim})"
            )
        if np.any(self.centroid < 0.0) or np.any(self.centroid > 1.0):
            raise ValueError("centroid components must lie in [0, 1]")
        if not 0.0 <= self.importance <= 1.0:
            raise ValueError("importance must lie in [0, 1]")
        if self.age < 0:
            raise ValueError("age must be non-negative")


@dataclass
class KbParams:
    decay_lambda: float = 0.01
    prune_threshold: float = 0.05
    admission_factor: float = 0.5
    trigger_factor: float = 1.5
    trigger_window: int = 10

    def __post_init__(self):
        if self.decay_lambda <= 0 or self.admission_factor <= 0 or self.trigger_factor <= 0:
            raise ValueError("lifecycle parameters must be strictly positive")
        if not 0.0 < self.prune_threshold < 1.0:
            raise ValueError("prune_threshold must lie in (0, 1)")
        if self.trigger_window < 1:
            raise ValueError("trigger_window must be a positive integer")


@dataclass
class RefinementRelation:
    """Hasse diagram of semantic refinement: (fine_id, coarse_id) pairs."""

    edges: set[tuple[int, int]] = field(default_factory=set)


@dataclass
class KnowledgeBase:
    version: int = 0
    sebs: dict[int, Seb] = field(default_factory=dict)
    relation: RefinementRelation = field(default_factory=RefinementRelation)
    params: KbParams = field(default_factory=KbParams)
    baseline_distortion: float = 0.0

    def sebs_of(self, granularity: Granularity) -> list[Seb]:
        """Sebs of one granularity in ascending id order."""
        return sorted(
            (s for s in self.sebs.values() if s.granularity == granularity),
            key=lambda s: s.id,
        )

    def centroid_matrix(self, granularity: Granularity) -> np.ndarray:
        sebs = self.sebs_of(granularity)
        if not sebs:
            return np.empty((0, granularity_dim(granularity)))
        return np.stack([s.centroid for s in sebs])

    def bits_per_index(self, granularity: Granularity) -> int:
        count = len(self.sebs_of(granularity))
        if count == 0:
            raise ValueError(f"no {granularity.name} Sebs in KB")
        return max(0, math.ceil(math.log2(count)))

    def next_id(self) -> int:
        return max(self.sebs, default=-1) + 1


def check_poset_axioms(kb: KnowledgeBase) -> dict:
    """Diagnostic check that the stored refinement edges form a poset.

    Reflexivity and transitivity hold by closure construction; the check
    verifies acyclicity (antisymmetry of the closure) and that every
    edge strictly decreases granularity upward (Fine -> Coarse).
    """
    violations: list[str] = []
    for fine_id, coarse_id in sorted(kb.relation.edges):
        if fine_id not in kb.sebs or coarse_id not in kb.sebs:
            violations.append(f"edge ({fine_id},{coarse_id}) references unknown Seb")
            continue
        gf = kb.sebs[fine_id].granularity
        gc = kb.sebs[coarse_id].granularity
        if gf == gc:
            violations.append(f"edge ({fine_id},{coarse_id}) stays within granularity")
        elif not (gf == Granularity.FINE and gc == Granularity.COARSE):
            violations.append(f"edge ({fine_id},{coarse_id}) increases granularity")

    # cycle detection on the directed edge set (fine -> coarse)
    adjacency: dict[int, list[int]] = {}
    for a, b in kb.relation.edges:
        adjacency.setdefault(a, []).append(b)
    WHITE, GRAY, BLACK = 0, 1, 2
    color: dict[int, int] = {}

    def visit(node: int) -> bool:
        color[node] = GRAY
        for nxt in adjacency.get(node, ()):
            c = color.get(nxt, WHITE)
            if c == GRAY:
                return True
            if c == WHITE and visit(nxt):
                return True
        color[node] = BLACK
        return False

    for node in sorted(adjacency):
        if color.get(node, WHITE) == WHITE and visit(node):
            violations.append(f"cycle through node {node}")
            break

    return {"valid": not violations, "violations": violations}


def refine(kb: KnowledgeBase, coarse_id: int) -> tuple[int, int, int, int]:
    """Quantize the four 16x16 quadrants of a coarse Seb to fine Sebs.

    Returns (TL, TR, BL, BR) fine ids and records the covering edges.
    """
    if coarse_id not in kb.sebs:
        raise KeyError(f"unknown Seb id {coarse_id}")
    seb = kb.sebs[coarse_id]
    if seb.granularity != Granularity.COARSE:
        raise ValueError(f"Seb {coarse_id} is not coarse-grained")
    fine_sebs = kb.sebs_of(Granularity.FINE)
    if not fine_sebs:
        raise ValueError("fine codebook is empty")
    fine_centroids = np.stack([s.centroid for s in fine_sebs])

    grid = seb.centroid.reshape(COARSE_PATCH, COARSE_PATCH)
    h = FINE_PATCH
    blocks = [grid[:h, :h], grid[:h, h:], grid[h:, :h], grid[h:, h:]]
    ids = []
    for block in blocks:
        j = vq.nearest_index(block.reshape(-1), fine_centroids)
        fine_id = fine_sebs[j].id
        ids.append(fine_id)
        kb.relation.edges.add((fine_id, coarse_id))
    return tuple(ids)


class MutualInformation(NamedTuple):
    mi: float
    h_x: float
    h_s: float
    h_x_given_s: float


def empirical_mutual_information(joint_counts) -> MutualInformation:
    """Plug-in estimate of I(X;S) in bits from a 2-D count table.

    X indexes rows, S columns.  Also reports H(X), H(S), and
    H(X|S) = H(X) - I(X;S).
    """
    counts = np.asarray(joint_counts, dtype=np.float64)
    if counts.ndim != 2 or counts.size == 0:
        raise ValueError("joint_counts must be a nonempty 2-D table")
    if np.any(counts < 0):
        raise ValueError("counts must be non-negative")
    total = counts.sum()
    if total < 1:
        raise ValueError("total count must be at least 1")
    p = counts / total
    px = p.sum(axis=1)
    ps = p.sum(axis=0)

    def entropy(q):
        nz = q[q > 0]
        return float(-(nz * np.log2(nz)).sum())

    h_x = entropy(px)
    h_s = entropy(ps)
    mask = p > 0
    denom = np.outer(px, ps)
    mi = float((p[mask] * np.log2(p[mask] / denom[mask])).sum())
    mi = max(mi, 0.0)
    return MutualInformation(mi, h_x, h_s, h_x - mi)


def admission_threshold(kb: KnowledgeBase, granularity: Granularity) -> float:
    """Novelty distance a candidate must exceed to enter the KB.

    admission_factor times the mean nearest-neighbor distance among the
    existing same-granularity centroids; 0 when fewer than two exist.
    """
    centroids = kb.centroid_matrix(granularity)
    if centroids.shape[0] < 2:
        return 0.0
    d = np.sqrt(vq.sq_distances(centroids, centroids))
    np.fill_diagonal(d, np.inf)
    return kb.params.admission_factor * float(d.min(axis=1).mean())


def generate_candidates(
    kb: KnowledgeBase,
    recent_features,
    recent_importances,
    granularity: Granularity,
    k: int,
    seed: int,
) -> list[Seb]:
    """Cluster a window of recent patch features into candidate Sebs.

    Candidate importance is the mean patch importance of its cluster
    members; candidates closer than the admission threshold to an
    existing centroid are dropped.
    """
    features = np.asarray(recent_features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError("recent_features must be a nonempty 2-D array")
    dim = granularity_dim(granularity)
    if features.shape[1] != dim:
        raise ValueError(f"feature dimension {features.shape[1]} != {dim}")
    imps = np.asarray(recent_importances, dtype=np.float64)
    if imps.shape[0] != features.shape[0]:
        raise ValueError("importances must parallel the feature window")

    centroids = vq.train_codebook(features, k, seed=seed)
    assign = vq.assign_all(features, centroids)
    existing = kb.centroid_matrix(granularity)
    delta = admission_threshold(kb, granularity)

    out: list[Seb] = []
    for j in range(centroids.shape[0]):
        members = assign == j
        if not members.any():
            continue
        centroid = np.clip(centroids[j], 0.0, 1.0)
        if existing.shape[0]:
            dist = float(np.sqrt(np.sum((existing - centroid) ** 2, axis=1)).min())
            if dist <= delta:
                continue
        importance = float(np.clip(imps[members].mean(), 0.0, 1.0))
        out.append(Seb(id=-1 - j, granularity=granularity, centroid=centroid, importance=importance))
    return out


def decay_and_refresh(kb: KnowledgeBase, used) -> None:
    """Per-message lifecycle step.

    Unused Sebs age by one and lose importance by exp(-decay_lambda);
    used Sebs reset to age 0 and floor their importance at the mean
    importance of the patches they encoded (when ``used`` is a mapping
    id -> mean patch importance; a plain id set keeps importance as is).
    """
    floors = used if isinstance(used, dict) else {i: None for i in used}
    lam = kb.params.decay_lambda
    for seb in kb.sebs.values():
        if seb.id in floors:
            seb.age = 0
            floor = floors[seb.id]
            if floor is not None:
                seb.importance = max(seb.importance, float(np.clip(floor, 0.0, 1.0)))
        else:
            seb.age += 1
            seb.importance *= math.exp(-lam)


def prune(kb: KnowledgeBase) -> list[int]:
    """Drop obsolete Sebs (importance below threshold), keeping at least
    the single highest-importance Seb per granularity."""
    removed: list[int] = []
    for granularity in (Granularity.COARSE, Granularity.FINE):
        sebs = kb.sebs_of(granularity)
        if not sebs:
            continue
        survivor = max(sebs, key=lambda s: (s.importance, -s.id))
        for seb in sebs:
            if seb.importance < kb.params.prune_threshold and seb.id != survivor.id:
                removed.append(seb.id)
    for sid in removed:
        del kb.sebs[sid]
        kb.relation.edges = {e for e in kb.relation.edges if sid not in e}
    return sorted(removed)


def rebuild_relation(kb: KnowledgeBase) -> None:
    """Recompute all Fine->Coarse covering edges from scratch."""
    kb.relation.edges.clear()
    if not kb.sebs_of(Granularity.FINE):
        return
    for seb in kb.sebs_of(Granularity.COARSE):
        refine(kb, seb.id)


def apply_update(
    kb: KnowledgeBase,
    candidates: Iterable[Seb],
    removals: Iterable[int],
    importance_updates: dict[int, float] | None = None,
) -> int:
    """Admit candidates, apply removals, and bump the KB version.

    Candidates get fresh consecutive ids; labels and Hasse edges are
    recomputed so that the result is a pure function of the inputs.
    """
    removals = list(removals)
    for sid in removals:
        if sid not in kb.sebs:
            raise KeyError(f"cannot remove unknown Seb id {sid}")
    for sid, value in (importance_updates or {}).items():
        if sid in kb.sebs:
            kb.sebs[sid].importance = float(np.clip(value, 0.0, 1.0))
    for sid in removals:
        del kb.sebs[sid]
        kb.relation.edges = {e for e in kb.relation.edges if sid not in e}
    next_id = kb.next_id()
    for cand in candidates:
        seb = Seb(
            id=next_id,
            granularity=cand.granularity,
            centroid=cand.centroid,
            importance=cand.importance,
            age=cand.age,
        )
        kb.sebs[next_id] = seb
        next_id += 1
    from .channel import assign_labels  # deferred: channel builds on kb types

    for granularity in (Granularity.COARSE, Granularity.FINE):
        if kb.sebs_of(granularity):
            assign_labels(kb, granularity)
    rebuild_relation(kb)
    kb.version += 1
    return kb.version
