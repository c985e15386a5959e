"""KB synchronization: update triggering, SEBK wire format, application.

The transmitter-side replica detects representation drift from the
quantization-distortion trigger, requests an update, and both sides
converge by applying identical DELTA/FULL messages.  Centroids travel
as f32 on the wire; replicas adopt the wire values, so canonical
serialization (and therefore ``kb_hash``) is replica-independent.
"""

from __future__ import annotations

import hashlib
import struct
import zlib
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .kb import Granularity, KnowledgeBase, Seb

SEBK_MAGIC = b"SEBK"
SEBK_VERSION = 1


class MessageKind(IntEnum):
    REQUEST = 0
    DELTA = 1
    FULL = 2


class WireFormatError(ValueError):
    """Bad magic, truncation, CRC mismatch, or unknown message kind."""


class StaleDeltaError(RuntimeError):
    """DELTA base version does not match the replica; request a FULL."""


@dataclass
class SyncMessage:
    kind: MessageKind
    kb_version_base: int
    statistic: float = 0.0  # REQUEST
    added: list[Seb] = field(default_factory=list)  # DELTA
    added_parents: list[list[int]] = field(default_factory=list)
    removed: list[int] = field(default_factory=list)
    importance_updates: list[tuple[int, float]] = field(default_factory=list)
    full_sebs: list[Seb] = field(default_factory=list)  # FULL
    full_edges: list[tuple[int, int]] = field(default_factory=list)
    full_baseline: float = 0.0


@dataclass
class TriggerState:
    baseline: float
    window_size: int = 10
    trigger_factor: float = 1.5
    window: deque = None

    def __post_init__(self):
        if self.window is None:
            self.window = deque(maxlen=self.window_size)


def should_request_update(state: TriggerState, new_distortion: float) -> bool:
    """Push a per-image distortion; fire once the window is full and its
    mean exceeds trigger_factor times the baseline."""
    if state.baseline <= 0:
        raise ValueError("trigger baseline must be positive")
    state.window.append(float(new_distortion))
    if len(state.window) < state.window.maxlen:
        return False
    mean = sum(state.window) / len(state.window)
    return mean > state.trigger_factor * state.baseline


def _f32(x: float) -> float:
    return struct.unpack("<f", struct.pack("<f", x))[0]


def _pack_seb(seb: Seb, parents: list[int]) -> bytes:
    out = bytearray()
    out += struct.pack("<I", seb.id & 0xFFFFFFFF)
    out += struct.pack("<B", int(seb.granularity))
    out += struct.pack("<f", seb.importance)
    centroid = seb.centroid.astype(np.float32)
    out += struct.pack("<H", centroid.size)
    out += centroid.tobytes()
    out += struct.pack("<B", len(parents))
    for p in parents:
        out += struct.pack("<I", p)
    return bytes(out)


def _unpack_seb(data: bytes, pos: int):
    sid, gran = struct.unpack_from("<IB", data, pos)
    pos += 5
    (imp,) = struct.unpack_from("<f", data, pos)
    pos += 4
    (dim,) = struct.unpack_from("<H", data, pos)
    pos += 2
    centroid = np.frombuffer(data, dtype="<f4", count=dim, offset=pos).astype(np.float64)
    pos += 4 * dim
    (n_par,) = struct.unpack_from("<B", data, pos)
    pos += 1
    parents = list(struct.unpack_from(f"<{n_par}I", data, pos)) if n_par else []
    pos += 4 * n_par
    seb = Seb(
        id=sid,
        granularity=Granularity(gran),
        centroid=np.clip(centroid, 0.0, 1.0),
        importance=float(np.clip(imp, 0.0, 1.0)),
    )
    return seb, parents, pos


def canonical_kb_body(kb: KnowledgeBase) -> bytes:
    """Canonical FULL body: baseline, Sebs sorted by id, sorted edges.

    This is the hashing and persistence form of a KB; labels and ages
    are derived state and stay off the wire.
    """
    out = bytearray()
    out += struct.pack("<f", kb.baseline_distortion)
    sebs = sorted(kb.sebs.values(), key=lambda s: s.id)
    out += struct.pack("<H", len(sebs))
    for seb in sebs:
        out += _pack_seb(seb, [])
    edges = sorted(kb.relation.edges)
    out += struct.pack("<I", len(edges))
    for fine_id, coarse_id in edges:
        out += struct.pack("<II", fine_id, coarse_id)
    return bytes(out)


def kb_hash(kb: KnowledgeBase) -> bytes:
    """SHA-256 digest of the canonical KB body."""
    return hashlib.sha256(canonical_kb_body(kb)).digest()


def full_message(kb: KnowledgeBase) -> SyncMessage:
    return SyncMessage(
        kind=MessageKind.FULL,
        kb_version_base=kb.version,
        full_sebs=sorted(kb.sebs.values(), key=lambda s: s.id),
        full_edges=sorted(kb.relation.edges),
        full_baseline=kb.baseline_distortion,
    )


def encode_message(msg: SyncMessage) -> bytes:
    out = bytearray()
    out += SEBK_MAGIC
    out += struct.pack("<BB", SEBK_VERSION, int(msg.kind))
    out += struct.pack("<I", msg.kb_version_base)
    if msg.kind == MessageKind.REQUEST:
        out += struct.pack("<f", msg.statistic)
    elif msg.kind == MessageKind.DELTA:
        out += struct.pack("<H", len(msg.added))
        parents = msg.added_parents or [[] for _ in msg.added]
        for seb, par in zip(msg.added, parents):
            out += _pack_seb(seb, par)
        out += struct.pack("<H", len(msg.removed))
        for sid in msg.removed:
            out += struct.pack("<I", sid)
        out += struct.pack("<H", len(msg.importance_updates))
        for sid, val in msg.importance_updates:
            out += struct.pack("<If", sid, val)
    elif msg.kind == MessageKind.FULL:
        out += struct.pack("<f", msg.full_baseline)
        out += struct.pack("<H", len(msg.full_sebs))
        for seb in msg.full_sebs:
            out += _pack_seb(seb, [])
        out += struct.pack("<I", len(msg.full_edges))
        for fine_id, coarse_id in msg.full_edges:
            out += struct.pack("<II", fine_id, coarse_id)
    else:
        raise WireFormatError(f"unknown message kind {msg.kind}")
    out += (zlib.crc32(bytes(out)) & 0xFFFFFFFF).to_bytes(4, "little")
    return bytes(out)


def decode_message(data: bytes) -> SyncMessage:
    if len(data) < 14:
        raise WireFormatError("SEBK message too short")
    if data[:4] != SEBK_MAGIC:
        raise WireFormatError(f"bad magic {data[:4]!r}")
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != int.from_bytes(data[-4:], "little"):
        raise WireFormatError("CRC mismatch")
    if data[4] != SEBK_VERSION:
        raise WireFormatError(f"unsupported format version {data[4]}")
    try:
        kind = MessageKind(data[5])
    except ValueError as exc:
        raise WireFormatError(f"unknown kind {data[5]}") from exc
    base = int.from_bytes(data[6:10], "little")
    body = data[10:-4]
    try:
        if kind == MessageKind.REQUEST:
            (stat,) = struct.unpack_from("<f", body, 0)
            return SyncMessage(kind=kind, kb_version_base=base, statistic=stat)
        if kind == MessageKind.DELTA:
            pos = 0
            (n_add,) = struct.unpack_from("<H", body, pos)
            pos += 2
            added, added_parents = [], []
            for _ in range(n_add):
                seb, parents, pos = _unpack_seb(body, pos)
                added.append(seb)
                added_parents.append(parents)
            (n_rem,) = struct.unpack_from("<H", body, pos)
            pos += 2
            removed = list(struct.unpack_from(f"<{n_rem}I", body, pos)) if n_rem else []
            pos += 4 * n_rem
            (n_upd,) = struct.unpack_from("<H", body, pos)
            pos += 2
            updates = []
            for _ in range(n_upd):
                sid, val = struct.unpack_from("<If", body, pos)
                pos += 8
                updates.append((sid, val))
            return SyncMessage(
                kind=kind,
                kb_version_base=base,
                added=added,
                added_parents=added_parents,
                removed=removed,
                importance_updates=updates,
            )
        # FULL
        pos = 0
        (baseline,) = struct.unpack_from("<f", body, pos)
        pos += 4
        (n_sebs,) = struct.unpack_from("<H", body, pos)
        pos += 2
        sebs = []
        for _ in range(n_sebs):
            seb, _parents, pos = _unpack_seb(body, pos)
            sebs.append(seb)
        (n_edges,) = struct.unpack_from("<I", body, pos)
        pos += 4
        edges = []
        for _ in range(n_edges):
            a, b = struct.unpack_from("<II", body, pos)
            pos += 8
            edges.append((a, b))
        return SyncMessage(
            kind=kind,
            kb_version_base=base,
            full_sebs=sebs,
            full_edges=edges,
            full_baseline=baseline,
        )
    except struct.error as exc:
        raise WireFormatError("truncated message body") from exc


def apply_message(kb: KnowledgeBase, msg: SyncMessage) -> dict:
    """Apply a sync message to a replica; returns {"new_version": int}.

    DELTA delegates to the KB update operation (fresh ids, recomputed
    labels and edges); FULL replaces the replica content outright.
    """
    from .channel import assign_labels
    from .kb import apply_update

    if msg.kind == MessageKind.REQUEST:
        return {"new_version": kb.version}
    if msg.kind == MessageKind.DELTA:
        if kb.version != msg.kb_version_base:
            raise StaleDeltaError(
                f"DELTA targets version {msg.kb_version_base}, replica at {kb.version}"
            )
        version = apply_update(
            kb, msg.added, msg.removed, importance_updates=dict(msg.importance_updates)
        )
        return {"new_version": version}
    # FULL applies unconditionally
    kb.sebs = {seb.id: seb for seb in msg.full_sebs}
    kb.relation.edges = set(msg.full_edges)
    kb.baseline_distortion = msg.full_baseline
    kb.version = msg.kb_version_base
    for granularity in (Granularity.COARSE, Granularity.FINE):
        if kb.sebs_of(granularity):
            assign_labels(kb, granularity)
    return {"new_version": kb.version}


def save_kb(kb: KnowledgeBase, path) -> None:
    """Persist a KB as its FULL sync message."""
    with open(path, "wb") as fh:
        fh.write(encode_message(full_message(kb)))


def load_kb(path, params=None) -> KnowledgeBase:
    with open(path, "rb") as fh:
        msg = decode_message(fh.read())
    if msg.kind != MessageKind.FULL:
        raise WireFormatError("KB file must contain a FULL message")
    kb = KnowledgeBase(params=params) if params else KnowledgeBase()
    apply_message(kb, msg)
    return kb
