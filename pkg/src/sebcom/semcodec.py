"""Semantic encoder/decoder: images, patches, codebooks, bitstream.

Images are grayscale, padded to multiples of 32 by edge replication,
and carved into non-overlapping cells.  A cell is either encoded by one
coarse Seb (32x32) or, when its importance ranks in the top p_fine
fraction, by four fine Sebs (16x16 quadrants).  The resulting frame
serializes to the bit-exact SEBF format.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

from . import vq
from .bitio import BitReader, BitWriter
from .kb import (
    COARSE_PATCH,
    FINE_PATCH,
    Granularity,
    KbParams,
    KnowledgeBase,
    Seb,
    rebuild_relation,
)

SEBF_MAGIC = b"SEBF"
SEBF_VERSION = 1


class FrameFormatError(ValueError):
    """Malformed SEBF data: bad magic, truncation, or unusable header."""


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass
class ImageGray:
    width: int
    height: int
    pixels: np.ndarray  # (height, width) uint8
    original_width: int
    original_height: int

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.shape != (self.height, self.width):
            raise ValueError("pixel buffer does not match dimensions")
        if self.width % COARSE_PATCH or self.height % COARSE_PATCH:
            raise ValueError("padded dimensions must be multiples of 32")


@dataclass
class CodecConfig:
    p_fine: float = 0.20
    p_protect: float = 0.50
    k_coarse: int = 256
    k_fine: int = 64
    kmeans_max_iters: int = 100
    kmeans_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.p_fine <= 1.0 and 0.0 <= self.p_protect <= 1.0):
            raise ValueError("p_fine and p_protect must lie in [0, 1]")
        for k in (self.k_coarse, self.k_fine):
            if k < 1 or k & (k - 1):
                raise ValueError("codebook sizes must be powers of two at creation")


@dataclass
class SemanticFrame:
    kb_version: int
    grid_w: int
    grid_h: int
    fine_flags: list[int]
    class_flags: list[int]
    indices: list  # per cell: int (coarse) or 4-tuple of ints (fine)
    original_width: int
    original_height: int
    bits_coarse: int
    bits_fine: int

    @property
    def n_cells(self) -> int:
        return self.grid_w * self.grid_h


def pad_to_multiple(pixels: np.ndarray, multiple: int = COARSE_PATCH) -> np.ndarray:
    """Edge-replicate an array up to the next multiple in each dimension."""
    h, w = pixels.shape
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph or pw:
        pixels = np.pad(pixels, ((0, ph), (0, pw)), mode="edge")
    return pixels


def image_from_array(pixels: np.ndarray) -> ImageGray:
    pixels = np.asarray(pixels, dtype=np.uint8)
    oh, ow = pixels.shape
    padded = pad_to_multiple(pixels)
    h, w = padded.shape
    return ImageGray(width=w, height=h, pixels=padded, original_width=ow, original_height=oh)


def _read_pnm_tokens(data: bytes, count: int, start: int):
    """Read whitespace/comment-separated ASCII tokens from a PNM header."""
    tokens = []
    i = start
    while len(tokens) < count:
        if i >= len(data):
            raise FrameFormatError("truncated PNM header")
        c = data[i : i + 1]
        if c == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j : j + 1].isspace():
                j += 1
            tokens.append(data[i:j])
            i = j
    return tokens, i


def load_image(path) -> ImageGray:
    """Load a binary PGM (P5) or PPM (P6) file, maxval 255.

    Color input is reduced to BT.601 luma, then the image is padded to
    multiples of 32 by edge replication.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise FrameFormatError(f"unsupported magic {magic!r}")
    tokens, pos = _read_pnm_tokens(data, 3, 2)
    width, height, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise FrameFormatError(f"maxval {maxval} unsupported (need 255)")
    pos += 1  # single whitespace after maxval
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    raster = data[pos : pos + need]
    if len(raster) < need:
        raise FrameFormatError("truncated pixel data")
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(height, width * channels)
    if channels == 3:
        rgb = arr.reshape(height, width, 3).astype(np.float64)
        luma = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
        arr = np.floor(luma + 0.5).astype(np.uint8)
    else:
        arr = arr.reshape(height, width)
    return image_from_array(arr)


def save_pgm(img, path) -> None:
    """Write an ImageGray (cropped to original size) or 2-D array as P5."""
    if isinstance(img, ImageGray):
        arr = img.pixels[: img.original_height, : img.original_width]
    else:
        arr = np.asarray(img, dtype=np.uint8)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(arr.tobytes())


def extract_patches(img: ImageGray, size: int) -> np.ndarray:
    """Row-major non-overlapping patches, flattened and scaled to [0,1]."""
    if size not in (COARSE_PATCH, FINE_PATCH):
        raise ValueError("patch size must be 32 or 16")
    if img.width % size or img.height % size:
        raise ValueError("patch size does not divide image dimensions")
    gh = img.height // size
    gw = img.width // size
    patches = (
        img.pixels.reshape(gh, size, gw, size)
        .transpose(0, 2, 1, 3)
        .reshape(gh * gw, size * size)
    )
    return patches.astype(np.float64) / 255.0


def patch_importance(heatmap: np.ndarray, size: int) -> np.ndarray:
    """Mean heatmap value per row-major patch of the given size."""
    h, w = heatmap.shape
    gh, gw = h // size, w // size
    return (
        heatmap.reshape(gh, size, gw, size).mean(axis=(1, 3)).reshape(gh * gw)
    )


def train_codebook(features, k, max_iters=100, tol=1e-6, seed=0) -> np.ndarray:
    """Deterministic k-means codebook (see ``sebcom.vq``)."""
    return vq.train_codebook(features, k, max_iters=max_iters, tol=tol, seed=seed)


def build_kb(corpus, config: CodecConfig, importance_provider, params: KbParams | None = None) -> KnowledgeBase:
    """Train coarse and fine codebooks on a corpus and assemble the KB.

    ``importance_provider`` maps an ImageGray to a [0,1] heatmap of the
    padded dimensions; Seb importance is initialized to the mean patch
    importance of its cluster members.
    """
    corpus = list(corpus)
    if not corpus:
        raise ValueError("corpus must be nonempty")
    coarse_feats, fine_feats = [], []
    coarse_imps, fine_imps = [], []
    for img in corpus:
        heat = np.asarray(importance_provider(img), dtype=np.float64)
        coarse_feats.append(extract_patches(img, COARSE_PATCH))
        fine_feats.append(extract_patches(img, FINE_PATCH))
        coarse_imps.append(patch_importance(heat, COARSE_PATCH))
        fine_imps.append(patch_importance(heat, FINE_PATCH))
    coarse_feats = np.concatenate(coarse_feats)
    fine_feats = np.concatenate(fine_feats)
    coarse_imps = np.concatenate(coarse_imps)
    fine_imps = np.concatenate(fine_imps)

    kbase = KnowledgeBase(params=params or KbParams())
    next_id = 0
    for granularity, feats, imps, k in (
        (Granularity.COARSE, coarse_feats, coarse_imps, config.k_coarse),
        (Granularity.FINE, fine_feats, fine_imps, config.k_fine),
    ):
        centroids = vq.train_codebook(
            feats, k, max_iters=config.kmeans_max_iters, tol=config.kmeans_tol, seed=config.seed
        )
        assign = vq.assign_all(feats, centroids)
        for j in range(centroids.shape[0]):
            members = assign == j
            importance = float(np.clip(imps[members].mean(), 0.0, 1.0)) if members.any() else 0.0
            kbase.sebs[next_id] = Seb(
                id=next_id,
                granularity=granularity,
                centroid=np.clip(centroids[j], 0.0, 1.0),
                importance=importance,
            )
            next_id += 1

    from .channel import assign_labels

    assign_labels(kbase, Granularity.COARSE)
    assign_labels(kbase, Granularity.FINE)
    rebuild_relation(kbase)
    kbase.version = 0
    kbase.baseline_distortion = float(
        np.mean([quantization_distortion(img, kbase) for img in corpus])
    )
    return kbase


def _label_tables(kb: KnowledgeBase, granularity: Granularity):
    """(labels array aligned with sorted-by-id Sebs, label -> position map)."""
    sebs = kb.sebs_of(granularity)
    labs = [s.label if s.label is not None else i for i, s in enumerate(sebs)]
    return labs, {lab: i for i, lab in enumerate(labs)}


def encode(img: ImageGray, kb: KnowledgeBase, heatmap, config: CodecConfig) -> SemanticFrame:
    """Importance-driven mixed-granularity quantization of one image.

    Cells rank by mean heatmap value (ties to the lower row-major
    index); the top p_fine fraction is fine-encoded and the top
    p_protect fraction marked class A.  Stored indices are the Sebs'
    anti-confusion labels, i.e. the exact wire bit patterns.
    """
    heat = np.asarray(heatmap, dtype=np.float64)
    if heat.shape != (img.height, img.width):
        raise ValueError("heatmap dimensions must match the padded image")
    coarse_sebs = kb.sebs_of(Granularity.COARSE)
    fine_sebs = kb.sebs_of(Granularity.FINE)
    if not coarse_sebs or not fine_sebs:
        raise ValueError("KB must contain both granularities")

    gw = img.width // COARSE_PATCH
    gh = img.height // COARSE_PATCH
    n_cells = gw * gh
    cell_imp = patch_importance(heat, COARSE_PATCH)
    order = sorted(range(n_cells), key=lambda i: (-cell_imp[i], i))
    n_fine = min(n_cells, round_half_up(config.p_fine * n_cells))
    n_protect = min(n_cells, round_half_up(config.p_protect * n_cells))
    fine_flags = [0] * n_cells
    class_flags = [0] * n_cells
    for i in order[:n_fine]:
        fine_flags[i] = 1
    for i in order[:n_protect]:
        class_flags[i] = 1

    coarse_mat = np.stack([s.centroid for s in coarse_sebs])
    fine_mat = np.stack([s.centroid for s in fine_sebs])
    coarse_labels, _ = _label_tables(kb, Granularity.COARSE)
    fine_labels, _ = _label_tables(kb, Granularity.FINE)

    coarse_feats = extract_patches(img, COARSE_PATCH)
    fine_feats = extract_patches(img, FINE_PATCH)
    fgw = img.width // FINE_PATCH
    coarse_assign = vq.assign_all(coarse_feats, coarse_mat)
    fine_assign = vq.assign_all(fine_feats, fine_mat)

    indices: list = []
    for cell in range(n_cells):
        cy, cx = divmod(cell, gw)
        if fine_flags[cell]:
            quad = []
            for dy in (0, 1):
                for dx in (0, 1):
                    fidx = (2 * cy + dy) * fgw + (2 * cx + dx)
                    quad.append(fine_labels[fine_assign[fidx]])
            indices.append(tuple(quad))
        else:
            indices.append(coarse_labels[coarse_assign[cell]])

    return SemanticFrame(
        kb_version=kb.version,
        grid_w=gw,
        grid_h=gh,
        fine_flags=fine_flags,
        class_flags=class_flags,
        indices=indices,
        original_width=img.original_width,
        original_height=img.original_height,
        bits_coarse=kb.bits_per_index(Granularity.COARSE),
        bits_fine=kb.bits_per_index(Granularity.FINE),
    )


def used_seb_ids(frame: SemanticFrame, kb: KnowledgeBase, cell_importances=None):
    """Map of Seb id -> mean importance of cells it encoded in a frame.

    Feeds the per-message lifecycle refresh; unknown labels resolve the
    same way decoding does.
    """
    usage: dict[int, list[float]] = {}
    for cell in range(frame.n_cells):
        w = 1.0 if cell_importances is None else float(cell_importances[cell])
        if frame.fine_flags[cell]:
            for lab in frame.indices[cell]:
                seb = resolve_label(kb, Granularity.FINE, lab, frame.bits_fine)
                usage.setdefault(seb.id, []).append(w)
        else:
            seb = resolve_label(kb, Granularity.COARSE, frame.indices[cell], frame.bits_coarse)
            usage.setdefault(seb.id, []).append(w)
    return {sid: float(np.mean(vals)) for sid, vals in usage.items()}


def resolve_label(kb: KnowledgeBase, granularity: Granularity, label: int, width: int) -> Seb:
    """Map a (possibly corrupted) wire label back to a Seb.

    Out-of-range values clamp into the label space; a pattern with no
    exact owner resolves to the Hamming-nearest assigned label (lowest
    id on ties), which is what makes the anti-confusion assignment pay.
    """
    sebs = kb.sebs_of(granularity)
    labs, table = _label_tables(kb, granularity)
    label = max(0, min(int(label), (1 << width) - 1 if width else 0))
    if label in table:
        return sebs[table[label]]
    best = min(range(len(labs)), key=lambda i: (bin(labs[i] ^ label).count("1"), i))
    return sebs[best]


def decode(frame: SemanticFrame, kb: KnowledgeBase) -> ImageGray:
    """Reconstruct an image from a frame against a synchronized KB."""
    if frame.kb_version != kb.version:
        raise KbVersionMismatch(
            f"frame built against KB version {frame.kb_version}, have {kb.version}"
        )
    h = frame.grid_h * COARSE_PATCH
    w = frame.grid_w * COARSE_PATCH
    out = np.zeros((h, w), dtype=np.float64)
    for cell in range(frame.n_cells):
        cy, cx = divmod(cell, frame.grid_w)
        y0, x0 = cy * COARSE_PATCH, cx * COARSE_PATCH
        if frame.fine_flags[cell]:
            for q, (dy, dx) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
                seb = resolve_label(kb, Granularity.FINE, frame.indices[cell][q], frame.bits_fine)
                block = seb.centroid.reshape(FINE_PATCH, FINE_PATCH)
                out[
                    y0 + dy * FINE_PATCH : y0 + (dy + 1) * FINE_PATCH,
                    x0 + dx * FINE_PATCH : x0 + (dx + 1) * FINE_PATCH,
                ] = block
        else:
            seb = resolve_label(kb, Granularity.COARSE, frame.indices[cell], frame.bits_coarse)
            out[y0 : y0 + COARSE_PATCH, x0 : x0 + COARSE_PATCH] = seb.centroid.reshape(
                COARSE_PATCH, COARSE_PATCH
            )
    pixels = np.floor(out * 255.0 + 0.5).clip(0, 255).astype(np.uint8)
    return ImageGray(
        width=w,
        height=h,
        pixels=pixels,
        original_width=frame.original_width,
        original_height=frame.original_height,
    )


class KbVersionMismatch(ValueError):
    """Frame and KB versions disagree: the KBs are desynchronized."""


def serialize_frame(frame: SemanticFrame) -> bytes:
    """Bit-exact SEBF encoding with a CRC-32 trailer."""
    head = bytearray()
    head += SEBF_MAGIC
    head += bytes([SEBF_VERSION])
    head += frame.kb_version.to_bytes(4, "little")
    head += frame.original_width.to_bytes(2, "little")
    head += frame.original_height.to_bytes(2, "little")
    head += frame.grid_w.to_bytes(2, "little")
    head += frame.grid_h.to_bytes(2, "little")
    head += bytes([frame.bits_coarse, frame.bits_fine])

    body = bytearray(head)
    for flags in (frame.fine_flags, frame.class_flags):
        w = BitWriter()
        w.write_bit_list(flags)
        body += w.getvalue()
    w = BitWriter()
    for cell in range(frame.n_cells):
        if frame.fine_flags[cell]:
            for lab in frame.indices[cell]:
                w.write_bits(lab, frame.bits_fine)
        else:
            w.write_bits(frame.indices[cell], frame.bits_coarse)
    body += w.getvalue()
    crc = zlib.crc32(bytes(body)) & 0xFFFFFFFF
    body += crc.to_bytes(4, "little")
    return bytes(body)


def deserialize_frame(data: bytes) -> tuple[SemanticFrame, bool]:
    """Parse SEBF bytes; returns (frame, crc_ok).

    A CRC mismatch does not raise: the parsed-but-untrusted frame is
    returned with crc_ok=False so channel experiments can study residual
    corruption.  Structural problems (magic, truncation) do raise.
    """
    if len(data) < 23:
        raise FrameFormatError("SEBF data too short")
    if data[:4] != SEBF_MAGIC:
        raise FrameFormatError(f"bad magic {data[:4]!r}")
    if data[4] != SEBF_VERSION:
        raise FrameFormatError(f"unsupported SEBF version {data[4]}")
    kb_version = int.from_bytes(data[5:9], "little")
    ow = int.from_bytes(data[9:11], "little")
    oh = int.from_bytes(data[11:13], "little")
    gw = int.from_bytes(data[13:15], "little")
    gh = int.from_bytes(data[15:17], "little")
    bits_coarse, bits_fine = data[17], data[18]
    n_cells = gw * gh
    if n_cells == 0:
        raise FrameFormatError("empty cell grid")

    crc_ok = zlib.crc32(data[:-4]) & 0xFFFFFFFF == int.from_bytes(data[-4:], "little")
    reader = BitReader(data[19:-4])
    fine_flags = [reader.read_bits(1) for _ in range(n_cells)]
    reader.align()
    class_flags = [reader.read_bits(1) for _ in range(n_cells)]
    reader.align()
    indices: list = []
    try:
        for cell in range(n_cells):
            if fine_flags[cell]:
                indices.append(tuple(reader.read_bits(bits_fine) for _ in range(4)))
            else:
                indices.append(reader.read_bits(bits_coarse))
    except EOFError as exc:
        raise FrameFormatError("truncated index payload") from exc
    frame = SemanticFrame(
        kb_version=kb_version,
        grid_w=gw,
        grid_h=gh,
        fine_flags=fine_flags,
        class_flags=class_flags,
        indices=indices,
        original_width=ow,
        original_height=oh,
        bits_coarse=bits_coarse,
        bits_fine=bits_fine,
    )
    return frame, crc_ok


def quantization_distortion(img: ImageGray, kb: KnowledgeBase) -> float:
    """Mean per-component squared error of cells vs their nearest coarse
    centroid; the KB-mismatch statistic driving update requests."""
    feats = extract_patches(img, COARSE_PATCH)
    centroids = kb.centroid_matrix(Granularity.COARSE)
    if centroids.shape[0] == 0:
        raise ValueError("KB has no coarse Sebs")
    d = vq.sq_distances(feats, centroids).min(axis=1)
    return float(d.mean() / feats.shape[1])
