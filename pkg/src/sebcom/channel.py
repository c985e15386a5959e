"""Channel chain: LDPC codes, 4QAM over AWGN, and the two UEP layers.

Message-wise UEP splits the serialized frame into a high-protection
class A (frame structure plus important cells, rate 1/2) and a
lower-protection class B (remaining cells, rate 2/3).  Seb-wise UEP is
the anti-confusion label assignment that keeps important codebook
entries far apart in Hamming distance.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .bitio import bits_of_bytes, bytes_of_bits
from .labels import greedy_max_min_labels
from .prng import Xoshiro256StarStar

RATE_HALF = Fraction(1, 2)
RATE_TWO_THIRDS = Fraction(2, 3)

_HEADER_BYTES = 19  # SEBF fixed header length


class LdpcConstructionError(RuntimeError):
    pass


@dataclass
class ChannelConfig:
    snr_db: float | None  # Es/N0 in dB; None means noiseless
    seed: int = 0
    max_bp_iters: int = 50

    def __post_init__(self):
        if self.max_bp_iters < 1:
            raise ValueError("max_bp_iters must be >= 1")


@dataclass
class LdpcCode:
    n: int
    k: int
    rate: Fraction
    H: np.ndarray  # original column order, (n-k, n) uint8
    perm: np.ndarray  # transmitted order: first k message, last n-k parity
    encoder_map: np.ndarray  # parity = encoder_map @ message (mod 2)
    construction_seed: int
    residual_4cycles: int
    # decoder edge structure over H[:, perm]
    _edge_cols: np.ndarray = field(repr=False, default=None)
    _var_order: np.ndarray = field(repr=False, default=None)
    _row_deg: int = field(repr=False, default=0)

    @property
    def m(self) -> int:
        return self.n - self.k

    def h_permuted(self) -> np.ndarray:
        return self.H[:, self.perm]


def _detect_4cycles(H: np.ndarray) -> list[tuple[int, int]]:
    overlap = (H.astype(np.int64) @ H.T.astype(np.int64))
    np.fill_diagonal(overlap, 0)
    rows, cols = np.nonzero(np.triu(overlap >= 2))
    return list(zip(rows.tolist(), cols.tolist()))


def _try_construct(rate: Fraction, n: int, seed: int):
    dv = 3
    if rate == RATE_HALF:
        m = n // 2
    elif rate == RATE_TWO_THIRDS:
        m = n // 3
    else:
        raise ValueError("rate must be 1/2 or 2/3")
    dc = dv * n // m
    rng = Xoshiro256StarStar(seed)
    var_end = [c for c in range(n) for _ in range(dv)]
    check_end = [r for r in range(m) for _ in range(dc)]
    rng.shuffle(check_end)
    n_edges = len(var_end)

    def build_h():
        H = np.zeros((m, n), dtype=np.uint8)
        dup = []
        seen = set()
        for e in range(n_edges):
            key = (check_end[e], var_end[e])
            if key in seen:
                dup.append(e)
            else:
                seen.add(key)
                H[key] = 1
        return H, dup

    residual = 0
    for _ in range(100):
        H, dup = build_h()
        pairs = _detect_4cycles(H)
        residual = len(pairs)
        bad = list(dup)
        for r1, r2 in pairs:
            shared = np.nonzero(H[r1] & H[r2])[0]
            col = int(shared[0])
            for e in range(n_edges):
                if check_end[e] == r1 and var_end[e] == col:
                    bad.append(e)
                    break
        if not bad:
            break
        for e in bad:
            f = rng.randint_below(n_edges)
            check_end[e], check_end[f] = check_end[f], check_end[e]
    H, dup = build_h()
    if dup:
        return None
    residual = len(_detect_4cycles(H))

    # GF(2) row reduction with column pivoting to expose a systematic form
    R = H.copy()
    pivot_cols: list[int] = []
    row = 0
    for col in range(n):
        if row == m:
            break
        hits = np.nonzero(R[row:, col])[0]
        if hits.size == 0:
            continue
        piv = row + int(hits[0])
        if piv != row:
            R[[row, piv]] = R[[piv, row]]
        others = np.nonzero(R[:, col])[0]
        for r in others:
            if r != row:
                R[r] ^= R[row]
        pivot_cols.append(col)
        row += 1
    if row < m:
        return None  # rank deficient
    message_cols = [c for c in range(n) if c not in set(pivot_cols)]
    perm = np.array(message_cols + pivot_cols, dtype=np.int64)
    A = R[:, message_cols].copy()
    code = LdpcCode(
        n=n,
        k=n - m,
        rate=rate,
        H=H,
        perm=perm,
        encoder_map=A,
        construction_seed=seed,
        residual_4cycles=residual,
    )
    _build_decoder_arrays(code)
    return code


def _build_decoder_arrays(code: LdpcCode) -> None:
    Hp = code.h_permuted()
    m, n = Hp.shape
    rows, cols = np.nonzero(Hp)  # row-major: check-grouped
    dc = cols.size // m
    code._edge_cols = cols
    code._var_order = np.argsort(cols, kind="stable")
    code._row_deg = dc


def construct_ldpc(rate, n: int = 648, seed: int = 0) -> LdpcCode:
    """Regular Gallager code, column degree 3, seeded edge permutation.

    Up to 100 resampling passes remove parallel edges and 4-cycles
    (residual 4-cycles are reported, not fatal); rank-deficient draws
    retry with seed+1, bounded by 32 attempts.
    """
    rate = Fraction(rate)
    if n % 24:
        raise ValueError("n must be divisible by 24")
    for attempt in range(32):
        code = _try_construct(rate, n, seed + attempt)
        if code is not None:
            return code
    raise LdpcConstructionError(f"no full-rank construction after 32 seeds from {seed}")


def ldpc_encode(code: LdpcCode, message_bits) -> np.ndarray:
    """Systematic encoding in the code's permuted column order."""
    msg = np.asarray(message_bits, dtype=np.uint8) & 1
    if msg.shape != (code.k,):
        raise ValueError(f"message must have length k={code.k}")
    parity = (code.encoder_map @ msg) & 1
    return np.concatenate([msg, parity]).astype(np.uint8)


def syndrome(code: LdpcCode, codeword_bits) -> np.ndarray:
    cw = np.asarray(codeword_bits, dtype=np.uint8) & 1
    return (code.h_permuted() @ cw) & 1


def ldpc_decode_batch(code: LdpcCode, llrs: np.ndarray, max_iters: int = 50):
    """Normalized min-sum (0.75) over a batch of frames, flooding
    schedule, early per-frame stop on zero syndrome.

    Returns (message_bits (B,k) uint8, converged (B,) bool, iters (B,)).
    """
    llrs = np.atleast_2d(np.asarray(llrs, dtype=np.float64))
    B, n = llrs.shape
    if n != code.n:
        raise ValueError(f"LLR length {n} != n={code.n}")
    m = code.m
    dc = code._row_deg
    ec = code._edge_cols
    vo = code._var_order
    E = ec.size

    def synd_zero(hard):
        s = hard[:, ec].reshape(B, m, dc).sum(axis=2) & 1
        return ~s.any(axis=1)

    hard = (llrs < 0).astype(np.uint8)
    done = synd_zero(hard)
    out_bits = hard.copy()
    iters = np.zeros(B, dtype=np.int64)

    if not done.all():
        v2c = llrs[:, ec].copy()
        arange_dc = np.arange(dc)
        for it in range(1, max_iters + 1):
            M = v2c.reshape(B, m, dc)
            sgn = np.where(M < 0, -1.0, 1.0)
            absM = np.abs(M)
            am = np.argmin(absM, axis=2)
            m1 = np.take_along_axis(absM, am[:, :, None], axis=2)[:, :, 0]
            tmp = absM.copy()
            np.put_along_axis(tmp, am[:, :, None], np.inf, axis=2)
            m2 = tmp.min(axis=2)
            prod_sgn = sgn.prod(axis=2)
            mins = np.where(arange_dc[None, None, :] == am[:, :, None], m2[:, :, None], m1[:, :, None])
            c2v = (0.75 * prod_sgn[:, :, None] * sgn * mins).reshape(B, E)
            c2v_var = c2v[:, vo].reshape(B, n, 3)
            total = llrs + c2v_var.sum(axis=2)
            v2c_var = total[:, :, None] - c2v_var
            v2c[:, vo] = v2c_var.reshape(B, E)
            hard = (total < 0).astype(np.uint8)
            ok = synd_zero(hard)
            newly = ok & ~done
            if newly.any():
                out_bits[newly] = hard[newly]
                iters[newly] = it
                done |= newly
            if done.all():
                break
        out_bits[~done] = hard[~done]
        iters[~done] = max_iters
    return out_bits[:, : code.k], done, iters


def ldpc_decode(code: LdpcCode, llrs, max_iters: int = 50) -> dict:
    """Single-frame wrapper; see ``ldpc_decode_batch``."""
    bits, converged, iters = ldpc_decode_batch(code, np.asarray(llrs)[None, :], max_iters)
    return {"bits": bits[0], "converged": bool(converged[0]), "iterations": int(iters[0])}


_INV_SQRT2 = 1.0 / math.sqrt(2.0)


def qpsk_modulate(bits) -> np.ndarray:
    """Gray-mapped 4QAM: pair (b0,b1) -> ((1-2b0)+j(1-2b1))/sqrt(2)."""
    bits = np.asarray(bits, dtype=np.int64) & 1
    if bits.size % 2:
        raise ValueError("bit count must be even")
    i = (1 - 2 * bits[0::2]) * _INV_SQRT2
    q = (1 - 2 * bits[1::2]) * _INV_SQRT2
    return i + 1j * q


def qpsk_hard_bits(symbols: np.ndarray) -> np.ndarray:
    bits = np.empty(2 * symbols.size, dtype=np.uint8)
    bits[0::2] = symbols.real < 0
    bits[1::2] = symbols.imag < 0
    return bits


def noise_variance(snr_db: float) -> float:
    """Per-real-dimension noise variance at Es/N0 = snr_db, Es = 1."""
    return 1.0 / (2.0 * 10.0 ** (snr_db / 10.0))


def awgn(symbols: np.ndarray, snr_db: float | None, seed: int) -> np.ndarray:
    """Seeded AWGN; the noise stream is deterministic per (seed, position).

    snr_db=None is the noiseless sentinel.
    """
    symbols = np.asarray(symbols, dtype=np.complex128)
    if snr_db is None or snr_db == math.inf:
        return symbols.copy()
    sigma = math.sqrt(noise_variance(snr_db))
    noise = Xoshiro256StarStar(seed).gaussians(2 * symbols.size) * sigma
    return symbols + noise[0::2] + 1j * noise[1::2]


def qpsk_llr(received: np.ndarray, noise_var: float) -> np.ndarray:
    """Per-bit LLRs (positive favors bit 0): 2*y/sigma^2 per component."""
    received = np.asarray(received, dtype=np.complex128)
    llr = np.empty(2 * received.size, dtype=np.float64)
    llr[0::2] = 2.0 * received.real / noise_var
    llr[1::2] = 2.0 * received.imag / noise_var
    return llr


def measure_ber(sent_bits, received_bits) -> float:
    a = np.asarray(sent_bits, dtype=np.uint8) & 1
    b = np.asarray(received_bits, dtype=np.uint8) & 1
    if a.shape != b.shape:
        raise ValueError("bit sequences must have equal length")
    if a.size == 0:
        return 0.0
    return float(np.count_nonzero(a ^ b) / a.size)


def assign_labels(kb, granularity, width: int | None = None) -> dict[int, int]:
    """Seb-wise UEP: greedy max-min Hamming labels, important Sebs first.

    Labels are written onto the Sebs and become the index bit patterns
    of the bitstream.  Returns id -> label.
    """
    sebs = kb.sebs_of(granularity)
    if width is None:
        width = kb.bits_per_index(granularity)
    if len(sebs) > (1 << width):
        raise ValueError(f"{len(sebs)} Sebs exceed {width}-bit label space")
    priority = sorted(sebs, key=lambda s: (-s.importance, s.id))
    labels = greedy_max_min_labels(len(priority), width)
    out = {}
    for seb, lab in zip(priority, labels):
        seb.label = lab
        out[seb.id] = lab
    return out


@dataclass
class ClassResult:
    rate: Fraction
    n_blocks: int
    payload_bits: int  # bits carried before padding (incl. length prefix)
    sent_message_bits: np.ndarray
    sent_code_bits: np.ndarray
    decoded_bits: np.ndarray
    converged: list[bool]
    pre_ber: float
    post_ber: float


@dataclass
class ProtectedTransmission:
    mode: str
    lost: bool
    n_symbols: int
    class_a: ClassResult | None
    class_b: ClassResult | None
    reassembled: bytes | None

    def to_bytes(self) -> bytes:
        """Diagnostic replay dump: u32-LE-length-prefixed sections plus a
        CRC-32 trailer."""
        sections = [self.mode.encode()]
        for cls in (self.class_a, self.class_b):
            if cls is None:
                sections.append(b"")
                continue
            sections.append(
                b"%d/%d;" % (cls.rate.numerator, cls.rate.denominator)
                + bytes_of_bits(cls.sent_code_bits)
            )
        sections.append(self.reassembled or b"")
        body = bytearray()
        for sec in sections:
            body += len(sec).to_bytes(4, "little") + sec
        body += (zlib.crc32(bytes(body)) & 0xFFFFFFFF).to_bytes(4, "little")
        return bytes(body)


def _frame_bit_layout(frame):
    """Per-cell bit spans of the serialized index payload.

    Returns (payload_start_bit, [(cell, start, width), ...], total index
    bits); bitmap sections are byte-padded individually.
    """
    n_cells = frame.n_cells
    bitmap_bytes = (n_cells + 7) // 8
    payload_start = 8 * (_HEADER_BYTES + 2 * bitmap_bytes)
    spans = []
    pos = 0
    for cell in range(n_cells):
        width = 4 * frame.bits_fine if frame.fine_flags[cell] else frame.bits_coarse
        spans.append((cell, pos, width))
        pos += width
    return payload_start, spans, pos


def split_classes(frame_bytes: bytes, frame) -> tuple[list[int], list[int]]:
    """Partition the serialized frame bits into UEP classes.

    Class A: header, both bitmaps, index bits of protected cells, CRC.
    Class B: index bits of unprotected cells.  Byte-padding bits are
    regenerated as zeros at reassembly and never transmitted.
    """
    all_bits = bits_of_bytes(frame_bytes)
    payload_start, spans, _total = _frame_bit_layout(frame)
    class_a = all_bits[:payload_start]
    class_b: list[int] = []
    for cell, start, width in spans:
        chunk = all_bits[payload_start + start : payload_start + start + width]
        if frame.class_flags[cell]:
            class_a.extend(chunk)
        else:
            class_b.extend(chunk)
    class_a.extend(bits_of_bytes(frame_bytes[-4:]))  # CRC trailer
    return class_a, class_b


def reassemble_classes(class_a: list[int], class_b: list[int]):
    """Rebuild the exact serialized byte stream from decoded class bits.

    Parses the frame structure out of class A; returns None when the
    class-A content is not structurally parseable.
    """
    if len(class_a) < 8 * (_HEADER_BYTES + 4):
        return None
    head = bytes_of_bits(class_a[: 8 * _HEADER_BYTES])
    gw = int.from_bytes(head[13:15], "little")
    gh = int.from_bytes(head[15:17], "little")
    bits_coarse, bits_fine = head[17], head[18]
    n_cells = gw * gh
    if n_cells == 0 or n_cells > 1 << 20:
        return None
    bitmap_bytes = (n_cells + 7) // 8
    need_a_prefix = 8 * (_HEADER_BYTES + 2 * bitmap_bytes)
    if len(class_a) < need_a_prefix + 32:
        return None
    bitmap_bits = class_a[8 * _HEADER_BYTES : need_a_prefix]
    fine_flags = bitmap_bits[: n_cells]
    class_flags = bitmap_bits[8 * bitmap_bytes : 8 * bitmap_bytes + n_cells]

    a_idx = class_a[need_a_prefix : len(class_a) - 32]
    crc_bits = class_a[len(class_a) - 32 :]
    payload: list[int] = []
    pa = pb = 0
    for cell in range(n_cells):
        width = 4 * bits_fine if fine_flags[cell] else bits_coarse
        if class_flags[cell]:
            chunk = a_idx[pa : pa + width]
            pa += width
        else:
            chunk = class_b[pb : pb + width]
            pb += width
        if len(chunk) < width:
            chunk = list(chunk) + [0] * (width - len(chunk))
        payload.extend(chunk)
    body = list(class_a[:need_a_prefix]) + payload
    while len(body) % 8:
        body.append(0)
    return bytes_of_bits(body) + bytes_of_bits(crc_bits)


def _transmit_class(code: LdpcCode, payload_bits: list[int]):
    """Prefix, pad, and block-encode one class; returns (message bits,
    code bits, block count)."""
    prefix = bits_of_bytes(len(payload_bits).to_bytes(4, "little"))
    msg = prefix + list(payload_bits)
    n_blocks = max(1, -(-len(msg) // code.k))
    msg += [0] * (n_blocks * code.k - len(msg))
    msg_arr = np.array(msg, dtype=np.uint8)
    code_bits = np.concatenate(
        [ldpc_encode(code, msg_arr[i * code.k : (i + 1) * code.k]) for i in range(n_blocks)]
    )
    return msg_arr, code_bits, n_blocks


def _decode_class(code: LdpcCode, llrs: np.ndarray, n_blocks: int, max_iters: int):
    llr_blocks = llrs[: n_blocks * code.n].reshape(n_blocks, code.n)
    bits, converged, _ = ldpc_decode_batch(code, llr_blocks, max_iters)
    return bits.reshape(-1), [bool(c) for c in converged]


def uep_frame(frame_bytes: bytes, frame, codes: dict, channel_cfg: ChannelConfig, mode: str = "uep") -> ProtectedTransmission:
    """Full protected transmission of one serialized frame over AWGN.

    ``codes`` maps "1/2" and "2/3" to LdpcCode instances.  Modes:
    ``uep`` (class A at 1/2, class B at 2/3), ``none`` (everything in a
    single rate-2/3 stream; any failed block loses the frame).  The
    frame is LOST when the structural class fails to decode.
    """
    code_a = codes["1/2"]
    code_b = codes["2/3"]
    if mode == "uep":
        bits_a, bits_b = split_classes(frame_bytes, frame)
        parts = [(code_a, bits_a), (code_b, bits_b)]
    elif mode == "none":
        bits_a, bits_b = split_classes(frame_bytes, frame)
        parts = [(code_b, bits_a + bits_b)]
    else:
        raise ValueError(f"unknown UEP mode {mode!r}")

    tx = []
    all_code_bits = []
    for code, payload in parts:
        msg_arr, code_bits, n_blocks = _transmit_class(code, payload)
        tx.append((code, payload, msg_arr, code_bits, n_blocks))
        all_code_bits.append(code_bits)
    symbols = qpsk_modulate(np.concatenate(all_code_bits))
    received = awgn(symbols, channel_cfg.snr_db, channel_cfg.seed)
    nv = noise_variance(channel_cfg.snr_db) if channel_cfg.snr_db is not None else 1e-12
    llrs = qpsk_llr(received, nv)

    results = []
    offset = 0
    for code, payload, msg_arr, code_bits, n_blocks in tx:
        span = n_blocks * code.n
        class_llrs = llrs[offset : offset + span]
        hard = (class_llrs < 0).astype(np.uint8)
        decoded, converged = _decode_class(code, class_llrs, n_blocks, channel_cfg.max_bp_iters)
        results.append(
            ClassResult(
                rate=code.rate,
                n_blocks=n_blocks,
                payload_bits=32 + len(payload),
                sent_message_bits=msg_arr,
                sent_code_bits=code_bits,
                decoded_bits=decoded,
                converged=converged,
                pre_ber=measure_ber(code_bits, hard),
                post_ber=measure_ber(msg_arr, decoded),
            )
        )
        offset += span

    def recovered_payload(res: ClassResult) -> list[int]:
        bits = res.decoded_bits.tolist()
        length = int.from_bytes(bytes_of_bits(bits[:32]), "little")
        length = min(length, len(bits) - 32)
        return bits[32 : 32 + length]

    if mode == "uep":
        res_a, res_b = results
        lost = not all(res_a.converged)
        reassembled = None
        if not lost:
            reassembled = reassemble_classes(recovered_payload(res_a), recovered_payload(res_b))
            lost = reassembled is None
        return ProtectedTransmission(
            mode=mode,
            lost=lost,
            n_symbols=symbols.size,
            class_a=res_a,
            class_b=res_b,
            reassembled=reassembled,
        )
    res = results[0]
    lost = not all(res.converged)
    reassembled = None
    if not lost:
        bits = recovered_payload(res)
        # single stream: class-A span first, then class-B span
        n_a = len(bits_a)
        reassembled = reassemble_classes(bits[:n_a], bits[n_a:])
        lost = reassembled is None
    return ProtectedTransmission(
        mode=mode,
        lost=lost,
        n_symbols=symbols.size,
        class_a=None,
        class_b=res,
        reassembled=reassembled,
    )


def compute_cbr(transmission: ProtectedTransmission, img) -> float:
    """Channel-bandwidth ratio: complex symbols per source pixel."""
    return transmission.n_symbols / (img.original_width * img.original_height)
