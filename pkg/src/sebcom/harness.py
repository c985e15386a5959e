"""Scenario runner: intent-shift and UEP experiments, metrics, reports.

A scenario transmits texture-family subsets sequentially through the
full encode -> serialize -> protect -> AWGN -> decode chain, fires the
KB-update trigger, applies updates at configured subset boundaries
through the sync protocol (AP and UE replicas stay hash-equal), and
emits deterministic CSV/JSON reports.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import channel, kb as kbmod, metrics, semcodec, syncproto
from .corpus import generate_corpus
from .importance import builtin_saliency
from .prng import Xoshiro256StarStar, derive_seed
from .semcodec import CodecConfig


@dataclass
class ScenarioPhase:
    family: str
    n_subsets: int = 3
    images_per_subset: int = 10
    image_size: int = 256


@dataclass
class ScenarioConfig:
    phases: list[ScenarioPhase]
    update_points: list[int] = field(default_factory=list)  # global subset indices
    snrs: list[float | None] = field(default_factory=lambda: [None])
    seed: int = 0
    codec: CodecConfig = field(default_factory=lambda: CodecConfig(k_coarse=16, k_fine=16))
    enable_updates: bool = True
    ldpc_n: int = 648
    save_images: bool = False

    def __post_init__(self):
        total = sum(p.n_subsets for p in self.phases)
        pts = sorted(self.update_points)
        if pts != list(self.update_points):
            raise ValueError("update_points must be sorted")
        if any(p < 1 or p > total for p in pts):
            raise ValueError("update_points out of range")
        for p in self.phases:
            if p.image_size % 32:
                raise ValueError("image_size must be a multiple of 32")

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            raw = json.load(fh)
        phases = [ScenarioPhase(**p) for p in raw["phases"]]
        codec = CodecConfig(**raw.get("codec", {"k_coarse": 16, "k_fine": 16}))
        return cls(
            phases=phases,
            update_points=raw.get("update_points", []),
            snrs=raw.get("snrs", [None]),
            seed=raw.get("seed", 0),
            codec=codec,
            enable_updates=raw.get("enable_updates", True),
            ldpc_n=raw.get("ldpc_n", 648),
            save_images=raw.get("save_images", False),
        )


@dataclass
class ScenarioReport:
    rows: list[dict]
    events: list[dict]
    kb_info: list[dict]

    def to_csv(self) -> str:
        if not self.rows:
            return ""
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(self.rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {"rows": self.rows, "events": self.events, "kb_info": self.kb_info},
            sort_keys=True,
            indent=1,
            default=_fmt,
        )

    def write(self, out_dir) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.csv").write_text(self.to_csv())
        (out_dir / "report.json").write_text(self.to_json())


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    return v


def kb_information_gain(images, kbase: kbmod.KnowledgeBase) -> dict:
    """Empirical KB gain on discretized patch features.

    X is the 4-bin quantized mean intensity of each coarse patch, S the
    assigned coarse Seb; reports H(X), I(X;S), H(X|S) in bits.
    """
    from . import vq

    centroids = kbase.centroid_matrix(kbmod.Granularity.COARSE)
    counts = np.zeros((4, centroids.shape[0]), dtype=np.int64)
    for img in images:
        feats = semcodec.extract_patches(img, kbmod.COARSE_PATCH)
        x = np.minimum((feats.mean(axis=1) * 4).astype(int), 3)
        s = vq.assign_all(feats, centroids)
        np.add.at(counts, (x, s), 1)
    mi = kbmod.empirical_mutual_information(counts)
    return {"h_x": mi.h_x, "mi": mi.mi, "h_x_given_s": mi.h_x_given_s}


def _subset_plan(config: ScenarioConfig):
    plan = []
    index = 1
    for p_idx, phase in enumerate(config.phases):
        for s_idx in range(phase.n_subsets):
            plan.append((index, p_idx, s_idx, phase))
            index += 1
    return plan


def _make_subset(config: ScenarioConfig, p_idx: int, s_idx: int, phase: ScenarioPhase):
    seed = derive_seed(config.seed, 10_000 * (p_idx + 1) + s_idx)
    return generate_corpus(phase.family, phase.images_per_subset, phase.image_size, seed)


GRAY_LEVEL = 128  # reconstruction stand-in for lost frames


def run_scenario(config: ScenarioConfig, out_dir=None) -> ScenarioReport:
    """Run the full scenario once per configured SNR; deterministic."""
    codes = {
        "1/2": channel.construct_ldpc(channel.RATE_HALF, config.ldpc_n, config.seed),
        "2/3": channel.construct_ldpc(channel.RATE_TWO_THIRDS, config.ldpc_n, config.seed),
    }
    plan = _subset_plan(config)
    subsets = {idx: _make_subset(config, p_idx, s_idx, phase) for idx, p_idx, s_idx, phase in plan}

    rows: list[dict] = []
    events: list[dict] = []
    kb_info: list[dict] = []
    for snr in config.snrs:
        _run_single_snr(config, codes, plan, subsets, snr, rows, events, kb_info, out_dir)
    report = ScenarioReport(rows=rows, events=events, kb_info=kb_info)
    if out_dir is not None:
        report.write(out_dir)
    return report


def _run_single_snr(config, codes, plan, subsets, snr, rows, events, kb_info, out_dir):
    snr_tag = "inf" if snr is None else _fmt(float(snr))
    params = kbmod.KbParams()
    kb_ap = semcodec.build_kb(subsets[1], config.codec, builtin_saliency, params=params)
    # UE replica bootstrapped through the sync protocol (FULL message)
    kb_ue = kbmod.KnowledgeBase(params=params)
    syncproto.apply_message(kb_ue, syncproto.decode_message(syncproto.encode_message(syncproto.full_message(kb_ap))))
    # AP adopts the canonical wire values too, so replica hashes agree
    syncproto.apply_message(kb_ap, syncproto.decode_message(syncproto.encode_message(syncproto.full_message(kb_ap))))

    trigger = syncproto.TriggerState(
        baseline=max(kb_ap.baseline_distortion, 1e-9),
        window_size=params.trigger_window,
        trigger_factor=params.trigger_factor,
    )
    msg_counter = 0
    for subset_idx, p_idx, s_idx, phase in plan:
        images = subsets[subset_idx]
        acc = {
            "psnr": [], "ssim": [], "wmse": [], "cbr": [], "dist": [],
            "ber_a_pre": [], "ber_a_post": [], "ber_b_pre": [], "ber_b_post": [],
        }
        lost = 0
        triggers = 0
        recent_coarse, recent_fine = [], []
        recent_coarse_imp, recent_fine_imp = [], []
        for img_idx, img in enumerate(images):
            heat = builtin_saliency(img)
            frame = semcodec.encode(img, kb_ap, heat, config.codec)
            payload = semcodec.serialize_frame(frame)
            cfg = channel.ChannelConfig(snr_db=snr, seed=derive_seed(config.seed, 1_000_000 + msg_counter))
            tx = channel.uep_frame(payload, frame, codes, cfg)
            acc["cbr"].append(channel.compute_cbr(tx, img))
            if tx.class_a is not None:
                acc["ber_a_pre"].append(tx.class_a.pre_ber)
                acc["ber_a_post"].append(tx.class_a.post_ber)
            if tx.class_b is not None:
                acc["ber_b_pre"].append(tx.class_b.pre_ber)
                acc["ber_b_post"].append(tx.class_b.post_ber)
            if tx.lost:
                lost += 1
                recon_px = np.full(
                    (img.original_height, img.original_width), GRAY_LEVEL, dtype=np.uint8
                )
            else:
                frame_rx, _crc_ok = semcodec.deserialize_frame(tx.reassembled)
                recon = semcodec.decode(frame_rx, kb_ue)
                recon_px = recon.pixels[: img.original_height, : img.original_width]
            orig_px = img.pixels[: img.original_height, : img.original_width]
            acc["psnr"].append(metrics.psnr(orig_px, recon_px))
            acc["ssim"].append(metrics.ssim(orig_px, recon_px))
            acc["wmse"].append(metrics.weighted_mse(orig_px, recon_px, heat))
            if out_dir is not None and config.save_images and img_idx == 0:
                semcodec.save_pgm(
                    recon_px, Path(out_dir) / f"recon_s{subset_idx:02d}_snr{snr_tag}.pgm"
                )

            dist = semcodec.quantization_distortion(img, kb_ap)
            acc["dist"].append(dist)
            if syncproto.should_request_update(trigger, dist):
                triggers += 1
                events.append(
                    {"snr": snr_tag, "subset": subset_idx, "image": img_idx,
                     "event": "update_request", "statistic": _fmt(dist)}
                )
            usage = semcodec.used_seb_ids(frame, kb_ap, semcodec.patch_importance(heat, 32))
            kbmod.decay_and_refresh(kb_ap, usage)
            kbmod.decay_and_refresh(kb_ue, usage)

            recent_coarse.append(semcodec.extract_patches(img, 32))
            recent_fine.append(semcodec.extract_patches(img, 16))
            recent_coarse_imp.append(semcodec.patch_importance(heat, 32))
            recent_fine_imp.append(semcodec.patch_importance(heat, 16))
            msg_counter += 1

        rows.append(
            {
                "snr": snr_tag,
                "subset": subset_idx,
                "phase": p_idx + 1,
                "family": phase.family,
                "kb_version": kb_ap.version,
                "psnr": float(np.mean(acc["psnr"])),
                "ssim": float(np.mean(acc["ssim"])),
                "weighted_mse": float(np.mean(acc["wmse"])),
                "quant_distortion": float(np.mean(acc["dist"])),
                "ber_a_pre": float(np.mean(acc["ber_a_pre"])) if acc["ber_a_pre"] else 0.0,
                "ber_a_post": float(np.mean(acc["ber_a_post"])) if acc["ber_a_post"] else 0.0,
                "ber_b_pre": float(np.mean(acc["ber_b_pre"])) if acc["ber_b_pre"] else 0.0,
                "ber_b_post": float(np.mean(acc["ber_b_post"])) if acc["ber_b_post"] else 0.0,
                "frame_loss_rate": lost / len(images),
                "cbr": float(np.mean(acc["cbr"])),
                "trigger_requests": triggers,
            }
        )

        if config.enable_updates and subset_idx in config.update_points:
            _apply_kb_update(
                config, kb_ap, kb_ue, trigger,
                np.concatenate(recent_coarse), np.concatenate(recent_coarse_imp),
                np.concatenate(recent_fine), np.concatenate(recent_fine_imp),
                images, subset_idx, snr_tag, events,
            )
    kb_info.append({"snr": snr_tag, **kb_information_gain(subsets[len(plan)], kb_ap)})


def _apply_kb_update(config, kb_ap, kb_ue, trigger, coarse_feats, coarse_imps,
                     fine_feats, fine_imps, images, subset_idx, snr_tag, events):
    """Generate candidates from the last subset, prune, and sync a DELTA
    to both replicas; re-baseline the trigger on the updated KB."""
    seed = derive_seed(config.seed, 2_000_000 + subset_idx)
    cands = kbmod.generate_candidates(
        kb_ap, coarse_feats, coarse_imps, kbmod.Granularity.COARSE, config.codec.k_coarse, seed
    )
    cands += kbmod.generate_candidates(
        kb_ap, fine_feats, fine_imps, kbmod.Granularity.FINE, config.codec.k_fine, seed + 1
    )
    removable = []
    for granularity in (kbmod.Granularity.COARSE, kbmod.Granularity.FINE):
        sebs = kb_ap.sebs_of(granularity)
        if not sebs:
            continue
        survivor = max(sebs, key=lambda s: (s.importance, -s.id))
        removable += [
            s.id for s in sebs
            if s.importance < kb_ap.params.prune_threshold and s.id != survivor.id
        ]
    msg = syncproto.SyncMessage(
        kind=syncproto.MessageKind.DELTA,
        kb_version_base=kb_ap.version,
        added=cands,
        removed=sorted(removable),
    )
    decoded = syncproto.decode_message(syncproto.encode_message(msg))
    syncproto.apply_message(kb_ap, decoded)
    syncproto.apply_message(kb_ue, decoded)
    assert syncproto.kb_hash(kb_ap) == syncproto.kb_hash(kb_ue)
    trigger.baseline = max(
        1e-9, float(np.mean([semcodec.quantization_distortion(img, kb_ap) for img in images]))
    )
    trigger.window.clear()
    events.append(
        {"snr": snr_tag, "subset": subset_idx, "event": "update_applied",
         "added": len(cands), "removed": len(removable), "kb_version": kb_ap.version}
    )


def find_cliff_window(
    seed: int = 0,
    n: int = 648,
    n_frames: int = 200,
    snr_lo: float = 0.0,
    snr_hi: float = 8.0,
    step: float = 0.25,
    max_bp_iters: int = 50,
) -> dict:
    """Sweep post-decode BER over SNR to locate the UEP protection window.

    Finds s1 where rate 2/3 still fails (BER > 1e-2) while rate 1/2 is
    already clean (BER < 1e-4), and s2 >= s1 where both are clean.
    """
    codes = {
        "1/2": channel.construct_ldpc(channel.RATE_HALF, n, seed),
        "2/3": channel.construct_ldpc(channel.RATE_TWO_THIRDS, n, seed),
    }
    snrs = [round(snr_lo + i * step, 6) for i in range(int(round((snr_hi - snr_lo) / step)) + 1)]
    ber = {"1/2": [], "2/3": []}
    for rate_key, code in codes.items():
        # one message batch per rate, reused across the sweep (paired seeds)
        rng = Xoshiro256StarStar(derive_seed(seed, 42 if rate_key == "1/2" else 43))
        msgs = (rng.uniforms(n_frames * code.k).reshape(n_frames, code.k) < 0.5).astype(np.uint8)
        cws = np.stack([channel.ldpc_encode(code, m) for m in msgs])
        symbols = np.stack([channel.qpsk_modulate(cw) for cw in cws])
        for si, snr in enumerate(snrs):
            nv = channel.noise_variance(snr)
            noise_seed = derive_seed(seed, 3_000_000 + si)
            noise = Xoshiro256StarStar(noise_seed).gaussians(2 * symbols.size) * math.sqrt(nv)
            rec = symbols + (noise[0::2] + 1j * noise[1::2]).reshape(symbols.shape)
            llrs = np.empty((n_frames, 2 * symbols.shape[1]))
            llrs[:, 0::2] = 2.0 * rec.real / nv
            llrs[:, 1::2] = 2.0 * rec.imag / nv
            bits, _conv, _ = channel.ldpc_decode_batch(code, llrs, max_bp_iters)
            ber[rate_key].append(channel.measure_ber(msgs.reshape(-1), bits.reshape(-1)))

    s1 = s2 = None
    for i, snr in enumerate(snrs):
        if s1 is None and ber["2/3"][i] > 1e-2 and ber["1/2"][i] < 1e-4:
            s1 = snr
        if s1 is not None and ber["1/2"][i] < 1e-4 and ber["2/3"][i] < 1e-4:
            s2 = snr
            break
    return {"snrs": snrs, "ber": ber, "s1": s1, "s2": s2}
