"""Command-line interface.

Every subcommand is deterministic for fixed flags and seeds; failures
exit nonzero with a machine-readable JSON error line on stderr.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import channel, harness, semcodec, syncproto
from .corpus import FAMILIES, generate_corpus
from .importance import builtin_saliency, make_provider
from .kb import KbParams
from .semcodec import CodecConfig


@click.group()
def cli():
    """Semantic-base image communication toolkit."""


@cli.command("gen-corpus")
@click.option("--family", type=click.Choice(FAMILIES), required=True)
@click.option("--n", type=int, default=10, show_default=True)
@click.option("--size", type=int, default=256, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", type=click.Path(), required=True)
def gen_corpus_cmd(family, n, size, seed, out_dir):
    """Write a deterministic synthetic image corpus as PGM files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(generate_corpus(family, n, size, seed)):
        semcodec.save_pgm(img, out / f"{family}_{i:03d}.pgm")
    click.echo(f"wrote {n} images to {out}")


def _provider(importance):
    return builtin_saliency if importance == "builtin" else make_provider(importance)


@cli.command("train-kb")
@click.argument("images", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--k-coarse", type=int, default=256, show_default=True)
@click.option("--k-fine", type=int, default=64, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--importance", default="builtin", show_default=True, help="builtin or file:PATH")
@click.option("--out", type=click.Path(), required=True)
def train_kb_cmd(images, k_coarse, k_fine, seed, importance, out):
    """Train coarse/fine codebooks on images and save the KB."""
    corpus = [semcodec.load_image(p) for p in images]
    config = CodecConfig(k_coarse=k_coarse, k_fine=k_fine, seed=seed)
    kb = semcodec.build_kb(corpus, config, _provider(importance), params=KbParams())
    syncproto.save_kb(kb, out)
    click.echo(
        f"KB version {kb.version}: {len(kb.sebs)} Sebs, "
        f"baseline distortion {kb.baseline_distortion:.6g}, hash {syncproto.kb_hash(kb).hex()[:16]}"
    )


@cli.command("encode")
@click.argument("image", type=click.Path(exists=True))
@click.option("--kb", "kb_path", type=click.Path(exists=True), required=True)
@click.option("--importance", default="builtin", show_default=True)
@click.option("--p-fine", type=float, default=0.20, show_default=True)
@click.option("--p-protect", type=float, default=0.50, show_default=True)
@click.option("--out", type=click.Path(), required=True)
def encode_cmd(image, kb_path, importance, p_fine, p_protect, out):
    """Encode an image into a SEBF semantic bitstream."""
    kb = syncproto.load_kb(kb_path)
    img = semcodec.load_image(image)
    heat = _provider(importance)(img)
    config = CodecConfig(p_fine=p_fine, p_protect=p_protect)
    frame = semcodec.encode(img, kb, heat, config)
    data = semcodec.serialize_frame(frame)
    Path(out).write_bytes(data)
    click.echo(f"encoded {frame.n_cells} cells into {len(data)} bytes")


@cli.command("decode")
@click.argument("frame_file", type=click.Path(exists=True))
@click.option("--kb", "kb_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
def decode_cmd(frame_file, kb_path, out):
    """Reconstruct an image from a SEBF bitstream."""
    kb = syncproto.load_kb(kb_path)
    frame, crc_ok = semcodec.deserialize_frame(Path(frame_file).read_bytes())
    img = semcodec.decode(frame, kb)
    semcodec.save_pgm(img, out)
    click.echo(f"decoded {'(CRC ok)' if crc_ok else '(CORRUPT)'} to {out}")


@cli.command("transmit")
@click.argument("frame_file", type=click.Path(exists=True))
@click.option("--kb", "kb_path", type=click.Path(exists=True), required=True)
@click.option("--snr", type=float, default=None, help="Es/N0 in dB; omit for noiseless")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--mode", type=click.Choice(["uep", "none"]), default="uep", show_default=True)
@click.option("--code-seed", type=int, default=0, show_default=True)
@click.option("--ldpc-n", type=int, default=648, show_default=True)
@click.option("--out", type=click.Path(), required=True, help="reconstructed PGM")
@click.option("--stats", type=click.Path(), default=None, help="JSON transmission stats")
def transmit_cmd(frame_file, kb_path, snr, seed, mode, code_seed, ldpc_n, out, stats):
    """Simulate a protected transmission of an encoded frame over AWGN."""
    kb = syncproto.load_kb(kb_path)
    payload = Path(frame_file).read_bytes()
    frame, _ = semcodec.deserialize_frame(payload)
    codes = {
        "1/2": channel.construct_ldpc(channel.RATE_HALF, ldpc_n, code_seed),
        "2/3": channel.construct_ldpc(channel.RATE_TWO_THIRDS, ldpc_n, code_seed),
    }
    cfg = channel.ChannelConfig(snr_db=snr, seed=seed)
    tx = channel.uep_frame(payload, frame, codes, cfg, mode=mode)
    if tx.lost:
        recon = np.full((frame.original_height, frame.original_width), harness.GRAY_LEVEL, np.uint8)
    else:
        frame_rx, _ = semcodec.deserialize_frame(tx.reassembled)
        img = semcodec.decode(frame_rx, kb)
        recon = img.pixels[: img.original_height, : img.original_width]
    semcodec.save_pgm(recon, out)
    info = {
        "lost": tx.lost,
        "mode": mode,
        "n_symbols": tx.n_symbols,
        "cbr": tx.n_symbols / (frame.original_width * frame.original_height),
    }
    for name, cls in (("class_a", tx.class_a), ("class_b", tx.class_b)):
        if cls is not None:
            info[name] = {
                "rate": f"{cls.rate.numerator}/{cls.rate.denominator}",
                "blocks": cls.n_blocks,
                "pre_ber": cls.pre_ber,
                "post_ber": cls.post_ber,
                "converged": all(cls.converged),
            }
    text = json.dumps(info, sort_keys=True, indent=1)
    if stats:
        Path(stats).write_text(text)
    click.echo(text)


@cli.group("sync")
def sync_group():
    """Offline AP/UE knowledge-base synchronization."""


@sync_group.command("emit-full")
@click.option("--kb", "kb_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
def sync_emit_full(kb_path, out):
    """Write the KB's FULL sync message to a file."""
    kb = syncproto.load_kb(kb_path)
    Path(out).write_bytes(syncproto.encode_message(syncproto.full_message(kb)))
    click.echo(f"FULL message for version {kb.version} written to {out}")


@sync_group.command("apply")
@click.option("--kb", "kb_path", type=click.Path(exists=True), required=True)
@click.option("--msg", "msg_path", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
def sync_apply(kb_path, msg_path, out):
    """Apply a sync message to a KB replica and save the result."""
    kb = syncproto.load_kb(kb_path)
    msg = syncproto.decode_message(Path(msg_path).read_bytes())
    result = syncproto.apply_message(kb, msg)
    syncproto.save_kb(kb, out)
    click.echo(
        f"applied {msg.kind.name}: version {result['new_version']}, "
        f"hash {syncproto.kb_hash(kb).hex()[:16]}"
    )


@sync_group.command("hash")
@click.option("--kb", "kb_path", type=click.Path(exists=True), required=True)
def sync_hash(kb_path):
    """Print the canonical KB hash."""
    kb = syncproto.load_kb(kb_path)
    click.echo(syncproto.kb_hash(kb).hex())


@cli.command("run-scenario")
@click.argument("config_file", type=click.Path(exists=True))
@click.option("--out-dir", type=click.Path(), required=True)
def run_scenario_cmd(config_file, out_dir):
    """Run a scenario config and emit CSV/JSON reports."""
    config = harness.ScenarioConfig.from_json(config_file)
    report = harness.run_scenario(config, out_dir=out_dir)
    click.echo(f"wrote {len(report.rows)} report rows to {out_dir}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        print(json.dumps({"error": exc.format_message()}), file=sys.stderr)
        return exc.exit_code or 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
