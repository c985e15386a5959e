import json

from sebcom.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def setup_corpus(tmp_path, capsys, n=4):
    out = tmp_path / "corpus"
    code, _, _ = run(capsys, "gen-corpus", "--family", "blobs", "--n", str(n),
                     "--size", "64", "--seed", "1", "--out-dir", str(out))
    assert code == 0
    return sorted(out.glob("*.pgm"))


def train(tmp_path, capsys, images):
    kb_path = tmp_path / "kb.sebk"
    code, _, _ = run(capsys, "train-kb", *map(str, images), "--k-coarse", "8",
                     "--k-fine", "8", "--seed", "2", "--out", str(kb_path))
    assert code == 0
    return kb_path


def test_gen_corpus_deterministic(tmp_path, capsys):
    a = setup_corpus(tmp_path / "a", capsys)
    b = setup_corpus(tmp_path / "b", capsys)
    assert [p.read_bytes() for p in a] == [p.read_bytes() for p in b]


def test_full_pipeline(tmp_path, capsys):
    images = setup_corpus(tmp_path, capsys)
    kb_path = train(tmp_path, capsys, images)

    frame_path = tmp_path / "frame.sebf"
    code, out, _ = run(capsys, "encode", str(images[0]), "--kb", str(kb_path),
                       "--out", str(frame_path))
    assert code == 0 and frame_path.read_bytes()[:4] == b"SEBF"

    recon_path = tmp_path / "recon.pgm"
    code, out, _ = run(capsys, "decode", str(frame_path), "--kb", str(kb_path),
                       "--out", str(recon_path))
    assert code == 0 and "CRC ok" in out
    assert recon_path.read_bytes().startswith(b"P5")


def test_transmit_noiseless_matches_decode(tmp_path, capsys):
    images = setup_corpus(tmp_path, capsys)
    kb_path = train(tmp_path, capsys, images)
    frame_path = tmp_path / "frame.sebf"
    run(capsys, "encode", str(images[0]), "--kb", str(kb_path), "--out", str(frame_path))

    direct = tmp_path / "direct.pgm"
    run(capsys, "decode", str(frame_path), "--kb", str(kb_path), "--out", str(direct))

    via_channel = tmp_path / "channel.pgm"
    stats_path = tmp_path / "stats.json"
    code, out, _ = run(capsys, "transmit", str(frame_path), "--kb", str(kb_path),
                       "--out", str(via_channel), "--stats", str(stats_path))
    assert code == 0
    assert via_channel.read_bytes() == direct.read_bytes()
    stats = json.loads(stats_path.read_text())
    assert stats["lost"] is False
    assert stats["class_a"]["post_ber"] == 0.0


def test_transmit_deterministic_at_noise(tmp_path, capsys):
    images = setup_corpus(tmp_path, capsys)
    kb_path = train(tmp_path, capsys, images)
    frame_path = tmp_path / "frame.sebf"
    run(capsys, "encode", str(images[0]), "--kb", str(kb_path), "--out", str(frame_path))
    outs = []
    for tag in ("x", "y"):
        recon = tmp_path / f"r_{tag}.pgm"
        code, _, _ = run(capsys, "transmit", str(frame_path), "--kb", str(kb_path),
                         "--snr", "3.0", "--seed", "7", "--out", str(recon))
        assert code == 0
        outs.append(recon.read_bytes())
    assert outs[0] == outs[1]


def test_sync_round_trip(tmp_path, capsys):
    images = setup_corpus(tmp_path, capsys)
    kb_path = train(tmp_path, capsys, images)
    msg_path = tmp_path / "full.sebk"
    code, _, _ = run(capsys, "sync", "emit-full", "--kb", str(kb_path), "--out", str(msg_path))
    assert code == 0

    replica = tmp_path / "replica.sebk"
    code, _, _ = run(capsys, "sync", "apply", "--kb", str(kb_path),
                     "--msg", str(msg_path), "--out", str(replica))
    assert code == 0

    code, h1, _ = run(capsys, "sync", "hash", "--kb", str(kb_path))
    code, h2, _ = run(capsys, "sync", "hash", "--kb", str(replica))
    assert h1 == h2 and len(h1.strip()) == 64


def test_run_scenario(tmp_path, capsys):
    cfg_path = tmp_path / "scenario.json"
    cfg_path.write_text(json.dumps({
        "phases": [
            {"family": "gradients", "n_subsets": 1, "images_per_subset": 2, "image_size": 64},
            {"family": "checker", "n_subsets": 1, "images_per_subset": 2, "image_size": 64},
        ],
        "update_points": [1],
        "snrs": [None],
        "seed": 4,
        "codec": {"k_coarse": 8, "k_fine": 8, "seed": 4},
    }))
    out_dir = tmp_path / "out"
    code, out, _ = run(capsys, "run-scenario", str(cfg_path), "--out-dir", str(out_dir))
    assert code == 0
    assert (out_dir / "report.csv").exists()
    report = json.loads((out_dir / "report.json").read_text())
    assert len(report["rows"]) == 2


def test_errors_are_json_on_stderr(tmp_path, capsys):
    code, out, err = run(capsys, "decode", "--kb", "missing.sebk", "--out", "x.pgm")
    assert code != 0
    assert json.loads(err.strip().splitlines()[-1])["error"]

    bad = tmp_path / "bad.sebf"
    bad.write_bytes(b"not a frame at all, long enough to parse")
    kb_images = setup_corpus(tmp_path, capsys, n=2)
    kb_path = train(tmp_path, capsys, kb_images)
    code, out, err = run(capsys, "decode", str(bad), "--kb", str(kb_path),
                         "--out", str(tmp_path / "x.pgm"))
    assert code != 0
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["type"] == "FrameFormatError"


def test_help_exits_zero(capsys):
    code, out, _ = run(capsys, "--help")
    assert code == 0 and "gen-corpus" in out
