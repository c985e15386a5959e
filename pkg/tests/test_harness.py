import json

import numpy as np
import pytest

from sebcom.harness import (
    ScenarioConfig,
    ScenarioPhase,
    kb_information_gain,
    run_scenario,
)
from sebcom.semcodec import CodecConfig


def small_scenario(**kwargs):
    defaults = dict(
        phases=[
            ScenarioPhase(family="gradients", n_subsets=2, images_per_subset=2, image_size=64),
            ScenarioPhase(family="checker", n_subsets=2, images_per_subset=2, image_size=64),
        ],
        update_points=[3],
        snrs=[None],
        seed=5,
        codec=CodecConfig(k_coarse=8, k_fine=8, seed=5),
    )
    defaults.update(kwargs)
    return ScenarioConfig(**defaults)


@pytest.fixture(scope="module")
def report():
    return run_scenario(small_scenario())


def test_row_structure(report):
    assert len(report.rows) == 4
    for row in report.rows:
        assert 0.0 <= row["frame_loss_rate"] <= 1.0
        assert row["cbr"] > 0
        assert row["psnr"] > 0
    assert [r["subset"] for r in report.rows] == [1, 2, 3, 4]
    assert report.rows[0]["family"] == "gradients"
    assert report.rows[3]["family"] == "checker"


def test_noiseless_has_no_loss(report):
    assert all(row["frame_loss_rate"] == 0.0 for row in report.rows)
    assert all(row["ber_a_post"] == 0.0 and row["ber_b_post"] == 0.0 for row in report.rows)


def test_update_bumps_kb_version(report):
    assert report.rows[2]["kb_version"] == 0  # subset 3 measured before its update
    assert report.rows[3]["kb_version"] == 1
    applied = [e for e in report.events if e["event"] == "update_applied"]
    assert len(applied) == 1 and applied[0]["subset"] == 3


def test_update_improves_post_shift_quality(report):
    # checker subset after the update decodes better than before it
    assert report.rows[3]["quant_distortion"] < report.rows[2]["quant_distortion"]
    assert report.rows[3]["psnr"] > report.rows[2]["psnr"]


def test_disabled_updates_keep_version_zero():
    rep = run_scenario(small_scenario(enable_updates=False))
    assert all(row["kb_version"] == 0 for row in rep.rows)
    assert not any(e["event"] == "update_applied" for e in rep.events)


def test_intent_shift_raises_distortion(report):
    # drift onto the checker family raises the KB-mismatch statistic
    assert report.rows[2]["quant_distortion"] > 1.5 * report.rows[0]["quant_distortion"]


def test_intent_shift_fires_trigger():
    # enough post-shift images to fill the 10-message trigger window
    rep = run_scenario(small_scenario(
        phases=[
            ScenarioPhase(family="gradients", n_subsets=1, images_per_subset=4, image_size=64),
            ScenarioPhase(family="checker", n_subsets=1, images_per_subset=12, image_size=64),
        ],
        update_points=[],
    ))
    requests = [e for e in rep.events if e["event"] == "update_request"]
    assert requests and requests[0]["subset"] == 2


def test_deterministic_reports():
    a = run_scenario(small_scenario())
    b = run_scenario(small_scenario())
    assert a.to_csv() == b.to_csv()
    assert a.to_json() == b.to_json()


def test_report_files(tmp_path):
    rep = run_scenario(small_scenario(), out_dir=tmp_path)
    csv_text = (tmp_path / "report.csv").read_text()
    assert csv_text == rep.to_csv()
    data = json.loads((tmp_path / "report.json").read_text())
    assert len(data["rows"]) == 4


def test_config_from_json(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps({
        "phases": [{"family": "blobs", "n_subsets": 1, "images_per_subset": 2, "image_size": 64}],
        "update_points": [],
        "snrs": [4.0],
        "seed": 9,
        "codec": {"k_coarse": 8, "k_fine": 8, "seed": 9},
    }))
    cfg = ScenarioConfig.from_json(path)
    assert cfg.phases[0].family == "blobs"
    assert cfg.snrs == [4.0]
    assert cfg.codec.k_coarse == 8


def test_config_validation():
    with pytest.raises(ValueError):
        small_scenario(update_points=[9])
    with pytest.raises(ValueError):
        small_scenario(update_points=[3, 1])


def test_kb_information_gain(blob_corpus, trained_kb):
    info = kb_information_gain(blob_corpus, trained_kb)
    assert info["h_x"] >= info["mi"] >= 0.0
    assert info["h_x_given_s"] == pytest.approx(info["h_x"] - info["mi"], abs=1e-12)


def test_noisy_scenario_runs():
    rep = run_scenario(small_scenario(snrs=[2.0], update_points=[]))
    assert len(rep.rows) == 4
    assert any(row["ber_b_pre"] > 0 for row in rep.rows)
