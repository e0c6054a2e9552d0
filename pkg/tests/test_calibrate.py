import json

import numpy as np
import pytest

from vit2snn.calibrate import (
    DEFAULT_LEVELS,
    GELU_INPUT_OVERRIDE,
    SOFTMAX_OUTPUT_OVERRIDE,
    THRESHOLD_FLOOR,
    collect_stats,
    default_site_overrides,
    derive_thresholds,
    load_thresholds,
    save_thresholds,
)
from vit2snn.errors import DomainError, FormatError
from vit2snn.model import ModelConfig, build_toy_dataset, build_toy_model, calibration_sites


CFG = ModelConfig(num_blocks=2, dim=32, heads=4, mlp_dim=64,
                  num_tokens=17, num_classes=10, input_dim=24)


def test_percentile_thresholds_on_symmetric_grid():
    stats = {"site": np.arange(-100.0, 101.0)}
    ts = derive_thresholds(stats, percent=99.0, n=4)
    st = ts["site"]
    assert st.theta1 == pytest.approx(98.0, abs=1e-12)
    assert st.theta2 == pytest.approx(98.0, abs=1e-12)
    assert st.n == 4
    assert st.provenance == "percentile"
    assert ts.warnings == []


def test_override_wins_and_missing_site_override_is_added():
    stats = {"a": np.linspace(-1, 1, 11)}
    ts = derive_thresholds(stats, percent=99.0, n=2,
                           overrides={"a": (0.5, 0.08), "b": (0.0125, 0.0125)})
    assert (ts["a"].theta1, ts["a"].theta2) == (0.5, 0.08)
    assert ts["a"].provenance == "override"
    assert "b" in ts
    assert (ts["b"].theta1, ts["b"].theta2) == (0.0125, 0.0125)


def test_floor_clamps_one_sided_sites():
    ts = derive_thresholds({"pos_only": np.linspace(0.1, 2.0, 50)}, percent=99.0, n=3)
    st = ts["pos_only"]
    assert st.provenance == "floor"
    assert st.theta2 == THRESHOLD_FLOOR
    assert st.theta1 > 1.0
    assert len(ts.warnings) == 1

    ts2 = derive_thresholds({"neg_only": -np.linspace(0.1, 2.0, 50)}, percent=99.0, n=3)
    assert ts2["neg_only"].theta1 == THRESHOLD_FLOOR
    assert ts2["neg_only"].theta2 > 1.0


def test_derive_thresholds_domain_errors():
    stats = {"s": np.linspace(-1, 1, 9)}
    with pytest.raises(DomainError):
        derive_thresholds(stats, percent=50.0)
    with pytest.raises(DomainError):
        derive_thresholds(stats, percent=100.5)
    with pytest.raises(DomainError):
        derive_thresholds(stats, n=0)


def test_default_site_overrides_cover_bounded_sites():
    ov = default_site_overrides(CFG)
    assert set(ov) == {"blk0.mlp2.in", "blk0.attn.s", "blk1.mlp2.in", "blk1.attn.s"}
    assert ov["blk0.mlp2.in"] == GELU_INPUT_OVERRIDE
    assert ov["blk1.attn.s"] == SOFTMAX_OUTPUT_OVERRIDE


def test_collect_stats_pools_all_sites():
    model = build_toy_model(CFG, seed=7)
    tokens, _ = build_toy_dataset(CFG, 5, seed=13)
    stats = collect_stats(model, tokens)
    assert set(stats) == set(calibration_sites(CFG))
    assert stats["embed.in"].shape == (5 * 16 * 24,)
    assert stats["blk0.attn.s"].shape == (5 * 4 * 17 * 17,)
    truncated = collect_stats(model, tokens, max_samples=2)
    assert truncated["embed.in"].shape == (2 * 16 * 24,)
    with pytest.raises(DomainError):
        collect_stats(model, np.zeros((0, 16, 24)))


def test_end_to_end_thresholds_from_toy_model():
    model = build_toy_model(CFG, seed=7)
    tokens, _ = build_toy_dataset(CFG, 8, seed=13)
    stats = collect_stats(model, tokens)
    ts = derive_thresholds(stats, overrides=default_site_overrides(CFG))
    assert ts.n == DEFAULT_LEVELS
    assert set(ts.sites) == set(calibration_sites(CFG))
    for site, st in ts.sites.items():
        assert st.theta1 > 0.0 and st.theta2 > 0.0
    assert ts["blk0.attn.s"].provenance == "override"
    assert ts["blk1.mlp2.in"].provenance == "override"
    assert ts["blk0.qkv.in"].provenance == "percentile"


def test_threshold_file_round_trip(tmp_path):
    stats = {"x": np.linspace(-3, 3, 100), "y": np.linspace(-1, 4, 100)}
    ts = derive_thresholds(stats, percent=98.0, n=5, overrides={"y": (1.0, 2.0)})
    path = tmp_path / "calib.json"
    save_thresholds(ts, path)
    loaded = load_thresholds(path)
    assert loaded.n == ts.n
    assert loaded.percent == ts.percent
    assert loaded.sites == ts.sites
    assert loaded.warnings == ts.warnings
    save_thresholds(loaded, tmp_path / "calib2.json")
    assert path.read_bytes() == (tmp_path / "calib2.json").read_bytes()


def test_threshold_file_format_errors(tmp_path):
    with pytest.raises(FormatError):
        load_thresholds(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(FormatError):
        load_thresholds(bad)
    bad.write_text(json.dumps({"format_version": 42, "sites": {}, "n": 1, "percent": 99.0}))
    with pytest.raises(FormatError):
        load_thresholds(bad)
    bad.write_text(json.dumps({"format_version": 1, "sites": {"s": {"theta1": 1.0}},
                               "n": 1, "percent": 99.0}))
    with pytest.raises(FormatError):
        load_thresholds(bad)
