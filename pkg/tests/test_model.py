import json

import numpy as np
import pytest

from vit2snn.errors import DimensionError, DomainError, FormatError, GraphValidationError, NumericError
from vit2snn.model import (
    ModelConfig,
    ModelGraph,
    PatchSpec,
    ann_forward,
    build_toy_dataset,
    build_toy_model,
    calibration_sites,
    expected_shapes,
    layer_sequence,
    load_dataset,
    load_model,
    patchify,
    save_dataset,
    save_model,
)


CFG = ModelConfig(num_blocks=2, dim=32, heads=4, mlp_dim=64,
                  num_tokens=17, num_classes=10, input_dim=24)


def test_config_validation():
    assert CFG.head_dim == 8
    with pytest.raises(DomainError):
        ModelConfig(1, 30, 4, 64, 17, 10, 24)       # dim not divisible by heads
    with pytest.raises(DomainError):
        ModelConfig(1, 32, 4, 64, 1, 10, 24)        # no patch tokens
    with pytest.raises(DomainError):
        ModelConfig(0, 32, 4, 64, 17, 10, 24)
    with pytest.raises(DomainError):
        ModelConfig(1, 32, 4, 64, 17, 10, 24,
                    patch=PatchSpec(patch_size=3, image_h=8, image_w=8, channels=1))


def test_layer_sequence_structure():
    layers = layer_sequence(CFG)
    kinds = [l.kind for l in layers]
    assert kinds[0] == "embed" and kinds[1] == "pos_add" and kinds[-1] == "cls_head"
    assert kinds.count("linear") == 8        # qkv, out, mlp1, mlp2 per block
    assert kinds.count("matmul") == 4        # qk and sv per block
    assert kinds.count("layernorm") == 4
    assert kinds.count("softmax") == 2
    assert kinds.count("gelu") == 2
    assert kinds.count("residual_add") == 4

    sites = calibration_sites(CFG)
    assert len(sites) == 1 + 8 * CFG.num_blocks
    assert sites[0] == "embed.in"
    assert sites[1:9] == [
        "blk0.qkv.in", "blk0.attn.q", "blk0.attn.k",
        "blk0.attn.s", "blk0.attn.v", "blk0.out.in", "blk0.mlp1.in", "blk0.mlp2.in",
    ]


def test_toy_model_matches_declared_shapes_and_is_deterministic():
    model = build_toy_model(CFG, seed=7)
    shapes = expected_shapes(CFG)
    assert set(model.weights) == set(shapes)
    for name, shape in shapes.items():
        assert model.weights[name].shape == shape
        assert model.weights[name].dtype == np.float32
    again = build_toy_model(CFG, seed=7)
    for name in shapes:
        assert np.array_equal(model.weights[name], again.weights[name])
    other = build_toy_model(CFG, seed=8)
    assert not np.array_equal(model.weights["embed.w"], other.weights["embed.w"])


def test_graph_validation_errors():
    model = build_toy_model(CFG, seed=0)
    weights = dict(model.weights)
    weights.pop("blk1.mlp2.b")
    with pytest.raises(GraphValidationError):
        ModelGraph(CFG, weights)
    weights = dict(model.weights)
    weights["rogue"] = np.zeros(3, dtype=np.float32)
    with pytest.raises(GraphValidationError):
        ModelGraph(CFG, weights)
    weights = dict(model.weights)
    weights["head.w"] = weights["head.w"][:, :-1]
    with pytest.raises(GraphValidationError):
        ModelGraph(CFG, weights)


def test_forward_batched_equals_unbatched():
    model = build_toy_model(CFG, seed=7)
    tokens, _ = build_toy_dataset(CFG, 5, seed=11)
    batched, _ = ann_forward(model, tokens)
    assert batched.shape == (5, CFG.num_classes)
    for i in range(5):
        single, _ = ann_forward(model, tokens[i])
        assert np.array_equal(single, batched[i])


def test_forward_taps_cover_all_sites():
    model = build_toy_model(CFG, seed=7)
    tokens, _ = build_toy_dataset(CFG, 3, seed=11)
    _, taps = ann_forward(model, tokens, want_taps=True)
    assert set(taps) == set(calibration_sites(CFG))
    n, c, h = CFG.num_tokens, CFG.dim, CFG.heads
    assert taps["embed.in"].shape == (3, n - 1, CFG.input_dim)
    assert taps["blk0.qkv.in"].shape == (3, n, c)
    assert taps["blk0.attn.q"].shape == (3, n, c)
    assert taps["blk0.attn.s"].shape == (3, h, n, n)
    assert taps["blk1.mlp1.in"].shape == (3, n, c)
    assert taps["blk1.mlp2.in"].shape == (3, n, CFG.mlp_dim)
    rows = taps["blk0.attn.s"].reshape(-1, n)
    assert np.allclose(rows.sum(axis=1), 1.0, atol=1e-6)


def test_forward_input_validation():
    model = build_toy_model(CFG, seed=0)
    with pytest.raises(DimensionError):
        ann_forward(model, np.zeros((2, 16, 23), dtype=np.float32))
    bad = np.zeros((1, 16, 24), dtype=np.float32)
    bad[0, 0, 0] = np.nan
    with pytest.raises(NumericError):
        ann_forward(model, bad)


def test_patchify_layout():
    image = np.arange(16.0).reshape(4, 4, 1)
    got = patchify(image, 2)
    want = np.array([
        [0, 1, 4, 5],
        [2, 3, 6, 7],
        [8, 9, 12, 13],
        [10, 11, 14, 15],
    ], dtype=np.float64)
    assert np.array_equal(got, want)
    # channel axis is fastest within a patch
    two = np.stack([image[..., 0], image[..., 0] + 100.0], axis=-1)
    got2 = patchify(two, 2)
    assert np.array_equal(got2[0, :4], [0.0, 100.0, 1.0, 101.0])
    with pytest.raises(DimensionError):
        patchify(np.zeros((4, 4)), 2)
    with pytest.raises(DimensionError):
        patchify(np.zeros((5, 4, 1)), 2)


def test_model_archive_round_trip(tmp_path):
    model = build_toy_model(CFG, seed=7)
    save_model(model, tmp_path / "m")
    loaded = load_model(tmp_path / "m")
    assert loaded.config == CFG
    for name in model.weights:
        assert np.array_equal(loaded.weights[name], model.weights[name])
        assert loaded.weights[name].dtype == np.float32
    save_model(model, tmp_path / "m2")
    assert (tmp_path / "m" / "manifest.json").read_bytes() == \
        (tmp_path / "m2" / "manifest.json").read_bytes()
    assert (tmp_path / "m" / "weights.bin").read_bytes() == \
        (tmp_path / "m2" / "weights.bin").read_bytes()


def test_model_archive_format_errors(tmp_path):
    model = build_toy_model(CFG, seed=7)
    base = tmp_path / "m"
    save_model(model, base)

    with pytest.raises(FormatError):
        load_model(tmp_path / "missing")

    man = json.loads((base / "manifest.json").read_text())
    man["format_version"] = 99
    (base / "manifest.json").write_text(json.dumps(man))
    with pytest.raises(FormatError):
        load_model(base)

    save_model(model, base)
    blob = (base / "weights.bin").read_bytes()
    (base / "weights.bin").write_bytes(blob[:-8])
    with pytest.raises(FormatError):
        load_model(base)

    save_model(model, base)
    man = json.loads((base / "manifest.json").read_text())
    man["tensors"][0]["byte_len"] += 4
    (base / "manifest.json").write_text(json.dumps(man))
    with pytest.raises(FormatError):
        load_model(base)

    # structurally valid archive whose declared shape breaks the graph
    save_model(model, base)
    man = json.loads((base / "manifest.json").read_text())
    entry = next(e for e in man["tensors"] if e["name"] == "head.b")
    entry["name"] = "head.bias"
    (base / "manifest.json").write_text(json.dumps(man))
    with pytest.raises(GraphValidationError):
        load_model(base)


def test_archive_rejects_non_f32(tmp_path):
    model = build_toy_model(CFG, seed=0).astype(np.float64)
    with pytest.raises(FormatError):
        save_model(model, tmp_path / "m")


def test_dataset_round_trip_and_errors(tmp_path):
    tokens, labels = build_toy_dataset(CFG, 6, seed=11)
    save_dataset(tokens, labels, tmp_path / "d")
    t2, l2 = load_dataset(tmp_path / "d")
    assert np.array_equal(t2, tokens)
    assert np.array_equal(l2, labels)

    (tmp_path / "d" / "data.bin").write_bytes(b"\x00" * 12)
    with pytest.raises(FormatError):
        load_dataset(tmp_path / "d")

    save_dataset(tokens, labels, tmp_path / "d")
    meta = json.loads((tmp_path / "d" / "data.json").read_text())
    meta["labels"] = meta["labels"][:-1]
    (tmp_path / "d" / "data.json").write_text(json.dumps(meta))
    with pytest.raises(FormatError):
        load_dataset(tmp_path / "d")

    with pytest.raises(FormatError):
        load_dataset(tmp_path / "nope")
