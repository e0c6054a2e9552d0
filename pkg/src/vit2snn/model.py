"""Transformer oracle: configuration, weights, forward pass and archives.

The model is a pre-norm encoder: token embedding, learned class token and
position table, ``num_blocks`` blocks of (layernorm, qkv linear, scaled
softmax attention, output linear, residual, layernorm, two-layer GELU MLP,
residual), then a dense classification head on the class-token features.

``ann_forward`` can record a tap at every conversion site: the input tensor
of each linear layer and both operands of each matrix product. Those taps
drive threshold calibration and give the SNN runtime its reference.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import tensor
from .errors import DimensionError, DomainError, FormatError, GraphValidationError

FORMAT_VERSION = 1
LAYERNORM_EPS = 1e-5

MANIFEST_NAME = "manifest.json"
WEIGHTS_NAME = "weights.bin"
DATA_META_NAME = "data.json"
DATA_BIN_NAME = "data.bin"


@dataclass(frozen=True)
class PatchSpec:
    """Optional image front-end: non-overlapping square patches."""

    patch_size: int
    image_h: int
    image_w: int
    channels: int

    def grid(self) -> tuple[int, int]:
        return self.image_h // self.patch_size, self.image_w // self.patch_size


@dataclass(frozen=True)
class ModelConfig:
    num_blocks: int
    dim: int
    heads: int
    mlp_dim: int
    num_tokens: int          # includes the class token
    num_classes: int
    input_dim: int           # per-token feature width before the embedding
    patch: PatchSpec | None = None

    def __post_init__(self):
        for name in ("num_blocks", "dim", "heads", "mlp_dim", "num_tokens", "num_classes", "input_dim"):
            if getattr(self, name) < 1:
                raise DomainError(f"config field {name} must be >= 1")
        if self.dim % self.heads != 0:
            raise DomainError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.num_tokens < 2:
            raise DomainError("need at least one patch token besides the class token")
        if self.patch is not None:
            p = self.patch
            if p.image_h % p.patch_size or p.image_w % p.patch_size:
                raise DomainError("image size not divisible by patch size")
            if self.input_dim != p.patch_size * p.patch_size * p.channels:
                raise DomainError("input_dim does not match patch geometry")
            gh, gw = p.grid()
            if self.num_tokens != gh * gw + 1:
                raise DomainError("num_tokens does not match patch grid")

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads


@dataclass(frozen=True)
class LayerSpec:
    """One node of the oracle graph, in execution order."""

    kind: str                       # embed | pos_add | layernorm | linear | matmul | softmax | gelu | residual_add | cls_head
    name: str
    sites: tuple[str, ...] = ()     # calibration sites this node consumes
    weight_names: tuple[str, ...] = ()


def layer_sequence(cfg: ModelConfig) -> list[LayerSpec]:
    layers = [
        LayerSpec("embed", "embed", ("embed.in",), ("embed.w", "embed.b")),
        LayerSpec("pos_add", "pos", (), ("cls", "pos")),
    ]
    for i in range(cfg.num_blocks):
        b = f"blk{i}"
        layers += [
            LayerSpec("layernorm", f"{b}.ln1", (), (f"{b}.ln1.g", f"{b}.ln1.b")),
            LayerSpec("linear", f"{b}.qkv", (f"{b}.qkv.in",), (f"{b}.qkv.w", f"{b}.qkv.b")),
            LayerSpec("matmul", f"{b}.attn.qk", (f"{b}.attn.q", f"{b}.attn.k")),
            LayerSpec("softmax", f"{b}.softmax", ()),
            LayerSpec("matmul", f"{b}.attn.sv", (f"{b}.attn.s", f"{b}.attn.v")),
            LayerSpec("linear", f"{b}.out", (f"{b}.out.in",), (f"{b}.out.w", f"{b}.out.b")),
            LayerSpec("residual_add", f"{b}.res1", ()),
            LayerSpec("layernorm", f"{b}.ln2", (), (f"{b}.ln2.g", f"{b}.ln2.b")),
            LayerSpec("linear", f"{b}.mlp1", (f"{b}.mlp1.in",), (f"{b}.mlp1.w", f"{b}.mlp1.b")),
            LayerSpec("gelu", f"{b}.gelu", ()),
            LayerSpec("linear", f"{b}.mlp2", (f"{b}.mlp2.in",), (f"{b}.mlp2.w", f"{b}.mlp2.b")),
            LayerSpec("residual_add", f"{b}.res2", ()),
        ]
    layers.append(LayerSpec("cls_head", "head", (), ("head.w", "head.b")))
    return layers


def calibration_sites(cfg: ModelConfig) -> list[str]:
    """All sites that need thresholds, in graph order."""
    sites: list[str] = []
    for spec in layer_sequence(cfg):
        sites.extend(spec.sites)
    return sites


def expected_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    c, ch = cfg.dim, cfg.mlp_dim
    shapes: dict[str, tuple[int, ...]] = {
        "embed.w": (cfg.input_dim, c),
        "embed.b": (c,),
        "cls": (c,),
        "pos": (cfg.num_tokens, c),
        "head.w": (c, cfg.num_classes),
        "head.b": (cfg.num_classes,),
    }
    for i in range(cfg.num_blocks):
        b = f"blk{i}"
        shapes.update({
            f"{b}.ln1.g": (c,), f"{b}.ln1.b": (c,),
            f"{b}.qkv.w": (c, 3 * c), f"{b}.qkv.b": (3 * c,),
            f"{b}.out.w": (c, c), f"{b}.out.b": (c,),
            f"{b}.ln2.g": (c,), f"{b}.ln2.b": (c,),
            f"{b}.mlp1.w": (c, ch), f"{b}.mlp1.b": (ch,),
            f"{b}.mlp2.w": (ch, c), f"{b}.mlp2.b": (c,),
        })
    return shapes


class ModelGraph:
    """Config + validated weights + the ordered layer list."""

    def __init__(self, config: ModelConfig, weights: dict[str, np.ndarray]):
        self.config = config
        self.weights = weights
        self.layers = layer_sequence(config)
        self._validate()

    def _validate(self) -> None:
        shapes = expected_shapes(self.config)
        missing = sorted(set(shapes) - set(self.weights))
        if missing:
            raise GraphValidationError(f"missing weight tensors: {missing}")
        extra = sorted(set(self.weights) - set(shapes))
        if extra:
            raise GraphValidationError(f"unexpected weight tensors: {extra}")
        for name, shape in shapes.items():
            w = self.weights[name]
            if tuple(w.shape) != shape:
                raise GraphValidationError(
                    f"tensor {name} has shape {tuple(w.shape)}, expected {shape}"
                )
            tensor.check_finite(w, f"weight {name}")

    @property
    def dtype(self) -> np.dtype:
        return self.weights["embed.w"].dtype

    def astype(self, dtype) -> "ModelGraph":
        return ModelGraph(self.config, {k: v.astype(dtype) for k, v in self.weights.items()})


def patchify(image: np.ndarray, patch_size: int) -> np.ndarray:
    """(H, W, C) image -> (num_patches, patch_size*patch_size*C) rows.

    Patches are read row-major over the patch grid; pixels within a patch
    stay row-major with the channel axis fastest.
    """
    image = np.asarray(image)
    if image.ndim != 3:
        raise DimensionError(f"patchify expects (H, W, C), got {image.shape}")
    h, w, c = image.shape
    if h % patch_size or w % patch_size:
        raise DimensionError(f"image {h}x{w} not divisible by patch size {patch_size}")
    gh, gw = h // patch_size, w // patch_size
    out = image.reshape(gh, patch_size, gw, patch_size, c)
    out = out.transpose(0, 2, 1, 3, 4)
    return np.ascontiguousarray(out.reshape(gh * gw, patch_size * patch_size * c))


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    """(B, N, C) -> (B, heads, N, C/heads)."""
    b, n, c = x.shape
    return np.ascontiguousarray(x.reshape(b, n, heads, c // heads).transpose(0, 2, 1, 3))


def _merge_heads(x: np.ndarray) -> np.ndarray:
    """(B, heads, N, d) -> (B, N, heads*d)."""
    b, h, n, d = x.shape
    return np.ascontiguousarray(x.transpose(0, 2, 1, 3).reshape(b, n, h * d))


def ann_forward(model: ModelGraph, tokens: np.ndarray, want_taps: bool = False):
    """Run the oracle on a batch of token sets.

    ``tokens`` has shape (B, num_tokens - 1, input_dim) or unbatched
    (num_tokens - 1, input_dim). Returns (logits, taps); taps is None unless
    requested, otherwise a dict keyed by site id holding the full (batched)
    tensor seen at that site.
    """
    cfg = model.config
    w = model.weights
    tokens = np.asarray(tokens)
    squeeze = tokens.ndim == 2
    if squeeze:
        tokens = tokens[None]
    if tokens.ndim != 3 or tokens.shape[1] != cfg.num_tokens - 1 or tokens.shape[2] != cfg.input_dim:
        raise DimensionError(
            f"tokens shape {tokens.shape} incompatible with config "
            f"({cfg.num_tokens - 1} tokens x {cfg.input_dim})"
        )
    tensor.check_finite(tokens, "input tokens")
    taps: dict[str, np.ndarray] | None = {} if want_taps else None

    def tap(site: str, value: np.ndarray) -> None:
        if taps is not None:
            taps[site] = value

    scale = float(1.0 / np.sqrt(cfg.head_dim))
    tap("embed.in", tokens)
    emb = tokens @ w["embed.w"] + w["embed.b"]
    batch = tokens.shape[0]
    x = np.concatenate(
        [np.broadcast_to(w["cls"], (batch, 1, cfg.dim)), emb], axis=1
    ) + w["pos"]

    for i in range(cfg.num_blocks):
        b = f"blk{i}"
        h = tensor.layernorm(x, w[f"{b}.ln1.g"], w[f"{b}.ln1.b"], LAYERNORM_EPS)
        tap(f"{b}.qkv.in", h)
        qkv = h @ w[f"{b}.qkv.w"] + w[f"{b}.qkv.b"]
        q, k, v = np.split(qkv, 3, axis=-1)
        tap(f"{b}.attn.q", q)
        tap(f"{b}.attn.k", k)
        tap(f"{b}.attn.v", v)
        qh = _split_heads(q, cfg.heads)
        kh = _split_heads(k, cfg.heads)
        vh = _split_heads(v, cfg.heads)
        scores = qh @ kh.transpose(0, 1, 3, 2)
        flat = scores.reshape(-1, scores.shape[-1])
        attn = tensor.softmax_rows(flat, scale=scale).reshape(scores.shape)
        tap(f"{b}.attn.s", attn)
        ctx = _merge_heads(attn @ vh)
        tap(f"{b}.out.in", ctx)
        x = x + (ctx @ w[f"{b}.out.w"] + w[f"{b}.out.b"])
        h2 = tensor.layernorm(x, w[f"{b}.ln2.g"], w[f"{b}.ln2.b"], LAYERNORM_EPS)
        tap(f"{b}.mlp1.in", h2)
        m1 = h2 @ w[f"{b}.mlp1.w"] + w[f"{b}.mlp1.b"]
        g = tensor.gelu(m1)
        tap(f"{b}.mlp2.in", g)
        x = x + (g @ w[f"{b}.mlp2.w"] + w[f"{b}.mlp2.b"])

    logits = x[:, 0, :] @ w["head.w"] + w["head.b"]
    if squeeze:
        logits = logits[0]
        if taps is not None:
            taps = {k2: v2[0] for k2, v2 in taps.items()}
    return logits, taps


def build_toy_model(cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> ModelGraph:
    """Random but well-scaled weights for desk-scale experiments."""
    rng = np.random.default_rng(seed)
    shapes = expected_shapes(cfg)
    weights: dict[str, np.ndarray] = {}
    for name in sorted(shapes):
        shape = shapes[name]
        if name.endswith((".g",)):
            arr = 1.0 + 0.05 * rng.standard_normal(shape)
        elif name.endswith(".b") and ".ln" in name:
            arr = 0.05 * rng.standard_normal(shape)
        elif name.endswith(".b"):
            arr = 0.01 * rng.standard_normal(shape)
        elif name == "cls":
            arr = 0.5 * rng.standard_normal(shape)
        elif name == "pos":
            arr = 0.1 * rng.standard_normal(shape)
        else:
            fan_in = shape[0]
            arr = rng.standard_normal(shape) / np.sqrt(fan_in)
        weights[name] = arr.astype(dtype)
    return ModelGraph(cfg, weights)


def build_toy_dataset(cfg: ModelConfig, count: int, seed: int = 0, dtype=np.float32):
    """Synthetic token batch + labels drawn from one seeded generator."""
    rng = np.random.default_rng(seed)
    tokens = rng.standard_normal((count, cfg.num_tokens - 1, cfg.input_dim)).astype(dtype)
    labels = rng.integers(0, cfg.num_classes, size=count).astype(np.int64)
    return tokens, labels


# --- archive I/O ---------------------------------------------------------

def _config_to_json(cfg: ModelConfig) -> dict:
    d = asdict(cfg)
    if cfg.patch is None:
        d.pop("patch")
    return d


def _config_from_json(d: dict) -> ModelConfig:
    d = dict(d)
    patch = d.pop("patch", None)
    try:
        if patch is not None:
            patch = PatchSpec(**patch)
        return ModelConfig(patch=patch, **d)
    except TypeError as exc:
        raise FormatError(f"bad config block: {exc}") from None


def save_model(model: ModelGraph, path) -> None:
    """Write manifest.json + weights.bin (little-endian f32, no padding)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    blobs = []
    offset = 0
    for name in sorted(model.weights):
        arr = model.weights[name]
        if arr.dtype != np.float32:
            raise FormatError(f"archives store f32 weights; {name} is {arr.dtype}")
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "dtype": "f32",
            "byte_offset": offset,
            "byte_len": len(raw),
        })
        blobs.append(raw)
        offset += len(raw)
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": _config_to_json(model.config),
        "tensors": entries,
    }
    (path / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (path / WEIGHTS_NAME).write_bytes(b"".join(blobs))


def load_model(path) -> ModelGraph:
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    blob_path = path / WEIGHTS_NAME
    if not manifest_path.is_file() or not blob_path.is_file():
        raise FormatError(f"{path} is not a model archive (need {MANIFEST_NAME} + {WEIGHTS_NAME})")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest is not valid JSON: {exc}") from None
    if manifest.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported format_version {manifest.get('format_version')!r}")
    cfg = _config_from_json(manifest.get("config", {}))
    blob = blob_path.read_bytes()
    weights: dict[str, np.ndarray] = {}
    expected_end = 0
    for entry in manifest.get("tensors", []):
        try:
            name = entry["name"]
            shape = tuple(int(s) for s in entry["shape"])
            dtype = entry["dtype"]
            off = int(entry["byte_offset"])
            length = int(entry["byte_len"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed tensor entry {entry!r}: {exc}") from None
        if dtype != "f32":
            raise FormatError(f"tensor {name}: unsupported dtype {dtype!r}")
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if length != 4 * count:
            raise FormatError(f"tensor {name}: byte_len {length} != 4 * prod{shape}")
        if off + length > len(blob):
            raise FormatError(f"tensor {name}: range [{off}, {off + length}) beyond blob of {len(blob)} bytes")
        weights[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=off).reshape(shape).copy()
        expected_end = max(expected_end, off + length)
    if expected_end != len(blob):
        raise FormatError(f"weights.bin has {len(blob)} bytes but manifest covers {expected_end}")
    return ModelGraph(cfg, weights)


def save_dataset(tokens: np.ndarray, labels: np.ndarray, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    tokens = np.ascontiguousarray(tokens, dtype="<f4")
    if tokens.ndim != 3:
        raise FormatError(f"dataset tokens must be (count, tokens, dim), got {tokens.shape}")
    meta = {
        "format_version": FORMAT_VERSION,
        "count": int(tokens.shape[0]),
        "tokens_per_sample": int(tokens.shape[1]),
        "dim": int(tokens.shape[2]),
        "labels": [int(b) for b in labels],
    }
    (path / DATA_META_NAME).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    (path / DATA_BIN_NAME).write_bytes(tokens.tobytes())


def load_dataset(path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    meta_path = path / DATA_META_NAME
    bin_path = path / DATA_BIN_NAME
    if not meta_path.is_file() or not bin_path.is_file():
        raise FormatError(f"{path} is not a dataset (need {DATA_META_NAME} + {DATA_BIN_NAME})")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"dataset metadata is not valid JSON: {exc}") from None
    if meta.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported dataset format_version {meta.get('format_version')!r}")
    count = int(meta["count"])
    tps = int(meta["tokens_per_sample"])
    dim = int(meta["dim"])
    blob = bin_path.read_bytes()
    if len(blob) != 4 * count * tps * dim:
        raise FormatError(
            f"data.bin has {len(blob)} bytes, expected {4 * count * tps * dim} for {count}x{tps}x{dim}"
        )
    tokens = np.frombuffer(blob, dtype="<f4").reshape(count, tps, dim).copy()
    tensor.check_finite(tokens, "dataset tokens")
    labels = np.asarray(meta.get("labels", [0] * count), dtype=np.int64)
    if labels.shape != (count,):
        raise FormatError(f"labels length {labels.shape} != count {count}")
    return tokens, labels
