"""ANN -> SNN graph rewrite.

Every linear layer gains a multi-threshold neuron at its input; each matrix
product gains one on each operand plus a compensated spiking product; every
other nonlinearity (layernorm, softmax, GELU) becomes an expectation-
compensated module. The classification head stays analog.

Linear weights are folded into per-rung banks: bank p holds W * lambda_p of
the upstream ladder (scaled by a divisor), so decoding a spike is a row
lookup and the spike path never multiplies. The converted graph keeps the
calibrated thresholds and a divisor of 1; ``normalize_weights`` implements
the general fold for any downstream base threshold and is exercised by the
pairwise invariance checks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import model as model_mod
from .calibrate import SiteThreshold, ThresholdSet
from .errors import DomainError, FormatError, GraphValidationError
from .neuron import ThresholdLadder, build_ladder

SNN_META_NAME = "snn.json"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class NormalizedWeights:
    """Per-rung weight banks plus the matching scaled bias."""

    banks: np.ndarray        # (2n, fan_in, fan_out) f64
    bias: np.ndarray         # (fan_out,) f64
    divisor: float


def normalize_weights(weight: np.ndarray, bias: np.ndarray,
                      ladder_prev: ThresholdLadder, lambda1_this: float = 1.0) -> NormalizedWeights:
    """Fold the upstream ladder (and downstream base scale) into the weights.

    Bank p equals ``weight * ladder_prev.values[p] / lambda1_this``; the bias
    is divided by the same scale. With ``lambda1_this`` equal to the
    downstream neuron's positive base threshold, that neuron can run with
    base thresholds (1, theta2/theta1) and fire identically.
    """
    if lambda1_this <= 0.0:
        raise DomainError(f"downstream base threshold must be positive, got {lambda1_this}")
    weight = np.asarray(weight, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if weight.ndim != 2 or bias.shape != (weight.shape[1],):
        raise DomainError(f"weight {weight.shape} / bias {bias.shape} mismatch")
    scales = ladder_prev.values / lambda1_this          # (2n,)
    banks = np.ascontiguousarray(scales[:, None, None] * weight[None, :, :])
    return NormalizedWeights(banks=banks, bias=bias / lambda1_this, divisor=float(lambda1_this))


@dataclass(frozen=True)
class SnnLayerSpec:
    """One node of the spiking graph, in execution order."""

    kind: str      # mt | spike_linear | ec | matmul_ec | pos_add | residual_add | cls_head
    name: str
    site: str = ""          # mt: the site whose ladder drives it
    ref: str = ""           # spike_linear/matmul_ec/ec: source ANN layer name
    fn: str = ""            # ec: layernorm | softmax | gelu


def snn_layer_sequence(cfg: model_mod.ModelConfig) -> list[SnnLayerSpec]:
    """Rewrite of the oracle layer list per the conversion recipe."""
    out: list[SnnLayerSpec] = []
    for spec in model_mod.layer_sequence(cfg):
        if spec.kind == "embed" or spec.kind == "linear":
            out.append(SnnLayerSpec("mt", f"{spec.sites[0]}.mt", site=spec.sites[0]))
            out.append(SnnLayerSpec("spike_linear", f"{spec.name}.spk", ref=spec.name))
        elif spec.kind == "matmul":
            out.append(SnnLayerSpec("mt", f"{spec.sites[0]}.mt", site=spec.sites[0]))
            out.append(SnnLayerSpec("mt", f"{spec.sites[1]}.mt", site=spec.sites[1]))
            out.append(SnnLayerSpec("matmul_ec", f"{spec.name}.ec", ref=spec.name))
        elif spec.kind in ("layernorm", "softmax", "gelu"):
            out.append(SnnLayerSpec("ec", f"{spec.name}.ec", ref=spec.name, fn=spec.kind))
        elif spec.kind in ("pos_add", "residual_add", "cls_head"):
            out.append(SnnLayerSpec(spec.kind, spec.name, ref=spec.name))
        else:
            raise GraphValidationError(f"unknown oracle layer kind {spec.kind!r}")
    return out


class SnnGraph:
    """Converted network: bundled oracle weights + ladders + weight banks."""

    def __init__(self, model: model_mod.ModelGraph, thresholds: ThresholdSet):
        self.model = model
        self.thresholds = thresholds
        self.n = thresholds.n
        self.layers = snn_layer_sequence(model.config)
        self.ladders: dict[str, ThresholdLadder] = {}
        self.linears: dict[str, NormalizedWeights] = {}
        self._build()

    @property
    def config(self) -> model_mod.ModelConfig:
        return self.model.config

    def _build(self) -> None:
        sites = model_mod.calibration_sites(self.model.config)
        missing = [s for s in sites if s not in self.thresholds]
        if missing:
            raise GraphValidationError(f"thresholds missing for sites: {missing}")
        for site in sites:
            st = self.thresholds[site]
            if st.n != self.n:
                raise GraphValidationError(f"site {site} has n={st.n}, expected {self.n}")
            self.ladders[site] = build_ladder(st.theta1, st.theta2, st.n)
        w = self.model.weights
        for spec in self.model.layers:
            if spec.kind in ("embed", "linear"):
                ladder = self.ladders[spec.sites[0]]
                self.linears[spec.name] = normalize_weights(
                    w[spec.weight_names[0]], w[spec.weight_names[1]], ladder, 1.0
                )


def convert(model: model_mod.ModelGraph, thresholds: ThresholdSet) -> SnnGraph:
    """Build the spiking graph and check its structural invariants."""
    snn = SnnGraph(model, thresholds)
    violations = check_snn_graph(snn)
    if violations:
        raise GraphValidationError("; ".join(violations))
    return snn


def check_snn_graph(snn: SnnGraph) -> list[str]:
    """Structural invariants of the converted graph; empty list when clean."""
    violations: list[str] = []
    layers = snn.layers
    for i, spec in enumerate(layers):
        if spec.kind == "spike_linear":
            if i == 0 or layers[i - 1].kind != "mt":
                violations.append(f"{spec.name}: linear input is not a multi-threshold neuron")
            if spec.ref not in snn.linears:
                violations.append(f"{spec.name}: no weight banks built")
        elif spec.kind == "matmul_ec":
            if i < 2 or layers[i - 1].kind != "mt" or layers[i - 2].kind != "mt":
                violations.append(f"{spec.name}: matrix product operands are not both spiking")
        elif spec.kind == "mt":
            if spec.site not in snn.ladders:
                violations.append(f"{spec.name}: no ladder for site {spec.site}")
        elif spec.kind == "ec":
            if spec.fn not in ("layernorm", "softmax", "gelu"):
                violations.append(f"{spec.name}: unsupported compensated function {spec.fn!r}")
        elif spec.kind == "cls_head":
            if i > 0 and layers[i - 1].kind == "mt":
                violations.append("classification head must read analog features")
    for name, nw in snn.linears.items():
        if nw.banks.shape[0] != 2 * snn.n:
            violations.append(f"{name}: bank count {nw.banks.shape[0]} != 2n")
    return violations


def save_snn(snn: SnnGraph, path) -> None:
    """SNN archive = weight archive + spiking metadata sidecar."""
    path = Path(path)
    model_mod.save_model(snn.model, path)
    meta = {
        "format_version": FORMAT_VERSION,
        "n": snn.n,
        "percent": snn.thresholds.percent,
        "normalization": "unit-divisor",
        "sites": {
            site: {
                "theta1": st.theta1,
                "theta2": st.theta2,
                "n": st.n,
                "provenance": st.provenance,
            }
            for site, st in snn.thresholds.sites.items()
        },
    }
    (path / SNN_META_NAME).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_snn(path) -> SnnGraph:
    path = Path(path)
    meta_path = path / SNN_META_NAME
    if not meta_path.is_file():
        raise FormatError(f"{path} is not an SNN archive (missing {SNN_META_NAME})")
    model = model_mod.load_model(path)
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"snn metadata is not valid JSON: {exc}") from None
    if meta.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported snn format_version {meta.get('format_version')!r}")
    try:
        sites = {
            site: SiteThreshold(
                float(entry["theta1"]), float(entry["theta2"]),
                int(entry["n"]), str(entry["provenance"]),
            )
            for site, entry in meta["sites"].items()
        }
        thresholds = ThresholdSet(
            sites=sites, n=int(meta["n"]), percent=float(meta["percent"]), warnings=[]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed snn metadata: {exc}") from None
    return convert(model, thresholds)
