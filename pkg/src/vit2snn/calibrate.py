"""Threshold calibration from oracle activation statistics.

For every conversion site (linear inputs, matrix-product operands) the
positive base threshold is the p-th percentile of the observed scalars and
the negative base threshold is the magnitude of the (1-p)-th percentile.
Sites dominated by a known output range get fixed overrides instead:
post-GELU linear inputs and post-softmax operands.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import model as model_mod
from . import tensor
from .errors import DomainError, FormatError

FORMAT_VERSION = 1

THRESHOLD_FLOOR = 1e-6          # clamp for degenerate/all-positive sites
DEFAULT_PERCENT = 99.0
DEFAULT_LEVELS = 8              # rungs per polarity

# fixed base thresholds for sites fed by a bounded nonlinearity
GELU_INPUT_OVERRIDE = (0.5, 0.08)
SOFTMAX_OUTPUT_OVERRIDE = (0.0125, 0.0125)

RESERVOIR_TRIGGER = 10_000_000  # pooled scalars per site before sampling
RESERVOIR_SIZE = 1 << 20


@dataclass(frozen=True)
class SiteThreshold:
    theta1: float
    theta2: float
    n: int
    provenance: str      # "percentile" | "override" | "floor"


@dataclass
class ThresholdSet:
    sites: dict[str, SiteThreshold]
    n: int
    percent: float
    warnings: list[str]

    def __getitem__(self, site: str) -> SiteThreshold:
        return self.sites[site]

    def __contains__(self, site: str) -> bool:
        return site in self.sites


class StatsCollector:
    """Pools per-site activation scalars, downsampling past a cap.

    Sampling only kicks in past RESERVOIR_TRIGGER scalars (far beyond desk
    scale); it is deterministic given the seed.
    """

    def __init__(self, seed: int = 0):
        self._chunks: dict[str, list[np.ndarray]] = {}
        self._counts: dict[str, int] = {}
        self._sampled: set[str] = set()
        self._rng = np.random.default_rng(seed)

    def add(self, site: str, values: np.ndarray) -> None:
        flat = np.asarray(values, dtype=np.float64).ravel()
        self._chunks.setdefault(site, []).append(flat)
        self._counts[site] = self._counts.get(site, 0) + flat.size
        if self._counts[site] > RESERVOIR_TRIGGER:
            pooled = np.concatenate(self._chunks[site])
            keep = self._rng.choice(pooled.size, size=RESERVOIR_SIZE, replace=False)
            self._chunks[site] = [pooled[np.sort(keep)]]
            self._counts[site] = RESERVOIR_SIZE
            self._sampled.add(site)

    def pooled(self) -> dict[str, np.ndarray]:
        return {site: np.concatenate(chunks) for site, chunks in self._chunks.items()}


def collect_stats(model: model_mod.ModelGraph, tokens: np.ndarray,
                  max_samples: int | None = None, seed: int = 0) -> dict[str, np.ndarray]:
    """Run the oracle over calibration samples and pool per-site scalars."""
    tokens = np.asarray(tokens)
    if tokens.ndim != 3 or tokens.shape[0] == 0:
        raise DomainError(f"calibration needs a non-empty (count, tokens, dim) batch, got {tokens.shape}")
    if max_samples is not None:
        tokens = tokens[:max_samples]
    collector = StatsCollector(seed=seed)
    _, taps = model_mod.ann_forward(model, tokens, want_taps=True)
    for site, value in taps.items():
        collector.add(site, value)
    return collector.pooled()


def default_site_overrides(cfg: model_mod.ModelConfig) -> dict[str, tuple[float, float]]:
    """Fixed thresholds for bounded-range sites (GELU outputs, softmax outputs)."""
    overrides: dict[str, tuple[float, float]] = {}
    for i in range(cfg.num_blocks):
        overrides[f"blk{i}.mlp2.in"] = GELU_INPUT_OVERRIDE
        overrides[f"blk{i}.attn.s"] = SOFTMAX_OUTPUT_OVERRIDE
    return overrides


def derive_thresholds(stats: dict[str, np.ndarray], percent: float = DEFAULT_PERCENT,
                      n: int = DEFAULT_LEVELS,
                      overrides: dict[str, tuple[float, float]] | None = None) -> ThresholdSet:
    """Percentile thresholds per site, with overrides and degenerate clamps.

    ``percent`` is the upper-tail percentile in (50, 100]; the negative base
    threshold comes from the (100 - percent) percentile. Sites whose values
    never go negative (or never positive) fall back to a tiny floor so the
    ladder stays well formed.
    """
    if not 50.0 < percent <= 100.0:
        raise DomainError(f"calibration percentile must lie in (50, 100], got {percent}")
    if n < 1:
        raise DomainError(f"threshold levels n must be >= 1, got {n}")
    overrides = overrides or {}
    sites: dict[str, SiteThreshold] = {}
    warnings: list[str] = []
    for site in sorted(stats):
        if site in overrides:
            t1, t2 = overrides[site]
            sites[site] = SiteThreshold(float(t1), float(t2), n, "override")
            continue
        values = stats[site]
        provenance = "percentile"
        t1 = tensor.percentile(values, percent / 100.0)
        t2 = -tensor.percentile(values, 1.0 - percent / 100.0)
        if t1 < THRESHOLD_FLOOR:
            warnings.append(f"{site}: positive tail {t1:.3e} below floor, clamped")
            t1 = THRESHOLD_FLOOR
            provenance = "floor"
        if t2 < THRESHOLD_FLOOR:
            warnings.append(f"{site}: negative tail {-t2:.3e} not below zero, clamped")
            t2 = THRESHOLD_FLOOR
            provenance = "floor"
        sites[site] = SiteThreshold(float(t1), float(t2), n, provenance)
    for site in sorted(overrides):
        if site not in sites:
            t1, t2 = overrides[site]
            sites[site] = SiteThreshold(float(t1), float(t2), n, "override")
    return ThresholdSet(sites=sites, n=n, percent=float(percent), warnings=warnings)


def save_thresholds(thresholds: ThresholdSet, path) -> None:
    path = Path(path)
    payload = {
        "format_version": FORMAT_VERSION,
        "percent": thresholds.percent,
        "n": thresholds.n,
        "warnings": list(thresholds.warnings),
        "sites": {
            site: {
                "theta1": st.theta1,
                "theta2": st.theta2,
                "n": st.n,
                "provenance": st.provenance,
            }
            for site, st in thresholds.sites.items()
        },
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_thresholds(path) -> ThresholdSet:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"threshold file {path} not found")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"threshold file is not valid JSON: {exc}") from None
    if payload.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported threshold format_version {payload.get('format_version')!r}")
    try:
        sites = {
            site: SiteThreshold(
                float(entry["theta1"]), float(entry["theta2"]),
                int(entry["n"]), str(entry["provenance"]),
            )
            for site, entry in payload["sites"].items()
        }
        return ThresholdSet(
            sites=sites,
            n=int(payload["n"]),
            percent=float(payload["percent"]),
            warnings=[str(wrn) for wrn in payload.get("warnings", [])],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed threshold file: {exc}") from None
