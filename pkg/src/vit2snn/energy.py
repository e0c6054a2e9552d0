"""Operation ledger, analytic complexity and energy-ratio accounting.

MAC/AC totals follow the usual 45nm figures (4.6 pJ per multiply-accumulate,
0.9 pJ per accumulate). Two ratios are reported: ``ac_only`` zeroes the SNN's
residual multiplies (the convention of reporting a purely accumulate-driven
network) and ``strict`` charges every operation the runtime actually
performed, including 1/T readout scalings and the analog head.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DomainError

E_MAC_PJ = 4.6
E_AC_PJ = 0.9


class OpsLedger:
    """Per-module accumulate/multiply counters."""

    def __init__(self):
        self._rows: dict[str, list[int]] = {}

    def add(self, module: str, acs: int = 0, macs: int = 0) -> None:
        row = self._rows.setdefault(module, [0, 0])
        row[0] += int(acs)
        row[1] += int(macs)

    @property
    def total_acs(self) -> int:
        return sum(r[0] for r in self._rows.values())

    @property
    def total_macs(self) -> int:
        return sum(r[1] for r in self._rows.values())

    def rows(self) -> dict[str, tuple[int, int]]:
        return {k: (v[0], v[1]) for k, v in sorted(self._rows.items())}

    def as_dict(self) -> dict:
        return {k: {"acs": v[0], "macs": v[1]} for k, v in sorted(self._rows.items())}


def ann_complexity(num_tokens: int, dim: int, heads: int, mlp_dim: int) -> list[tuple[str, int]]:
    """Per-block MAC counts of the oracle, one row per sub-layer.

    ``num_tokens`` includes the class token; rows appear in execution order
    and cover one encoder block.
    """
    for label, val in (("num_tokens", num_tokens), ("dim", dim), ("heads", heads), ("mlp_dim", mlp_dim)):
        if val < 1:
            raise DomainError(f"{label} must be >= 1")
    if dim % heads:
        raise DomainError(f"dim {dim} not divisible by heads {heads}")
    n, c, nh, ch = num_tokens, dim, heads, mlp_dim
    d = c // nh
    return [
        ("layernorm1", n * c),
        ("linear_qkv", n * c * 3 * c),
        ("matmul_qk", nh * n * d * d),
        ("softmax", nh * n * n),
        ("matmul_sv", nh * n * n * d),
        ("linear_out", n * c * c),
        ("layernorm2", n * c),
        ("mlp_linear1", n * c * ch),
        ("gelu", n * ch),
        ("mlp_linear2", n * ch * c),
    ]


def model_ann_macs(cfg) -> dict[str, int]:
    """Whole-model oracle MACs: the per-block table plus embedding and head."""
    rows = ann_complexity(cfg.num_tokens, cfg.dim, cfg.heads, cfg.mlp_dim)
    per_block = sum(v for _, v in rows)
    embed = (cfg.num_tokens - 1) * cfg.input_dim * cfg.dim
    head = cfg.dim * cfg.num_classes
    return {
        "per_block": per_block,
        "blocks": cfg.num_blocks * per_block,
        "embed": embed,
        "head": head,
        "total": cfg.num_blocks * per_block + embed + head,
    }


def matmul_ec_bounds(eta1: float, eta2: float, n_dim: int, p_dim: int, m_dim: int) -> tuple[float, float]:
    """Worst-case per-step (additions, multiplications) of one spiking product.

    ``eta1``/``eta2`` are operand firing rates in [0, 1] for an (n x p) by
    (p x m) product. The addition bound covers the three K(T) contributions
    plus the cumulative merge; the multiplication bound is what a
    value-domain implementation would need and is an upper bound for ours,
    which multiplies nothing on the K path.
    """
    for label, eta in (("eta1", eta1), ("eta2", eta2)):
        if not 0.0 <= eta <= 1.0:
            raise DomainError(f"{label} must lie in [0, 1], got {eta}")
    for label, val in (("n_dim", n_dim), ("p_dim", p_dim), ("m_dim", m_dim)):
        if val < 1:
            raise DomainError(f"{label} must be >= 1")
    npm = n_dim * p_dim * m_dim
    nm = n_dim * m_dim
    acs = eta1 * eta2 * npm + eta1 * npm + eta2 * npm + 3 * nm
    macs = min(eta1, eta2) * nm + eta1 * nm + eta2 * nm
    return acs, macs


@dataclass(frozen=True)
class EnergyModel:
    e_mac_pj: float = E_MAC_PJ
    e_ac_pj: float = E_AC_PJ


def energy_ratio(snn_acs: int, snn_macs: int, ann_macs: int,
                 model: EnergyModel = EnergyModel(), convention: str = "strict") -> float:
    """SNN/ANN energy ratio under the chosen MAC convention."""
    if ann_macs <= 0:
        raise DomainError("ANN MAC count must be positive")
    if convention == "ac_only":
        snn_macs = 0
    elif convention != "strict":
        raise DomainError(f"unknown energy convention {convention!r}")
    snn_pj = snn_macs * model.e_mac_pj + snn_acs * model.e_ac_pj
    ann_pj = ann_macs * model.e_mac_pj
    return snn_pj / ann_pj


def energy_summary(ledger: OpsLedger, ann_macs: int, model: EnergyModel = EnergyModel()) -> dict:
    """Both conventions plus the raw totals, ready for a report."""
    acs, macs = ledger.total_acs, ledger.total_macs
    return {
        "snn_acs": acs,
        "snn_macs": macs,
        "ann_macs": ann_macs,
        "e_mac_pj": model.e_mac_pj,
        "e_ac_pj": model.e_ac_pj,
        "ratio_ac_only": energy_ratio(acs, macs, ann_macs, model, "ac_only"),
        "ratio_strict": energy_ratio(acs, macs, ann_macs, model, "strict"),
    }
