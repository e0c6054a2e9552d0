"""Discrete-time SNN simulator with exact operation accounting.

The simulator advances every module one step per tick on a whole sample
batch at once (samples are independent; batching is just vectorization).
State is O(model + batch): neuron membranes, compensator means and the
running class-token feature mean behind the analog head.

Two modes:

* ``mt`` - the converted network: multi-threshold neurons, spike-driven
  linears, compensated nonlinearities and spiking matrix products (f64).
* ``analog_ec_only`` - neurons replaced by identity passthroughs and
  linears/products run dense, keeping only the compensation arithmetic;
  with a static input the logits reproduce the oracle bit for bit. Runs in
  f32 or f64.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import energy as energy_mod
from . import tensor
from .backend import kernels
from .compensate import AnalogMatmulCompensator, MatmulCompensator, NonlinearCompensator
from .convert import SnnGraph
from .errors import DimensionError, DomainError, NumericError
from .model import LAYERNORM_EPS, ann_forward
from .neuron import MTNeuronState

RUN_MODES = ("mt", "analog_ec_only")
FORMAT_VERSION = 1


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    b, n, c = x.shape
    return np.ascontiguousarray(x.reshape(b, n, heads, c // heads).transpose(0, 2, 1, 3))


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, n, d = x.shape
    return np.ascontiguousarray(x.transpose(0, 2, 1, 3).reshape(b, n, h * d))


class SnnSimulation:
    """Stateful one-batch simulation; ``step`` advances every module once."""

    def __init__(self, snn: SnnGraph, batch: int, mode: str = "mt", dtype=np.float64):
        if mode not in RUN_MODES:
            raise DomainError(f"mode must be one of {RUN_MODES}, got {mode!r}")
        self.snn = snn
        self.mode = mode
        cfg = snn.config
        self.cfg = cfg
        self.batch = int(batch)
        if self.batch < 1:
            raise DomainError("batch must be >= 1")
        # the spiking path runs in f64; analog verification may run in f32
        self.dtype = np.dtype(np.float64 if mode == "mt" else dtype)
        self.w = {k: v.astype(self.dtype) for k, v in snn.model.weights.items()}
        self.scale = float(1.0 / np.sqrt(cfg.head_dim))
        self.t = 0
        self.ledger = energy_mod.OpsLedger()

        b, n, c = self.batch, cfg.num_tokens, cfg.dim
        h, d, ch = cfg.heads, cfg.head_dim, cfg.mlp_dim
        site_shapes = {"embed.in": (b, n - 1, cfg.input_dim)}
        for i in range(cfg.num_blocks):
            blk = f"blk{i}"
            site_shapes.update({
                f"{blk}.qkv.in": (b, n, c),
                f"{blk}.attn.q": (b, n, c),
                f"{blk}.attn.k": (b, n, c),
                f"{blk}.attn.v": (b, n, c),
                f"{blk}.attn.s": (b, h, n, n),
                f"{blk}.out.in": (b, n, c),
                f"{blk}.mlp1.in": (b, n, c),
                f"{blk}.mlp2.in": (b, n, ch),
            })
        self.site_shapes = site_shapes

        self.neurons: dict[str, MTNeuronState] = {}
        self.products: dict[str, MatmulCompensator | AnalogMatmulCompensator] = {}
        if mode == "mt":
            for site, shape in site_shapes.items():
                self.neurons[site] = MTNeuronState(snn.ladders[site], shape)
            for i in range(cfg.num_blocks):
                blk = f"blk{i}"
                self.products[f"{blk}.attn.qk"] = MatmulCompensator(
                    snn.ladders[f"{blk}.attn.q"], snn.ladders[f"{blk}.attn.k"],
                    slices=b * h, n_dim=n, p_dim=d, m_dim=n, name=f"{blk}.attn.qk",
                )
                self.products[f"{blk}.attn.sv"] = MatmulCompensator(
                    snn.ladders[f"{blk}.attn.s"], snn.ladders[f"{blk}.attn.v"],
                    slices=b * h, n_dim=n, p_dim=n, m_dim=d, name=f"{blk}.attn.sv",
                )
        else:
            for i in range(cfg.num_blocks):
                blk = f"blk{i}"
                self.products[f"{blk}.attn.qk"] = AnalogMatmulCompensator(f"{blk}.attn.qk")
                self.products[f"{blk}.attn.sv"] = AnalogMatmulCompensator(f"{blk}.attn.sv")
            self._analog_totals = {name: (0, 0) for name in self.products}

        self.compensators: dict[str, NonlinearCompensator] = {}
        for i in range(cfg.num_blocks):
            blk = f"blk{i}"
            for ln in ("ln1", "ln2"):
                g, beta = self.w[f"{blk}.{ln}.g"], self.w[f"{blk}.{ln}.b"]
                self.compensators[f"{blk}.{ln}"] = NonlinearCompensator(
                    lambda x, g=g, beta=beta: tensor.layernorm(x, g, beta, LAYERNORM_EPS),
                    name=f"{blk}.{ln}",
                )
            self.compensators[f"{blk}.softmax"] = NonlinearCompensator(
                lambda x: tensor.softmax_rows(x.reshape(-1, x.shape[-1]), self.scale).reshape(x.shape),
                name=f"{blk}.softmax",
            )
            self.compensators[f"{blk}.gelu"] = NonlinearCompensator(tensor.gelu, name=f"{blk}.gelu")

        self.head_mean = np.zeros((self.batch, c), dtype=self.dtype)

    # -- per-module helpers ------------------------------------------------

    def _mt(self, site: str, value: np.ndarray) -> np.ndarray:
        if self.mode != "mt":
            return value
        state = self.neurons[site]
        spikes = state.step(value)
        # one membrane add per neuron plus one reset subtraction per fire
        self.ledger.add(f"{site}.mt", acs=state.neurons + state.last_fired)
        return spikes

    def _linear(self, name: str, inp: np.ndarray) -> np.ndarray:
        if self.mode == "mt":
            nw = self.snn.linears[name]
            rows = inp.reshape(-1, inp.shape[-1])
            fan_out = nw.banks.shape[2]
            out = np.empty((rows.shape[0], fan_out), dtype=np.float64)
            out[:] = nw.bias
            acs = kernels.spike_linear(np.ascontiguousarray(rows, dtype=np.int32), nw.banks, out)
            self.ledger.add(f"{name}.spk", acs=int(acs) + out.size)
            return out.reshape(inp.shape[:-1] + (fan_out,))
        weight = self.w[f"{name}.w"]
        bias = self.w[f"{name}.b"]
        out = inp @ weight + bias
        rows = int(np.prod(inp.shape[:-1]))
        self.ledger.add(f"{name}.lin", macs=rows * weight.shape[0] * weight.shape[1], acs=out.size)
        return out

    def _ec(self, name: str, value: np.ndarray) -> np.ndarray:
        comp = self.compensators[name]
        out = comp.step(value)
        size = value.size
        if comp.t == 1:
            self.ledger.add(f"{name}.ec", macs=size)
        else:
            self.ledger.add(f"{name}.ec", macs=3 * size, acs=2 * size)
        if not np.all(np.isfinite(out)):
            raise NumericError(f"{name}: compensated output is not finite at step {comp.t}")
        return out

    def _product(self, name: str, a, b) -> np.ndarray:
        mod = self.products[name]
        if self.mode == "mt":
            out, ops = mod.step(a, b)
            self.ledger.add(
                name,
                acs=ops.k_adds + ops.state_adds + ops.readout_acs,
                macs=ops.readout_macs,
            )
            return out
        out = mod.step(a, b)
        acs, macs = mod.total_acs, mod.total_macs
        prev = self._analog_totals[name]
        self.ledger.add(name, acs=acs - prev[0], macs=macs - prev[1])
        self._analog_totals[name] = (acs, macs)
        return out

    # -- one timestep --------------------------------------------------------

    def step(self, tokens: np.ndarray) -> np.ndarray:
        """Advance every module by one tick; returns this step's logits."""
        cfg = self.cfg
        b, n, c = self.batch, cfg.num_tokens, cfg.dim
        h = cfg.heads
        if tokens.shape != (b, n - 1, cfg.input_dim):
            raise DimensionError(f"tokens shape {tokens.shape} != {(b, n - 1, cfg.input_dim)}")
        self.t += 1

        spk = self._mt("embed.in", tokens)
        cur = self._linear("embed", spk)
        x = np.empty((b, n, c), dtype=cur.dtype)
        x[:, 0, :] = self.w["cls"]
        x[:, 1:, :] = cur
        x += self.w["pos"]
        self.ledger.add("pos", acs=x.size)

        for i in range(cfg.num_blocks):
            blk = f"blk{i}"
            o1 = self._ec(f"{blk}.ln1", x)
            spk = self._mt(f"{blk}.qkv.in", o1)
            qkv = self._linear(f"{blk}.qkv", spk)
            q, k, v = (np.ascontiguousarray(part) for part in np.split(qkv, 3, axis=-1))
            sq = self._mt(f"{blk}.attn.q", q)
            sk = self._mt(f"{blk}.attn.k", k)
            sv = self._mt(f"{blk}.attn.v", v)
            qh = _split_heads(sq, h).reshape(b * h, n, cfg.head_dim)
            kh = np.ascontiguousarray(
                _split_heads(sk, h).transpose(0, 1, 3, 2)
            ).reshape(b * h, cfg.head_dim, n)
            scores = self._product(f"{blk}.attn.qk", qh, kh).reshape(b, h, n, n)
            attn = self._ec(f"{blk}.softmax", scores)
            sa = self._mt(f"{blk}.attn.s", attn)
            vh = _split_heads(sv, h).reshape(b * h, n, cfg.head_dim)
            ctx = self._product(f"{blk}.attn.sv", sa.reshape(b * h, n, n), vh)
            ctx = _merge_heads(ctx.reshape(b, h, n, cfg.head_dim))
            so = self._mt(f"{blk}.out.in", ctx)
            x = x + self._linear(f"{blk}.out", so)
            self.ledger.add(f"{blk}.res1", acs=x.size)
            o2 = self._ec(f"{blk}.ln2", x)
            s1 = self._mt(f"{blk}.mlp1.in", o2)
            m1 = self._linear(f"{blk}.mlp1", s1)
            og = self._ec(f"{blk}.gelu", m1)
            s2 = self._mt(f"{blk}.mlp2.in", og)
            x = x + self._linear(f"{blk}.mlp2", s2)
            self.ledger.add(f"{blk}.res2", acs=x.size)
            if not np.all(np.isfinite(x)):
                raise NumericError(f"{blk}: trunk is not finite at step {self.t}")

        feat = x[:, 0, :]
        if self.t == 1:
            self.head_mean = feat.copy()
        else:
            self.head_mean += (feat - self.head_mean) / self.t
        logits = self.head_mean @ self.w["head.w"] + self.w["head.b"]
        self.ledger.add(
            "head",
            macs=b * c * cfg.num_classes + b * c,
            acs=b * c + b * cfg.num_classes,
        )
        return logits


@dataclass
class RunResult:
    """Everything one simulation produced, step-resolved where it matters."""

    mode: str
    timesteps: int
    n: int
    batch: int
    logits: np.ndarray                      # (T, batch, classes)
    spike_counts: dict[str, np.ndarray]     # site -> (2n+1,) totals over run
    neuron_steps: dict[str, int]
    saturation: dict[str, int]
    ledger: energy_mod.OpsLedger
    step_totals: list[tuple[int, int]]      # cumulative (acs, macs) after each step
    product_audit: dict[str, dict] = field(default_factory=dict)

    @property
    def predictions(self) -> np.ndarray:
        return np.argmax(self.logits, axis=-1)

    def agreement(self, ref_logits: np.ndarray) -> np.ndarray:
        """Fraction of samples whose top-1 matches the oracle, per step."""
        ref = np.argmax(ref_logits, axis=-1)
        return (self.predictions == ref[None, :]).mean(axis=1)

    def mean_logit_error(self, ref_logits: np.ndarray) -> np.ndarray:
        """Mean absolute logit gap to the oracle, per step."""
        return np.abs(self.logits - ref_logits[None]).mean(axis=(1, 2))


def snn_run(snn: SnnGraph, tokens: np.ndarray, timesteps: int,
            mode: str = "mt", dtype=np.float64) -> RunResult:
    """Simulate the batch for ``timesteps`` ticks with a static input."""
    if timesteps < 1:
        raise DomainError(f"timesteps must be >= 1, got {timesteps}")
    tokens = np.asarray(tokens)
    if tokens.ndim == 2:
        tokens = tokens[None]
    tensor.check_finite(tokens, "input tokens")
    sim = SnnSimulation(snn, batch=tokens.shape[0], mode=mode, dtype=dtype)
    tokens = tokens.astype(sim.dtype)
    logits = np.zeros((timesteps, tokens.shape[0], snn.config.num_classes), dtype=sim.dtype)
    step_totals: list[tuple[int, int]] = []
    for t in range(timesteps):
        logits[t] = sim.step(tokens)
        step_totals.append((sim.ledger.total_acs, sim.ledger.total_macs))

    spike_counts = {site: ns.spike_counts.copy() for site, ns in sim.neurons.items()}
    neuron_steps = {site: ns.neurons * ns.steps for site, ns in sim.neurons.items()}
    saturation = {site: ns.saturation_events for site, ns in sim.neurons.items()}
    audit = {}
    for name, mod in sim.products.items():
        if isinstance(mod, MatmulCompensator):
            audit[name] = {
                "bound_violations": mod.bound_violations,
                "k_adds": mod.total_k_adds,
                "k_muls": mod.total_k_muls,
                "bound_adds": mod.total_bound_adds,
                "bound_muls": mod.total_bound_muls,
            }
    return RunResult(
        mode=mode,
        timesteps=timesteps,
        n=snn.n,
        batch=tokens.shape[0],
        logits=logits,
        spike_counts=spike_counts,
        neuron_steps=neuron_steps,
        saturation=saturation,
        ledger=sim.ledger,
        step_totals=step_totals,
        product_audit=audit,
    )


def spike_statistics(result: RunResult) -> dict:
    """Firing-rate table per site plus the aggregate per-rung histogram."""
    sites = {}
    agg = None
    agg_steps = 0
    for site, counts in sorted(result.spike_counts.items()):
        steps = result.neuron_steps[site]
        sites[site] = {
            "neuron_steps": steps,
            "fired": int(counts[1:].sum()),
            "rate": float(counts[1:].sum() / steps) if steps else 0.0,
            "per_rung": [int(v) for v in counts[1:]],
        }
        if agg is None:
            agg = counts[1:].astype(np.int64).copy()
        else:
            agg += counts[1:]
        agg_steps += steps
    if agg is None:
        agg = np.zeros(2 * result.n, dtype=np.int64)
    return {
        "sites": sites,
        "aggregate": {
            "per_rung": [int(v) for v in agg],
            "neuron_steps": agg_steps,
            "rate": float(agg.sum() / agg_steps) if agg_steps else 0.0,
        },
    }


def naive_nonlinear_demo(fn, xs) -> dict:
    """Average-of-F versus compensated versus F-of-average on one stream."""
    xs = [np.asarray(x, dtype=np.float64) for x in xs]
    if not xs:
        raise DomainError("demo needs at least one step")
    naive = np.mean([fn(x) for x in xs], axis=0)
    comp = NonlinearCompensator(fn, name="demo")
    outs = [comp.step(x) for x in xs]
    compensated = np.mean(outs, axis=0)
    reference = fn(np.mean(xs, axis=0))
    return {"naive": naive, "compensated": compensated, "reference": reference}


# -- reports ----------------------------------------------------------------


def run_report(snn: SnnGraph, result: RunResult, ref_logits: np.ndarray) -> dict:
    """Assemble the JSON-ready run report."""
    ann_macs = energy_mod.model_ann_macs(snn.config)["total"] * result.batch
    agreement = result.agreement(ref_logits)
    error = result.mean_logit_error(ref_logits)
    return {
        "format_version": FORMAT_VERSION,
        "mode": result.mode,
        "timesteps": result.timesteps,
        "n": result.n,
        "batch": result.batch,
        "per_step": [
            {
                "t": t + 1,
                "top1_agreement": float(agreement[t]),
                "mean_logit_error": float(error[t]),
                "cumulative_acs": result.step_totals[t][0],
                "cumulative_macs": result.step_totals[t][1],
            }
            for t in range(result.timesteps)
        ],
        "spikes": spike_statistics(result),
        "saturation": {site: int(v) for site, v in sorted(result.saturation.items())},
        "ops": result.ledger.as_dict(),
        "product_audit": result.product_audit,
        "energy": energy_summary_for(result, ann_macs),
    }


def energy_summary_for(result: RunResult, ann_macs: int) -> dict:
    summary = energy_mod.energy_summary(result.ledger, ann_macs)
    summary["per_step_ratio_ac_only"] = [
        energy_mod.energy_ratio(acs, macs, ann_macs, convention="ac_only")
        for acs, macs in result.step_totals
    ]
    summary["per_step_ratio_strict"] = [
        energy_mod.energy_ratio(acs, macs, ann_macs, convention="strict")
        for acs, macs in result.step_totals
    ]
    return summary


def write_run_report(path, snn: SnnGraph, result: RunResult, ref_logits: np.ndarray) -> dict:
    report = run_report(snn, result, ref_logits)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def write_sweep_csv(path, report: dict) -> None:
    """T-sweep table: one column per timestep, metric rows."""
    steps = report["per_step"]
    energy = report["energy"]
    header = ["metric"] + [f"T={row['t']}" for row in steps]
    rows = [
        ["top1_agreement"] + [f"{row['top1_agreement']:.6f}" for row in steps],
        ["mean_logit_error"] + [f"{row['mean_logit_error']:.9g}" for row in steps],
        ["energy_ratio_ac_only"] + [f"{v:.9g}" for v in energy["per_step_ratio_ac_only"]],
        ["energy_ratio_strict"] + [f"{v:.9g}" for v in energy["per_step_ratio_strict"]],
    ]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def oracle_logits(snn: SnnGraph, tokens: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Reference logits from the bundled oracle at the requested precision."""
    model = snn.model if np.dtype(dtype) == np.float32 else snn.model.astype(np.float64)
    logits, _ = ann_forward(model, np.asarray(tokens).astype(dtype))
    return logits
