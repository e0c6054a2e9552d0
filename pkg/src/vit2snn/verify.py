"""Self-contained verification suites behind the ``verify`` CLI command.

Each suite stresses one correctness claim against an independently coded
reference: the compensation identities, the spiking-product invariants and
operation bounds, neuron charge conservation and the single-threshold
reduction, normalization invariance, the analytic complexity table, the
uncompensated-nonlinearity gap and the analog end-to-end identity.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import energy as energy_mod
from . import model as model_mod
from . import runtime as runtime_mod
from . import tensor
from .backend import kernels
from .calibrate import derive_thresholds, collect_stats, default_site_overrides
from .compensate import MatmulCompensator, NonlinearCompensator
from .convert import convert, normalize_weights
from .neuron import MTNeuronState, build_ladder, mth


@dataclass
class SuiteResult:
    name: str
    passed: bool
    checks: int
    seconds: float
    failures: list[str] = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.failures[0]})" if self.failures else ""
        return f"{status} {self.name}: {self.checks} checks in {self.seconds:.2f}s{extra}"


def _random_fn(rng: np.random.Generator, width: int):
    """Pick one compensated nonlinearity with random parameters."""
    kind = rng.choice(["gelu", "softmax", "layernorm"])
    if kind == "gelu":
        return lambda x: tensor.gelu(x)
    if kind == "softmax":
        scale = float(rng.uniform(0.2, 2.0))
        return lambda x: tensor.softmax_rows(x, scale=scale)
    gamma = rng.normal(1.0, 0.2, size=width)
    beta = rng.normal(0.0, 0.2, size=width)
    return lambda x: tensor.layernorm(x, gamma, beta, 1e-5)


def suite_theorem1(cases: int = 1000, seed: int = 0) -> SuiteResult:
    """Compensated output stream averages to F(average input), every prefix.

    Oracle side keeps raw input sums and re-evaluates
    ``T * F(S_T / T) - (T-1) * F(S_{T-1} / (T-1))`` from scratch each step.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    failures: list[str] = []
    checks = 0
    for case in range(cases):
        rows = int(rng.integers(1, 5))
        width = int(rng.integers(2, 65))
        steps = int(rng.integers(1, 17))
        fn = _random_fn(rng, width)
        comp = NonlinearCompensator(fn)
        raw_sum = np.zeros((rows, width))
        prev_sum = None
        out_sum = np.zeros((rows, width))
        for t in range(1, steps + 1):
            x = rng.normal(0.0, 1.0, size=(rows, width))
            out = comp.step(x)
            out_sum += out
            raw_sum += x
            expected = t * fn(raw_sum / t)
            if prev_sum is not None:
                expected = expected - (t - 1) * fn(prev_sum / (t - 1))
            gap = float(np.max(np.abs(out - expected)))
            identity_gap = float(np.max(np.abs(out_sum / t - fn(raw_sum / t))))
            checks += 2
            if gap > 1e-12:
                failures.append(f"case {case} t={t}: step form differs by {gap:.3e}")
            if identity_gap > 1e-9:
                failures.append(f"case {case} t={t}: mean identity off by {identity_gap:.3e}")
            prev_sum = raw_sum.copy()
        if len(failures) > 8:
            break
    return SuiteResult("theorem1", not failures, checks, time.perf_counter() - t0, failures)


def _random_spikes(rng: np.random.Generator, shape: tuple[int, ...], levels: int, rate: float) -> np.ndarray:
    fire = rng.random(shape) < rate
    idx = rng.integers(1, 2 * levels + 1, size=shape)
    return np.where(fire, idx, 0).astype(np.int32)


def suite_theorem2(cases: int = 500, seed: int = 0) -> SuiteResult:
    """Spiking-product invariants and per-step operation bounds.

    Checks, at every step of every case: the cumulative product equals the
    product of cumulative operand sums (1e-9), outputs sum to the scaled
    cumulative product (1e-9), K matches the dense three-term expansion
    (1e-12), and measured add/multiply counts stay within the rate bounds.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    failures: list[str] = []
    checks = 0
    for case in range(cases):
        n_dim = int(rng.integers(1, 17))
        p_dim = int(rng.integers(1, 17))
        m_dim = int(rng.integers(1, 17))
        levels_a = int(rng.integers(1, 4))
        levels_b = int(rng.integers(1, 4))
        lad_a = build_ladder(float(rng.uniform(0.25, 1.0)), float(rng.uniform(0.25, 1.0)), levels_a)
        lad_b = build_ladder(float(rng.uniform(0.25, 1.0)), float(rng.uniform(0.25, 1.0)), levels_b)
        mod = MatmulCompensator(lad_a, lad_b, slices=1, n_dim=n_dim, p_dim=p_dim, m_dim=m_dim)
        rate_a = float(rng.uniform(0.1, 0.9))
        rate_b = float(rng.uniform(0.1, 0.9))
        out_sum = np.zeros((1, n_dim, m_dim))
        prev_cum_a = np.zeros((1, n_dim, p_dim))
        prev_cum_b = np.zeros((1, p_dim, m_dim))
        for t in range(1, 9):
            spk_a = _random_spikes(rng, (1, n_dim, p_dim), levels_a, rate_a)
            spk_b = _random_spikes(rng, (1, p_dim, m_dim), levels_b, rate_b)
            a_val = lad_a.postsynaptic(spk_a)
            b_val = lad_b.postsynaptic(spk_b)
            out, ops = mod.step(spk_a, spk_b)
            out_sum += out

            k_direct = a_val @ b_val + a_val @ prev_cum_b + prev_cum_a @ b_val
            k_gap = float(np.max(np.abs(mod.last_k - k_direct)))
            prev_cum_a += a_val
            prev_cum_b += b_val
            sk_gap = float(np.max(np.abs(mod.cum_prod - prev_cum_a @ prev_cum_b)))
            o_gap = float(np.max(np.abs(out_sum - mod.cum_prod / t)))
            checks += 4
            if k_gap > 1e-12:
                failures.append(f"case {case} t={t}: K three-term gap {k_gap:.3e}")
            if sk_gap > 1e-9:
                failures.append(f"case {case} t={t}: S_K factorization gap {sk_gap:.3e}")
            if o_gap > 1e-9:
                failures.append(f"case {case} t={t}: output telescoping gap {o_gap:.3e}")
            if ops.k_adds > ops.bound_adds or ops.k_muls > ops.bound_muls:
                failures.append(
                    f"case {case} t={t}: counts ({ops.k_adds}, {ops.k_muls}) "
                    f"exceed bounds ({ops.bound_adds}, {ops.bound_muls})"
                )
        if mod.bound_violations:
            failures.append(f"case {case}: {mod.bound_violations} bound violations recorded")
        if len(failures) > 8:
            break
    return SuiteResult("theorem2", not failures, checks, time.perf_counter() - t0, failures)


def soft_reset_if_run(currents: np.ndarray, theta: float, v_init: float) -> np.ndarray:
    """Plain single-threshold integrate-and-fire with subtractive reset.

    Kept deliberately scalar and independent of the production kernels: the
    membrane charges, emits theta whenever it reaches theta, and keeps the
    remainder.
    """
    v = v_init
    spikes = np.zeros(len(currents))
    for i, cur in enumerate(currents):
        m = v + cur
        s = 1.0 if m >= theta else 0.0
        v = m - theta * s
        spikes[i] = s
    return spikes


def suite_neuron(cases: int = 10_000, seed: int = 0) -> SuiteResult:
    """Charge conservation, one-spike encoding against the scalar selector,
    and the n=1 reduction to the classic integrate-and-fire neuron."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    failures: list[str] = []
    checks = 0
    for case in range(cases):
        levels = int(rng.integers(1, 9))
        theta1 = float(rng.uniform(0.2, 1.5))
        theta2 = float(rng.uniform(0.2, 1.5))
        ladder = build_ladder(theta1, theta2, levels)
        steps = int(rng.integers(1, 13))
        currents = rng.normal(0.0, 2.0 * theta1, size=(steps, 1))
        state = MTNeuronState(ladder, (1,))
        total_in = 0.0
        total_out = 0.0
        for t in range(steps):
            v_before = float(state.v[0])
            m = v_before + float(currents[t, 0])
            expected_idx = mth(m, ladder)
            spk = state.step(currents[t])
            idx = int(spk[0])
            checks += 2
            if idx != expected_idx:
                failures.append(f"case {case} t={t}: kernel fired {idx}, selector says {expected_idx}")
            emitted = float(ladder.values_ext[idx])
            total_in += float(currents[t, 0])
            total_out += emitted
            residual = abs((total_in - total_out) - float(state.v[0]))
            if residual > 1e-12:
                failures.append(f"case {case} t={t}: charge residual {residual:.3e}")
        if len(failures) > 8:
            break

    # n=1 reduction: dyadic currents make both simulations exact, so the
    # equivalence (shifted membrane, half-threshold start) must be bit-true.
    for case in range(min(cases, 2000)):
        theta = float(rng.choice([0.5, 1.0, 2.0]))
        steps = int(rng.integers(1, 17))
        currents = rng.integers(0, 129, size=steps) / 64.0 * theta
        ladder = build_ladder(theta, theta, 1)
        state = MTNeuronState(ladder, (1,))
        mt_spikes = np.array([float(state.step(np.array([c]))[0] == 1) for c in currents])
        if_spikes = soft_reset_if_run(currents, theta, v_init=theta / 2.0)
        checks += 1
        if not np.array_equal(mt_spikes, if_spikes):
            failures.append(f"reduction case {case}: spike trains differ")
            if len(failures) > 8:
                break
    return SuiteResult("neuron", not failures, checks, time.perf_counter() - t0, failures)


def suite_normalization(cases: int = 100, seed: int = 0) -> SuiteResult:
    """Folding the upstream ladder into weight banks must not change spikes.

    Each case runs the same spike stream through (a) value-domain currents
    into a neuron with calibrated thresholds and (b) bank-accumulated
    currents into a neuron with thresholds (1, theta2/theta1). Inputs are
    resampled whenever a membrane lands within 1e-6 of a firing boundary, so
    bit-identical spike trains are a fair demand.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    failures: list[str] = []
    checks = 0
    produced = 0
    attempts = 0
    while produced < cases and attempts < cases * 50:
        attempts += 1
        fan_in = int(rng.integers(2, 9))
        fan_out = int(rng.integers(2, 9))
        n_prev = int(rng.integers(1, 4))
        n_this = int(rng.integers(1, 4))
        steps = 6
        lad_prev = build_ladder(float(rng.uniform(0.5, 1.5)), float(rng.uniform(0.5, 1.5)), n_prev)
        theta1 = float(rng.uniform(0.3, 1.2))
        theta2 = float(rng.uniform(0.3, 1.2))
        weight = rng.normal(0.0, 1.0, size=(fan_in, fan_out)) / np.sqrt(fan_in)
        bias = rng.normal(0.0, 0.1, size=fan_out)
        spk_in = rng.integers(0, 2 * n_prev + 1, size=(steps, fan_in)).astype(np.int32)

        # raw run, with boundary-margin screening
        lad_this = build_ladder(theta1, theta2, n_this)
        raw_state = MTNeuronState(lad_this, (fan_out,))
        raw_spikes = np.zeros((steps, fan_out), dtype=np.int32)
        ok = True
        for t in range(steps):
            current = lad_prev.postsynaptic(spk_in[t]) @ weight + bias
            m = raw_state.v + current
            margin = np.minimum(
                np.abs(m[:, None] - lad_this.pos_bounds[None, :]).min(axis=1),
                np.abs(m[:, None] + lad_this.neg_bounds[None, :]).min(axis=1),
            ).min()
            if margin < 1e-6:
                ok = False
                break
            raw_spikes[t] = raw_state.step(current)
        if not ok:
            continue
        produced += 1

        norm = normalize_weights(weight, bias, lad_prev, theta1)
        lad_norm = build_ladder(1.0, theta2 / theta1, n_this)
        norm_state = MTNeuronState(lad_norm, (fan_out,))
        for t in range(steps):
            out = np.empty((1, fan_out))
            out[:] = norm.bias
            acs = kernels.spike_linear(np.ascontiguousarray(spk_in[t][None, :]), norm.banks, out)
            dense = lad_prev.postsynaptic(spk_in[t]) @ (weight / theta1) + norm.bias
            dense_gap = float(np.max(np.abs(out[0] - dense)))
            norm_spikes = norm_state.step(out[0])
            checks += 3
            if dense_gap > 1e-12:
                failures.append(f"case {produced} t={t}: bank current off dense oracle by {dense_gap:.3e}")
            if not np.array_equal(norm_spikes, raw_spikes[t]):
                failures.append(f"case {produced} t={t}: spike trains diverged")
            # the spike path is pure accumulation: the counter must cover
            # every touched output exactly, with no multiply column at all
            if int(acs) != int((spk_in[t] > 0).sum()) * fan_out:
                failures.append(f"case {produced} t={t}: accumulation count off")
        if len(failures) > 8:
            break
    if produced < cases:
        failures.append(f"only generated {produced}/{cases} boundary-safe cases")
    return SuiteResult("normalization", not failures, checks, time.perf_counter() - t0, failures)


# printed per-sublayer MAC counts (millions) for the 577x1408 reference block
COMPLEXITY_REFERENCE_M = [
    ("layernorm1", 0.81),
    ("linear_qkv", 3431.65),
    ("matmul_qk", 71.49),
    ("softmax", 5.33),
    ("matmul_sv", 468.76),
    ("linear_out", 1143.88),
    ("layernorm2", 0.81),
    ("mlp_linear1", 4991.48),
    ("gelu", 3.54),
    ("mlp_linear2", 4991.48),
]


def suite_complexity(cases: int = 1, seed: int = 0) -> SuiteResult:
    """Analytic per-sublayer MACs reproduce the reference column within 0.01M."""
    t0 = time.perf_counter()
    failures: list[str] = []
    rows = energy_mod.ann_complexity(num_tokens=577, dim=1408, heads=16, mlp_dim=6144)
    checks = 0
    for (name, macs), (ref_name, ref_m) in zip(rows, COMPLEXITY_REFERENCE_M):
        checks += 1
        rounded = round(macs / 1e6, 2)
        if name != ref_name or abs(rounded - ref_m) > 0.01 + 1e-9:
            failures.append(f"{name}: {rounded}M vs reference {ref_m}M")
    return SuiteResult("complexity", not failures, checks, time.perf_counter() - t0, failures)


def suite_naive(cases: int = 1, seed: int = 0) -> SuiteResult:
    """Plainly averaging a nonlinearity over steps must NOT match the oracle,
    while the compensated stream does."""
    t0 = time.perf_counter()
    failures: list[str] = []
    xs = [np.array([2.0]), np.array([-2.0])]
    demo = runtime_mod.naive_nonlinear_demo(tensor.gelu, xs)
    naive_gap = float(np.abs(demo["naive"] - demo["reference"])[0])
    comp_gap = float(np.abs(demo["compensated"] - demo["reference"])[0])
    if naive_gap <= 0.1:
        failures.append(f"naive gap {naive_gap:.3e} unexpectedly small")
    if comp_gap > 1e-9:
        failures.append(f"compensated gap {comp_gap:.3e} too large")
    return SuiteResult("naive", not failures, 2, time.perf_counter() - t0, failures)


def _tiny_setup(seed: int = 0, blocks: int = 1, samples: int = 8):
    cfg = model_mod.ModelConfig(
        num_blocks=blocks, dim=16, heads=2, mlp_dim=32,
        num_tokens=5, num_classes=4, input_dim=12,
    )
    model = model_mod.build_toy_model(cfg, seed=seed)
    tokens, labels = model_mod.build_toy_dataset(cfg, count=samples, seed=seed + 1)
    stats = collect_stats(model, tokens)
    thresholds = derive_thresholds(stats, overrides=default_site_overrides(cfg))
    return convert(model, thresholds), tokens, labels


def suite_analog(cases: int = 1, seed: int = 0) -> SuiteResult:
    """analog_ec_only logits must match the oracle at every step (f32, 1e-6)."""
    t0 = time.perf_counter()
    failures: list[str] = []
    snn, tokens, _ = _tiny_setup(seed=seed)
    ref = runtime_mod.oracle_logits(snn, tokens, dtype=np.float32)
    checks = 0
    for steps in (1, 2, 4):
        result = runtime_mod.snn_run(snn, tokens, steps, mode="analog_ec_only", dtype=np.float32)
        gap = float(np.max(np.abs(result.logits - ref[None])))
        checks += 1
        if gap > 1e-6:
            failures.append(f"T={steps}: analog gap {gap:.3e}")
    return SuiteResult("analog", not failures, checks, time.perf_counter() - t0, failures)


SUITES = {
    "theorem1": suite_theorem1,
    "theorem2": suite_theorem2,
    "neuron": suite_neuron,
    "normalization": suite_normalization,
    "complexity": suite_complexity,
    "naive": suite_naive,
    "analog": suite_analog,
}

# default case counts tuned to finish comfortably inside a CI minute
DEFAULT_CASES = {
    "theorem1": 300,
    "theorem2": 150,
    "neuron": 3000,
    "normalization": 40,
    "complexity": 1,
    "naive": 1,
    "analog": 1,
}


def run_suites(names=None, cases: int | None = None, seed: int = 0) -> list[SuiteResult]:
    selected = list(SUITES) if not names else list(names)
    results = []
    for name in selected:
        if name not in SUITES:
            raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
        count = cases if cases is not None else DEFAULT_CASES[name]
        results.append(SUITES[name](cases=count, seed=seed))
    return results
