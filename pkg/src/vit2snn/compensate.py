"""Expectation-compensated stateful modules.

A compensated nonlinearity keeps the running mean of its input and emits

    out(T) = T * F(mean_T) - (T - 1) * F(mean_{T-1})

so the running mean of its *output* equals F applied to the running mean of
its input at every step. The matrix-product variant does the same for
bilinear A @ B with spiking operands, evaluated sparsely from the spike
events of the current step plus cumulative operand sums.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import kernels
from .errors import DimensionError, StateError
from .neuron import ThresholdLadder


class NonlinearCompensator:
    """Wraps an elementwise/rowwise function F with expectation compensation.

    ``fn`` maps an array to an array of the same shape. State is the running
    input mean plus the previous F evaluation, so memory stays at O(size)
    regardless of how many steps run.
    """

    def __init__(self, fn, name: str = "ec"):
        self.fn = fn
        self.name = name
        self.t = 0
        self.mean = None
        self._prev_f = None

    def step(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        self.t += 1
        if self.t == 1:
            self.mean = x.copy()
            f = self.fn(self.mean)
            self._prev_f = f.copy()
            return f
        if x.shape != self.mean.shape:
            raise StateError(f"{self.name}: step input shape changed to {x.shape}")
        self.mean += (x - self.mean) / self.t
        f = self.fn(self.mean)
        out = f + (self.t - 1) * (f - self._prev_f)
        self._prev_f = f.copy()
        return out

    def reset(self) -> None:
        self.t = 0
        self.mean = None
        self._prev_f = None


@dataclass
class MatmulStepOps:
    """Operation counts for one spiking matrix-product step.

    ``term1/term2/term3`` are the additions of the three K(T) contributions,
    ``merge`` folds K into the cumulative product, ``state_adds`` maintains
    the cumulative sums and their scaled copies, and the readout fields
    cover the 1/T output scaling. ``bound_adds``/``bound_muls`` are the
    worst-case maxima evaluated at this step's measured peak firing rates.
    """

    term1: int
    term2: int
    term3: int
    merge: int
    state_adds: int
    nnz_a: int
    nnz_b: int
    bound_adds: int
    bound_muls: int
    readout_macs: int
    readout_acs: int

    @property
    def k_adds(self) -> int:
        return self.term1 + self.term2 + self.term3 + self.merge

    @property
    def k_muls(self) -> int:
        return 0


def matmul_ec_opcount(ops: MatmulStepOps) -> tuple[int, int]:
    """(additions, multiplications) of one K(T) evaluation.

    A fully silent step reports (0, 0): with no spikes there is nothing to
    merge and the cumulative product is left untouched.
    """
    return ops.k_adds, ops.k_muls


class MatmulCompensator:
    """Expectation-compensated spiking matrix product over a slice batch.

    Operands arrive as spike-index arrays shaped (S, n, p) and (S, p, m);
    each slice is an independent matrix product (e.g. one attention head of
    one sample). Emitted values are reconstructed through the operand
    ladders; all spike-driven arithmetic is additions (power-of-two ladder
    scalings are exponent shifts on pre-scaled state copies).
    """

    def __init__(self, ladder_a: ThresholdLadder, ladder_b: ThresholdLadder,
                 slices: int, n_dim: int, p_dim: int, m_dim: int, name: str = "matmul_ec"):
        self.ladder_a = ladder_a
        self.ladder_b = ladder_b
        self.name = name
        self.slices = int(slices)
        self.n_dim = int(n_dim)
        self.p_dim = int(p_dim)
        self.m_dim = int(m_dim)
        self.t = 0

        va, vb = ladder_a.values, ladder_b.values
        # LUTs are built once per module; their construction multiplies are
        # setup cost, not per-step work.
        self.lut_ab = np.ascontiguousarray(np.outer(va, vb))
        self.lut_sb_pos = np.ascontiguousarray(ladder_a.theta1 * vb)
        self.lut_sb_neg = np.ascontiguousarray(ladder_a.theta2 * vb)
        self.lut_sa_pos = np.ascontiguousarray(ladder_b.theta1 * va)
        self.lut_sa_neg = np.ascontiguousarray(ladder_b.theta2 * va)

        shape_a = (self.slices, self.n_dim, self.p_dim)
        shape_b = (self.slices, self.p_dim, self.m_dim)
        shape_k = (self.slices, self.n_dim, self.m_dim)
        self.cum_a = np.zeros(shape_a)
        self.cum_b = np.zeros(shape_b)
        self.sc_a_pos = np.zeros(shape_a)   # theta1_b * cum_a
        self.sc_a_neg = np.zeros(shape_a)   # theta2_b * cum_a
        self.sc_b_pos = np.zeros(shape_b)   # theta1_a * cum_b
        self.sc_b_neg = np.zeros(shape_b)   # theta2_a * cum_b
        self.cum_prod = np.zeros(shape_k)
        self._prev_scaled = np.zeros(shape_k)
        self._k_buf = np.zeros(shape_k)

        self.bound_violations = 0
        self.total_k_adds = 0
        self.total_k_muls = 0
        self.total_state_adds = 0
        self.total_readout_macs = 0
        self.total_readout_acs = 0
        self.total_bound_adds = 0
        self.total_bound_muls = 0

    def step(self, spk_a: np.ndarray, spk_b: np.ndarray) -> tuple[np.ndarray, MatmulStepOps]:
        if spk_a.shape != (self.slices, self.n_dim, self.p_dim) or \
                spk_b.shape != (self.slices, self.p_dim, self.m_dim):
            raise DimensionError(
                f"{self.name}: operand shapes {spk_a.shape} x {spk_b.shape} do not match module dims"
            )
        spk_a = np.ascontiguousarray(spk_a, dtype=np.int32)
        spk_b = np.ascontiguousarray(spk_b, dtype=np.int32)
        self.t += 1
        counts = kernels.matmul_ec_step(
            spk_a, spk_b,
            self.ladder_a.values, self.ladder_b.values,
            self.lut_ab,
            self.lut_sb_pos, self.lut_sb_neg,
            self.lut_sa_pos, self.lut_sa_neg,
            self.ladder_a.n, self.ladder_b.n,
            self.cum_a, self.cum_b,
            self.sc_b_pos, self.sc_b_neg,
            self.sc_a_pos, self.sc_a_neg,
            self.cum_prod, self._k_buf,
        )
        size = self.slices * self.n_dim * self.m_dim
        ops = MatmulStepOps(*[int(c) for c in counts], readout_macs=size, readout_acs=size)

        scaled = self.cum_prod * (1.0 / self.t)
        out = scaled - self._prev_scaled
        self._prev_scaled = scaled

        if ops.k_adds > ops.bound_adds or ops.k_muls > ops.bound_muls:
            self.bound_violations += 1
        self.total_k_adds += ops.k_adds
        self.total_k_muls += ops.k_muls
        self.total_state_adds += ops.state_adds
        self.total_readout_macs += ops.readout_macs
        self.total_readout_acs += ops.readout_acs
        self.total_bound_adds += ops.bound_adds
        self.total_bound_muls += ops.bound_muls
        return out, ops

    @property
    def last_k(self) -> np.ndarray:
        """K(T) of the most recent step (test/diagnostic access)."""
        return self._k_buf


class AnalogMatmulCompensator:
    """Dense analog twin of MatmulCompensator (verification mode).

    Operands are the raw per-step tensors; state is their running means and
    the previous mean product, so for a static input stream the output is
    bit-identical at every step.
    """

    def __init__(self, name: str = "matmul_ec"):
        self.name = name
        self.t = 0
        self.mean_a = None
        self.mean_b = None
        self._prev_prod = None
        self.total_macs = 0
        self.total_acs = 0

    def step(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a = np.asarray(a)
        b = np.asarray(b)
        self.t += 1
        if self.t == 1:
            self.mean_a = a.copy()
            self.mean_b = b.copy()
            prod = self.mean_a @ self.mean_b
            self._prev_prod = prod.copy()
            out = prod
        else:
            if a.shape != self.mean_a.shape or b.shape != self.mean_b.shape:
                raise StateError(f"{self.name}: operand shapes changed mid-run")
            self.mean_a += (a - self.mean_a) / self.t
            self.mean_b += (b - self.mean_b) / self.t
            prod = self.mean_a @ self.mean_b
            out = prod + (self.t - 1) * (prod - self._prev_prod)
            self._prev_prod = prod.copy()
        # dense accounting: the product itself plus mean/combine upkeep
        slices = int(np.prod(self.mean_a.shape[:-2])) if self.mean_a.ndim > 2 else 1
        n_dim, p_dim = self.mean_a.shape[-2], self.mean_a.shape[-1]
        m_dim = self.mean_b.shape[-1]
        self.total_macs += slices * n_dim * p_dim * m_dim + self.mean_a.size + self.mean_b.size + out.size
        self.total_acs += self.mean_a.size + self.mean_b.size + 2 * out.size
        return out

    def reset(self) -> None:
        self.t = 0
        self.mean_a = None
        self.mean_b = None
        self._prev_prod = None
