"""Multi-threshold spiking neurons with soft reset.

A neuron carries a ladder of 2n signed thresholds: positive rungs
``theta1 * 2**(p-1)`` for p = 1..n and negative rungs ``-theta2 * 2**(p-1)``.
Each step the membrane integrates its input current, fires at most one rung
(the deepest band the membrane falls into, offset by half the base rung so
the emitted value rounds the membrane rather than truncating it) and
subtracts the fired value from the membrane.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backend import kernels
from .errors import DimensionError, DomainError, NumericError

# saturation = membrane still beyond twice the top positive rung after a fire
SATURATION_FACTOR = 2.0


@dataclass(frozen=True)
class ThresholdLadder:
    """Signed firing values plus the precomputed band boundaries."""

    theta1: float
    theta2: float
    n: int
    values: np.ndarray        # (2n,) +theta1*2^p then -theta2*2^p
    pos_bounds: np.ndarray    # (n,) ascending; fire rung p when pos_bounds[p-1] <= m
    neg_bounds: np.ndarray    # (n,) ascending; fire rung n+q when neg_bounds[q-1] < -m
    values_ext: np.ndarray = field(repr=False, default=None)  # (2n+1,) with leading 0

    def postsynaptic(self, spikes: np.ndarray) -> np.ndarray:
        """Map spike indices (0 = silent) to emitted values."""
        return self.values_ext[spikes]


def build_ladder(theta1: float, theta2: float, n: int) -> ThresholdLadder:
    """Construct the 2n-rung ladder for base thresholds (theta1, theta2)."""
    if n < 1:
        raise DomainError(f"ladder needs n >= 1, got {n}")
    if not (theta1 > 0.0 and theta2 > 0.0):
        raise DomainError(f"base thresholds must be positive, got ({theta1}, {theta2})")
    powers = 2.0 ** np.arange(n)
    values = np.concatenate([theta1 * powers, -theta2 * powers])
    pos_bounds = values[:n] - values[0] / 2.0
    neg_bounds = -values[n:] - (-values[n]) / 2.0
    return ThresholdLadder(
        theta1=float(theta1),
        theta2=float(theta2),
        n=int(n),
        values=values,
        pos_bounds=pos_bounds,
        neg_bounds=neg_bounds,
        values_ext=np.concatenate(([0.0], values)),
    )


def mth(m: float, ladder: ThresholdLadder) -> int:
    """Scalar multi-threshold selector: 0 for silent, else 1-based rung index.

    Band p (positive) covers values rounding to rung p given the half-base
    offset; the outermost bands absorb everything beyond the ladder.
    """
    n = ladder.n
    if m >= ladder.pos_bounds[0]:
        p = 1
        while p < n and m >= ladder.pos_bounds[p]:
            p += 1
        return p
    y = -m
    if y > ladder.neg_bounds[0]:
        q = 1
        while q < n and y > ladder.neg_bounds[q]:
            q += 1
        return n + q
    return 0


class MTNeuronState:
    """Membrane state for one array of multi-threshold neurons.

    The array shape is fixed at construction (any leading batch axes are
    fine); membranes start at zero and integrate with soft reset.
    """

    def __init__(self, ladder: ThresholdLadder, shape: tuple[int, ...]):
        self.ladder = ladder
        self.shape = tuple(shape)
        self.v = np.zeros(self.shape, dtype=np.float64)
        self.spike_counts = np.zeros(2 * ladder.n + 1, dtype=np.int64)
        self.steps = 0
        self.fired_total = 0
        self.last_fired = 0
        self.saturation_events = 0
        self._sat_limit = SATURATION_FACTOR * float(ladder.values[ladder.n - 1])

    @property
    def neurons(self) -> int:
        return self.v.size

    def step(self, current: np.ndarray) -> np.ndarray:
        """Integrate one step of input current; returns spike indices."""
        current = np.asarray(current, dtype=np.float64)
        if current.shape != self.shape:
            raise DimensionError(f"current shape {current.shape} != neuron shape {self.shape}")
        if not np.all(np.isfinite(current)):
            raise NumericError("neuron input current contains NaN or Inf")
        spikes = np.zeros(self.shape, dtype=np.int32)
        fired, saturated = kernels.mt_step(
            self.v.reshape(-1),
            np.ascontiguousarray(current.reshape(-1)),
            spikes.reshape(-1),
            self.ladder.pos_bounds,
            self.ladder.neg_bounds,
            self.ladder.values,
            self.spike_counts,
            self._sat_limit,
        )
        self.steps += 1
        self.last_fired = int(fired)
        self.fired_total += int(fired)
        self.saturation_events += int(saturated)
        return spikes

    def reset(self) -> None:
        self.v[:] = 0.0
        self.spike_counts[:] = 0
        self.steps = 0
        self.fired_total = 0
        self.last_fired = 0
        self.saturation_events = 0


def mt_run(ladder: ThresholdLadder, currents: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Drive a fresh neuron array through a (T, ...) current sequence.

    Returns (spike indices (T, ...), membrane trace (T, ...)); mostly a
    test/diagnostic helper.
    """
    currents = np.asarray(currents, dtype=np.float64)
    state = MTNeuronState(ladder, currents.shape[1:])
    spikes = np.zeros(currents.shape, dtype=np.int32)
    trace = np.zeros(currents.shape, dtype=np.float64)
    for t in range(currents.shape[0]):
        spikes[t] = state.step(currents[t])
        trace[t] = state.v
    return spikes, trace
