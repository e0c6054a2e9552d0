"""Dense numeric primitives shared by the ANN oracle and the SNN runtime.

Everything operates on plain numpy arrays (f32 or f64, row-major). These
functions are deliberately simple; the compiled kernels live elsewhere and
are checked against this layer in the tests.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from .errors import DimensionError, DomainError, NumericError

# 1/sqrt(2) as a python float so numpy keeps the array dtype (f32 stays f32)
_INV_SQRT2 = 0.7071067811865476


def check_finite(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"{name} contains NaN or Inf")
    return x


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Plain 2-D matrix product with explicit shape checking."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    return np.matmul(a, b)


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact-erf GELU: 0.5 * x * (1 + erf(x / sqrt(2)))."""
    x = np.asarray(x)
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def softmax_rows(x: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """Row-wise softmax of ``scale * x`` with max-subtraction for stability.

    ``x`` is 2-D; each row sums to 1 in the output.
    """
    x = np.asarray(x)
    if x.ndim != 2:
        raise DimensionError(f"softmax_rows expects a 2-D array, got shape {x.shape}")
    check_finite(x, "softmax input")
    z = x * scale
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def layernorm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x = np.asarray(x)
    gamma = np.asarray(gamma)
    beta = np.asarray(beta)
    if x.ndim < 1 or gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
        raise DimensionError(
            f"layernorm affine params {gamma.shape}/{beta.shape} do not match last axis of {x.shape}"
        )
    if eps <= 0.0:
        raise DomainError(f"layernorm eps must be positive, got {eps}")
    check_finite(x, "layernorm input")
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + eps) * gamma + beta


def percentile(values: np.ndarray, p: float) -> float:
    """Percentile with linear interpolation at index ``p * (len - 1)``.

    ``p`` is a fraction in [0, 1] over the flattened, sorted values.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise DomainError("percentile of an empty value set")
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"percentile fraction must lie in [0, 1], got {p}")
    check_finite(v, "percentile input")
    s = np.sort(v)
    pos = p * (s.size - 1)
    lo = int(np.floor(pos))
    hi = min(lo + 1, s.size - 1)
    frac = pos - lo
    return float(s[lo] + (s[hi] - s[lo]) * frac)
