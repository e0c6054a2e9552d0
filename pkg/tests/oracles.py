"""Independent reference implementations used by the tests.

Everything here is deliberately brute force and written without reference
to the package internals: triple-loop matrix product, two-pass layernorm,
scalar erf GELU, a literal band-by-band threshold selector and a plain
single-threshold integrate-and-fire loop.
"""

import math

import numpy as np


def matmul_loops(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for r in range(k):
                acc += a[i, r] * b[r, j]
            out[i, j] = acc
    return out


def gelu_scalar(x):
    return 0.5 * x * (1.0 + math.erf(x / math.sqrt(2.0)))


def gelu_array(x):
    flat = np.asarray(x, dtype=np.float64).ravel()
    return np.array([gelu_scalar(v) for v in flat]).reshape(np.shape(x))


def softmax_rows_reference(x, scale=1.0):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    for i in range(x.shape[0]):
        row = x[i] * scale
        row = row - row.max()
        e = np.exp(row)
        out[i] = e / e.sum()
    return out


def layernorm_two_pass(x, gamma, beta, eps=1e-5):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    rows = x.reshape(-1, x.shape[-1])
    flat_out = out.reshape(-1, x.shape[-1])
    for i in range(rows.shape[0]):
        row = rows[i]
        mean = row.sum() / row.size
        var = ((row - mean) ** 2).sum() / row.size
        flat_out[i] = (row - mean) / math.sqrt(var + eps) * gamma + beta
    return out


def percentile_reference(values, p):
    """numpy's linear-interpolation quantile, as the independent check."""
    return float(np.quantile(np.asarray(values, dtype=np.float64).ravel(), p, method="linear"))


def ladder_values(theta1, theta2, n):
    return [theta1 * 2 ** p for p in range(n)] + [-theta2 * 2 ** p for p in range(n)]


def mth_reference(m, theta1, theta2, n):
    """Literal transcription of the firing bands, slow and explicit.

    Positive band p: lam_p - lam_1/2 <= m < lam_{p+1} - lam_1/2 (top band
    open above). Negative band q (1-based below the dead band): mirrored
    with the negative base threshold, lower edges inclusive, bottom band
    open below. Dead band: -theta2/2 <= m < theta1/2.
    """
    lam = ladder_values(theta1, theta2, n)
    pos = lam[:n]
    neg = lam[n:]
    if m >= pos[0] / 2.0:
        for p in range(n - 1):
            if pos[p] - pos[0] / 2.0 <= m < pos[p + 1] - pos[0] / 2.0:
                return p + 1
        return n
    if m >= neg[0] / 2.0:
        return 0
    for q in range(n - 1):
        if neg[q + 1] - neg[0] / 2.0 <= m < neg[q] - neg[0] / 2.0:
            return n + q + 1
    return 2 * n


def classic_if_train(currents, theta, v0):
    """Single-threshold soft-reset neuron, straight from the update rules."""
    v = v0
    out = []
    for cur in currents:
        m = v + cur
        s = 1 if m >= theta else 0
        x = theta * s
        v = m - x
        out.append(s)
    return out


def matmul_ec_reference(spikes_a, spikes_b, lam_a, lam_b):
    """Offline replay of the compensated spiking product.

    Returns the per-step outputs computed directly from cumulative sums:
    O(T) = S_K(T)/T - S_K(T-1)/(T-1) with S_K(T) = S_A(T) @ S_B(T).
    """
    lam_a = np.concatenate(([0.0], np.asarray(lam_a)))
    lam_b = np.concatenate(([0.0], np.asarray(lam_b)))
    steps = len(spikes_a)
    cum_a = None
    cum_b = None
    prev_scaled = None
    outs = []
    for t in range(1, steps + 1):
        a = lam_a[spikes_a[t - 1]]
        b = lam_b[spikes_b[t - 1]]
        cum_a = a if cum_a is None else cum_a + a
        cum_b = b if cum_b is None else cum_b + b
        scaled = (cum_a @ cum_b) / t
        outs.append(scaled if prev_scaled is None else scaled - prev_scaled)
        prev_scaled = scaled
    return outs
