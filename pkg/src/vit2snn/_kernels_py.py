"""Pure-numpy fallback for the compiled kernels.

Same call signatures and identical operation counts as ``_kernels`` (the
Cython extension). Values agree within floating-point reassociation noise;
the spike/count bookkeeping is integer-exact and matches bit for bit.

The matmul kernel here evaluates the sparse update through dense batched
matmuls (numpy is faster at that than per-spike python loops) while
reporting the operation counts of the accumulation algorithm the compiled
kernel actually performs.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def mt_step(v, current, spikes, pos_bounds, neg_bounds, ladder_values, counts, sat_limit):
    """One multi-threshold update on flat f64 arrays.

    ``v`` is charged in place, fired thresholds are subtracted, and
    ``spikes`` receives 0 (silent) or the 1-based ladder index. ``counts``
    (length 2n+1) accumulates the per-index totals. Returns
    ``(fired, saturated)`` where saturation means |v| stayed above twice the
    top positive rung after a fire.
    """
    n = pos_bounds.shape[0]
    m = v + current
    pos_idx = np.searchsorted(pos_bounds, m, side="right")
    neg_idx = np.searchsorted(neg_bounds, -m, side="left")
    idx = np.where(pos_idx > 0, pos_idx, np.where(neg_idx > 0, n + neg_idx, 0))
    spikes[:] = idx.astype(np.int32)
    values_ext = np.concatenate(([0.0], ladder_values))
    m -= values_ext[spikes]
    v[:] = m
    counts += np.bincount(spikes, minlength=counts.shape[0]).astype(np.int64)
    fired_mask = spikes > 0
    fired = int(fired_mask.sum())
    saturated = int((fired_mask & (np.abs(m) > sat_limit)).sum())
    return fired, saturated


def spike_linear(spikes, banks, out):
    """Accumulate pre-scaled weight rows selected by spike indices.

    ``spikes``: (rows, fan_in) int32; ``banks``: (2n, fan_in, fan_out);
    ``out``: (rows, fan_out) f64, already seeded with the bias row.
    Returns the number of additions on the spike path (zero multiplies).
    """
    rows, cols = np.nonzero(spikes)
    if rows.size:
        ch = spikes[rows, cols] - 1
        np.add.at(out, rows, banks[ch, cols])
    return int(rows.size) * out.shape[1]


def matmul_ec_step(
    spk_a,
    spk_b,
    ladder_a,
    ladder_b,
    lut_ab,
    lut_sb_pos,
    lut_sb_neg,
    lut_sa_pos,
    lut_sa_neg,
    half_a,
    half_b,
    cum_a,
    cum_b,
    sc_b_pos,
    sc_b_neg,
    sc_a_pos,
    sc_a_neg,
    cum_prod,
    k_out,
):
    """One spiking matrix-product step over a batch of independent slices.

    Shapes: ``spk_a`` (S, n, p), ``spk_b`` (S, p, m), states match. Computes
    the per-step product correction K into ``k_out``, folds it into
    ``cum_prod`` and advances the cumulative operand sums. The scaled-copy
    state arrays are maintained by the compiled backend only; value-wise the
    dense evaluation below is equivalent.

    Returns an int tuple
    ``(term1, term2, term3, merge, state_adds, nnz_a, nnz_b, bound_adds, bound_muls)``
    where the first four are the additions of the K evaluation and the bound
    figures are the appendix maxima evaluated at this step's measured
    (per-contraction-slot peak) firing rates.
    """
    s_dim, n_dim, p_dim = spk_a.shape
    m_dim = spk_b.shape[2]
    va_ext = np.concatenate(([0.0], ladder_a))
    vb_ext = np.concatenate(([0.0], ladder_b))
    a_val = va_ext[spk_a]
    b_val = vb_ext[spk_b]
    k = a_val @ b_val + a_val @ cum_b + cum_a @ b_val
    k_out[:] = k
    cum_prod += k
    cum_a += a_val
    cum_b += b_val

    occ_a = spk_a > 0
    occ_b = spk_b > 0
    col_a = occ_a.sum(axis=1, dtype=np.int64)  # (S, p): spikes feeding slot r
    row_b = occ_b.sum(axis=2, dtype=np.int64)  # (S, p)
    nnz_a_slice = col_a.sum(axis=1)
    nnz_b_slice = row_b.sum(axis=1)
    nnz_a = int(nnz_a_slice.sum())
    nnz_b = int(nnz_b_slice.sum())
    term1 = int((col_a * row_b).sum())
    term2 = nnz_a * m_dim
    term3 = nnz_b * n_dim
    active = (nnz_a_slice + nnz_b_slice) > 0
    merge = int(active.sum()) * n_dim * m_dim
    state_adds = 3 * (nnz_a + nnz_b)

    ca = col_a.max(axis=1)  # peak spikes in one contraction slot = eta1 * n
    cb = row_b.max(axis=1)  # = eta2 * m
    bound_adds = int((ca * cb * p_dim + ca * p_dim * m_dim + cb * p_dim * n_dim).sum())
    bound_adds += s_dim * 3 * n_dim * m_dim
    bound_muls = int((np.minimum(ca * m_dim, cb * n_dim) + ca * m_dim + cb * n_dim).sum())
    return term1, term2, term3, merge, state_adds, nnz_a, nnz_b, bound_adds, bound_muls
