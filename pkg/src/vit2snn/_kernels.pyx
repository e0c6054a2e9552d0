# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled hot kernels: multi-threshold firing, spike-driven linear
accumulation and the sparse cumulative-product update used by the spiking
matrix product. ``_kernels_py`` is the drop-in numpy fallback.

The matmul kernel keeps pre-scaled copies of the cumulative operand sums so
every power-of-two ladder scaling is an exponent shift (ldexp); the K
evaluation performs additions only.
"""

from libc.math cimport fabs, ldexp

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "compiled"


def mt_step(double[::1] v, const double[::1] current, int[::1] spikes,
            const double[::1] pos_bounds, const double[::1] neg_bounds,
            const double[::1] ladder_values, long long[::1] counts,
            double sat_limit):
    """One multi-threshold update on flat f64 arrays. See _kernels_py.mt_step."""
    cdef Py_ssize_t size = v.shape[0]
    cdef Py_ssize_t n = pos_bounds.shape[0]
    cdef Py_ssize_t i
    cdef int idx
    cdef double m, y
    cdef long long fired = 0, saturated = 0
    for i in range(size):
        m = v[i] + current[i]
        idx = 0
        if m >= pos_bounds[0]:
            idx = 1
            while idx < n and m >= pos_bounds[idx]:
                idx += 1
        else:
            y = -m
            if y > neg_bounds[0]:
                idx = 1
                while idx < n and y > neg_bounds[idx]:
                    idx += 1
                idx += <int> n
        spikes[i] = idx
        counts[idx] += 1
        if idx > 0:
            fired += 1
            m -= ladder_values[idx - 1]
            if fabs(m) > sat_limit:
                saturated += 1
        v[i] = m
    return fired, saturated


def spike_linear(const int[:, ::1] spikes, const double[:, :, ::1] banks,
                 double[:, ::1] out):
    """Accumulate pre-scaled weight rows selected by spike indices."""
    cdef Py_ssize_t rows = spikes.shape[0]
    cdef Py_ssize_t cols = spikes.shape[1]
    cdef Py_ssize_t fan = out.shape[1]
    cdef Py_ssize_t r, c, f
    cdef int s
    cdef long long nnz = 0
    for r in range(rows):
        for c in range(cols):
            s = spikes[r, c]
            if s != 0:
                nnz += 1
                for f in range(fan):
                    out[r, f] += banks[s - 1, c, f]
    return <object> (nnz * <long long> fan)


def matmul_ec_step(const int[:, :, ::1] spk_a, const int[:, :, ::1] spk_b,
                   const double[::1] ladder_a, const double[::1] ladder_b,
                   const double[:, ::1] lut_ab,
                   const double[::1] lut_sb_pos, const double[::1] lut_sb_neg,
                   const double[::1] lut_sa_pos, const double[::1] lut_sa_neg,
                   int half_a, int half_b,
                   double[:, :, ::1] cum_a, double[:, :, ::1] cum_b,
                   double[:, :, ::1] sc_b_pos, double[:, :, ::1] sc_b_neg,
                   double[:, :, ::1] sc_a_pos, double[:, :, ::1] sc_a_neg,
                   double[:, :, ::1] cum_prod, double[:, :, ::1] k_out):
    """One spiking matrix-product step. See _kernels_py.matmul_ec_step.

    K terms read the pre-step cumulative state; operand sums and their
    scaled copies advance afterwards. Spike-driven ladder scalings go
    through ldexp on the scaled copies, so the K path multiplies nothing.
    """
    cdef Py_ssize_t s_dim = spk_a.shape[0]
    cdef Py_ssize_t n_dim = spk_a.shape[1]
    cdef Py_ssize_t p_dim = spk_a.shape[2]
    cdef Py_ssize_t m_dim = spk_b.shape[2]
    cdef Py_ssize_t s, i, r, j
    cdef int sa, sb, e
    cdef long long term1 = 0, term2 = 0, term3 = 0, merge = 0
    cdef long long nnz_a = 0, nnz_b = 0
    cdef long long bound_adds = 0, bound_muls = 0
    cdef long long slice_a, slice_b, ca, cb, col, t1, t2
    cdef double contrib

    for s in range(s_dim):
        slice_a = 0
        slice_b = 0
        ca = 0
        cb = 0
        for i in range(n_dim):
            for j in range(m_dim):
                k_out[s, i, j] = 0.0

        # term 2: current A spikes against the scaled previous B sums
        for i in range(n_dim):
            for r in range(p_dim):
                sa = spk_a[s, i, r]
                if sa != 0:
                    slice_a += 1
                    if sa <= half_a:
                        e = sa - 1
                        for j in range(m_dim):
                            k_out[s, i, j] += ldexp(sc_b_pos[s, r, j], e)
                    else:
                        e = sa - half_a - 1
                        for j in range(m_dim):
                            k_out[s, i, j] -= ldexp(sc_b_neg[s, r, j], e)
                    term2 += m_dim

        # term 3: current B spikes against the scaled previous A sums
        for r in range(p_dim):
            for j in range(m_dim):
                sb = spk_b[s, r, j]
                if sb != 0:
                    slice_b += 1
                    if sb <= half_b:
                        e = sb - 1
                        for i in range(n_dim):
                            k_out[s, i, j] += ldexp(sc_a_pos[s, i, r], e)
                    else:
                        e = sb - half_b - 1
                        for i in range(n_dim):
                            k_out[s, i, j] -= ldexp(sc_a_neg[s, i, r], e)
                    term3 += n_dim

        # term 1: spike-spike products through the value LUT
        for r in range(p_dim):
            col = 0
            for i in range(n_dim):
                if spk_a[s, i, r] != 0:
                    col += 1
            if col > ca:
                ca = col
            for i in range(n_dim):
                sa = spk_a[s, i, r]
                if sa != 0:
                    for j in range(m_dim):
                        sb = spk_b[s, r, j]
                        if sb != 0:
                            k_out[s, i, j] += lut_ab[sa - 1, sb - 1]
                            term1 += 1

        for r in range(p_dim):
            col = 0
            for j in range(m_dim):
                if spk_b[s, r, j] != 0:
                    col += 1
            if col > cb:
                cb = col

        # merge K into the cumulative product (skipped for silent slices)
        if slice_a + slice_b > 0:
            for i in range(n_dim):
                for j in range(m_dim):
                    cum_prod[s, i, j] += k_out[s, i, j]
            merge += n_dim * m_dim

        # advance cumulative sums and their scaled copies
        for i in range(n_dim):
            for r in range(p_dim):
                sa = spk_a[s, i, r]
                if sa != 0:
                    cum_a[s, i, r] += ladder_a[sa - 1]
                    sc_a_pos[s, i, r] += lut_sa_pos[sa - 1]
                    sc_a_neg[s, i, r] += lut_sa_neg[sa - 1]
        for r in range(p_dim):
            for j in range(m_dim):
                sb = spk_b[s, r, j]
                if sb != 0:
                    cum_b[s, r, j] += ladder_b[sb - 1]
                    sc_b_pos[s, r, j] += lut_sb_pos[sb - 1]
                    sc_b_neg[s, r, j] += lut_sb_neg[sb - 1]

        nnz_a += slice_a
        nnz_b += slice_b
        t1 = ca * m_dim
        t2 = cb * n_dim
        bound_adds += ca * cb * p_dim + ca * p_dim * m_dim + cb * p_dim * n_dim
        bound_adds += 3 * n_dim * m_dim
        bound_muls += (t1 if t1 < t2 else t2) + t1 + t2

    cdef long long state_adds = 3 * (nnz_a + nnz_b)
    return (<object> term1, <object> term2, <object> term3, <object> merge,
            <object> state_adds, <object> nnz_a, <object> nnz_b,
            <object> bound_adds, <object> bound_muls)
