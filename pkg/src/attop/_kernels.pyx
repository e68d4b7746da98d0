# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the per-step hot loop.

Every function here has a numpy twin in ``_fallback.py`` with the same
signature; ``attop.backend`` picks one at import time.

Flat parameter layout, layer by layer: weight matrix (out x in, row-major),
then the bias vector (out). Activation codes: 0 identity, 1 relu, 2 tanh,
3 sigmoid.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport tanh, exp

cnp.import_array()


cdef inline double _act(double x, int code) noexcept nogil:
    if code == 1:
        return x if x > 0.0 else 0.0
    elif code == 2:
        return tanh(x)
    elif code == 3:
        if x >= 0.0:
            return 1.0 / (1.0 + exp(-x))
        return exp(x) / (1.0 + exp(x))
    return x


cdef inline double _dact(double pre, double post, int code) noexcept nogil:
    # derivative expressed through whichever of pre/post is cheaper
    if code == 1:
        return 1.0 if pre > 0.0 else 0.0
    elif code == 2:
        return 1.0 - post * post
    elif code == 3:
        return post * (1.0 - post)
    return 1.0


cdef Py_ssize_t _select_desc(double* buf, Py_ssize_t n, Py_ssize_t k) noexcept nogil:
    # Hoare-style quickselect; leaves the k-th largest (0-based) at buf[k].
    cdef Py_ssize_t lo = 0, hi = n - 1, i, j, mid
    cdef double pivot, tmp
    while lo < hi:
        mid = lo + (hi - lo) // 2
        # median of three, ordered descending
        if buf[mid] > buf[lo]:
            tmp = buf[mid]; buf[mid] = buf[lo]; buf[lo] = tmp
        if buf[hi] > buf[lo]:
            tmp = buf[hi]; buf[hi] = buf[lo]; buf[lo] = tmp
        if buf[hi] > buf[mid]:
            tmp = buf[hi]; buf[hi] = buf[mid]; buf[mid] = tmp
        pivot = buf[mid]
        i = lo
        j = hi
        while i <= j:
            while buf[i] > pivot:
                i += 1
            while buf[j] < pivot:
                j -= 1
            if i <= j:
                tmp = buf[i]; buf[i] = buf[j]; buf[j] = tmp
                i += 1
                j -= 1
        if k <= j:
            hi = j
        elif k >= i:
            lo = i
        else:
            break
    return k


def kth_largest(const double[::1] values, Py_ssize_t k):
    """Return ``(value, index)`` of the k-th largest entry (1-based ``k``).

    The index is the smallest position holding that value.
    """
    cdef Py_ssize_t n = values.shape[0], i
    if k < 1 or k > n:
        raise IndexError(k)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] work = np.array(values, dtype=np.float64, copy=True)
    cdef double* buf = <double*> work.data
    cdef double v
    with nogil:
        _select_desc(buf, n, k - 1)
        v = buf[k - 1]
        i = 0
        while values[i] != v:
            i += 1
    return v, i


def mlp_forward(const double[::1] w, const int[::1] dims, const int[::1] acts, const double[:, ::1] X):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t n_layers = dims.shape[0] - 1
    cdef Py_ssize_t widest = 0, L, s, o, q, off, fan_in, fan_out
    for L in range(dims.shape[0]):
        if dims[L] > widest:
            widest = dims[L]
    cdef double[::1] cur = np.empty(widest, dtype=np.float64)
    cdef double[::1] nxt = np.empty(widest, dtype=np.float64)
    cdef double[::1] out = np.empty(n, dtype=np.float64)
    cdef double acc
    cdef int code
    with nogil:
        for s in range(n):
            for q in range(dims[0]):
                cur[q] = X[s, q]
            off = 0
            for L in range(n_layers):
                fan_in = dims[L]
                fan_out = dims[L + 1]
                code = acts[L] if L < n_layers - 1 else 0
                for o in range(fan_out):
                    acc = 0.0
                    for q in range(fan_in):
                        acc += w[off + o * fan_in + q] * cur[q]
                    acc += w[off + fan_out * fan_in + o]
                    nxt[o] = _act(acc, code)
                off += fan_out * fan_in + fan_out
                for o in range(fan_out):
                    cur[o] = nxt[o]
            out[s] = cur[0]
    return np.asarray(out)


def mlp_weighted_backward(const double[::1] w, const int[::1] dims, const int[::1] acts,
                          const double[:, ::1] X, const double[::1] coeffs):
    """Sum over rows of ``coeffs[s] * d score(x_s) / d w``.

    Activations are recomputed per row (the low-memory strategy), so nothing
    of size n x n_params is ever held.
    """
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t n_layers = dims.shape[0] - 1
    cdef Py_ssize_t total_units = 0, widest = 0, n_params = 0
    cdef Py_ssize_t L, s, o, q, off, fan_in, fan_out, base_in, base_out
    for L in range(dims.shape[0]):
        total_units += dims[L]
        if dims[L] > widest:
            widest = dims[L]
    for L in range(n_layers):
        n_params += dims[L] * dims[L + 1] + dims[L + 1]

    cdef double[::1] post = np.empty(total_units, dtype=np.float64)
    cdef double[::1] pre = np.empty(total_units, dtype=np.float64)
    cdef double[::1] delta = np.empty(widest, dtype=np.float64)
    cdef double[::1] delta_prev = np.empty(widest, dtype=np.float64)
    cdef double[::1] grad = np.zeros(n_params, dtype=np.float64)
    cdef Py_ssize_t[::1] unit_base = np.empty(n_layers + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] param_base = np.empty(n_layers, dtype=np.intp)
    cdef double acc, c
    cdef int code

    unit_base[0] = 0
    for L in range(n_layers):
        unit_base[L + 1] = unit_base[L] + dims[L]
    off = 0
    for L in range(n_layers):
        param_base[L] = off
        off += dims[L] * dims[L + 1] + dims[L + 1]

    with nogil:
        for s in range(n):
            c = coeffs[s]
            if c == 0.0:
                continue
            for q in range(dims[0]):
                post[q] = X[s, q]
                pre[q] = X[s, q]
            for L in range(n_layers):
                fan_in = dims[L]
                fan_out = dims[L + 1]
                off = param_base[L]
                base_in = unit_base[L]
                base_out = unit_base[L + 1]
                code = acts[L] if L < n_layers - 1 else 0
                for o in range(fan_out):
                    acc = 0.0
                    for q in range(fan_in):
                        acc += w[off + o * fan_in + q] * post[base_in + q]
                    acc += w[off + fan_out * fan_in + o]
                    pre[base_out + o] = acc
                    post[base_out + o] = _act(acc, code)

            delta[0] = c
            L = n_layers - 1
            while L >= 0:
                fan_in = dims[L]
                fan_out = dims[L + 1]
                off = param_base[L]
                base_in = unit_base[L]
                for o in range(fan_out):
                    for q in range(fan_in):
                        grad[off + o * fan_in + q] += delta[o] * post[base_in + q]
                    grad[off + fan_out * fan_in + o] += delta[o]
                if L > 0:
                    code = acts[L - 1]
                    for q in range(fan_in):
                        acc = 0.0
                        for o in range(fan_out):
                            acc += w[off + o * fan_in + q] * delta[o]
                        delta_prev[q] = acc * _dact(pre[base_in + q], post[base_in + q], code)
                    for q in range(fan_in):
                        delta[q] = delta_prev[q]
                L -= 1
    return np.asarray(grad)
