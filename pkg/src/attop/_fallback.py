"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Same signatures and flat parameter layout. Used when the extension is not
built, or when ``ATTOP_BACKEND=python`` is set.
"""

import numpy as np


def _act(x, code):
    if code == 1:
        return np.maximum(x, 0.0)
    if code == 2:
        return np.tanh(x)
    if code == 3:
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out
    return x


def _dact(pre, post, code):
    if code == 1:
        return (pre > 0.0).astype(np.float64)
    if code == 2:
        return 1.0 - post * post
    if code == 3:
        return post * (1.0 - post)
    return np.ones_like(pre)


def _layers(w, dims):
    off = 0
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        W = w[off:off + fan_out * fan_in].reshape(fan_out, fan_in)
        off += fan_out * fan_in
        b = w[off:off + fan_out]
        off += fan_out
        yield W, b


def kth_largest(values, k):
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    if k < 1 or k > n:
        raise IndexError(k)
    v = np.partition(values, n - k)[n - k]
    return float(v), int(np.flatnonzero(values == v)[0])


def mlp_forward(w, dims, acts, X):
    a = np.asarray(X, dtype=np.float64)
    layers = list(_layers(w, dims))
    for L, (W, b) in enumerate(layers):
        code = int(acts[L]) if L < len(layers) - 1 else 0
        a = _act(a @ W.T + b, code)
    return np.ascontiguousarray(a[:, 0])


def mlp_weighted_backward(w, dims, acts, X, coeffs):
    layers = list(_layers(w, dims))
    posts = [np.asarray(X, dtype=np.float64)]
    pres = [posts[0]]
    for L, (W, b) in enumerate(layers):
        code = int(acts[L]) if L < len(layers) - 1 else 0
        z = posts[-1] @ W.T + b
        pres.append(z)
        posts.append(_act(z, code))

    delta = np.asarray(coeffs, dtype=np.float64)[:, None]
    chunks = []
    for L in range(len(layers) - 1, -1, -1):
        W, _ = layers[L]
        chunks.append((delta.T @ posts[L]).ravel())
        chunks.append(delta.sum(axis=0))
        if L > 0:
            delta = (delta @ W) * _dact(pres[L], posts[L], int(acts[L - 1]))
    # chunks were collected last layer first, bias after weights
    ordered = []
    for i in range(len(chunks) - 2, -1, -2):
        ordered.append(chunks[i])
        ordered.append(chunks[i + 1])
    return np.concatenate(ordered)
