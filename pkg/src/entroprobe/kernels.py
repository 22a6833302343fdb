"""Hot inner loops, each in two flavours.

``*_loops`` functions are written as explicit loops and compiled with numba
when it is available. ``*_numpy`` functions are vectorised equivalents used
when numba is missing or disabled via ``ENTROPROBE_DISABLE_NUMBA``. The public
names at the bottom of the module point at whichever flavour is active.

Both flavours are deterministic run to run. They are not bit-identical to each
other (different summation orders), only close to within float tolerance.
"""

import math

import numpy as np

from ._accel import HAS_NUMBA, maybe_njit

LN2 = math.log(2.0)


# --- fused entropy + argmax over vocabulary rows -----------------------------


@maybe_njit
def entropy_top1_rows_loops(logits):
    n_rows, n_cols = logits.shape
    ent = np.empty(n_rows, dtype=np.float64)
    top = np.empty(n_rows, dtype=np.int64)
    for r in range(n_rows):
        best = np.float64(logits[r, 0])
        arg = 0
        for c in range(1, n_cols):
            v = np.float64(logits[r, c])
            if v > best:  # strict: ties keep the lowest index
                best = v
                arg = c
        s = 0.0
        t = 0.0
        for c in range(n_cols):
            z = np.float64(logits[r, c]) - best
            e = math.exp(z)
            s += e
            t += e * z
        # H = lse - E[z] with z shifted by the max; lse(shifted) = log(s)
        ent[r] = (math.log(s) - t / s) / LN2
        top[r] = arg
    return ent, top


def entropy_top1_rows_numpy(logits):
    z = np.asarray(logits, dtype=np.float64)
    top = np.argmax(z, axis=1).astype(np.int64)
    z = z - z[np.arange(z.shape[0]), top][:, None]
    e = np.exp(z)
    s = e.sum(axis=1)
    t = (e * z).sum(axis=1)
    return (np.log(s) - t / s) / LN2, top


# --- layer normalisation over the last axis ----------------------------------


@maybe_njit
def layer_norm_rows_loops(x, gain, shift, eps):
    n_rows, d = x.shape
    out = np.empty_like(x)
    for r in range(n_rows):
        acc = 0.0
        lo = x[r, 0]
        hi = x[r, 0]
        for c in range(d):
            v = x[r, c]
            acc += v
            if v < lo:
                lo = v
            if v > hi:
                hi = v
        if lo == hi:
            # zero-variance row collapses to the shift exactly
            for c in range(d):
                out[r, c] = shift[c]
            continue
        mu = acc / d
        var = 0.0
        for c in range(d):
            dv = x[r, c] - mu
            var += dv * dv
        inv = 1.0 / math.sqrt(var / d + eps)
        for c in range(d):
            out[r, c] = (x[r, c] - mu) * inv * gain[c] + shift[c]
    return out


def layer_norm_rows_numpy(x, gain, shift, eps):
    x64 = x.astype(np.float64)
    mu = x64.mean(axis=1, keepdims=True)
    dv = x64 - mu
    var = (dv * dv).mean(axis=1, keepdims=True)
    out = dv / np.sqrt(var + eps) * gain + shift
    flat = x.min(axis=1) == x.max(axis=1)
    if flat.any():
        out[flat] = shift
    return out.astype(x.dtype)


# --- tanh-approximation GELU -------------------------------------------------

_GELU_C = math.sqrt(2.0 / math.pi)


@maybe_njit
def gelu_loops(x):
    flat = x.ravel()
    out = np.empty_like(flat)
    for k in range(flat.size):
        v = np.float64(flat[k])
        out[k] = 0.5 * v * (1.0 + math.tanh(_GELU_C * (v + 0.044715 * v * v * v)))
    return out.reshape(x.shape)


def gelu_numpy(x):
    v = np.asarray(x, dtype=np.float64)
    out = 0.5 * v * (1.0 + np.tanh(_GELU_C * (v + 0.044715 * v**3)))
    return out.astype(x.dtype)


# --- causal multi-head attention core ----------------------------------------


@maybe_njit
def causal_attention_loops(q, k, v, scale):
    """q, k, v: (heads, n, head_dim). Returns (output, weights)."""
    n_heads, n, hd = q.shape
    out = np.zeros((n_heads, n, hd), dtype=q.dtype)
    weights = np.zeros((n_heads, n, n), dtype=q.dtype)
    scores = np.empty(n, dtype=np.float64)
    for h in range(n_heads):
        for i in range(n):
            best = -np.inf
            for j in range(i + 1):
                acc = 0.0
                for c in range(hd):
                    acc += np.float64(q[h, i, c]) * np.float64(k[h, j, c])
                acc *= scale
                scores[j] = acc
                if acc > best:
                    best = acc
            s = 0.0
            for j in range(i + 1):
                e = math.exp(scores[j] - best)
                scores[j] = e
                s += e
            for j in range(i + 1):
                scores[j] = scores[j] / s
                weights[h, i, j] = scores[j]
            for c in range(hd):
                acc = 0.0
                for j in range(i + 1):
                    acc += scores[j] * np.float64(v[h, j, c])
                out[h, i, c] = acc
    return out, weights


def causal_attention_numpy(q, k, v, scale):
    n = q.shape[1]
    scores = np.matmul(q, np.swapaxes(k, 1, 2)) * q.dtype.type(scale)
    future = np.triu(np.ones((n, n), dtype=bool), k=1)
    scores = np.where(future, -np.inf, scores)
    scores = scores - scores.max(axis=2, keepdims=True)
    w = np.exp(scores)
    w = w / w.sum(axis=2, keepdims=True)
    return np.matmul(w, v), w


if HAS_NUMBA:
    entropy_top1_rows = entropy_top1_rows_loops
    layer_norm_rows = layer_norm_rows_loops
    gelu_array = gelu_loops
    causal_attention = causal_attention_loops
else:
    entropy_top1_rows = entropy_top1_rows_numpy
    layer_norm_rows = layer_norm_rows_numpy
    gelu_array = gelu_numpy
    causal_attention = causal_attention_numpy
