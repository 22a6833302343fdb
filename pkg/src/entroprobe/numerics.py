"""Numerically stable vector kernels: softmax, entropy, layer norm, GELU, matmul.

Tensor math runs in float32; reductions that feed entropies run in float64.
Entropies are always reported in bits.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

from . import kernels
from .errors import InvalidInputError, ShapeError

LN2 = math.log(2.0)

# Names of deliberately injected faults, used by ``selftest`` to prove that the
# checks can fail. Never populated outside ``inject_fault``.
_ACTIVE_FAULTS: set[str] = set()


@contextlib.contextmanager
def inject_fault(name: str):
    """Temporarily break a kernel. Only ``"softmax-stabilization"`` is known."""
    if name != "softmax-stabilization":
        raise InvalidInputError(f"unknown fault {name!r}")
    _ACTIVE_FAULTS.add(name)
    try:
        yield
    finally:
        _ACTIVE_FAULTS.discard(name)


def _as_float(x) -> np.ndarray:
    arr = np.asarray(x)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    return arr


def _check_logits(z: np.ndarray) -> None:
    if z.size == 0 or z.shape[-1] < 1:
        raise InvalidInputError("logits must have at least one entry")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("logits contain NaN or Inf")


def softmax(logits, axis: int = -1) -> np.ndarray:
    """Max-subtracted softmax along ``axis``; keeps the input float dtype."""
    z = _as_float(logits)
    _check_logits(z)
    if "softmax-stabilization" not in _ACTIVE_FAULTS:
        z = z - z.max(axis=axis, keepdims=True)
    with np.errstate(over="ignore", invalid="ignore"):
        e = np.exp(z)
        return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis: int = -1) -> np.ndarray:
    z = _as_float(logits)
    _check_logits(z)
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def entropy_bits(p) -> float:
    """Shannon entropy in bits with 0 * log(1/0) taken as 0."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise InvalidInputError("expected a non-empty probability vector")
    if not np.all(np.isfinite(p)):
        raise InvalidInputError("probabilities contain NaN or Inf")
    if np.any(p < 0):
        raise InvalidInputError("probabilities must be non-negative")
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def entropy_bits_from_logits(logits) -> float:
    """Entropy of ``softmax(logits)`` in bits via log-sum-exp.

    Avoids forming ``p * log p`` so vanishing probabilities cannot underflow
    into NaNs or lose mass.
    """
    z = np.asarray(_as_float(logits), dtype=np.float64)
    if z.ndim != 1:
        raise InvalidInputError("expected a 1-D logit vector")
    _check_logits(z)
    if "softmax-stabilization" in _ACTIVE_FAULTS:
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            e = np.exp(z)
            s = e.sum()
            return float((np.log(s) - (e * z).sum() / s) / LN2)
    ent, _ = kernels.entropy_top1_rows(np.ascontiguousarray(z[None, :]))
    return float(ent[0])


def entropy_top1(logits) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise entropy (bits, float64) and argmax (lowest index on ties).

    ``logits`` is a 2-D array of shape ``(rows, vocab)``. This is the batched
    form of :func:`entropy_bits_from_logits` used by the lens.
    """
    z = np.ascontiguousarray(logits)
    if z.ndim != 2:
        raise ShapeError(f"expected 2-D logits, got shape {z.shape}")
    _check_logits(z)
    return kernels.entropy_top1_rows(z)


def layer_norm(x, gain, shift, eps: float = 1e-5) -> np.ndarray:
    """Normalise over the last axis with population variance, then scale and shift."""
    if eps <= 0:
        raise InvalidInputError("eps must be positive")
    x = _as_float(x)
    if x.ndim == 0 or x.shape[-1] < 1:
        raise InvalidInputError("layer_norm needs at least one feature")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("layer_norm input contains NaN or Inf")
    d = x.shape[-1]
    gain = np.broadcast_to(np.asarray(gain, dtype=x.dtype), (d,))
    shift = np.broadcast_to(np.asarray(shift, dtype=x.dtype), (d,))
    rows = np.ascontiguousarray(x.reshape(-1, d))
    out = kernels.layer_norm_rows(
        rows, np.ascontiguousarray(gain), np.ascontiguousarray(shift), float(eps)
    )
    return out.reshape(x.shape)


def gelu(x):
    """GELU, tanh approximation. Scalars in, scalar out; arrays keep their dtype."""
    arr = _as_float(x)
    out = kernels.gelu_array(np.ascontiguousarray(arr))
    if np.ndim(x) == 0:
        return float(np.ravel(out)[0])
    return out


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return np.matmul(a, b)
