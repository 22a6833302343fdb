"""GPT-2 style pre-norm decoder forward pass that records the residual stream."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ContextOverflowError, InvalidInputError, NumericFaultError, RangeError
from .numerics import layer_norm

LN_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int
    d_model: int
    n_heads: int
    vocab_size: int
    n_ctx: int

    def __post_init__(self):
        if self.n_layers < 1 or self.d_model < 1 or self.n_heads < 1 or self.n_ctx < 1:
            raise InvalidInputError(f"non-positive dimension in {self}")
        if self.vocab_size < 2:
            raise InvalidInputError("vocab_size must be at least 2")
        if self.d_model % self.n_heads:
            raise InvalidInputError(
                f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}"
            )

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


@dataclass
class TapGrid:
    """Residual stream snapshots, shape ``(n_layers + 1, n_tokens, d_model)``.

    ``taps[0]`` is token + position embedding; ``taps[j]`` is the stream after
    block ``j``. The terminal layer norm is *not* applied.
    """

    taps: np.ndarray
    attention: list[np.ndarray] | None = None  # per block, (heads, n, n)

    @property
    def n_layers(self) -> int:
        return self.taps.shape[0] - 1

    @property
    def n_tokens(self) -> int:
        return self.taps.shape[1]


def _check_tokens(ckpt, tokens) -> np.ndarray:
    cfg = ckpt.config
    toks = np.asarray(tokens, dtype=np.int64).reshape(-1)
    if toks.size > cfg.n_ctx:
        raise ContextOverflowError(f"{toks.size} tokens exceed context length {cfg.n_ctx}")
    if toks.size and (toks.min() < 0 or toks.max() >= cfg.vocab_size):
        raise RangeError(f"token id outside [0, {cfg.vocab_size})")
    return toks


def embed(ckpt, tokens) -> np.ndarray:
    """Token embedding plus learned position embedding (positions from 0)."""
    toks = _check_tokens(ckpt, tokens)
    return ckpt.wte[toks] + ckpt.wpe[: toks.size]


def _fault_check(x: np.ndarray, layer: int) -> None:
    bad = ~np.isfinite(x)
    if bad.any():
        pos = int(np.argwhere(bad)[0][0])
        raise NumericFaultError(f"non-finite activation at layer {layer}, position {pos + 1}")


def _block(x, blk, n_heads, keep_attention):
    n, d = x.shape
    hd = d // n_heads
    h = layer_norm(x, blk.ln1_g, blk.ln1_b, LN_EPS)
    qkv = h @ blk.attn_w + blk.attn_b
    # (n, 3d) -> 3 x (heads, n, hd)
    q, k, v = (
        np.ascontiguousarray(part.reshape(n, n_heads, hd).transpose(1, 0, 2))
        for part in np.split(qkv, 3, axis=1)
    )
    a, weights = kernels.causal_attention(q, k, v, 1.0 / math.sqrt(hd))
    a = a.transpose(1, 0, 2).reshape(n, d)
    x = x + (a @ blk.proj_w + blk.proj_b)
    h = layer_norm(x, blk.ln2_g, blk.ln2_b, LN_EPS)
    h = kernels.gelu_array(np.ascontiguousarray(h @ blk.fc_w + blk.fc_b))
    x = x + (h @ blk.mlp_proj_w + blk.mlp_proj_b)
    return x, (weights if keep_attention else None)


def forward_with_taps(ckpt, tokens, keep_attention: bool = False) -> TapGrid:
    toks = _check_tokens(ckpt, tokens)
    if toks.size == 0:
        raise InvalidInputError("need at least one token")
    cfg = ckpt.config
    taps = np.empty((cfg.n_layers + 1, toks.size, cfg.d_model), dtype=np.float32)
    x = embed(ckpt, toks)
    _fault_check(x, 0)
    taps[0] = x
    attn = [] if keep_attention else None
    for j, blk in enumerate(ckpt.blocks, start=1):
        x, w = _block(x, blk, cfg.n_heads, keep_attention)
        _fault_check(x, j)
        taps[j] = x
        if keep_attention:
            attn.append(w)
    return TapGrid(taps=taps, attention=attn)


def final_norm(ckpt, x) -> np.ndarray:
    """The checkpoint's terminal layer norm, applied over the last axis."""
    return layer_norm(x, ckpt.lnf_g, ckpt.lnf_b, LN_EPS)
