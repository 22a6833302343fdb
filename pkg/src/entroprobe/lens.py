"""Logit lens: read residual-stream vectors as next-token distributions."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericFaultError, RangeError, ShapeError
from .model import TapGrid, final_norm
from .numerics import entropy_top1, softmax


class LensMode(str, enum.Enum):
    RAW = "raw"
    FINAL_NORM = "final_norm"


def _mode(mode) -> LensMode:
    try:
        return LensMode(mode)
    except ValueError:
        raise InvalidInputError(f"unknown lens mode {mode!r}") from None


@dataclass(frozen=True)
class LensRecord:
    layer: int
    position: int  # 1-based
    entropy_bits: float
    top1: int
    correct: bool | None  # None when the next token is unknown


def unembed_logits(ckpt, y, mode=LensMode.FINAL_NORM) -> np.ndarray:
    """Tied unembedding logits ``W_E @ y`` (optionally after the final norm).

    ``y`` may be a single vector or a stack of row vectors.
    """
    y = np.asarray(y, dtype=np.float32)
    if not np.all(np.isfinite(y)):
        raise NumericFaultError("lens input contains NaN or Inf")
    if _mode(mode) is LensMode.FINAL_NORM:
        y = final_norm(ckpt, y)
    return y @ ckpt.wte.T


def unembed(ckpt, y, mode=LensMode.FINAL_NORM) -> np.ndarray:
    """Vocabulary distribution for one residual vector."""
    return softmax(unembed_logits(ckpt, y, mode))


@dataclass
class LensGrid:
    """Lens output for one sequence; arrays are ``(n_layers + 1, n_tokens)``.

    ``correct`` is only meaningful where ``has_target`` is set for the column.
    """

    mode: LensMode
    entropy: np.ndarray  # float64, bits
    top1: np.ndarray  # int64
    correct: np.ndarray  # bool
    has_target: np.ndarray  # bool, (n_tokens,)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entropy.shape

    def records(self) -> list[LensRecord]:
        n_l, n = self.entropy.shape
        return [
            LensRecord(
                layer=j,
                position=i + 1,
                entropy_bits=float(self.entropy[j, i]),
                top1=int(self.top1[j, i]),
                correct=bool(self.correct[j, i]) if self.has_target[i] else None,
            )
            for j in range(n_l)
            for i in range(n)
        ]


def lens_sequence(ckpt, grid: TapGrid, tokens, mode=LensMode.FINAL_NORM, continuation=None) -> LensGrid:
    """Entropy, top-1 token and top-1 correctness at every (layer, position).

    The target at position ``i`` is ``tokens[i + 1]``; at the last position it
    is ``continuation`` when provided.
    """
    mode = _mode(mode)
    toks = np.asarray(tokens, dtype=np.int64).reshape(-1)
    taps = grid.taps
    if taps.ndim != 3 or taps.shape[1] != toks.size:
        raise ShapeError(f"tap grid covers {taps.shape[1] if taps.ndim == 3 else '?'} positions, got {toks.size} tokens")
    n_l, n, _ = taps.shape

    targets = np.full(n, -1, dtype=np.int64)
    targets[:-1] = toks[1:]
    if continuation is not None:
        targets[-1] = int(continuation)
    has_target = targets >= 0

    ent = np.empty((n_l, n), dtype=np.float64)
    top = np.empty((n_l, n), dtype=np.int64)
    for j in range(n_l):
        logits = unembed_logits(ckpt, taps[j], mode)
        ent[j], top[j] = entropy_top1(logits)
    correct = (top == targets[None, :]) & has_target[None, :]
    return LensGrid(mode=mode, entropy=ent, top1=top, correct=correct, has_target=has_target)


def topk(p, k: int) -> list[tuple[int, float]]:
    """Highest-probability tokens, descending, ties broken by lower id."""
    p = np.asarray(p, dtype=np.float64)
    if not 1 <= k <= p.size:
        raise RangeError(f"k={k} outside [1, {p.size}]")
    # stable sort on -p keeps lower ids first among equal probabilities
    order = np.argsort(-p, kind="stable")[:k]
    return [(int(i), float(p[i])) for i in order]
