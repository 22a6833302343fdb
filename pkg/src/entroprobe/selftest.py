"""Quick property checks against a seeded toy model, runnable from the CLI."""

from __future__ import annotations

import math
import tempfile
from pathlib import Path

import numpy as np

from .analysis import EntropyAggregate, accumulate, finalize, merge
from .checkpoint import load_checkpoint, save_toy_checkpoint
from .lens import LensMode, lens_sequence
from .model import ModelConfig, forward_with_taps
from .numerics import entropy_bits, entropy_bits_from_logits, inject_fault, softmax

TOY_CONFIG = ModelConfig(n_layers=2, d_model=16, n_heads=2, vocab_size=32, n_ctx=64)
TOY_SEED = 7


def check_softmax_stability() -> str | None:
    p = softmax(np.array([1000.0, 0.0]))
    if not np.all(np.isfinite(p)) or abs(p[0] - 1.0) > 1e-12:
        return f"softmax([1000, 0]) = {p}"
    h = entropy_bits_from_logits(np.array([1000.0, 0.0, -1000.0]))
    if not math.isfinite(h) or h < 0:
        return f"fused entropy of extreme logits = {h}"
    return None


def check_entropy_oracle(rng) -> str | None:
    for dim in (2, 16, 257):
        for _ in range(20):
            z = rng.normal(0, 3, size=dim)
            naive = entropy_bits(softmax(z))
            fused = entropy_bits_from_logits(z)
            if not abs(naive - fused) <= 1e-6:
                return f"dim {dim}: fused {fused} vs naive {naive}"
    return None


def check_entropy_bounds(ckpt, rng, n_seqs=20) -> str | None:
    cfg = ckpt.config
    top = math.log2(cfg.vocab_size) + 1e-9
    for mode in LensMode:
        for _ in range(n_seqs):
            toks = rng.integers(0, cfg.vocab_size, size=int(rng.integers(1, 24)))
            lg = lens_sequence(ckpt, forward_with_taps(ckpt, toks), toks, mode)
            if not (np.all(lg.entropy >= 0) and np.all(lg.entropy <= top)):
                return f"entropy outside [0, log2 M] for tokens {toks.tolist()} ({mode.value})"
    return None


def check_causality(ckpt, rng, trials=20) -> str | None:
    cfg = ckpt.config
    for _ in range(trials):
        n = int(rng.integers(2, 24))
        toks = rng.integers(0, cfg.vocab_size, size=n)
        k = int(rng.integers(1, n))
        other = toks.copy()
        other[k:] = rng.integers(0, cfg.vocab_size, size=n - k)
        a = forward_with_taps(ckpt, toks).taps
        b = forward_with_taps(ckpt, other).taps
        if not np.array_equal(a[:, :k], b[:, :k]):
            return f"prefix taps changed when perturbing from position {k + 1}"
    return None


def check_merge(ckpt, rng, n_seqs=10) -> str | None:
    cfg = ckpt.config
    n = 8
    grids = []
    for _ in range(n_seqs):
        toks = rng.integers(0, cfg.vocab_size, size=n)
        grids.append(lens_sequence(ckpt, forward_with_taps(ckpt, toks), toks))
    seq = EntropyAggregate.empty(cfg.n_layers, n, cfg.vocab_size)
    for g in grids:
        accumulate(seq, g)
    half = n_seqs // 2
    a = EntropyAggregate.empty(cfg.n_layers, n, cfg.vocab_size)
    b = EntropyAggregate.empty(cfg.n_layers, n, cfg.vocab_size)
    for g in grids[:half]:
        accumulate(a, g)
    for g in grids[half:]:
        accumulate(b, g)
    m1, m2 = finalize(seq), finalize(merge(a, b))
    if not np.allclose(m1.mean, m2.mean, rtol=0, atol=1e-9):
        return "merged means differ from sequential accumulation"
    if merge(a, b) != merge(b, a):
        return "merge is not commutative"
    return None


def check_determinism(ckpt, rng) -> str | None:
    toks = rng.integers(0, ckpt.config.vocab_size, size=12)
    a = forward_with_taps(ckpt, toks).taps
    b = forward_with_taps(ckpt, toks).taps
    if not np.array_equal(a, b):
        return "forward pass is not bit-reproducible"
    la = lens_sequence(ckpt, forward_with_taps(ckpt, toks), toks)
    lb = lens_sequence(ckpt, forward_with_taps(ckpt, toks), toks)
    if not (np.array_equal(la.entropy, lb.entropy) and np.array_equal(la.top1, lb.top1)):
        return "lens output is not bit-reproducible"
    return None


def run_selftest(fault: str | None = None, out=print) -> bool:
    """Run every check; print one line per check. True iff all pass."""
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "toy.safetensors"
        save_toy_checkpoint(TOY_CONFIG, TOY_SEED, path)
        ckpt = load_checkpoint(path)

    checks = [
        ("softmax stabilization", lambda rng: check_softmax_stability()),
        ("entropy oracle", check_entropy_oracle),
        ("entropy bounds", lambda rng: check_entropy_bounds(ckpt, rng)),
        ("causality", lambda rng: check_causality(ckpt, rng)),
        ("merge", lambda rng: check_merge(ckpt, rng)),
        ("determinism", lambda rng: check_determinism(ckpt, rng)),
    ]
    ok = True

    def run_all():
        nonlocal ok
        for name, fn in checks:
            try:
                problem = fn(np.random.default_rng(1234))
            except Exception as exc:  # a crash is a failed check, not an abort
                problem = f"{type(exc).__name__}: {exc}"
            out(f"{'PASS' if problem is None else 'FAIL'} {name}" + ("" if problem is None else f": {problem}"))
            ok = ok and problem is None

    if fault:
        with inject_fault(fault):
            run_all()
    else:
        run_all()
    return ok
