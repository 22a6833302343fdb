"""Command-line entry point: ``entroprobe {analyze,tokenize,selftest}``.

Any ``analyze`` flag can also be set through an environment variable named
``ENTROPROBE_`` + the flag in upper case with dashes as underscores, e.g.
``ENTROPROBE_CHECKPOINT`` or ``ENTROPROBE_SEQ_LEN``. Explicit flags win.
"""

from __future__ import annotations

import argparse
import datetime as dt
import logging
import os
import sys
import time
from pathlib import Path

from .errors import EntroprobeError
from .lens import LensMode

ENV_PREFIX = "ENTROPROBE_"


def _env(flag: str, default=None):
    return os.environ.get(ENV_PREFIX + flag.upper().replace("-", "_"), default)


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(",") if t.strip())


def _add_vocab_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--vocab", default=_env("vocab"), help="GPT-2 style token->id JSON")
    p.add_argument("--merges", default=_env("merges"), help="ranked BPE merges file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="entroprobe", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="run the layer/position entropy analysis")
    a.add_argument("--checkpoint", default=_env("checkpoint"), help="GPT-2 safetensors archive")
    _add_vocab_args(a)
    a.add_argument("--corpus", default=_env("corpus"), help="one sentence per line, or JSONL")
    a.add_argument("--format", choices=("lines", "jsonl"), default=_env("format", "lines"))
    a.add_argument("--text-field", default=_env("text-field", "text"), help="JSONL field holding the sentence")
    a.add_argument("--sample-size", type=int, default=int(_env("sample-size", 30_000)))
    a.add_argument("--seed", type=int, default=int(_env("seed", 0)))
    a.add_argument("--seq-len", type=int, default=int(_env("seq-len", 40)))
    a.add_argument("--lens-mode", choices=[m.value for m in LensMode],
                   default=_env("lens-mode", LensMode.FINAL_NORM.value))
    a.add_argument("--workers", type=int, default=int(_env("workers", os.cpu_count() or 1)))
    a.add_argument("--bins", type=int, default=int(_env("bins", 128)))
    a.add_argument("--out", default=_env("out", "runs"))
    a.add_argument("--plot-layers", type=_int_list, default=_int_list(_env("plot-layers", "")) or None)
    a.add_argument("--plot-positions", type=_int_list, default=_int_list(_env("plot-positions", "")) or None)
    a.add_argument("--exact-quantiles", action="store_true",
                   default=_env("exact-quantiles", "") not in ("", "0", "false"))
    a.add_argument("--run-id", default=_env("run-id"))
    a.add_argument("--n-heads", type=int, default=int(_env("n-heads")) if _env("n-heads") else None,
                   help="override the head count when the archive does not record it")
    a.add_argument("--timestamp", default=_env("timestamp"),
                   help="timestamp recorded in outputs (default: now, UTC)")

    t = sub.add_parser("tokenize", help="print token ids, one per line")
    _add_vocab_args(t)
    t.add_argument("text")

    s = sub.add_parser("selftest", help="property checks on a seeded toy model")
    s.add_argument("--inject-fault", default=None, help=argparse.SUPPRESS)
    return parser


def cmd_analyze(args) -> int:
    from .pipeline import RunConfig, run_analysis

    for name in ("checkpoint", "vocab", "merges", "corpus"):
        if not getattr(args, name):
            print(f"error: --{name} is required", file=sys.stderr)
            return 2
    cfg = RunConfig(
        checkpoint=Path(args.checkpoint), vocab=Path(args.vocab), merges=Path(args.merges),
        corpus=Path(args.corpus), format=args.format, text_field=args.text_field,
        sample_size=args.sample_size, seed=args.seed, seq_len=args.seq_len,
        lens_mode=args.lens_mode, workers=args.workers, bins=args.bins, out=Path(args.out),
        plot_layers=args.plot_layers, plot_positions=args.plot_positions,
        exact_quantiles=args.exact_quantiles, run_id=args.run_id, n_heads=args.n_heads,
    )
    stamp = args.timestamp or dt.datetime.now(dt.timezone.utc).replace(microsecond=0).isoformat()
    started = time.monotonic()
    done = 0

    def progress(_k):
        nonlocal done
        done += 1
        if done % 25 == 0:
            print(f"  analyzed {done} sequences ({time.monotonic() - started:.1f}s)", file=sys.stderr)

    result = run_analysis(cfg, stamp, progress=progress)
    s = result.summary()
    print(f"run directory: {result.run_dir}")
    print(f"sequences kept: {s['sequences']} (read {result.meta['sentences_read']}, "
          f"sampled {result.meta['sentences_sampled']})")
    print(f"lens mode: {result.meta['lens_mode']}")
    print(f"mean final-layer entropy at position {cfg.seq_len}: "
          f"{s['final_layer_final_position_entropy_bits']:.4f} bits")
    print(f"final-layer top-1 error rate: {s['final_layer_error_rate']:.4f}")
    print(f"elapsed: {time.monotonic() - started:.1f}s")
    return 0


def cmd_tokenize(args) -> int:
    from .tokenizer import encode, load_vocab

    if not args.vocab or not args.merges:
        print("error: --vocab and --merges are required", file=sys.stderr)
        return 2
    vocab = load_vocab(args.vocab, args.merges)
    for i in encode(vocab, args.text):
        print(i)
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    started = time.monotonic()
    ok = run_selftest(fault=args.inject_fault)
    print(f"selftest {'passed' if ok else 'FAILED'} in {time.monotonic() - started:.1f}s")
    return 0 if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"analyze": cmd_analyze, "tokenize": cmd_tokenize, "selftest": cmd_selftest}[args.command]
    try:
        return handler(args)
    except (EntroprobeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
