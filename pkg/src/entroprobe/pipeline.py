"""End-to-end analysis: corpus -> forward pass -> lens -> aggregate -> report."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import report
from ._accel import backend_name
from .analysis import (
    DEFAULT_BINS,
    EntropyAggregate,
    EntropyMatrix,
    accumulate,
    distribution_view,
    exact_quantiles,
    finalize,
    horizontal_view,
    merge,
    vertical_view,
)
from .checkpoint import Checkpoint, load_checkpoint
from .corpus import CorpusSpec, SequenceRecord, ingest
from .errors import InvalidInputError
from .lens import LensMode, lens_sequence
from .model import forward_with_taps
from .tokenizer import load_vocab

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    checkpoint: Path
    vocab: Path
    merges: Path
    corpus: Path
    format: str = "lines"
    text_field: str = "text"
    sample_size: int = 30_000
    seed: int = 0
    seq_len: int = 40
    lens_mode: str = LensMode.FINAL_NORM.value
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)
    bins: int = DEFAULT_BINS
    out: Path = Path("runs")
    plot_layers: tuple[int, ...] | None = None
    plot_positions: tuple[int, ...] | None = None
    exact_quantiles: bool = False
    run_id: str | None = None
    n_heads: int | None = None

    def validate(self) -> None:
        for name in ("checkpoint", "vocab", "merges", "corpus"):
            p = Path(getattr(self, name))
            if not p.is_file():
                raise InvalidInputError(f"{name} file not found: {p}")
        LensMode(self.lens_mode)
        if self.workers < 1:
            raise InvalidInputError("workers must be at least 1")
        if self.bins < 1:
            raise InvalidInputError("bins must be at least 1")
        CorpusSpec(Path(self.corpus), self.format, self.sample_size, self.seed, self.seq_len, self.text_field)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Path):
                v = str(v)
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    def derived_run_id(self) -> str:
        if self.run_id:
            return self.run_id
        key = {k: v for k, v in self.to_dict().items() if k not in ("workers", "out", "run_id")}
        return hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:12]


def _default_layers(n_layers: int) -> tuple[int, ...]:
    return tuple(sorted({0, n_layers // 4, n_layers // 2, (3 * n_layers) // 4, n_layers}))


def _default_positions(n: int) -> tuple[int, ...]:
    return tuple(sorted({1, max(1, n // 4), max(1, n // 2), max(1, (3 * n) // 4), n}))


def analyze_sequences(
    ckpt: Checkpoint,
    records: list[SequenceRecord],
    mode=LensMode.FINAL_NORM,
    workers: int = 1,
    bins: int = DEFAULT_BINS,
    keep_raw: bool = False,
    progress=None,
) -> tuple[EntropyAggregate, np.ndarray | None]:
    """Fan sequences out to ``workers`` threads and merge in worker order.

    Sequence ``k`` goes to worker ``k % workers``. Returns the merged
    aggregate and, with ``keep_raw``, the raw entropies ``(seqs, L+1, N)``.
    """
    if not records:
        raise InvalidInputError("no sequences to analyze")
    n = len(records[0].tokens)
    cfg = ckpt.config
    raw = np.empty((len(records), cfg.n_layers + 1, n)) if keep_raw else None

    def work(w: int) -> EntropyAggregate:
        agg = EntropyAggregate.empty(cfg.n_layers, n, cfg.vocab_size, bins)
        for k in range(w, len(records), workers):
            rec = records[k]
            grid = forward_with_taps(ckpt, rec.tokens)
            lg = lens_sequence(ckpt, grid, rec.tokens, mode, continuation=rec.continuation)
            accumulate(agg, lg)
            if raw is not None:
                raw[k] = lg.entropy
            if progress is not None:
                progress(k)
        return agg

    if workers == 1:
        parts = [work(0)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, range(workers)))
    total = parts[0]
    for part in parts[1:]:
        total = merge(total, part)
    return total, raw


@dataclass
class RunResult:
    run_dir: Path
    matrix: EntropyMatrix
    aggregate: EntropyAggregate
    meta: dict
    paths: dict[str, Path]

    def summary(self) -> dict:
        m = self.matrix
        final = m.error_rate[m.n_layers]
        cnt = m.error_count[m.n_layers].sum()
        den = m.error_denominator[m.n_layers].sum()
        return {
            "sequences": int(m.count[0, 0]),
            "final_layer_final_position_entropy_bits": float(m.mean[m.n_layers, -1]),
            "final_layer_error_rate": float(cnt / den) if den else float("nan"),
            "final_layer_error_rate_by_position_min": float(np.nanmin(final)) if np.isfinite(final).any() else float("nan"),
        }


def write_bundle(run_dir: Path, agg: EntropyAggregate, matrix: EntropyMatrix, meta: dict,
                 plot_layers=None, plot_positions=None, raw: np.ndarray | None = None) -> dict[str, Path]:
    """Write the CSV/JSON/SVG report set into ``run_dir``."""
    run_dir = Path(run_dir)
    L, n = matrix.n_layers, matrix.n_positions
    layers = tuple(plot_layers) if plot_layers else _default_layers(L)
    positions = tuple(plot_positions) if plot_positions else _default_positions(n)
    paths: dict[str, Path] = {}
    paths["entropy"], paths["errors"] = report.write_matrices(matrix, run_dir, meta)

    views = [distribution_view(agg, i, j) for j in range(L + 1) for i in range(1, n + 1)]
    exact = None
    if raw is not None:
        exact = {(j, i): exact_quantiles(raw[:, j, i - 1]) for j in range(L + 1) for i in range(1, n + 1)}
        np.save(run_dir / "raw_entropy_bits.npy", raw)
        paths["raw"] = run_dir / "raw_entropy_bits.npy"
    paths["distributions"] = report.write_distributions(
        views, run_dir / "distributions.json", meta, agg.upper, exact
    )

    plots = run_dir / "plots"
    h_series = [report.LineSeries(f"layer {j}", *_xy(horizontal_view(matrix, j), "mean")) for j in layers]
    paths["entropy_vs_position"] = plots / "entropy_vs_position.svg"
    report.render_lines(h_series, "token position", "mean entropy (bits)", paths["entropy_vs_position"],
                        title="Average conditional entropy by position", meta=meta)
    e_series = [report.LineSeries(f"layer {j}", *_xy(horizontal_view(matrix, j), "error_rate")) for j in layers]
    paths["error_vs_position"] = plots / "error_vs_position.svg"
    report.render_lines(e_series, "token position", "top-1 error rate", paths["error_vs_position"],
                        title="Prediction error by position", meta=meta)
    v_series = [report.LineSeries(f"position {i}", *_xy(vertical_view(matrix, i), "mean")) for i in positions]
    paths["entropy_vs_layer"] = plots / "entropy_vs_layer.svg"
    report.render_lines(v_series, "layer", "mean entropy (bits)", paths["entropy_vs_layer"],
                        title="Average conditional entropy by layer", meta=meta)
    ridges = [distribution_view(agg, n, j) for j in range(L + 1)]
    paths["ridgeline"] = plots / "ridgeline_final_token.svg"
    report.render_ridgeline(ridges, paths["ridgeline"], upper=agg.upper,
                            title=f"Entropy distribution at position {n} by layer", meta=meta)
    return paths


def _xy(series, attr):
    return series.index.astype(float), getattr(series, attr)


def run_analysis(cfg: RunConfig, timestamp: str, progress=None) -> RunResult:
    cfg.validate()
    vocab = load_vocab(cfg.vocab, cfg.merges)
    ckpt = load_checkpoint(cfg.checkpoint, n_heads=cfg.n_heads)
    if vocab.size != ckpt.config.vocab_size:
        raise InvalidInputError(
            f"vocabulary has {vocab.size} tokens but the checkpoint embeds {ckpt.config.vocab_size}"
        )
    if cfg.seq_len > ckpt.config.n_ctx:
        raise InvalidInputError(f"seq_len {cfg.seq_len} exceeds context length {ckpt.config.n_ctx}")
    spec = CorpusSpec(Path(cfg.corpus), cfg.format, cfg.sample_size, cfg.seed, cfg.seq_len, cfg.text_field)
    corpus = ingest(spec, vocab)

    agg, raw = analyze_sequences(ckpt, corpus.records, cfg.lens_mode, cfg.workers, cfg.bins,
                                 keep_raw=cfg.exact_quantiles, progress=progress)
    matrix = finalize(agg)

    run_id = cfg.derived_run_id()
    meta = {
        "model": Path(cfg.checkpoint).stem,
        "lens_mode": LensMode(cfg.lens_mode).value,
        "seq_len": cfg.seq_len,
        "seed": cfg.seed,
        "sentences_read": corpus.read,
        "sentences_sampled": corpus.sampled,
        "sentences_kept": corpus.kept,
        "n_layers": ckpt.config.n_layers,
        "vocab_size": ckpt.config.vocab_size,
        "bins": cfg.bins,
        "run_id": run_id,
        "timestamp": timestamp,
    }
    run_dir = Path(cfg.out) / f"run-{run_id}"
    run_dir.mkdir(parents=True, exist_ok=True)
    paths = write_bundle(run_dir, agg, matrix, meta, cfg.plot_layers, cfg.plot_positions, raw)
    full_meta = dict(meta, config=cfg.to_dict(), backend=backend_name())
    result = RunResult(run_dir, matrix, agg, full_meta, paths)
    full_meta["summary"] = result.summary()
    paths["meta"] = report.write_meta(full_meta, run_dir / "meta.json")
    return result
