"""CSV/JSON serialisation and static SVG plots.

Every writer is byte-deterministic for fixed inputs: numbers are printed at
fixed precision, dict keys are sorted, line endings are LF, and the run
metadata (including the timestamp) is supplied by the caller.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .analysis import DistributionView, EntropyMatrix
from .errors import EmptyCorpusError, InvalidInputError

ENTROPY_HEADER = ["layer", "position", "mean_entropy_bits", "stdev_bits", "error_rate", "count"]
ERRORS_HEADER = ["layer", "position", "error_rate", "error_count", "denominator"]

PALETTE = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e",
           "#e6ab02", "#a6761d", "#666666", "#1f78b4", "#b2df8a"]


def _fmt(v: float) -> str:
    return "nan" if not math.isfinite(v) else f"{v:.6f}"


def _meta_comment_lines(meta: dict | None) -> list[str]:
    if not meta:
        return []
    return [f"# {k}: {json.dumps(meta[k], sort_keys=True)}" for k in sorted(meta)]


def _write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def _csv_text(meta, header, rows) -> str:
    buf = io.StringIO()
    for line in _meta_comment_lines(meta):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_matrices(m: EntropyMatrix, out_dir, meta: dict | None = None) -> tuple[Path, Path]:
    """Write ``entropy.csv`` and ``errors.csv``; one row per (layer, position)."""
    if m.mean.size == 0 or int(m.count.sum()) == 0:
        raise EmptyCorpusError("refusing to write an empty entropy matrix")
    out_dir = Path(out_dir)
    ent_rows, err_rows = [], []
    for j in range(m.n_layers + 1):
        for i in range(m.n_positions):
            ent_rows.append([j, i + 1, _fmt(m.mean[j, i]), _fmt(m.stdev[j, i]),
                             _fmt(m.error_rate[j, i]), int(m.count[j, i])])
            err_rows.append([j, i + 1, _fmt(m.error_rate[j, i]), int(m.error_count[j, i]),
                             int(m.error_denominator[j, i])])
    p1 = _write_text(out_dir / "entropy.csv", _csv_text(meta, ENTROPY_HEADER, ent_rows))
    p2 = _write_text(out_dir / "errors.csv", _csv_text(meta, ERRORS_HEADER, err_rows))
    return p1, p2


def read_entropy_csv(path) -> dict[str, np.ndarray]:
    """Parse ``entropy.csv`` back into ``(layers, positions)`` arrays."""
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").split("\n") if ln and not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    n_l = max(int(r["layer"]) for r in rows) + 1
    n = max(int(r["position"]) for r in rows)
    out = {k: np.full((n_l, n), np.nan) for k in ("mean_entropy_bits", "stdev_bits", "error_rate", "count")}
    for r in rows:
        j, i = int(r["layer"]), int(r["position"]) - 1
        for k in out:
            out[k][j, i] = float(r[k])
    return out


def distributions_payload(views: list[DistributionView], meta: dict | None, upper: float,
                          exact: dict | None = None) -> dict:
    cells = []
    for v in views:
        cell = {
            "layer": v.layer,
            "position": v.position,
            "count": int(v.counts.sum()),
            "counts": [int(c) for c in v.counts],
            "quantiles": {str(q): round(x, 9) for q, x in sorted(v.quantiles.items())},
        }
        if exact is not None and (v.layer, v.position) in exact:
            cell["exact_quantiles"] = {str(q): round(x, 9) for q, x in sorted(exact[(v.layer, v.position)].items())}
        cells.append(cell)
    bins = len(views[0].counts) if views else 0
    return {"meta": meta or {}, "upper_bits": upper, "bins": bins, "cells": cells}


def write_distributions(views, out_path, meta=None, upper=0.0, exact=None) -> Path:
    payload = distributions_payload(views, meta, upper, exact)
    return _write_text(Path(out_path), json.dumps(payload, sort_keys=True, indent=1) + "\n")


def write_meta(meta: dict, out_path) -> Path:
    return _write_text(Path(out_path), json.dumps(meta, sort_keys=True, indent=2) + "\n")


# --- SVG -----------------------------------------------------------------------


def nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    """Round tick values (1, 2, 5 x 10^k steps) covering [lo, hi]."""
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise InvalidInputError("axis range must be finite")
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(target, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = next(s * mag for s in (1, 2, 5, 10) if s * mag >= raw)
    start = math.floor(lo / step) * step
    ticks = []
    t = start
    while t <= hi + step * 1e-9:
        ticks.append(round(t, 10))
        t += step
    if ticks[-1] < hi:
        ticks.append(round(t, 10))
    return ticks


def _n(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _tick_label(v: float) -> str:
    return f"{v:g}"


def _svg_open(width, height, title, meta) -> list[str]:
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f"<title>{escape(title)}</title>",
    ]
    if meta:
        out.append(f"<metadata>{escape(json.dumps(meta, sort_keys=True))}</metadata>")
    out.append(f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>')
    return out


@dataclass
class LineSeries:
    label: str
    x: np.ndarray
    y: np.ndarray


def render_lines(series: list[LineSeries], xlabel: str, ylabel: str, path=None,
                 title: str = "", meta: dict | None = None) -> str:
    """One polyline per series with a legend. Non-finite points are skipped."""
    if not series:
        raise InvalidInputError("render_lines needs at least one series")
    for s in series:
        if len(s.x) < 2 or len(s.x) != len(s.y):
            raise InvalidInputError(f"series {s.label!r} needs at least two (x, y) points")
    width, height = 680, 420
    left, right, top, bottom = 64, 170, 40, 52
    pw, ph = width - left - right, height - top - bottom

    xs = np.concatenate([np.asarray(s.x, float) for s in series])
    ys = np.concatenate([np.asarray(s.y, float) for s in series])
    ys = ys[np.isfinite(ys)]
    if ys.size == 0:
        raise InvalidInputError("all series values are non-finite")
    xt = nice_ticks(float(xs.min()), float(xs.max()))
    ylo, yhi = float(ys.min()), float(ys.max())
    if yhi - ylo < 1e-12:
        ylo, yhi = ylo - 0.5, yhi + 0.5
    yt = nice_ticks(ylo, yhi)
    x0, x1, y0, y1 = xt[0], xt[-1], yt[0], yt[-1]

    def sx(v):
        return left + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return top + ph - (v - y0) / (y1 - y0) * ph

    out = _svg_open(width, height, title or ylabel, meta)
    if title:
        out.append(f'<text x="{width / 2:.2f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(f'<g stroke="#000000" stroke-width="1">'
               f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}"/>'
               f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}"/></g>')
    for t in xt:
        out.append(f'<line x1="{_n(sx(t))}" y1="{top + ph}" x2="{_n(sx(t))}" y2="{top + ph + 4}" stroke="#000000"/>'
                   f'<text x="{_n(sx(t))}" y="{top + ph + 16}" text-anchor="middle">{_tick_label(t)}</text>')
    for t in yt:
        out.append(f'<line x1="{left - 4}" y1="{_n(sy(t))}" x2="{left}" y2="{_n(sy(t))}" stroke="#000000"/>'
                   f'<text x="{left - 7}" y="{_n(sy(t) + 4)}" text-anchor="end">{_tick_label(t)}</text>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{height - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.2f})">{escape(ylabel)}</text>')

    for k, s in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{_n(sx(float(a)))},{_n(sy(float(b)))}"
                       for a, b in zip(s.x, s.y) if math.isfinite(float(b)))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{pts}"/>')
        ly = top + 10 + 18 * k
        lx = left + pw + 14
        out.append(f'<g class="legend-entry"><line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>'
                   f'<text x="{lx + 26}" y="{ly + 4}">{escape(s.label)}</text></g>')
    out.append("</svg>")
    svg = "\n".join(out) + "\n"
    if path is not None:
        _write_text(Path(path), svg)
    return svg


def render_ridgeline(dists: list[DistributionView], path=None, upper: float | None = None,
                     title: str = "", meta: dict | None = None) -> str:
    """Stacked filled densities, one row per layer, sharing an x-axis [0, upper]."""
    if not dists:
        raise InvalidInputError("render_ridgeline needs at least one distribution")
    upper = float(dists[0].edges[-1]) if upper is None else float(upper)
    row_h, overlap = 30, 1.8
    width = 640
    left, right, top, bottom = 80, 24, 44 + int(row_h * overlap), 48
    pw = width - left - right
    height = top + row_h * len(dists) + bottom

    def sx(v):
        return left + v / upper * pw

    out = _svg_open(width, height, title or "entropy distribution by layer", meta)
    if title:
        out.append(f'<text x="{width / 2:.2f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    for k, d in enumerate(dists):
        base = top + row_h * k
        peak = float(d.density.max())
        scale = (row_h * overlap / peak) if peak > 0 else 0.0
        centers = 0.5 * (d.edges[:-1] + d.edges[1:])
        pts = [f"M{_n(sx(float(d.edges[0])))},{_n(base)}"]
        pts += [f"L{_n(sx(float(c)))},{_n(base - float(v) * scale)}" for c, v in zip(centers, d.density)]
        pts.append(f"L{_n(sx(float(d.edges[-1])))},{_n(base)}Z")
        color = PALETTE[k % len(PALETTE)]
        out.append(f'<path class="ridge" d="{"".join(pts)}" fill="{color}" fill-opacity="0.55" '
                   f'stroke="#333333" stroke-width="0.8"/>')
        out.append(f'<text x="{left - 8}" y="{_n(base)}" text-anchor="end">layer {d.layer}</text>')
    axis_y = top + row_h * (len(dists) - 1) + 8
    out.append(f'<line x1="{left}" y1="{axis_y}" x2="{left + pw}" y2="{axis_y}" stroke="#000000"/>')
    for t in nice_ticks(0.0, upper):
        if t > upper + 1e-9:
            continue
        out.append(f'<line x1="{_n(sx(t))}" y1="{axis_y}" x2="{_n(sx(t))}" y2="{axis_y + 4}" stroke="#000000"/>'
                   f'<text x="{_n(sx(t))}" y="{axis_y + 16}" text-anchor="middle">{_tick_label(t)}</text>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{axis_y + 34}" text-anchor="middle">entropy (bits)</text>')
    out.append("</svg>")
    svg = "\n".join(out) + "\n"
    if path is not None:
        _write_text(Path(path), svg)
    return svg
