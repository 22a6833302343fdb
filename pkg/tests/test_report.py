import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from entroprobe.analysis import EntropyAggregate, accumulate, distribution_view, finalize
from entroprobe.errors import EmptyCorpusError, InvalidInputError
from entroprobe.lens import LensGrid
from entroprobe.report import (
    ENTROPY_HEADER,
    LineSeries,
    nice_ticks,
    read_entropy_csv,
    render_lines,
    render_ridgeline,
    write_distributions,
    write_matrices,
)

SVG = "{http://www.w3.org/2000/svg}"
META = {"model": "toy", "lens_mode": "final_norm", "timestamp": "2024-01-01T00:00:00+00:00"}


def make_matrix(n_layers=2, n=3, seed=0):
    rng = np.random.default_rng(seed)
    agg = EntropyAggregate.empty(n_layers, n, 32)
    for _ in range(4):
        ent = rng.uniform(0, 5, (n_layers + 1, n))
        accumulate(agg, LensGrid(None, ent, np.zeros(ent.shape, np.int64),
                                 rng.random(ent.shape) < 0.5, np.ones(n, bool)))
    return agg, finalize(agg)


def test_csv_rows(tmp_path):
    _, m = make_matrix()
    ent, err = write_matrices(m, tmp_path, META)
    lines = ent.read_text().split("\n")
    data = [ln for ln in lines if ln and not ln.startswith("#")]
    assert data[0] == ",".join(ENTROPY_HEADER)
    assert len(data) - 1 == 9
    assert data[1].startswith("0,1,")
    assert "\r" not in ent.read_text() and err.exists()
    assert re.fullmatch(r"0,1,\d+\.\d{6},\d+\.\d{6},\d+\.\d{6},4", data[1])


def test_csv_metadata_comments(tmp_path):
    _, m = make_matrix()
    ent, _ = write_matrices(m, tmp_path, META)
    assert '# lens_mode: "final_norm"' in ent.read_text()


def test_csv_deterministic(tmp_path):
    _, m = make_matrix()
    a, _ = write_matrices(m, tmp_path / "a", META)
    b, _ = write_matrices(m, tmp_path / "b", META)
    assert a.read_bytes() == b.read_bytes()


def test_csv_roundtrip(tmp_path):
    _, m = make_matrix()
    ent, _ = write_matrices(m, tmp_path, META)
    back = read_entropy_csv(ent)
    np.testing.assert_array_equal(back["mean_entropy_bits"], np.round(m.mean, 6))
    np.testing.assert_array_equal(back["stdev_bits"], np.round(m.stdev, 6))
    np.testing.assert_array_equal(back["count"], m.count)


def test_empty_matrix_refused(tmp_path):
    _, m = make_matrix()
    m.count[:] = 0
    with pytest.raises(EmptyCorpusError):
        write_matrices(m, tmp_path)


def test_distributions_json(tmp_path):
    import json

    agg, _ = make_matrix()
    views = [distribution_view(agg, 3, j) for j in range(3)]
    p = write_distributions(views, tmp_path / "d.json", META, agg.upper)
    data = json.loads(p.read_text())
    assert data["bins"] == 128 and len(data["cells"]) == 3
    assert sum(data["cells"][0]["counts"]) == 4
    assert set(data["cells"][0]["quantiles"]) == {"5", "25", "50", "75", "95"}


def _polylines(svg):
    return ET.fromstring(svg.encode()).iter(f"{SVG}polyline")


def test_flat_series_is_horizontal():
    svg = render_lines([LineSeries("flat", np.arange(1, 6), np.full(5, 2.0))], "x", "y")
    (poly,) = list(_polylines(svg))
    ys = {p.split(",")[1] for p in poly.get("points").split()}
    assert len(ys) == 1


def test_two_series_two_legend_entries():
    s = [LineSeries("a", [1, 2, 3], [1, 2, 3]), LineSeries("b", [1, 2, 3], [3, 2, 1])]
    root = ET.fromstring(render_lines(s, "x", "y", meta=META).encode())
    legends = [g for g in root.iter(f"{SVG}g") if g.get("class") == "legend-entry"]
    assert len(legends) == 2
    assert len(list(root.iter(f"{SVG}polyline"))) == 2
    assert "final_norm" in root.find(f"{SVG}metadata").text


def test_lines_deterministic(tmp_path):
    s = [LineSeries("a", np.arange(10), np.sin(np.arange(10)))]
    assert render_lines(s, "x", "y", tmp_path / "a.svg") == render_lines(s, "x", "y", tmp_path / "b.svg")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_nan_points_skipped():
    svg = render_lines([LineSeries("a", [1, 2, 3], [1.0, np.nan, 2.0])], "x", "y")
    (poly,) = list(_polylines(svg))
    assert len(poly.get("points").split()) == 2


@pytest.mark.parametrize("series", [[], [LineSeries("one", [1], [1])]])
def test_lines_rejects_degenerate(series):
    with pytest.raises(InvalidInputError):
        render_lines(series, "x", "y")


def test_label_escaped():
    svg = render_lines([LineSeries("a<b & c", [0, 1], [0, 1])], "x", "y")
    ET.fromstring(svg.encode())


def _ridges(svg):
    root = ET.fromstring(svg.encode())
    return [p for p in root.iter(f"{SVG}path") if p.get("class") == "ridge"]


def test_ridgeline_one_per_layer():
    agg, _ = make_matrix()
    dists = [distribution_view(agg, 3, j) for j in range(3)]
    svg = render_ridgeline(dists, upper=agg.upper)
    assert len(_ridges(svg)) == 3
    assert svg.count(">layer ") == 3
    assert svg == render_ridgeline(dists, upper=agg.upper)


def test_ridgeline_single_spike():
    agg = EntropyAggregate.empty(0, 1, 32)
    for _ in range(3):
        accumulate(agg, LensGrid(None, np.array([[1.0]]), np.zeros((1, 1), np.int64),
                                 np.zeros((1, 1), bool), np.ones(1, bool)))
    (ridge,) = _ridges(render_ridgeline([distribution_view(agg, 1, 0)]))
    ys = [float(seg.split(",")[1]) for seg in re.findall(r"L[^LZ]+", ridge.get("d"))]
    base = max(ys)
    assert sum(y < base for y in ys) == 1


def test_ridgeline_empty():
    with pytest.raises(InvalidInputError):
        render_ridgeline([])


@pytest.mark.parametrize(
    "lo, hi, expected",
    [(0, 1, [0, 0.2, 0.4, 0.6, 0.8, 1.0]), (1, 40, [0, 10, 20, 30, 40]), (0, 15.617, [0, 5, 10, 15, 20])],
)
def test_nice_ticks(lo, hi, expected):
    assert nice_ticks(lo, hi) == pytest.approx(expected)
