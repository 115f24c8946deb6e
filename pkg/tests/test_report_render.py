"""Canonical report serialization and quick-look rendering."""

import json

import numpy as np
import pytest

from hxkit.envi_io import HyperCube
from hxkit.render import render, write_image
from hxkit.report import (AnalysisReport, emit_report, format_number,
                          parse_report_json, sha256_file)

from .synth import default_header


def _report():
    rep = AnalysisReport(tool="demo", parameters={"alpha": 0.5, "mode": "fast"})
    rep.metrics = {"rmse": 0.12345678901234, "count": 42, "ratio": 1e-9}
    rep.add_table("per_band", ["band", "value"], [[0, 1.5], [1, 2.25]])
    return rep


def test_json_reemit_byte_identical():
    rep = _report()
    text = rep.to_json_text()
    doc = parse_report_json(text)
    rebuilt = AnalysisReport(tool=doc["tool"], parameters=doc["parameters"],
                             metrics=doc["metrics"], tables=doc["tables"],
                             inputs=doc["inputs"])
    assert rebuilt.to_json_text() == text


def test_json_sorted_keys_and_float_format():
    text = _report().to_json_text()
    assert text.index('"metrics"') < text.index('"parameters"')
    assert "0.123456789" in text  # %.10g
    assert "1e-09" in text


def test_nonfinite_becomes_null():
    rep = AnalysisReport(tool="t", metrics={"bad": float("nan"), "inf": float("inf")})
    doc = json.loads(rep.to_json_text())
    assert doc["metrics"]["bad"] is None
    assert doc["metrics"]["inf"] is None


def test_html_contains_every_metric():
    rep = _report()
    html_text = rep.to_html_text()
    for key, value in rep.metrics.items():
        assert key in html_text
        assert format_number(value) in html_text
    for row in rep.tables["per_band"]["rows"]:
        for cell in row:
            assert format_number(cell) in html_text
    assert "<script" not in html_text


def test_empty_report_valid(tmp_path):
    rep = AnalysisReport(tool="empty")
    paths = emit_report(rep, tmp_path, "empty")
    assert json.loads(paths[0].read_text())["tool"] == "empty"
    assert "<html>" in paths[1].read_text()


def test_report_input_digests(tmp_path):
    f = tmp_path / "x.bin"
    f.write_bytes(b"abc")
    rep = AnalysisReport(tool="t")
    rep.add_input(f)
    assert rep.inputs[str(f)] == sha256_file(f)
    assert len(rep.inputs[str(f)]) == 64


def test_no_timestamp_by_default(monkeypatch):
    from hxkit.report import default_timestamp

    monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)
    assert default_timestamp() is None
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    assert default_timestamp() == "1970-01-01T00:00:00Z"


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def _cube(values):
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return HyperCube(default_header(arr.shape[0], arr.shape[1], arr.shape[2]), arr)


def test_render_constant_band_midpoint():
    image = render(_cube(np.full((3, 3), 5.0)), band=0)
    assert np.all(image == 128)


def test_render_minmax_endpoints():
    image = render(_cube(np.array([[0.0, 0.5], [0.75, 1.0]])), band=0)
    assert image[0, 0] == 0
    assert image[1, 1] == 255


def test_render_stddev2_clamps():
    values = np.zeros((10, 10))
    values[0, 0] = 100.0  # extreme outlier clamps at mu + 2 sigma
    image = render(_cube(values), band=0, stretch="stddev2")
    assert image[0, 0] == 255
    assert image[5, 5] < 128


def test_render_rgb_shape():
    rng = np.random.default_rng(0)
    cube = _cube(rng.random((4, 5, 3)))
    image = render(cube, rgb=(0, 1, 2))
    assert image.shape == (4, 5, 3)


def test_render_argument_validation():
    cube = _cube(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        render(cube)
    with pytest.raises(ValueError):
        render(cube, band=0, rgb=(0, 0, 0))
    with pytest.raises(ValueError):
        render(cube, band=5)


def test_write_pgm_ppm(tmp_path):
    gray = np.arange(6, dtype=np.uint8).reshape(2, 3)
    p = write_image(gray, tmp_path / "g.pgm")
    data = p.read_bytes()
    assert data.startswith(b"P5\n3 2\n255\n")
    assert data.endswith(bytes(range(6)))

    rgb = np.zeros((2, 2, 3), dtype=np.uint8)
    p = write_image(rgb, tmp_path / "c.ppm")
    assert p.read_bytes().startswith(b"P6\n2 2\n255\n")


def test_write_png_when_available(tmp_path):
    pytest.importorskip("PIL")
    gray = np.full((4, 4), 77, dtype=np.uint8)
    p = write_image(gray, tmp_path / "g.png")
    assert p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
