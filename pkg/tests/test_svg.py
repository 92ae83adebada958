"""SVG figure rendering: well-formedness and determinism."""

import xml.etree.ElementTree as ET

import numpy as np

from cellpde.svg import PALETTE, Figure

NS = "{http://www.w3.org/2000/svg}"


def _figure():
    x = np.linspace(0.0, 1.0, 20)
    fig = Figure(title="demo", xlabel="x", ylabel="y")
    fig.band(x, np.sin(x) - 0.1, np.sin(x) + 0.1)
    fig.line(x, np.sin(x), label="data")
    fig.line(x, np.cos(x), dashed=True, label="model")
    fig.points([0.2, 0.5], [0.3, 0.6], color=PALETTE[1], label="samples")
    return fig


def test_render_is_valid_svg_11():
    root = ET.fromstring(_figure().render())
    assert root.tag == f"{NS}svg"
    assert root.get("version") == "1.1"


def test_render_contains_expected_elements():
    root = ET.fromstring(_figure().render())
    tags = [el.tag for el in root.iter()]
    assert tags.count(f"{NS}polyline") == 2
    assert f"{NS}polygon" in tags
    assert tags.count(f"{NS}circle") == 2
    texts = [el.text for el in root.iter(f"{NS}text")]
    assert "demo" in texts and "data" in texts and "model" in texts
    dashed = [el for el in root.iter(f"{NS}polyline")
              if el.get("stroke-dasharray")]
    assert len(dashed) == 1


def test_render_is_deterministic():
    assert _figure().render() == _figure().render()


def test_render_skips_non_finite_points():
    fig = Figure()
    fig.line([0.0, 1.0, 2.0], [0.0, np.nan, 4.0])
    root = ET.fromstring(fig.render())
    poly = next(iter(root.iter(f"{NS}polyline")))
    assert len(poly.get("points").split()) == 2


def test_save_writes_file(tmp_path):
    path = _figure().save(tmp_path / "fig.svg")
    assert path.exists()
    assert path.read_text(encoding="utf-8").startswith("<?xml")
