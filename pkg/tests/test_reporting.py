"""Parameter round-trips, CSV determinism, manifests, SVG plots."""

import json

import numpy as np
import pytest

from selfreward.params import (
    ParamsParseError,
    ParamsVersionError,
    load_params,
    save_params,
)
from selfreward.reporting import (
    ConfigError,
    PlotSpec,
    RunManifest,
    emit_plot,
    read_csv,
    write_csv,
)


def test_params_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    params = {f"k/{i}": rng.normal(size=(3, 3)) for i in range(20)}
    assert sum(v.size for v in params.values()) == 180
    path = tmp_path / "p.json"
    save_params(path, params)
    loaded = load_params(path)
    assert set(loaded) == set(params)
    for name in params:
        assert loaded[name].shape == params[name].shape
        np.testing.assert_array_equal(loaded[name], params[name])


def test_params_truncated_file_reports_offset(tmp_path):
    path = tmp_path / "p.json"
    save_params(path, {"w": np.ones(3)})
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(ParamsParseError, match="byte offset"):
        load_params(path)


def test_params_unknown_version(tmp_path):
    path = tmp_path / "p.json"
    save_params(path, {"w": np.ones(2)})
    doc = json.loads(path.read_text())
    doc["format_version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(ParamsVersionError):
        load_params(path)


def test_params_not_a_document(tmp_path):
    path = tmp_path / "p.json"
    path.write_text('{"hello": 1}')
    with pytest.raises(ParamsParseError):
        load_params(path)


def test_csv_roundtrip_and_determinism(tmp_path):
    rows = [[0, 0.1, "a"], [1, 0.2, "b"]]
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(p1, ["i", "x", "s"], rows)
    write_csv(p2, ["i", "x", "s"], rows)
    assert p1.read_bytes() == p2.read_bytes()
    header, data = read_csv(p1)
    assert header == ["i", "x", "s"]
    assert data[0] == ["0", "0.1", "a"]


def test_float_formatting_roundtrips(tmp_path):
    value = 0.1 + 0.2  # repr keeps the exact double
    path = tmp_path / "f.csv"
    write_csv(path, ["x"], [[value]])
    _, data = read_csv(path)
    assert float(data[0][0]) == value


def test_manifest_contents(tmp_path):
    m = RunManifest(scenario="fish1d", preset="run", seed=7,
                    config={"steps": 10}, outputs=["trace.csv"])
    path = m.write(tmp_path)
    doc = json.loads(path.read_text())
    assert doc["scenario"] == "fish1d"
    assert doc["seed"] == 7
    assert doc["outputs"] == ["trace.csv"]
    assert "code_version" in doc


def make_csv(tmp_path, rows, header=("x", "y", "grp")):
    path = tmp_path / "data.csv"
    write_csv(path, list(header), rows)
    return path


def test_plot_deterministic(tmp_path):
    csv = make_csv(tmp_path, [[0, 1.0, "a"], [1, 2.0, "a"], [0, 3.0, "b"]])
    s1 = tmp_path / "p1.svg"
    s2 = tmp_path / "p2.svg"
    emit_plot(PlotSpec(input_csv=str(csv), x_column="x", y_column="y",
                       series_column="grp", output_svg=str(s1)))
    emit_plot(PlotSpec(input_csv=str(csv), x_column="x", y_column="y",
                       series_column="grp", output_svg=str(s2)))
    assert s1.read_bytes() == s2.read_bytes()
    body = s1.read_text()
    assert body.startswith("<svg")
    assert "http://www.w3.org/2000/svg" in body
    assert 'href' not in body  # self-contained: no external references


def test_plot_axis_labels_from_columns(tmp_path):
    csv = make_csv(tmp_path, [[0, 1.0, "a"]])
    out = tmp_path / "p.svg"
    emit_plot(PlotSpec(input_csv=str(csv), x_column="x", y_column="y",
                       output_svg=str(out)))
    body = out.read_text()
    assert ">x</text>" in body and ">y</text>" in body


def test_plot_missing_column_named(tmp_path):
    csv = make_csv(tmp_path, [[0, 1.0, "a"]])
    with pytest.raises(ConfigError, match="nope"):
        emit_plot(PlotSpec(input_csv=str(csv), x_column="nope", y_column="y",
                           output_svg=str(tmp_path / "p.svg")))


def test_plot_empty_csv_gives_empty_axes(tmp_path):
    csv = make_csv(tmp_path, [])
    out = tmp_path / "p.svg"
    emit_plot(PlotSpec(input_csv=str(csv), x_column="x", y_column="y",
                       output_svg=str(out)))
    assert out.read_text().startswith("<svg")


def test_plot_scatter_kind(tmp_path):
    csv = make_csv(tmp_path, [[0, 1.0, "a"], [1, 2.0, "a"]])
    out = tmp_path / "p.svg"
    emit_plot(PlotSpec(input_csv=str(csv), x_column="x", y_column="y",
                       output_svg=str(out), kind="scatter"))
    assert "<circle" in out.read_text()
