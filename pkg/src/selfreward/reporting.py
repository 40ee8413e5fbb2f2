"""Run manifests, deterministic CSV output, and self-contained SVG plots.

Everything here is built for byte-for-byte reproducibility: fixed float
formatting, sorted JSON keys, no timestamps inside data files (wall-clock
lives only in the manifest), and SVG text assembled from the CSV alone.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__


class ConfigError(ValueError):
    """Invalid configuration value; the CLI maps this to exit code 2."""


def format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        return [], []
    return rows[0], rows[1:]


@dataclass
class RunManifest:
    """Self-describing record of one experiment run."""

    scenario: str
    preset: str
    seed: int
    config: dict
    outputs: list = field(default_factory=list)
    wall_clock_s: float = 0.0
    code_version: str = __version__

    def write(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "manifest.json"
        doc = {
            "scenario": self.scenario,
            "preset": self.preset,
            "seed": self.seed,
            "config": self.config,
            "outputs": sorted(str(p) for p in self.outputs),
            "wall_clock_s": self.wall_clock_s,
            "code_version": self.code_version,
        }
        path.write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")
        return path


@dataclass
class PlotSpec:
    """Declarative line/scatter plot from a CSV file."""

    input_csv: str
    x_column: str
    y_column: str
    output_svg: str
    series_column: str | None = None
    kind: str = "line"  # "line" or "scatter"
    title: str = ""


_SERIES_COLORS = ["#c02020", "#2040c0", "#208040", "#806020", "#703090", "#10a0a0"]

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 64, 20, 28, 46


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def emit_plot(spec: PlotSpec) -> Path:
    """Render the spec to a self-contained SVG; deterministic for fixed input."""
    header, raw_rows = read_csv(spec.input_csv)
    for col in (spec.x_column, spec.y_column):
        if raw_rows and col not in header:
            raise ConfigError(f"{spec.input_csv}: missing column {col!r}")
    if spec.series_column is not None and raw_rows and spec.series_column not in header:
        raise ConfigError(f"{spec.input_csv}: missing column {spec.series_column!r}")

    series: dict[str, list[tuple[float, float]]] = {}
    if raw_rows:
        xi, yi = header.index(spec.x_column), header.index(spec.y_column)
        si = header.index(spec.series_column) if spec.series_column else None
        for row in raw_rows:
            key = row[si] if si is not None else ""
            series.setdefault(key, []).append((float(row[xi]), float(row[yi])))

    xs = [p[0] for pts in series.values() for p in pts] or [0.0, 1.0]
    ys = [p[1] for pts in series.values() for p in pts] or [0.0, 1.0]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def px(x: float) -> float:
        return _ML + (x - x_lo) / (x_hi - x_lo) * (_W - _ML - _MR)

    def py(y: float) -> float:
        return _H - _MB - (y - y_lo) / (y_hi - y_lo) * (_H - _MT - _MB)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<line x1="{_ML}" y1="{_H - _MB}" x2="{_W - _MR}" y2="{_H - _MB}" '
        'stroke="black" stroke-width="1"/>',
        f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H - _MB}" '
        'stroke="black" stroke-width="1"/>',
    ]
    for t in _ticks(x_lo, x_hi):
        parts.append(
            f'<text x="{px(t):.1f}" y="{_H - _MB + 16}" font-size="10" '
            f'text-anchor="middle">{t:.4g}</text>')
    for t in _ticks(y_lo, y_hi):
        parts.append(
            f'<text x="{_ML - 6}" y="{py(t):.1f}" font-size="10" '
            f'text-anchor="end">{t:.4g}</text>')
    parts.append(
        f'<text x="{(_ML + _W - _MR) / 2:.1f}" y="{_H - 10}" font-size="12" '
        f'text-anchor="middle">{spec.x_column}</text>')
    parts.append(
        f'<text x="14" y="{(_MT + _H - _MB) / 2:.1f}" font-size="12" '
        f'text-anchor="middle" transform="rotate(-90 14 {(_MT + _H - _MB) / 2:.1f})">'
        f'{spec.y_column}</text>')
    if spec.title:
        parts.append(
            f'<text x="{_W / 2:.1f}" y="18" font-size="13" '
            f'text-anchor="middle">{spec.title}</text>')

    for idx, key in enumerate(sorted(series)):
        color = _SERIES_COLORS[idx % len(_SERIES_COLORS)]
        pts = sorted(series[key])
        if spec.kind == "line":
            coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts)
            parts.append(
                f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                f'points="{coords}"/>')
        else:
            for x, y in pts:
                parts.append(
                    f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="2.5" '
                    f'fill="{color}" fill-opacity="0.6"/>')
        if key:
            parts.append(
                f'<text x="{_W - _MR - 4}" y="{_MT + 14 + 14 * idx}" font-size="11" '
                f'text-anchor="end" fill="{color}">{key}</text>')

    parts.append("</svg>")
    out = Path(spec.output_svg)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return out
