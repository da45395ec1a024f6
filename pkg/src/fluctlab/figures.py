"""Desk-scale figures and tables: reconstruction scatter plots, fluctuation
histograms, and summary tables, emitted as standalone SVG / markdown / CSV
with byte-deterministic output (no plotting library)."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import IO

import numpy as np

from .analysis import ANALYSIS_CHANNELS, HALVES, FluctuationReport
from .net import LayerState, NetworkState, forward, mse
from .runfile import RunAccessor, read_run
from .shapes import ShapeDataset, ShapeKind

DATA_FRAME = 1.2  # scatter plots cover [-1.2, 1.2]^2
ORIGINAL_COLOR = "#1f2d3d"
RECONSTRUCTED_COLOR = "#e0482e"
ENCODER_COLOR = "#3c6fb0"
DECODER_COLOR = "#b06f3c"

_XML_DECL = '<?xml version="1.0" encoding="UTF-8"?>\n'


@dataclass
class FigureSpec:
    title: str
    x_label: str = "x"
    y_label: str = "y"
    width: int = 800
    height: int = 600
    path: str | None = None

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("canvas size must be positive")


@dataclass
class ReconstructionResult:
    shape: ShapeKind
    learning_rate: float
    original: np.ndarray  # (n, 2)
    reconstructed: np.ndarray  # (n, 2)
    final_mse: float

    def __post_init__(self):
        self.original = np.asarray(self.original, dtype=np.float64)
        self.reconstructed = np.asarray(self.reconstructed, dtype=np.float64)
        if self.original.shape != self.reconstructed.shape:
            raise ValueError(
                f"original {self.original.shape} and reconstructed "
                f"{self.reconstructed.shape} must have equal shapes"
            )


def reconstruct(run: str | Path | IO[bytes] | RunAccessor, dataset: ShapeDataset) -> ReconstructionResult:
    """Load the final network from a run file and reconstruct the dataset."""
    if isinstance(run, RunAccessor):
        acc, owns = run, False
    else:
        _, acc = read_run(run)
        owns = True
    try:
        manifest = acc.manifest
        if not manifest.complete or len(acc) == 0:
            raise ValueError("run file is incomplete; cannot reconstruct")
        cfg = manifest.config
        if cfg.shape is not dataset.kind or cfg.data_seed != dataset.seed:
            raise ValueError(
                f"dataset ({dataset.kind.value}, seed {dataset.seed}) does not match "
                f"run manifest ({cfg.shape.value}, seed {cfg.data_seed})"
            )
        snap = acc.snapshot(len(acc) - 1)
        net = NetworkState(
            layers=[LayerState(w, b) for w, b in zip(snap.weights, snap.biases)],
            spec=manifest.architecture,
        )
        output = forward(net, dataset.points).output
        return ReconstructionResult(
            shape=dataset.kind,
            learning_rate=cfg.learning_rate,
            original=dataset.points,
            reconstructed=output,
            final_mse=mse(dataset.points, output),
        )
    finally:
        if owns:
            acc.close()


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def scatter_svg(result: ReconstructionResult, spec: FigureSpec) -> bytes:
    """Original vs reconstructed points on an equal-aspect [-1.2, 1.2]^2 frame.

    Points outside the frame are clipped onto its border so every marker
    stays inside the viewBox.
    """
    if result.original.size == 0:
        raise ValueError("nothing to plot: empty point sets")
    if not (np.isfinite(result.original).all() and np.isfinite(result.reconstructed).all()):
        raise ValueError("figure coordinates must be finite")

    w, h = spec.width, spec.height
    m_left, m_right, m_top, m_bottom = 60, 20, 50, 45
    side = min(w - m_left - m_right, h - m_top - m_bottom)
    ox = m_left + (w - m_left - m_right - side) / 2.0
    oy = m_top + (h - m_top - m_bottom - side) / 2.0

    def to_px(x: float, y: float) -> tuple[float, float]:
        x = min(max(x, -DATA_FRAME), DATA_FRAME)
        y = min(max(y, -DATA_FRAME), DATA_FRAME)
        px = ox + (x + DATA_FRAME) / (2 * DATA_FRAME) * side
        py = oy + (DATA_FRAME - y) / (2 * DATA_FRAME) * side
        return px, py

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        '<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>',
        f'<text x="{w / 2:.1f}" y="28" text-anchor="middle" font-size="18" '
        f'font-family="sans-serif">{_escape(spec.title)}</text>',
        f'<rect x="{ox:.2f}" y="{oy:.2f}" width="{side:.2f}" height="{side:.2f}" '
        'fill="none" stroke="#444444" stroke-width="1"/>',
    ]
    for tick in (-1.0, 0.0, 1.0):
        tx, _ = to_px(tick, 0.0)
        _, ty = to_px(0.0, tick)
        lines.append(
            f'<line x1="{tx:.2f}" y1="{oy + side:.2f}" x2="{tx:.2f}" '
            f'y2="{oy + side + 5:.2f}" stroke="#444444" stroke-width="1"/>'
        )
        lines.append(
            f'<text x="{tx:.2f}" y="{oy + side + 18:.2f}" text-anchor="middle" '
            f'font-size="11" font-family="sans-serif">{tick:g}</text>'
        )
        lines.append(
            f'<line x1="{ox - 5:.2f}" y1="{ty:.2f}" x2="{ox:.2f}" y2="{ty:.2f}" '
            'stroke="#444444" stroke-width="1"/>'
        )
        lines.append(
            f'<text x="{ox - 8:.2f}" y="{ty + 4:.2f}" text-anchor="end" '
            f'font-size="11" font-family="sans-serif">{tick:g}</text>'
        )
    lines.append(
        f'<text x="{ox + side / 2:.2f}" y="{oy + side + 36:.2f}" text-anchor="middle" '
        f'font-size="13" font-family="sans-serif">{_escape(spec.x_label)}</text>'
    )
    lines.append(
        f'<text x="{ox - 40:.2f}" y="{oy + side / 2:.2f}" text-anchor="middle" '
        f'font-size="13" font-family="sans-serif" '
        f'transform="rotate(-90 {ox - 40:.2f} {oy + side / 2:.2f})">{_escape(spec.y_label)}</text>'
    )
    for x, y in result.original:
        px, py = to_px(float(x), float(y))
        lines.append(
            f'<circle class="m-orig" cx="{px:.2f}" cy="{py:.2f}" r="2.5" '
            f'fill="{ORIGINAL_COLOR}" fill-opacity="0.75"/>'
        )
    for x, y in result.reconstructed:
        px, py = to_px(float(x), float(y))
        lines.append(
            f'<circle class="m-reco" cx="{px:.2f}" cy="{py:.2f}" r="2.5" '
            f'fill="{RECONSTRUCTED_COLOR}" fill-opacity="0.75"/>'
        )
    lx = ox + side - 150
    for i, (label, color) in enumerate((("original", ORIGINAL_COLOR), ("reconstructed", RECONSTRUCTED_COLOR))):
        ly = oy + 16 + 18 * i
        lines.append(
            f'<circle class="legend-swatch" cx="{lx:.2f}" cy="{ly:.2f}" r="4" fill="{color}"/>'
        )
        lines.append(
            f'<text x="{lx + 10:.2f}" y="{ly + 4:.2f}" font-size="12" '
            f'font-family="sans-serif">{label}</text>'
        )
    lines.append("</svg>")
    return (_XML_DECL + "\n".join(lines) + "\n").encode("utf-8")


def _hist_panel(
    lines: list[str],
    edges: list[float],
    counts: list[int],
    x0: float,
    y0: float,
    pw: float,
    ph: float,
    color: str,
    caption: str,
) -> None:
    max_count = max(counts)
    lines.append(
        f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{pw:.2f}" height="{ph:.2f}" '
        'fill="none" stroke="#444444" stroke-width="1"/>'
    )
    lines.append(
        f'<text x="{x0 + pw / 2:.2f}" y="{y0 - 6:.2f}" text-anchor="middle" '
        f'font-size="13" font-family="sans-serif">{_escape(caption)}</text>'
    )
    degenerate = edges[0] == edges[-1]
    span = (edges[-1] - edges[0]) or 1.0
    for i, count in enumerate(counts):
        if degenerate:
            bx, bw = x0, pw
        else:
            bx = x0 + (edges[i] - edges[0]) / span * pw
            bw = (edges[i + 1] - edges[i]) / span * pw
        bh = ph * count / max_count if max_count else 0.0
        lines.append(
            f'<rect class="bar" data-count="{count}" x="{bx:.2f}" y="{y0 + ph - bh:.2f}" '
            f'width="{bw:.2f}" height="{bh:.2f}" fill="{color}" stroke="#ffffff" '
            'stroke-width="0.5"/>'
        )
        if count > 0:
            lines.append(
                f'<text class="bar-label" x="{bx + bw / 2:.2f}" y="{y0 + ph - bh - 2:.2f}" '
                f'text-anchor="middle" font-size="8" font-family="sans-serif">{count}</text>'
            )
    n_ticks = min(5, len(edges))
    for j in np.linspace(0, len(edges) - 1, n_ticks).round().astype(int):
        tx = x0 if degenerate else x0 + (edges[j] - edges[0]) / span * pw
        lines.append(
            f'<line x1="{tx:.2f}" y1="{y0 + ph:.2f}" x2="{tx:.2f}" y2="{y0 + ph + 4:.2f}" '
            'stroke="#444444" stroke-width="1"/>'
        )
        lines.append(
            f'<text x="{tx:.2f}" y="{y0 + ph + 15:.2f}" text-anchor="middle" '
            f'font-size="9" font-family="sans-serif">{edges[j]:.3g}</text>'
        )


def hist_svg(report: FluctuationReport, channel: str, spec: FigureSpec) -> bytes:
    """Side-by-side encoder/decoder spread histograms for one channel."""
    if channel not in report.channels:
        raise ValueError(f"channel {channel!r} not present in report")
    stats = report.channels[channel]
    w, h = spec.width, spec.height
    m_left, m_gap, m_right, m_top, m_bottom = 45, 50, 20, 70, 50
    pw = (w - m_left - m_gap - m_right) / 2.0
    ph = h - m_top - m_bottom
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        '<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>',
        f'<text x="{w / 2:.1f}" y="26" text-anchor="middle" font-size="17" '
        f'font-family="sans-serif">{_escape(spec.title)}</text>',
        f'<text x="{w / 2:.1f}" y="{h - 14:.1f}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif">{_escape(spec.x_label)}</text>',
    ]
    for i, (half, color) in enumerate(zip(HALVES, (ENCODER_COLOR, DECODER_COLOR))):
        hs = stats.halves[half]
        x0 = m_left + i * (pw + m_gap)
        _hist_panel(lines, hs.hist_edges, hs.hist_counts, x0, m_top, pw, ph, color, half)
    lines.append("</svg>")
    return (_XML_DECL + "\n".join(lines) + "\n").encode("utf-8")


def fluctuation_table(report: FluctuationReport) -> tuple[bytes, bytes]:
    """Per (channel, half) summary as (markdown bytes, CSV bytes).

    Both views are derived from the same report values; the CSV keeps full
    float precision.
    """
    header = [
        "channel",
        "half",
        "neurons",
        "inactive",
        "min_spread",
        "median_spread",
        "max_spread",
        "spread_of_spread",
    ]
    rows = []
    for ch in ANALYSIS_CHANNELS:
        stats = report.channels[ch]
        for half in HALVES:
            vals = np.array([s.spread for s in stats.spreads if s.neuron.half == half])
            hs = stats.halves[half]
            rows.append(
                [
                    ch,
                    half,
                    int(vals.size),
                    hs.inactive_count,
                    float(vals.min()),
                    float(np.median(vals)),
                    float(vals.max()),
                    hs.spread_of_spread,
                ]
            )
    md_lines = [
        "| " + " | ".join(header) + " |",
        "| " + " | ".join("---" for _ in header) + " |",
    ]
    for row in rows:
        cells = [f"{v:.9g}" if isinstance(v, float) else str(v) for v in row]
        md_lines.append("| " + " | ".join(cells) + " |")
    csv_lines = [",".join(header)]
    for row in rows:
        csv_lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    return (
        ("\n".join(md_lines) + "\n").encode("utf-8"),
        ("\n".join(csv_lines) + "\n").encode("utf-8"),
    )


_SVG_SIZE_RE = re.compile(rb'<svg[^>]*?\swidth="(\d+)"[^>]*?\sheight="(\d+)"')


def stack_svgs(children: list[bytes], title: str | None = None) -> bytes:
    """Stack standalone SVG documents vertically into one composite SVG."""
    if not children:
        raise ValueError("nothing to stack")
    sizes = []
    for child in children:
        m = _SVG_SIZE_RE.search(child)
        if m is None:
            raise ValueError("child SVG lacks integer width/height attributes")
        sizes.append((int(m.group(1)), int(m.group(2))))
    width = max(s[0] for s in sizes)
    header_h = 34 if title else 0
    height = header_h + sum(s[1] for s in sizes)
    parts = [
        _XML_DECL
        + f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">'
    ]
    if title:
        parts.append(
            f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-size="19" '
            f'font-family="sans-serif">{_escape(title)}</text>'
        )
    y = header_h
    for child, (cw, ch) in zip(children, sizes):
        body = child.decode("utf-8")
        if body.startswith("<?xml"):
            body = body[body.index("?>") + 2 :].lstrip()
        body = body.replace("<svg ", f'<svg x="0" y="{y}" ', 1)
        parts.append(body)
        y += ch
    parts.append("</svg>\n")
    return "\n".join(parts).encode("utf-8")
