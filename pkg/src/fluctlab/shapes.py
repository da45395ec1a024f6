"""Seeded synthesis of the eight 2D contour datasets.

Each dataset is `count` points sampled on one parametric contour:

* polygons (triangle .. octagon): the regular n-gon inscribed in the unit
  circle, first vertex at angle pi/2; samples are drawn uniformly on the
  perimeter and placed by arc-length interpolation along the edges.
* circle: (cos t, sin t), t uniform in [0, 2*pi).
* spiral: Archimedean, r(t) = t / (4*pi) for t uniform in [0, 4*pi] (two
  turns, radius growing 0 -> 1).

The sampled points are then affinely rescaled per axis into [-1, 1]^2
(`normalize_to_unit_box`).  All randomness comes from a SplitMix64 stream,
so (kind, count, seed) regenerates the dataset bit for bit.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import IO

import numpy as np

from .rng import SplitMix64


class ShapeKind(enum.Enum):
    TRIANGLE = "triangle"
    SQUARE = "square"
    PENTAGON = "pentagon"
    HEXAGON = "hexagon"
    HEPTAGON = "heptagon"
    OCTAGON = "octagon"
    CIRCLE = "circle"
    SPIRAL = "spiral"

    @property
    def vertex_count(self) -> int | None:
        """Vertex count for polygon kinds, None for circle/spiral."""
        return _POLYGON_VERTICES.get(self)

    @classmethod
    def from_name(cls, name: str) -> "ShapeKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown shape {name!r}; expected one of: {valid}") from None


_POLYGON_VERTICES = {
    ShapeKind.TRIANGLE: 3,
    ShapeKind.SQUARE: 4,
    ShapeKind.PENTAGON: 5,
    ShapeKind.HEXAGON: 6,
    ShapeKind.HEPTAGON: 7,
    ShapeKind.OCTAGON: 8,
}

SPIRAL_TURNS = 2  # theta spans [0, 4*pi]


@dataclass
class ShapeDataset:
    kind: ShapeKind
    points: np.ndarray  # (count, 2) float64, inside [-1, 1]^2
    seed: int
    count: int

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.shape != (self.count, 2):
            raise ValueError(
                f"points shape {self.points.shape} does not match count {self.count}"
            )


def polygon_vertices(n: int) -> np.ndarray:
    """Vertices of the regular n-gon inscribed in the unit circle.

    First vertex at angle pi/2, counter-clockwise order.  Returns (n, 2).
    """
    if n < 3:
        raise ValueError(f"polygon needs at least 3 vertices, got {n}")
    angles = math.pi / 2 + 2.0 * math.pi * np.arange(n) / n
    return np.column_stack([np.cos(angles), np.sin(angles)])


def circle_point(theta: float) -> tuple[float, float]:
    return (math.cos(theta), math.sin(theta))


def spiral_point(theta: float) -> tuple[float, float]:
    """Archimedean spiral point: radius theta/(4*pi), so r(0)=0 and r(4*pi)=1."""
    r = theta / (2.0 * SPIRAL_TURNS * math.pi)
    return (r * math.cos(theta), r * math.sin(theta))


def polygon_point(vertices: np.ndarray, t: float) -> tuple[float, float]:
    """Point at arc length t along the polygon boundary (t in [0, perimeter))."""
    n = len(vertices)
    side = float(np.linalg.norm(vertices[1] - vertices[0]))
    k = min(int(t // side), n - 1)
    frac = (t - k * side) / side
    a = vertices[k]
    b = vertices[(k + 1) % n]
    return (a[0] + frac * (b[0] - a[0]), a[1] + frac * (b[1] - a[1]))


def sample_contour(kind: ShapeKind, count: int, rng: SplitMix64) -> np.ndarray:
    """Raw contour samples before box normalization.  Returns (count, 2)."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    pts = np.empty((count, 2), dtype=np.float64)
    if kind is ShapeKind.CIRCLE:
        for i in range(count):
            pts[i] = circle_point(rng.uniform(0.0, 2.0 * math.pi))
    elif kind is ShapeKind.SPIRAL:
        for i in range(count):
            pts[i] = spiral_point(rng.uniform(0.0, 2.0 * SPIRAL_TURNS * math.pi))
    else:
        vertices = polygon_vertices(kind.vertex_count)
        side = float(np.linalg.norm(vertices[1] - vertices[0]))
        perimeter = side * len(vertices)
        for i in range(count):
            pts[i] = polygon_point(vertices, rng.uniform(0.0, perimeter))
    return pts


def normalize_to_unit_box(points: np.ndarray) -> np.ndarray:
    """Affine map per axis sending [min, max] to [-1, 1].

    A degenerate axis (max == min) maps to 0.  Endpoints land on -1 and 1
    exactly, which makes the map idempotent.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2 or points.shape[0] == 0:
        raise ValueError(f"expected a non-empty (n, 2) array, got shape {points.shape}")
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    out = np.empty_like(points)
    for axis in range(2):
        span = hi[axis] - lo[axis]
        if span == 0.0:
            out[:, axis] = 0.0
        else:
            out[:, axis] = (2.0 * points[:, axis] - (lo[axis] + hi[axis])) / span
    return out


def generate(kind: ShapeKind, count: int, seed: int) -> ShapeDataset:
    """Deterministic dataset of `count` points on the contour, in [-1, 1]^2."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    raw = sample_contour(kind, count, SplitMix64(seed))
    return ShapeDataset(kind=kind, points=normalize_to_unit_box(raw), seed=seed, count=count)


class CsvWriteError(OSError):
    """Raised when a CSV export fails mid-write; carries the bytes written so far."""

    def __init__(self, bytes_written: int, cause: OSError):
        super().__init__(f"dataset export failed after {bytes_written} bytes: {cause}")
        self.bytes_written = bytes_written


def export_csv(dataset: ShapeDataset, destination: IO[str]) -> int:
    """Write `x,y` header plus one `%.8f,%.8f` row per point.

    Newline endings are `\\n`; returns the number of bytes written.
    """
    written = 0
    try:
        written += destination.write("x,y\n")
        for x, y in dataset.points:
            written += destination.write(f"{x:.8f},{y:.8f}\n")
    except OSError as exc:
        raise CsvWriteError(written, exc) from exc
    return written
