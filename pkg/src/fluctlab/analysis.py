"""Per-neuron fluctuation statistics over a captured run.

A neuron's fluctuation ("spread") is the population standard deviation of
its per-epoch delta multiset: for weight channels the deltas of every
incoming weight across all consecutive captured epochs pooled together,
for bias/activation/gradient channels the deltas of the neuron's scalar.
The network-level scalar is the spread of the spread: the population
standard deviation of the per-neuron spreads, reported separately for the
encoder and decoder halves.  Neurons whose spread falls below a threshold
epsilon are counted as inactive (no observable learning).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from .runfile import RunAccessor, read_run

ANALYSIS_CHANNELS = ("weights", "biases", "activations", "weight_grads", "bias_grads")
_STORAGE_NAME = {"activations": "activation_means"}

HALVES = ("encoder", "decoder")

DEFAULT_EPSILON = 1e-5
DEFAULT_BINS = 30
REPORT_SCHEMA_VERSION = 1


class InsufficientDataError(ValueError):
    """The run holds too few snapshots to form deltas."""


@dataclass(frozen=True, order=True)
class NeuronId:
    layer: int
    index: int
    half: str

    def to_json_dict(self) -> dict:
        return {"layer": self.layer, "index": self.index, "half": self.half}


@dataclass(frozen=True)
class NeuronSpread:
    neuron: NeuronId
    channel: str
    spread: float


@dataclass
class HalfStats:
    spread_of_spread: float
    inactive_count: int
    hist_edges: list[float]
    hist_counts: list[int]


@dataclass
class ChannelStats:
    spreads: list[NeuronSpread]
    inactive: list[NeuronId]
    halves: dict[str, HalfStats]


@dataclass
class FluctuationReport:
    shape: str
    learning_rate: float
    epochs: int
    snapshots: int
    capture_stride: int
    mode: str
    epsilon: float
    bins: int
    channels: dict[str, ChannelStats]

    def to_json_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "shape": self.shape,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "snapshots": self.snapshots,
            "capture_stride": self.capture_stride,
            "mode": self.mode,
            "epsilon": self.epsilon,
            "bins": self.bins,
            "channels": {
                ch: {
                    "spreads": [
                        {**s.neuron.to_json_dict(), "spread": s.spread} for s in stats.spreads
                    ],
                    "inactive": [n.to_json_dict() for n in stats.inactive],
                    "inactive_count": len(stats.inactive),
                    "halves": {
                        half: {
                            "spread_of_spread": hs.spread_of_spread,
                            "inactive_count": hs.inactive_count,
                            "hist_edges": hs.hist_edges,
                            "hist_counts": hs.hist_counts,
                        }
                        for half, hs in stats.halves.items()
                    },
                }
                for ch, stats in self.channels.items()
            },
        }

    def neuron_csv(self) -> str:
        """One row per (neuron, channel): layer, index, half, channel, spread, inactive."""
        lines = ["layer,index,half,channel,spread,inactive"]
        for ch in ANALYSIS_CHANNELS:
            stats = self.channels[ch]
            inactive = set(stats.inactive)
            for s in stats.spreads:
                flag = 1 if s.neuron in inactive else 0
                lines.append(
                    f"{s.neuron.layer},{s.neuron.index},{s.neuron.half},{ch},"
                    f"{s.spread!r},{flag}"
                )
        return "\n".join(lines) + "\n"


def spread(deltas) -> float:
    """Population standard deviation of a delta multiset."""
    arr = np.asarray(deltas, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError("spread of an empty sequence is undefined")
    return float(np.std(arr))


def _spread_values(spreads: Sequence) -> np.ndarray:
    vals = [s.spread if isinstance(s, NeuronSpread) else float(s) for s in spreads]
    return np.asarray(vals, dtype=np.float64)


def spread_of_spread(spreads: Sequence) -> float:
    """Population standard deviation across neurons of the per-neuron spreads.

    Values are sorted before the reduction so the result does not depend on
    neuron order, bit for bit.
    """
    vals = _spread_values(spreads)
    if vals.size == 0:
        raise ValueError("spread_of_spread of an empty sequence is undefined")
    return float(np.std(np.sort(vals)))


def detect_inactive(spreads: Sequence[NeuronSpread], epsilon: float) -> list[NeuronId]:
    """Neurons with spread < epsilon, sorted by (layer, index)."""
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    hits = [s.neuron for s in spreads if s.spread < epsilon]
    return sorted(hits, key=lambda n: (n.layer, n.index))


def histogram(spreads: Sequence, bins: int) -> tuple[list[float], list[int]]:
    """Uniform bins over [0, max spread]; bins are left-closed, right-open,
    with the last bin closed.  All-zero spreads collapse to one degenerate
    bin, as does a range too small to subdivide on the float64 grid."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    vals = _spread_values(spreads)
    if vals.size == 0:
        raise ValueError("histogram of an empty sequence is undefined")
    top = float(vals.max())
    if top == 0.0:
        return [0.0, 0.0], [int(vals.size)]
    edges = np.linspace(0.0, top, bins + 1)
    if np.any(np.diff(edges) <= 0.0):
        return [0.0, top], [int(vals.size)]
    counts, edges = np.histogram(vals, bins=bins, range=(0.0, top))
    return [float(e) for e in edges], [int(c) for c in counts]


def neuron_delta_series(run: RunAccessor, neuron: NeuronId, channel: str) -> np.ndarray:
    """Consecutive-epoch deltas for one neuron and channel, pooled flat.

    Weight channels pool the neuron's incoming row, so with k incoming
    weights and T snapshots the result has k*(T-1) entries.
    """
    if channel not in ANALYSIS_CHANNELS:
        raise ValueError(f"unknown channel {channel!r}; expected one of {ANALYSIS_CHANNELS}")
    if not run.manifest.complete:
        raise ValueError("run file is incomplete")
    if len(run) < 2:
        raise InsufficientDataError(f"need at least 2 snapshots, run has {len(run)}")
    series = run.neuron_series(neuron.layer, _STORAGE_NAME.get(channel, channel), neuron.index)
    return np.diff(series, axis=0).ravel()


def calibrate_epsilon(
    spread_values: Sequence[float],
    count_range: tuple[int, int],
    epsilon_range: tuple[float, float],
) -> float | None:
    """Smallest threshold inside epsilon_range whose inactive count lands in
    count_range, or None if no such threshold exists."""
    vals = np.sort(_spread_values(spread_values))
    lo, hi = epsilon_range
    candidates = [lo] + [
        float(np.nextafter(v, np.inf)) for v in vals if lo <= np.nextafter(v, np.inf) <= hi
    ] + [hi]
    for eps in sorted(set(candidates)):
        count = int(np.searchsorted(vals, eps, side="left"))
        if count_range[0] <= count <= count_range[1]:
            return eps
    return None


def _neuron_ids(arch) -> list[list[NeuronId]]:
    split = arch.encoder_layer_count
    ids = []
    for layer, out_dim in enumerate(arch.out_dims):
        half = "encoder" if layer < split else "decoder"
        ids.append([NeuronId(layer, i, half) for i in range(out_dim)])
    return ids


def analyze_run(
    run: str | Path | IO[bytes] | RunAccessor,
    epsilon: float = DEFAULT_EPSILON,
    bins: int = DEFAULT_BINS,
    mode: str = "delta",
) -> FluctuationReport:
    """Full fluctuation report for one complete run file.

    mode "delta" (default) measures spreads of consecutive-epoch deltas;
    mode "raw" measures spreads of the raw per-epoch values instead.
    """
    if mode not in ("delta", "raw"):
        raise ValueError(f"mode must be 'delta' or 'raw', got {mode!r}")
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    if isinstance(run, RunAccessor):
        acc, owns = run, False
    else:
        _, acc = read_run(run)
        owns = True
    try:
        if not acc.manifest.complete:
            raise ValueError("run file is incomplete; refusing to analyze")
        needed = 2 if mode == "delta" else 1
        if len(acc) < needed:
            raise InsufficientDataError(
                f"need at least {needed} snapshots for mode {mode!r}, run has {len(acc)}"
            )
        arch = acc.manifest.architecture
        ids = _neuron_ids(arch)
        channels: dict[str, ChannelStats] = {}
        for ch in ANALYSIS_CHANNELS:
            storage = _STORAGE_NAME.get(ch, ch)
            per_neuron: list[NeuronSpread] = []
            for layer in range(len(arch.layer_shapes)):
                series = acc.channel_series(layer, storage)
                data = np.diff(series, axis=0) if mode == "delta" else series
                axis = (0, 2) if data.ndim == 3 else 0
                vals = data.std(axis=axis)
                per_neuron.extend(
                    NeuronSpread(ids[layer][i], ch, float(v)) for i, v in enumerate(vals)
                )
            inactive = detect_inactive(per_neuron, epsilon)
            halves: dict[str, HalfStats] = {}
            for half in HALVES:
                subset = [s for s in per_neuron if s.neuron.half == half]
                edges, counts = histogram(subset, bins)
                halves[half] = HalfStats(
                    spread_of_spread=spread_of_spread(subset),
                    inactive_count=sum(1 for n in inactive if n.half == half),
                    hist_edges=edges,
                    hist_counts=counts,
                )
            channels[ch] = ChannelStats(spreads=per_neuron, inactive=inactive, halves=halves)
        cfg = acc.manifest.config
        return FluctuationReport(
            shape=cfg.shape.value,
            learning_rate=cfg.learning_rate,
            epochs=cfg.epochs,
            snapshots=len(acc),
            capture_stride=cfg.capture_every,
            mode=mode,
            epsilon=epsilon,
            bins=bins,
            channels=channels,
        )
    finally:
        if owns:
            acc.close()
