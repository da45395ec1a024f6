"""Seeded autoencoder training runs on synthetic 2D shapes, with full
per-epoch capture and per-neuron fluctuation analysis."""

from .analysis import (
    ANALYSIS_CHANNELS,
    FluctuationReport,
    NeuronId,
    NeuronSpread,
    analyze_run,
    detect_inactive,
    histogram,
    neuron_delta_series,
    spread,
    spread_of_spread,
)
from .figures import (
    FigureSpec,
    ReconstructionResult,
    fluctuation_table,
    hist_svg,
    reconstruct,
    scatter_svg,
)
from .net import (
    ArchitectureSpec,
    ForwardTrace,
    GradientSet,
    LayerState,
    NetworkState,
    backward,
    forward,
    init,
    mse,
)
from .rng import SplitMix64
from .runfile import (
    RunAccessor,
    RunManifest,
    RunWriter,
    read_run,
    standardize_channel,
    write_run,
)
from .shapes import ShapeDataset, ShapeKind, export_csv, generate, normalize_to_unit_box
from .train import (
    AdamParams,
    EpochSnapshot,
    OptimizerState,
    RunConfig,
    adam_step,
    probe_activations,
    train,
)

__version__ = "0.1.0"
