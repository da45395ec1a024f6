"""Full-batch Adam training with per-epoch capture.

One epoch = one forward/backward over the whole 500-point dataset followed
by one Adam step, so runs are deterministic and "per-epoch change" means
exactly one optimizer step.  After the step the network is probed on the
same dataset to record the post-step loss and per-neuron mean activations;
captured epochs emit an EpochSnapshot to the provided sink.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .net import (
    ArchitectureSpec,
    GradientSet,
    NetworkState,
    NumericOverflowError,
    backward,
    forward,
    init,
    mse,
)
from .shapes import ShapeDataset, ShapeKind, generate

TRAIN_SAMPLE_COUNT = 500
DEFAULT_LEARNING_RATES = (0.01, 0.001, 0.0001)


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss or gradient; carries the epoch."""

    def __init__(self, epoch: int, reason: str):
        super().__init__(f"run aborted at epoch {epoch}: {reason}")
        self.epoch = epoch


@dataclass(frozen=True)
class AdamParams:
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")

    def to_json_dict(self) -> dict:
        return {"beta1": self.beta1, "beta2": self.beta2, "epsilon": self.epsilon}

    @classmethod
    def from_json_dict(cls, d: dict) -> "AdamParams":
        return cls(beta1=d["beta1"], beta2=d["beta2"], epsilon=d["epsilon"])


@dataclass(frozen=True)
class RunConfig:
    shape: ShapeKind
    learning_rate: float
    epochs: int = 1000
    data_seed: int = 0
    init_seed: int = 0
    adam: AdamParams = field(default_factory=AdamParams)
    capture_every: int = 1

    def __post_init__(self):
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.capture_every < 1:
            raise ValueError("capture_every must be >= 1")

    def to_json_dict(self) -> dict:
        return {
            "shape": self.shape.value,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "data_seed": self.data_seed,
            "init_seed": self.init_seed,
            "adam": self.adam.to_json_dict(),
            "capture_every": self.capture_every,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "RunConfig":
        return cls(
            shape=ShapeKind(d["shape"]),
            learning_rate=d["learning_rate"],
            epochs=d["epochs"],
            data_seed=d["data_seed"],
            init_seed=d["init_seed"],
            adam=AdamParams.from_json_dict(d["adam"]),
            capture_every=d["capture_every"],
        )


@dataclass
class EpochSnapshot:
    """Everything captured for one epoch: post-step parameters, the full-batch
    gradients that produced the step, post-step per-neuron mean activations,
    and the post-step loss."""

    epoch: int
    loss: float
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray]
    activation_means: list[np.ndarray]


@dataclass
class OptimizerState:
    m_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_weights: list[np.ndarray]
    v_biases: list[np.ndarray]
    t: int = 0


def init_optimizer(net: NetworkState) -> OptimizerState:
    return OptimizerState(
        m_weights=[np.zeros_like(l.weights) for l in net.layers],
        m_biases=[np.zeros_like(l.biases) for l in net.layers],
        v_weights=[np.zeros_like(l.weights) for l in net.layers],
        v_biases=[np.zeros_like(l.biases) for l in net.layers],
    )


def adam_step(
    net: NetworkState,
    grads: GradientSet,
    opt: OptimizerState,
    lr: float,
    params: AdamParams,
) -> tuple[NetworkState, OptimizerState]:
    """One Adam update, in place: m and v track the moments, parameters move by
    -lr * m_hat / (sqrt(v_hat) + eps) with the usual 1/(1-beta^t) bias correction."""
    if len(grads.weight_grads) != len(net.layers):
        raise ValueError("gradient depth does not match network")
    for k, layer in enumerate(net.layers):
        if grads.weight_grads[k].shape != layer.weights.shape:
            raise ValueError(f"weight gradient shape mismatch at layer {k}")
        if grads.bias_grads[k].shape != layer.biases.shape:
            raise ValueError(f"bias gradient shape mismatch at layer {k}")
        if not (np.isfinite(grads.weight_grads[k]).all() and np.isfinite(grads.bias_grads[k]).all()):
            raise FloatingPointError(f"non-finite gradient at layer {k}")

    opt.t += 1
    b1, b2, eps = params.beta1, params.beta2, params.epsilon
    mc = 1.0 - b1**opt.t
    vc = 1.0 - b2**opt.t
    for k, layer in enumerate(net.layers):
        for p, g, m, v in (
            (layer.weights, grads.weight_grads[k], opt.m_weights[k], opt.v_weights[k]),
            (layer.biases, grads.bias_grads[k], opt.m_biases[k], opt.v_biases[k]),
        ):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr * (m / mc) / (np.sqrt(v / vc) + eps)
    return net, opt


def probe_activations(net: NetworkState, dataset: ShapeDataset | np.ndarray) -> list[np.ndarray]:
    """Per-layer, per-neuron mean post-activation over the full dataset."""
    pts = dataset.points if isinstance(dataset, ShapeDataset) else np.asarray(dataset)
    if pts.size == 0:
        raise ValueError("dataset must be non-empty")
    trace = forward(net, pts)
    return [p.mean(axis=0) for p in trace.post]


def train(
    config: RunConfig,
    capture_sink: Callable[[EpochSnapshot], None] | None = None,
) -> tuple[NetworkState, float]:
    """Run the configured training and emit snapshots to the sink.

    Snapshots are taken at every epoch e with e % capture_every == 0, plus
    epoch 1 always, so delta series start at the first step.  Returns the
    final network and the post-step loss of the last epoch.
    """
    dataset = generate(config.shape, TRAIN_SAMPLE_COUNT, config.data_seed)
    pts = dataset.points
    net = init(ArchitectureSpec(), config.init_seed)
    opt = init_optimizer(net)

    loss = float("nan")
    for epoch in range(1, config.epochs + 1):
        try:
            trace = forward(net, pts)
            grads = backward(net, pts, trace)
            adam_step(net, grads, opt, config.learning_rate, config.adam)
            probe = forward(net, pts)
        except (NumericOverflowError, FloatingPointError) as exc:
            raise TrainingDivergedError(epoch, str(exc)) from exc
        loss = mse(pts, probe.output)
        if not np.isfinite(loss):
            raise TrainingDivergedError(epoch, f"loss is {loss}")
        if capture_sink is not None and (epoch == 1 or epoch % config.capture_every == 0):
            capture_sink(
                EpochSnapshot(
                    epoch=epoch,
                    loss=loss,
                    weights=[l.weights.copy() for l in net.layers],
                    biases=[l.biases.copy() for l in net.layers],
                    weight_grads=[g.copy() for g in grads.weight_grads],
                    bias_grads=[g.copy() for g in grads.bias_grads],
                    activation_means=[p.mean(axis=0) for p in probe.post],
                )
            )
    return net, loss
