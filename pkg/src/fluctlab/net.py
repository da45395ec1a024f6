"""Dense feed-forward autoencoder with hand-written forward and backward passes.

The network is a fixed chain of linear layers: an encoder half followed by a
decoder half, ReLU after every layer except the last layer of each half.
The default geometry is 2-64-32-1 (encoder) and 1-32-64-2 (decoder).  All
arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import SplitMix64

ENCODER_DIMS = (2, 64, 32, 1)
DECODER_DIMS = (1, 32, 64, 2)


class NumericOverflowError(FloatingPointError):
    """A forward pass produced a non-finite value; carries the layer index."""

    def __init__(self, layer: int):
        super().__init__(f"non-finite values in layer {layer}")
        self.layer = layer


@dataclass(frozen=True)
class ArchitectureSpec:
    encoder_dims: tuple[int, ...] = ENCODER_DIMS
    decoder_dims: tuple[int, ...] = DECODER_DIMS

    def __post_init__(self):
        object.__setattr__(self, "encoder_dims", tuple(int(d) for d in self.encoder_dims))
        object.__setattr__(self, "decoder_dims", tuple(int(d) for d in self.decoder_dims))
        if len(self.encoder_dims) < 2 or len(self.decoder_dims) < 2:
            raise ValueError("each half needs at least one layer")
        if any(d < 1 for d in self.encoder_dims + self.decoder_dims):
            raise ValueError("layer sizes must be positive")
        if self.encoder_dims[-1] != self.decoder_dims[0]:
            raise ValueError(
                f"latent size mismatch: encoder ends at {self.encoder_dims[-1]}, "
                f"decoder starts at {self.decoder_dims[0]}"
            )

    @property
    def encoder_layer_count(self) -> int:
        return len(self.encoder_dims) - 1

    @property
    def layer_shapes(self) -> tuple[tuple[int, int], ...]:
        """(in_dim, out_dim) per layer, encoder then decoder."""
        dims = list(zip(self.encoder_dims[:-1], self.encoder_dims[1:]))
        dims += list(zip(self.decoder_dims[:-1], self.decoder_dims[1:]))
        return tuple(dims)

    @property
    def relu_flags(self) -> tuple[bool, ...]:
        """True where ReLU follows the linear map (all but the last layer of each half)."""
        enc = len(self.encoder_dims) - 1
        dec = len(self.decoder_dims) - 1
        return tuple([True] * (enc - 1) + [False] + [True] * (dec - 1) + [False])

    @property
    def out_dims(self) -> tuple[int, ...]:
        return tuple(out for _, out in self.layer_shapes)

    @property
    def total_neurons(self) -> int:
        return sum(self.out_dims)

    @property
    def encoder_neurons(self) -> int:
        return sum(self.out_dims[: self.encoder_layer_count])

    @property
    def decoder_neurons(self) -> int:
        return sum(self.out_dims[self.encoder_layer_count :])

    def to_json_dict(self) -> dict:
        return {"encoder_dims": list(self.encoder_dims), "decoder_dims": list(self.decoder_dims)}

    @classmethod
    def from_json_dict(cls, d: dict) -> "ArchitectureSpec":
        return cls(tuple(d["encoder_dims"]), tuple(d["decoder_dims"]))


@dataclass
class LayerState:
    weights: np.ndarray  # (out_dim, in_dim)
    biases: np.ndarray  # (out_dim,)


@dataclass
class NetworkState:
    layers: list[LayerState]
    spec: ArchitectureSpec

    def clone(self) -> "NetworkState":
        return NetworkState(
            layers=[LayerState(l.weights.copy(), l.biases.copy()) for l in self.layers],
            spec=self.spec,
        )


@dataclass
class ForwardTrace:
    inputs: np.ndarray  # (n, in_dim)
    pre: list[np.ndarray]  # per-layer pre-activations, (n, out_dim)
    post: list[np.ndarray]  # per-layer post-activations, (n, out_dim)
    latent_index: int

    @property
    def latent(self) -> np.ndarray:
        return self.post[self.latent_index]

    @property
    def output(self) -> np.ndarray:
        return self.post[-1]


@dataclass
class GradientSet:
    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray]


def init(spec: ArchitectureSpec, seed: int) -> NetworkState:
    """Seeded initial state: weights uniform in +-sqrt(1/in_dim), biases zero.

    Draw order is frozen for reproducibility: layers first to last, each
    weight matrix row-major; biases consume no draws.
    """
    rng = SplitMix64(seed)
    layers = []
    for in_dim, out_dim in spec.layer_shapes:
        bound = (1.0 / in_dim) ** 0.5
        w = np.empty((out_dim, in_dim), dtype=np.float64)
        for r in range(out_dim):
            for c in range(in_dim):
                w[r, c] = rng.uniform(-bound, bound)
        layers.append(LayerState(weights=w, biases=np.zeros(out_dim, dtype=np.float64)))
    return NetworkState(layers=layers, spec=spec)


def _as_batch(inputs, in_dim: int) -> np.ndarray:
    arr = np.asarray(inputs, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != in_dim:
        raise ValueError(f"expected inputs of shape (n, {in_dim}), got {arr.shape}")
    return arr


def forward(net: NetworkState, inputs) -> ForwardTrace:
    """Run the full encoder/decoder chain; the trace keeps every intermediate.

    `inputs` is (n, 2) (a single (2,) point is promoted to a 1-row batch).
    Raises NumericOverflowError naming the first layer that produces a
    non-finite value.
    """
    x = _as_batch(inputs, net.spec.layer_shapes[0][0])
    if not np.isfinite(x).all():
        raise ValueError("inputs must be finite")
    relu = net.spec.relu_flags
    pre, post = [], []
    a = x
    for k, layer in enumerate(net.layers):
        z = a @ layer.weights.T + layer.biases
        if not np.isfinite(z).all():
            raise NumericOverflowError(k)
        a = np.maximum(z, 0.0) if relu[k] else z
        pre.append(z)
        post.append(a)
    return ForwardTrace(inputs=x, pre=pre, post=post, latent_index=net.spec.encoder_layer_count - 1)


def mse(targets, outputs) -> float:
    """Mean of squared differences over every scalar component (2n terms)."""
    t = np.asarray(targets, dtype=np.float64)
    o = np.asarray(outputs, dtype=np.float64)
    if t.shape != o.shape or t.size == 0:
        raise ValueError(f"targets {t.shape} and outputs {o.shape} must match and be non-empty")
    return float(np.mean((t - o) ** 2))


def backward(net: NetworkState, targets, trace: ForwardTrace) -> GradientSet:
    """Exact gradient of the batch-mean MSE for every weight and bias.

    The trace must come from `forward` on the same network and batch.
    ReLU's subgradient at 0 is taken as 0.
    """
    t = np.asarray(targets, dtype=np.float64)
    if t.ndim == 1:
        t = t.reshape(1, -1)
    n_layers = len(net.layers)
    if len(trace.pre) != n_layers or len(trace.post) != n_layers:
        raise ValueError("trace depth does not match network")
    if t.shape != trace.post[-1].shape:
        raise ValueError(f"targets {t.shape} do not match trace output {trace.post[-1].shape}")
    for k, layer in enumerate(net.layers):
        if trace.pre[k].shape[1] != layer.weights.shape[0]:
            raise ValueError(f"trace layer {k} width does not match network")

    relu = net.spec.relu_flags
    weight_grads = [np.empty(0)] * n_layers
    bias_grads = [np.empty(0)] * n_layers
    # d(mean over all t.size components)/d(output)
    g = (trace.post[-1] - t) * (2.0 / t.size)
    for k in range(n_layers - 1, -1, -1):
        if relu[k]:
            g = g * (trace.pre[k] > 0.0)
        a_prev = trace.inputs if k == 0 else trace.post[k - 1]
        weight_grads[k] = g.T @ a_prev
        bias_grads[k] = g.sum(axis=0)
        if k > 0:
            g = g @ net.layers[k].weights
    return GradientSet(weight_grads=weight_grads, bias_grads=bias_grads)
