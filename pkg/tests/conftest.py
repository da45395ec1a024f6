import numpy as np
import pytest

from fluctlab.net import ArchitectureSpec
from fluctlab.runfile import RunManifest, write_run
from fluctlab.shapes import ShapeKind
from fluctlab.train import EpochSnapshot, RunConfig


TINY_ARCH = ArchitectureSpec(encoder_dims=(2, 4, 3, 1), decoder_dims=(1, 3, 4, 2))

# filled in by tests/test_acceptance.py, echoed after the run
ACCEPTANCE_VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture
def tiny_arch():
    return TINY_ARCH


def make_snapshot(arch, epoch, loss, rng=None, fill=None):
    """Random (or constant-filled) snapshot with f32-representable values."""

    def block(shape):
        if fill is not None:
            return np.full(shape, fill, dtype=np.float64)
        return rng.uniform(-1, 1, size=shape).astype(np.float32).astype(np.float64)

    shapes = arch.layer_shapes
    return EpochSnapshot(
        epoch=epoch,
        loss=loss,
        weights=[block((o, i)) for i, o in shapes],
        biases=[block((o,)) for _, o in shapes],
        weight_grads=[block((o, i)) for i, o in shapes],
        bias_grads=[block((o,)) for _, o in shapes],
        activation_means=[block((o,)) for _, o in shapes],
    )


def make_manifest(arch=TINY_ARCH, shape=ShapeKind.CIRCLE, lr=0.01, epochs=3,
                  data_seed=1, init_seed=2, capture_every=1):
    config = RunConfig(
        shape=shape,
        learning_rate=lr,
        epochs=epochs,
        data_seed=data_seed,
        init_seed=init_seed,
        capture_every=capture_every,
    )
    return RunManifest(config=config, architecture=arch)


def write_synthetic_run(path, arch=TINY_ARCH, snapshots=None, seed=0, count=3, **manifest_kw):
    """Small hand-built run file; returns the snapshots written."""
    if snapshots is None:
        rng = np.random.default_rng(seed)
        snapshots = [make_snapshot(arch, e + 1, 1.0 / (e + 1), rng=rng) for e in range(count)]
    manifest = make_manifest(arch=arch, epochs=len(snapshots), **manifest_kw)
    write_run(manifest, snapshots, path)
    return snapshots
