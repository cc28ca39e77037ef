import os
import sys
from pathlib import Path

# Single-threaded BLAS keeps per-tile results bit-identical regardless of
# how many worker threads classify concurrently (set before numpy loads).
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

sys.path.insert(0, str(Path(__file__).parent))

import numpy as np
import pytest

from slideassess import arch
from slideassess.labels import LABELS
from slideassess.model_io import LayerSpec, ModelContainer


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_model(head_weights=None, head_bias=None, input_size=8, name="tiny"):
    """A minimal full classifier: pointwise mix, pool, 8-way head, softmax."""
    layers = (
        LayerSpec(kind="pointwise", kernel=1, in_channels=3, out_channels=4, activation="relu"),
        LayerSpec(kind="global-average-pool"),
        LayerSpec(kind="dense", in_channels=4, out_channels=8),
        LayerSpec(kind="softmax"),
    )
    gen = np.random.default_rng(7)
    pw = gen.normal(0, 0.5, size=(3, 4)).astype(np.float32)
    w = np.zeros((4, 8), dtype=np.float32) if head_weights is None else np.asarray(head_weights, np.float32)
    b = np.zeros(8, dtype=np.float32) if head_bias is None else np.asarray(head_bias, np.float32)
    model = ModelContainer(
        name=name,
        labels=LABELS,
        input_size=input_size,
        scale=1.0 / 127.5,
        shift=-1.0,
        layers=layers,
        tensors=((pw,), (), (w, b), ()),
        engine="dwnet",
    )
    model.validate()
    return model


@pytest.fixture
def small_model():
    return tiny_model()


@pytest.fixture(scope="session")
def slidenet128():
    return arch.build_reference_model("slidenet-128")
