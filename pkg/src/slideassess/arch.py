"""Reference network descriptors and seeded weight materialization.

Two reduced MobileNet-style stacks ship as named presets: a standard 3x3
stride-2 stem followed by depthwise-separable blocks that double the channel
count at each stride-2 block, then global average pooling and an 8-way dense
head with softmax.  "slidenet-128" takes 128x128 input, "slidenet-224" takes
224x224 input and adds one more block.

Convolution weights are materialized from a seed with He-style
initialization; the head starts at zero (uniform predictions) and is meant
to be trained with the head fine-tuner.  The same (name, seed) pair always
yields bit-identical containers.
"""

from __future__ import annotations

import numpy as np

from .errors import UsageError
from .labels import LABELS
from .model_io import DEFAULT_SCALE, DEFAULT_SHIFT, LayerSpec, ModelContainer

DEFAULT_SEED = 20240

def _conv(kind, kernel, cin, cout, stride=1, activation="relu"):
    return LayerSpec(
        kind=kind, kernel=kernel, in_channels=cin, out_channels=cout,
        stride=stride, activation=activation,
    )


def _separable_stack(input_size: int, block_channels: list[tuple[int, int, int]]) -> tuple[LayerSpec, ...]:
    layers = [_conv("standard", 3, 3, block_channels[0][0], stride=2)]
    for cin, cout, stride in block_channels:
        layers.append(_conv("depthwise", 3, cin, cin, stride=stride))
        layers.append(_conv("pointwise", 1, cin, cout))
    head_in = block_channels[-1][1]
    layers.append(LayerSpec(kind="global-average-pool"))
    layers.append(LayerSpec(kind="dense", in_channels=head_in, out_channels=len(LABELS)))
    layers.append(LayerSpec(kind="softmax"))
    return tuple(layers)


REFERENCE_ARCHS: dict[str, tuple[int, tuple[LayerSpec, ...]]] = {
    "slidenet-128": (
        128,
        _separable_stack(128, [(8, 16, 1), (16, 32, 2), (32, 64, 2), (64, 128, 2)]),
    ),
    "slidenet-224": (
        224,
        _separable_stack(224, [(8, 16, 1), (16, 32, 2), (32, 64, 2), (64, 128, 2), (128, 256, 2)]),
    ),
}


def reference_names() -> tuple[str, ...]:
    return tuple(REFERENCE_ARCHS)


def build_reference_model(name: str, seed: int = DEFAULT_SEED) -> ModelContainer:
    """Materialize a named preset with seeded conv weights and a zero head."""
    if name not in REFERENCE_ARCHS:
        raise UsageError(f"unknown reference architecture {name!r}; choose from {', '.join(REFERENCE_ARCHS)}")
    input_size, layers = REFERENCE_ARCHS[name]
    seeds = np.random.SeedSequence([seed, input_size]).spawn(len(layers))
    tensors = []
    for spec, seq in zip(layers, seeds):
        rng = np.random.default_rng(seq)
        per_layer = []
        for shape in spec.tensor_shapes():
            if spec.kind == "dense":
                per_layer.append(np.zeros(shape, dtype=np.float32))
            else:
                fan_in = spec.kernel * spec.kernel * (1 if spec.kind == "depthwise" else spec.in_channels)
                std = np.sqrt(2.0 / fan_in)
                per_layer.append(rng.normal(0.0, std, size=shape).astype(np.float32))
        tensors.append(tuple(per_layer))
    model = ModelContainer(
        name=name,
        labels=LABELS,
        input_size=input_size,
        scale=DEFAULT_SCALE,
        shift=DEFAULT_SHIFT,
        layers=layers,
        tensors=tuple(tensors),
        engine="dwnet",
        extra=(("init_seed", seed),),
    )
    model.validate()
    return model
