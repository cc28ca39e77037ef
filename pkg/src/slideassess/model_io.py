"""Self-contained binary model container ("SLNW" format).

Layout: 4-byte magic ``SLNW``, little-endian u32 version (=1), little-endian
u32 byte length of a UTF-8 JSON architecture descriptor, the descriptor
itself, then the raw float32 (little-endian) weight tensors concatenated in
layer order.  Spatial kernels are stored [ky][kx][in][out] (depthwise
kernels [ky][kx][channel]); dense layers store the weight matrix [in][out]
followed by the bias [out].

The descriptor carries the ordered label list, the input size, the
preprocessing constants (value = pixel * scale + shift) and the layer list,
so a container fully defines its network: architecture is data, not code.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    DescriptorError,
    LabelCountError,
    ShapeMismatchError,
    UnsupportedVersionError,
)

MAGIC = b"SLNW"
VERSION = 1

SPATIAL_KINDS = ("standard", "depthwise", "pointwise")
LAYER_KINDS = SPATIAL_KINDS + ("dense", "global-average-pool", "softmax")
ACTIVATIONS = ("relu", "none")

# pixel -> (pixel / 127.5) - 1, mapping [0, 255] onto [-1, 1]
DEFAULT_SCALE = 1.0 / 127.5
DEFAULT_SHIFT = -1.0


@dataclass(frozen=True)
class LayerSpec:
    """One layer of the architecture descriptor."""

    kind: str
    kernel: int = 1
    in_channels: int = 0
    out_channels: int = 0
    stride: int = 1
    activation: str = "none"

    def validate(self) -> None:
        if self.kind not in LAYER_KINDS:
            raise DescriptorError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise DescriptorError(f"unknown activation {self.activation!r}")
        if self.stride not in (1, 2):
            raise DescriptorError(f"stride must be 1 or 2, got {self.stride}")
        if self.kind in SPATIAL_KINDS:
            if self.kernel < 1 or self.kernel % 2 == 0:
                raise DescriptorError(f"spatial kernel must be odd and positive, got {self.kernel}")
            if self.kind == "pointwise" and self.kernel != 1:
                raise DescriptorError("pointwise layers require a 1x1 kernel")
            if self.kind == "depthwise" and self.in_channels != self.out_channels:
                raise DescriptorError("depthwise layers require out_channels == in_channels")
        if self.in_channels < 0 or self.out_channels < 0:
            raise DescriptorError("channel counts must be non-negative")

    def tensor_shapes(self) -> tuple[tuple[int, ...], ...]:
        """Shapes of this layer's weight tensors, in storage order."""
        if self.kind == "standard":
            return ((self.kernel, self.kernel, self.in_channels, self.out_channels),)
        if self.kind == "depthwise":
            return ((self.kernel, self.kernel, self.in_channels),)
        if self.kind == "pointwise":
            return ((self.in_channels, self.out_channels),)
        if self.kind == "dense":
            return ((self.in_channels, self.out_channels), (self.out_channels,))
        return ()


@dataclass(frozen=True)
class ModelContainer:
    """A loaded model: descriptor plus weight tensors, immutable once built."""

    name: str
    labels: tuple[str, ...]
    input_size: int
    scale: float
    shift: float
    layers: tuple[LayerSpec, ...]
    tensors: tuple[tuple[np.ndarray, ...], ...]
    engine: str = "dwnet"
    extra: tuple[tuple[str, object], ...] = ()

    def head_index(self) -> int:
        """Index of the final dense layer (the trainable head)."""
        for i in range(len(self.layers) - 1, -1, -1):
            if self.layers[i].kind == "dense":
                return i
        raise DescriptorError(f"model {self.name!r} has no dense head")

    def head_weights(self) -> tuple[np.ndarray, np.ndarray]:
        w, b = self.tensors[self.head_index()]
        return w, b

    def with_head(self, weights: np.ndarray, bias: np.ndarray) -> "ModelContainer":
        """Copy of this container with only the dense head tensors replaced."""
        head = self.head_index()
        spec = self.layers[head]
        w = np.ascontiguousarray(weights, dtype=np.float32)
        b = np.ascontiguousarray(bias, dtype=np.float32)
        if w.shape != (spec.in_channels, spec.out_channels) or b.shape != (spec.out_channels,):
            raise ShapeMismatchError(
                f"head tensors {w.shape}/{b.shape} do not fit dense layer "
                f"({spec.in_channels}, {spec.out_channels})"
            )
        tensors = list(self.tensors)
        tensors[head] = (w, b)
        return replace(self, tensors=tuple(tensors))

    def validate(self) -> None:
        if len(self.labels) < 2:
            raise DescriptorError("label list must have at least two entries")
        if self.input_size < 1:
            raise DescriptorError(f"input size must be positive, got {self.input_size}")
        if not self.layers:
            raise DescriptorError("layer list is empty")
        # image models consume RGB; feature-vector models start at their head's width
        channels = 3 if self.layers[0].kind in SPATIAL_KINDS else self.layers[0].in_channels
        out_dim = None
        for i, spec in enumerate(self.layers):
            spec.validate()
            if spec.kind in SPATIAL_KINDS or spec.kind == "dense":
                if spec.in_channels != channels:
                    raise DescriptorError(
                        f"layer {i} ({spec.kind}) declares in_channels={spec.in_channels} "
                        f"but receives {channels}"
                    )
                channels = spec.out_channels
            out_dim = channels
        if len(self.labels) != out_dim:
            raise LabelCountError(
                f"{len(self.labels)} labels but the final layer is {out_dim}-way"
            )
        for spec, tensors in zip(self.layers, self.tensors):
            shapes = spec.tensor_shapes()
            if len(shapes) != len(tensors):
                raise ShapeMismatchError(f"layer {spec.kind}: expected {len(shapes)} tensors")
            for shape, t in zip(shapes, tensors):
                if tuple(t.shape) != shape:
                    raise ShapeMismatchError(f"layer {spec.kind}: tensor {t.shape} != declared {shape}")
                if t.dtype != np.float32:
                    raise ShapeMismatchError(f"layer {spec.kind}: tensors must be float32")


def descriptor_dict(model: ModelContainer) -> dict:
    return {
        "name": model.name,
        "engine": model.engine,
        "labels": list(model.labels),
        "input_size": model.input_size,
        "preprocess": {"scale": model.scale, "shift": model.shift},
        "layers": [
            {
                "kind": s.kind,
                "kernel": s.kernel,
                "in": s.in_channels,
                "out": s.out_channels,
                "stride": s.stride,
                "activation": s.activation,
            }
            for s in model.layers
        ],
        "extra": dict(model.extra),
    }


def save_model(model: ModelContainer, path) -> None:
    """Serialize a validated container; byte-for-byte reproducible."""
    model.validate()
    descriptor = json.dumps(descriptor_dict(model), sort_keys=True, separators=(",", ":")).encode("utf-8")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", VERSION)
    out += struct.pack("<I", len(descriptor))
    out += descriptor
    for tensors in model.tensors:
        for t in tensors:
            out += np.ascontiguousarray(t, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(out))


def load_model(path) -> ModelContainer:
    """Read and fully validate a container file."""
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != MAGIC:
        raise BadMagicError(f"{path}: not an SLNW container")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: container version {version}, expected {VERSION}")
    (desc_len,) = struct.unpack_from("<I", data, 8)
    desc_end = 12 + desc_len
    if desc_end > len(data):
        raise DescriptorError(f"{path}: descriptor length {desc_len} overruns the file")
    try:
        desc = json.loads(data[12:desc_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DescriptorError(f"{path}: descriptor is not valid JSON ({exc})") from exc
    model = _model_from_descriptor(desc, data[desc_end:], path)
    model.validate()
    return model


def _model_from_descriptor(desc: dict, payload: bytes, path) -> ModelContainer:
    try:
        labels = tuple(str(x) for x in desc["labels"])
        input_size = int(desc["input_size"])
        pre = desc.get("preprocess", {})
        scale = float(pre.get("scale", DEFAULT_SCALE))
        shift = float(pre.get("shift", DEFAULT_SHIFT))
        layer_dicts = desc["layers"]
        name = str(desc.get("name", Path(path).stem))
        engine = str(desc.get("engine", "dwnet"))
        extra = tuple(sorted(dict(desc.get("extra", {})).items()))
    except (KeyError, TypeError, ValueError) as exc:
        raise DescriptorError(f"{path}: descriptor missing or malformed field ({exc})") from exc

    layers = []
    for i, d in enumerate(layer_dicts):
        try:
            layers.append(
                LayerSpec(
                    kind=str(d["kind"]),
                    kernel=int(d.get("kernel", 1)),
                    in_channels=int(d.get("in", 0)),
                    out_channels=int(d.get("out", 0)),
                    stride=int(d.get("stride", 1)),
                    activation=str(d.get("activation", "none")),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DescriptorError(f"{path}: layer {i} is malformed ({exc})") from exc

    tensors: list[tuple[np.ndarray, ...]] = []
    offset = 0
    for spec in layers:
        spec.validate()
        per_layer = []
        for shape in spec.tensor_shapes():
            count = int(np.prod(shape, dtype=np.int64)) if shape else 0
            nbytes = count * 4
            if offset + nbytes > len(payload):
                raise ShapeMismatchError(
                    f"{path}: weight payload too short for layer {spec.kind} "
                    f"(need {nbytes} more bytes, have {len(payload) - offset})"
                )
            arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset).reshape(shape)
            per_layer.append(arr.copy())
            offset += nbytes
        tensors.append(tuple(per_layer))
    if offset != len(payload):
        raise ShapeMismatchError(
            f"{path}: {len(payload) - offset} trailing weight bytes beyond the declared layers"
        )
    return ModelContainer(
        name=name,
        labels=labels,
        input_size=input_size,
        scale=scale,
        shift=shift,
        layers=tuple(layers),
        tensors=tuple(tensors),
        engine=engine,
        extra=extra,
    )
