"""Multiply-accumulate cost model for spatial convolution layers.

For a k x k kernel over an m-channel map evaluated at d x d positions with
n output channels:

    standard cost   = k*k * m * n * d*d
    separable cost  = k*k * m * d*d  +  m * n * d*d

The standard/separable ratio reduces to 1 / (1/n + 1/k^2) independently of
m and d; ratios are kept as exact rationals.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import UsageError
from .model_io import LayerSpec, ModelContainer, SPATIAL_KINDS


@dataclass(frozen=True)
class FlopCost:
    standard_macs: int
    separable_macs: int
    ratio: Fraction  # standard / separable, exact


def flop_cost(layer: LayerSpec, d_f: int) -> FlopCost:
    """MAC counts for one spatial layer evaluated at d_f x d_f positions."""
    if layer.kind not in SPATIAL_KINDS:
        raise UsageError(f"flop_cost applies to spatial layers only, got {layer.kind!r}")
    if d_f < 1:
        raise UsageError(f"feature map side must be positive, got {d_f}")
    k, m, n = layer.kernel, layer.in_channels, layer.out_channels
    positions = d_f * d_f
    standard = k * k * m * n * positions
    separable = k * k * m * positions + m * n * positions
    return FlopCost(standard_macs=standard, separable_macs=separable, ratio=Fraction(standard, separable))


@dataclass(frozen=True)
class LayerCostRow:
    name: str
    kind: str  # "standard" or "separable"
    kernel: int
    in_channels: int
    out_channels: int
    spatial: int  # output positions per side
    cost: FlopCost

    @property
    def actual_macs(self) -> int:
        """MACs the layer really spends: separable blocks run the factored form."""
        return self.cost.separable_macs if self.kind == "separable" else self.cost.standard_macs


@dataclass(frozen=True)
class NetworkCost:
    rows: tuple[LayerCostRow, ...]
    dense_macs: int

    @property
    def total_macs(self) -> int:
        return sum(r.actual_macs for r in self.rows) + self.dense_macs

    @property
    def total_standard_macs(self) -> int:
        """What the same stack would cost with every block as a dense convolution."""
        return sum(r.cost.standard_macs for r in self.rows) + self.dense_macs


def network_cost(model: ModelContainer) -> NetworkCost:
    """Per-layer cost table for a container, with depthwise+pointwise pairs
    merged into single separable rows.

    Each row is evaluated at the layer's *output* position count, so strided
    layers are charged for the kernel applications they actually perform.
    """
    rows: list[LayerCostRow] = []
    dense_macs = 0
    side = model.input_size
    i = 0
    layers = model.layers
    while i < len(layers):
        spec = layers[i]
        if spec.kind == "standard":
            out_side = -(-side // spec.stride)
            rows.append(
                LayerCostRow(
                    name=f"conv{len(rows)}",
                    kind="standard",
                    kernel=spec.kernel,
                    in_channels=spec.in_channels,
                    out_channels=spec.out_channels,
                    spatial=out_side,
                    cost=flop_cost(spec, out_side),
                )
            )
            side = out_side
        elif spec.kind == "depthwise":
            if i + 1 >= len(layers) or layers[i + 1].kind != "pointwise":
                raise UsageError("depthwise layer without a following pointwise layer")
            pw = layers[i + 1]
            out_side = -(-side // spec.stride)
            merged = LayerSpec(
                kind="standard",
                kernel=spec.kernel,
                in_channels=spec.in_channels,
                out_channels=pw.out_channels,
                stride=spec.stride,
            )
            rows.append(
                LayerCostRow(
                    name=f"block{len(rows)}",
                    kind="separable",
                    kernel=spec.kernel,
                    in_channels=spec.in_channels,
                    out_channels=pw.out_channels,
                    spatial=out_side,
                    cost=flop_cost(merged, out_side),
                )
            )
            side = out_side
            i += 1  # consume the pointwise partner
        elif spec.kind == "pointwise":
            out_side = side
            merged = LayerSpec(
                kind="standard",
                kernel=1,
                in_channels=spec.in_channels,
                out_channels=spec.out_channels,
            )
            rows.append(
                LayerCostRow(
                    name=f"pw{len(rows)}",
                    kind="standard",
                    kernel=1,
                    in_channels=spec.in_channels,
                    out_channels=spec.out_channels,
                    spatial=out_side,
                    cost=flop_cost(merged, out_side),
                )
            )
        elif spec.kind == "dense":
            dense_macs += spec.in_channels * spec.out_channels
        i += 1
    return NetworkCost(rows=tuple(rows), dense_macs=dense_macs)
