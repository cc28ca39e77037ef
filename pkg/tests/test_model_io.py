import struct

import numpy as np
import pytest

from slideassess import arch, engine
from slideassess.errors import (
    BadMagicError,
    DescriptorError,
    LabelCountError,
    ShapeMismatchError,
    UnsupportedVersionError,
)
from slideassess.labels import LABELS
from slideassess.model_io import LayerSpec, ModelContainer, load_model, save_model

from conftest import tiny_model


def minimal_pointwise_model():
    """Single pointwise layer mapping RGB straight to 8 outputs."""
    layers = (LayerSpec(kind="pointwise", kernel=1, in_channels=3, out_channels=8),)
    w = np.arange(24, dtype=np.float32).reshape(3, 8)
    return ModelContainer(
        name="minimal",
        labels=LABELS,
        input_size=4,
        scale=1.0 / 127.5,
        shift=-1.0,
        layers=layers,
        tensors=((w,),),
    )


class TestRoundTrip:
    def test_minimal_container_loads_and_forwards(self, tmp_path, rng):
        path = tmp_path / "minimal.slnw"
        save_model(minimal_pointwise_model(), path)
        model = load_model(path)
        assert model.labels == LABELS
        fmap = engine.prepare_patch(
            rng.integers(0, 256, size=(4, 4, 3), dtype=np.uint8), 4, model.scale, model.shift
        )
        out = engine.forward(model, fmap)
        assert out.shape == (4, 4, 8)

    def test_full_model_roundtrip_bitwise(self, tmp_path):
        model = tiny_model(head_weights=np.arange(32).reshape(4, 8) / 17.0)
        path = tmp_path / "tiny.slnw"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.labels == model.labels
        assert loaded.input_size == model.input_size
        for orig, back in zip(model.tensors, loaded.tensors):
            for a, b in zip(orig, back):
                assert np.array_equal(a, b)
        # writing the loaded model back reproduces the file exactly
        path2 = tmp_path / "tiny2.slnw"
        save_model(loaded, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_reference_models_roundtrip(self, tmp_path, slidenet128):
        path = tmp_path / "ref.slnw"
        save_model(slidenet128, path)
        loaded = load_model(path)
        assert loaded.name == "slidenet-128"
        assert loaded.input_size == 128
        assert loaded.head_index() == slidenet128.head_index()


class TestLoadErrors:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.slnw"
        path.write_bytes(b"XXXX" + bytes(16))
        with pytest.raises(BadMagicError):
            load_model(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "v9.slnw"
        path.write_bytes(b"SLNW" + struct.pack("<I", 9) + struct.pack("<I", 0))
        with pytest.raises(UnsupportedVersionError):
            load_model(path)

    def test_tensor_bytes_four_short(self, tmp_path):
        path = tmp_path / "short.slnw"
        save_model(minimal_pointwise_model(), path)
        data = path.read_bytes()
        path.write_bytes(data[:-4])
        with pytest.raises(ShapeMismatchError):
            load_model(path)

    def test_trailing_bytes(self, tmp_path):
        path = tmp_path / "long.slnw"
        save_model(minimal_pointwise_model(), path)
        path.write_bytes(path.read_bytes() + b"\x00\x00\x00\x00")
        with pytest.raises(ShapeMismatchError):
            load_model(path)

    def test_label_count_mismatch(self, tmp_path):
        model = minimal_pointwise_model()
        bad = ModelContainer(
            name=model.name,
            labels=model.labels[:7],
            input_size=model.input_size,
            scale=model.scale,
            shift=model.shift,
            layers=model.layers,
            tensors=model.tensors,
        )
        with pytest.raises(LabelCountError):
            save_model(bad, tmp_path / "bad.slnw")

    def test_descriptor_not_json(self, tmp_path):
        garbage = b"{not json"
        path = tmp_path / "desc.slnw"
        path.write_bytes(b"SLNW" + struct.pack("<I", 1) + struct.pack("<I", len(garbage)) + garbage)
        with pytest.raises(DescriptorError):
            load_model(path)

    def test_descriptor_overrun(self, tmp_path):
        path = tmp_path / "overrun.slnw"
        path.write_bytes(b"SLNW" + struct.pack("<I", 1) + struct.pack("<I", 9999) + b"{}")
        with pytest.raises(DescriptorError):
            load_model(path)


class TestLayerSpecInvariants:
    def test_depthwise_requires_equal_channels(self):
        with pytest.raises(DescriptorError):
            LayerSpec(kind="depthwise", kernel=3, in_channels=4, out_channels=8).validate()

    def test_pointwise_requires_1x1(self):
        with pytest.raises(DescriptorError):
            LayerSpec(kind="pointwise", kernel=3, in_channels=4, out_channels=4).validate()

    def test_even_kernel_rejected(self):
        with pytest.raises(DescriptorError):
            LayerSpec(kind="standard", kernel=4, in_channels=3, out_channels=4).validate()

    def test_channel_chain_mismatch(self):
        layers = (
            LayerSpec(kind="pointwise", kernel=1, in_channels=3, out_channels=4),
            LayerSpec(kind="pointwise", kernel=1, in_channels=5, out_channels=8),
        )
        model = ModelContainer(
            name="bad",
            labels=LABELS,
            input_size=4,
            scale=1.0,
            shift=0.0,
            layers=layers,
            tensors=((np.zeros((3, 4), np.float32),), (np.zeros((5, 8), np.float32),)),
        )
        with pytest.raises(DescriptorError):
            model.validate()


class TestReferenceArchs:
    def test_seeded_build_is_reproducible(self):
        a = arch.build_reference_model("slidenet-128", seed=5)
        b = arch.build_reference_model("slidenet-128", seed=5)
        for ta, tb in zip(a.tensors, b.tensors):
            for x, y in zip(ta, tb):
                assert np.array_equal(x, y)

    def test_head_starts_at_zero(self, slidenet128):
        w, b = slidenet128.head_weights()
        assert not w.any() and not b.any()

    def test_both_presets_validate(self):
        for name in arch.reference_names():
            arch.build_reference_model(name).validate()
