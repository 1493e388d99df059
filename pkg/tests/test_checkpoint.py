"""Checkpoint persistence: bit-exact round trips, damage detection."""

import numpy as np
import pytest

from ramavt.blocks import QNetworkParams, QNetworkSpec, RecurrentState, qnet_forward
from ramavt.checkpoint import (
    MAGIC,
    BadMagicError,
    CheckpointError,
    CheckpointMeta,
    SpecMismatchError,
    TruncatedFileError,
    VersionMismatchError,
    load_checkpoint,
    load_params,
    save_checkpoint,
    save_params,
)
from ramavt.diffnet.tensor import wrap


@pytest.fixture
def params(rng):
    return QNetworkParams.init(QNetworkSpec(resolution=16), rng)


def roundtrip(tmp_path, params, **meta_kw):
    path = str(tmp_path / "net.ckpt")
    save_params(path, params, episode=meta_kw.get("episode", 12), seed=meta_kw.get("seed", 3))
    return path


class TestRoundTrip:
    def test_every_tensor_bit_exact(self, tmp_path, params):
        path = roundtrip(tmp_path, params)
        loaded, meta = load_params(path, params.spec)
        assert loaded.tensors.keys() == params.tensors.keys()
        for name, t in params.tensors.items():
            assert np.array_equal(t.data, loaded.tensors[name].data), name
            assert t.requires_grad == loaded.tensors[name].requires_grad
        assert meta.episode == 12 and meta.seed == 3
        assert meta.variant == "ramavt" and meta.input_format == "depth"

    def test_q_outputs_bit_identical(self, tmp_path, params, rng):
        path = roundtrip(tmp_path, params)
        loaded, _ = load_params(path, params.spec)
        obs = rng.random((1, 16, 16), dtype=np.float32)
        state = RecurrentState.zeros(1, params.spec.lstm_size)
        q1, _ = qnet_forward(params, wrap(obs), state)
        q2, _ = qnet_forward(loaded, wrap(obs), state)
        assert np.array_equal(q1.data, q2.data)

    def test_negative_seed_roundtrip(self, tmp_path, params):
        path = str(tmp_path / "net.ckpt")
        save_params(path, params, episode=0, seed=-12345)
        _, meta = load_params(path, params.spec)
        assert meta.seed == -12345

    def test_load_without_spec_reconstructs(self, tmp_path, params):
        path = roundtrip(tmp_path, params)
        loaded, meta = load_params(path)
        assert loaded.spec.variant == "ramavt"
        assert loaded.spec.input_format == "depth"


class TestDamage:
    def test_truncated_file(self, tmp_path, params):
        path = roundtrip(tmp_path, params)
        blob = open(path, "rb").read()
        open(path, "wb").write(blob[:-1])
        with pytest.raises(TruncatedFileError):
            load_checkpoint(path)

    def test_bad_magic(self, tmp_path, params):
        path = roundtrip(tmp_path, params)
        blob = bytearray(open(path, "rb").read())
        blob[:8] = b"NOTMAGIC"
        open(path, "wb").write(bytes(blob))
        with pytest.raises(BadMagicError):
            load_checkpoint(path)

    def test_version_mismatch(self, tmp_path, params):
        path = roundtrip(tmp_path, params)
        blob = bytearray(open(path, "rb").read())
        blob[8:10] = (99).to_bytes(2, "little")
        open(path, "wb").write(bytes(blob))
        with pytest.raises(VersionMismatchError):
            load_checkpoint(path)

    def test_trailing_bytes(self, tmp_path, params):
        path = roundtrip(tmp_path, params)
        with open(path, "ab") as f:
            f.write(b"x")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_spec_mismatch_on_input_format(self, tmp_path, params):
        path = roundtrip(tmp_path, params)
        rgbd_spec = QNetworkSpec(input_format="rgbd", resolution=16)
        with pytest.raises(SpecMismatchError):
            load_params(path, rgbd_spec)

    def test_spec_mismatch_on_variant(self, tmp_path, params):
        path = roundtrip(tmp_path, params)
        with pytest.raises(SpecMismatchError):
            load_params(path, QNetworkSpec(variant="drlavt", resolution=16))

    def test_magic_constant(self):
        assert MAGIC == b"RAMAVTCK"


def test_generic_tensor_table_roundtrip(tmp_path, rng):
    tensors = {
        "a": wrap(rng.standard_normal((3, 4)).astype(np.float32)),
        "b.c": wrap(rng.standard_normal(7).astype(np.float32)),
        "scalar": wrap(np.float32(2.5).reshape(())),
    }
    tensors["a"].requires_grad = True
    meta = CheckpointMeta("origin", "color", 7, 1, 42)
    path = str(tmp_path / "t.ckpt")
    save_checkpoint(path, tensors, meta)
    loaded, meta2 = load_checkpoint(path)
    assert meta2 == meta
    for name in tensors:
        assert np.array_equal(tensors[name].data, loaded[name].data)
    assert loaded["a"].requires_grad and not loaded["b.c"].requires_grad
