import numpy as np
import pytest

from foleysketch.checkpoint import (FORMAT_VERSION, MAGIC, checkpoint_bytes,
                                    load_checkpoint, load_checkpoint_bytes,
                                    save_checkpoint)
from foleysketch.config import ModelConfig
from foleysketch.denoiser import init_params, param_specs

CFG = ModelConfig()


@pytest.fixture(scope="module")
def params():
    return init_params(CFG, np.random.default_rng(0))


class TestCheckpointFormat:
    def test_magic_and_version(self, params):
        data = checkpoint_bytes(CFG, params, -8.0, 5.0)
        assert data[:4] == MAGIC == b"CFLY"
        assert int.from_bytes(data[4:8], "little") == FORMAT_VERSION

    def test_round_trip_preserves_float32_values(self, params):
        data = checkpoint_bytes(CFG, params, -8.25, 5.5, meta={"k": 1})
        ckpt = load_checkpoint_bytes(data)
        assert ckpt.norm_mean == -8.25 and ckpt.norm_std == 5.5
        assert ckpt.meta == {"k": 1}
        assert ckpt.cfg == CFG
        for name in params:
            np.testing.assert_array_equal(
                ckpt.params[name], params[name].astype("<f4").astype(np.float64))

    def test_serialization_is_deterministic(self, params):
        a = checkpoint_bytes(CFG, params, 0.0, 1.0)
        b = checkpoint_bytes(CFG, params, 0.0, 1.0)
        assert a == b

    def test_manifest_order_matches_param_specs(self, params):
        import json
        import struct
        data = checkpoint_bytes(CFG, params, 0.0, 1.0)
        header_len, = struct.unpack_from("<I", data, 8)
        header = json.loads(data[12:12 + header_len])
        names = [e["name"] for e in header["manifest"]]
        assert names == [n for n, _ in param_specs(CFG)]
        offsets = [e["offset"] for e in header["manifest"]]
        assert offsets == sorted(offsets)

    def test_file_round_trip(self, tmp_path, params):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, CFG, params, 1.0, 2.0)
        ckpt = load_checkpoint(path)
        assert ckpt.checkpoint_id and len(ckpt.checkpoint_id) == 12

    def test_bad_magic_rejected(self):
        with pytest.raises(ValueError, match="bad magic"):
            load_checkpoint_bytes(b"NOPE" + b"\x00" * 100)

    def test_wrong_shape_rejected(self, params):
        broken = dict(params)
        broken["head.b"] = np.zeros(7)
        with pytest.raises(ValueError, match="shape"):
            checkpoint_bytes(CFG, broken, 0.0, 1.0)
