import json
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from relmod.diffcore import CheckpointFormatError, Tensor, checkpoint


@given(st.dictionaries(st.text("abcdefgh.", min_size=1, max_size=8),
                       arrays(np.float64, array_shapes(min_dims=0, max_dims=3, max_side=4),
                              elements=st.floats(allow_nan=False)),
                       max_size=5))
def test_round_trip_is_bit_exact(tensors):
    back, meta = checkpoint.loads(checkpoint.dumps(tensors, {"k": 1}))
    assert meta == {"k": 1}
    assert set(back) == set(tensors)
    for name, arr in tensors.items():
        assert back[name].shape == arr.shape
        assert back[name].tobytes() == np.ascontiguousarray(arr).tobytes()


def test_layout_matches_documented_framing():
    blob = checkpoint.dumps({"w": Tensor(np.arange(6.0).reshape(2, 3))}, {"epoch": 3})
    (hlen,) = struct.unpack_from("<Q", blob, 0)
    header = json.loads(blob[8:8 + hlen])
    assert header == {"index": {"w": 0}, "meta": {"epoch": 3}}
    body = blob[8 + hlen:]
    assert body[:4] == b"RMT1"
    assert struct.unpack_from("<3I", body, 4) == (2, 2, 3)
    np.testing.assert_array_equal(np.frombuffer(body[16:], "<f8"), np.arange(6.0))


def test_dumps_is_deterministic():
    t = {"a": np.ones(3), "b": np.zeros((2, 2))}
    assert checkpoint.dumps(t, {"x": [1, 2]}) == checkpoint.dumps(dict(t), {"x": [1, 2]})


def test_magic_mismatch_is_reported():
    blob = bytearray(checkpoint.dumps({"w": np.ones(2)}))
    (hlen,) = struct.unpack_from("<Q", blob, 0)
    blob[8 + hlen:8 + hlen + 4] = b"XXXX"
    with pytest.raises(CheckpointFormatError, match="magic"):
        checkpoint.loads(bytes(blob))


def test_truncated_payload_is_reported():
    blob = checkpoint.dumps({"w": np.ones(4)})
    with pytest.raises(CheckpointFormatError, match="truncated payload"):
        checkpoint.loads(blob[:-3])


def test_truncated_header_is_reported():
    blob = checkpoint.dumps({"w": np.ones(4)})
    with pytest.raises(CheckpointFormatError):
        checkpoint.loads(blob[:12])
    with pytest.raises(CheckpointFormatError):
        checkpoint.loads(b"\x01")


def test_corrupt_header_json_is_reported():
    body = b"{not json"
    with pytest.raises(CheckpointFormatError, match="corrupt header"):
        checkpoint.loads(struct.pack("<Q", len(body)) + body)


def test_save_and_load_files(tmp_path):
    path = tmp_path / "x.ckpt"
    checkpoint.save(path, {"w": np.eye(2)}, {"m": "v"})
    tensors, meta = checkpoint.load(path)
    np.testing.assert_array_equal(tensors["w"], np.eye(2))
    assert meta == {"m": "v"}
