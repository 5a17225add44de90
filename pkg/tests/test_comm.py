import struct

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from tensorkit import comm
from tensorkit.utils import TensorError


def test_header_and_layout(rng):
    t = rng.standard_normal((2, 3, 4))
    msg = comm.make_msg(t)
    assert msg[:4] == b"T3B1"
    assert struct.unpack("<III", msg[4:16]) == (2, 3, 4)
    assert len(msg) == 16 + 8 * 24
    payload = np.frombuffer(msg, dtype="<f8", offset=16)
    i, j, k = 1, 2, 3
    assert payload[i + 2 * j + 2 * 3 * k] == t[i, j, k]


def test_file_roundtrip(tmp_path, rng):
    t = rng.standard_normal((5, 1, 3))
    comm.write_tensor(tmp_path / "t.t3b", t)
    assert_array_equal(comm.read_tensor(tmp_path / "t.t3b"), t)

    m = rng.standard_normal((4, 2))
    comm.write_matrix(tmp_path / "m.t3b", m)
    assert_array_equal(comm.read_matrix(tmp_path / "m.t3b"), m)


def test_bad_magic():
    msg = bytearray(comm.make_msg(np.ones((1, 1, 1))))
    msg[:4] = b"XXXX"
    with pytest.raises(TensorError) as e:
        comm.read_msg(bytes(msg))
    assert e.value.code == 201


@pytest.mark.parametrize("cut", [1, 8, 20])
def test_bad_length(cut):
    msg = comm.make_msg(np.ones((2, 2, 2)))
    with pytest.raises(TensorError) as e:
        comm.read_msg(msg[:-cut])
    assert e.value.code == 202
    with pytest.raises(TensorError) as e:
        comm.read_msg(msg + b"\x00" * cut)
    assert e.value.code == 202


def test_missing_file(tmp_path):
    with pytest.raises(TensorError) as e:
        comm.read_tensor(tmp_path / "nope.t3b")
    assert e.value.code == 203
    assert "nope.t3b" in e.value.text


def test_nonfinite_rejected(tmp_path):
    t = np.ones((2, 2, 2))
    t[1, 0, 1] = np.nan
    with pytest.raises(TensorError) as e:
        comm.write_tensor(tmp_path / "bad.t3b", t)
    assert e.value.code == 103
    assert not (tmp_path / "bad.t3b").exists()


def test_read_matrix_rejects_tensor(tmp_path):
    comm.write_tensor(tmp_path / "t.t3b", np.ones((2, 2, 2)))
    with pytest.raises(TensorError) as e:
        comm.read_matrix(tmp_path / "t.t3b")
    assert e.value.code == 202


def test_error_as_dict():
    e = TensorError(comm.BAD_MAGIC, "b'XXXX'")
    assert e.as_dict() == {"code": 201, "msg": "Bad tensor file magic", "text": "b'XXXX'"}
