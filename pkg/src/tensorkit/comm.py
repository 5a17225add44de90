"""
T3B1 binary tensor format.

    4 bytes   ASCII magic "T3B1"
    12 bytes  dims I, J, K as unsigned 32-bit little-endian
    8*I*J*K   float64 little-endian payload, element (i, j, k) at i + I*j + I*J*k

Matrices are stored as (rows, cols, 1) tensors, which is column-major order.
"""

import logging
import os
import struct

import numpy as np

from tensorkit.errors import BAD_LENGTH, BAD_MAGIC, IO_FAILURE
from tensorkit.utils import TensorError, as_matrix, as_tensor3, check_finite

logger = logging.getLogger(__name__)

MAGIC = b"T3B1"
HEADER = struct.Struct("<4sIII")


def make_msg(t) -> bytes:
    """Header plus payload for one tensor."""
    t = check_finite(as_tensor3(t), "tensor to encode")
    header = HEADER.pack(MAGIC, *t.shape)
    payload = np.asarray(t, dtype="<f8").tobytes(order="F")
    return header + payload


def read_msg(buf: bytes) -> np.ndarray:
    if len(buf) < HEADER.size:
        raise TensorError(BAD_LENGTH, f"{len(buf)} bytes is shorter than the header")
    magic, i, j, k = HEADER.unpack(buf[: HEADER.size])
    if magic != MAGIC:
        raise TensorError(BAD_MAGIC, repr(magic))
    size = i * j * k
    logger.debug("read_msg: dims (%d, %d, %d)", i, j, k)
    if len(buf) - HEADER.size != 8 * size:
        raise TensorError(
            BAD_LENGTH, f"expected {8 * size} payload bytes, got {len(buf) - HEADER.size}"
        )
    data = np.frombuffer(buf, dtype="<f8", count=size, offset=HEADER.size)
    return np.reshape(data.astype(np.float64), (i, j, k), order="F")


def write_tensor(path, t) -> None:
    msg = make_msg(t)
    try:
        with open(path, "wb") as f:
            f.write(msg)
    except OSError as e:
        raise TensorError(IO_FAILURE, f"{path}: {e}") from e


def read_tensor(path) -> np.ndarray:
    try:
        with open(path, "rb") as f:
            buf = f.read()
    except OSError as e:
        raise TensorError(IO_FAILURE, f"{path}: {e}") from e
    return read_msg(buf)


def write_matrix(path, m) -> None:
    m = as_matrix(m)
    write_tensor(path, m[:, :, np.newaxis])


def read_matrix(path) -> np.ndarray:
    t = read_tensor(path)
    if t.shape[2] != 1:
        raise TensorError(BAD_LENGTH, f"{os.fspath(path)} holds a tensor {t.shape}, not a matrix")
    return t[:, :, 0]
