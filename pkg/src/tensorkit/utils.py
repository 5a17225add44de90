"""
Exception type and argument validators used by both packages.
"""

import logging

import numpy as np

from tensorkit.errors import CodeMsgPair, DIM_MISMATCH, NONFINITE

logger = logging.getLogger(__name__)


class TensorError(Exception):
    def __init__(self, pair: CodeMsgPair, text: str = ""):
        self.code = pair.code()
        self.msg = pair.msg()
        self.text = text
        super().__init__(f"{self.msg}: {text}" if text else self.msg)

    def as_dict(self) -> dict:
        return {"code": self.code, "msg": self.msg, "text": self.text}


class ConfigError(TensorError):
    pass


class SolverError(TensorError):
    pass


def as_tensor3(t, name: str = "tensor") -> np.ndarray:
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim != 3:
        raise TensorError(DIM_MISMATCH, f"{name} must be third-order, got ndim={arr.ndim}")
    if min(arr.shape) < 1:
        raise TensorError(DIM_MISMATCH, f"{name} has an empty mode: {arr.shape}")
    return arr


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise TensorError(DIM_MISMATCH, f"{name} must be a matrix, got ndim={arr.ndim}")
    return arr


def check_finite(arr: np.ndarray, name: str = "array") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise TensorError(NONFINITE, name)
    return arr
