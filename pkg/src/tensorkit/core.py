"""
Multilinear algebra on dense third-order tensors.

A tensor is a float64 ndarray of shape (I, J, K). Element (i, j, k) sits at linear
index i + I*j + I*J*k, i.e. Fortran order; every unfolding column order follows from
that layout. Matrices are plain 2-D ndarrays. Modes are numbered 1, 2, 3.
"""

import logging

import numpy as np
import scipy.linalg

from tensorkit.errors import DIM_MISMATCH, INVALID_MODE, NOT_CONVERGED
from tensorkit.utils import TensorError, as_matrix, as_tensor3

logger = logging.getLogger(__name__)

MODES = (1, 2, 3)


def _check_mode(mode) -> int:
    if mode not in MODES:
        raise TensorError(INVALID_MODE, f"mode must be 1, 2 or 3, got {mode!r}")
    return int(mode)


def unfold(t, mode: int) -> np.ndarray:
    """
    Mode-n unfolding with the mode-n fibers as columns.
    Remaining indices vary with the earlier-numbered mode fastest.
    """
    mode = _check_mode(mode)
    t = as_tensor3(t)
    moved = np.moveaxis(t, mode - 1, 0)
    return np.reshape(moved, (t.shape[mode - 1], -1), order="F")


def fold(m, mode: int, dims) -> np.ndarray:
    mode = _check_mode(mode)
    m = as_matrix(m)
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3:
        raise TensorError(DIM_MISMATCH, f"dims must have three entries, got {dims}")
    rest = [d for n, d in enumerate(dims) if n != mode - 1]
    if m.shape != (dims[mode - 1], rest[0] * rest[1]):
        raise TensorError(DIM_MISMATCH, f"matrix {m.shape} cannot fold to {dims} in mode {mode}")
    moved_shape = (dims[mode - 1], rest[0], rest[1])
    moved = np.reshape(m, moved_shape, order="F")
    return np.moveaxis(moved, 0, mode - 1)


def mode_product(t, u, mode: int) -> np.ndarray:
    """t x_n u: contracts mode n of t with the columns of u."""
    mode = _check_mode(mode)
    t = as_tensor3(t)
    u = as_matrix(u)
    if u.shape[1] != t.shape[mode - 1]:
        raise TensorError(
            DIM_MISMATCH,
            f"matrix has {u.shape[1]} columns, tensor mode {mode} has size {t.shape[mode - 1]}",
        )
    res = np.tensordot(u, t, axes=(1, mode - 1))
    return np.moveaxis(res, 0, mode - 1)


def multi_mode_product(core, factors) -> np.ndarray:
    """core x_1 factors[0] x_2 factors[1] x_3 factors[2]; None entries are skipped."""
    res = as_tensor3(core, "core")
    for mode, u in zip(MODES, factors):
        if u is not None:
            res = mode_product(res, u, mode)
    return res


def kron(a, b) -> np.ndarray:
    return np.kron(as_matrix(a), as_matrix(b))


def frobenius_norm(t) -> float:
    return float(np.linalg.norm(np.ravel(np.asarray(t, dtype=np.float64))))


def singular_values(m) -> np.ndarray:
    """Singular values in nonincreasing order."""
    m = as_matrix(m)
    if m.size == 0:
        return np.zeros(0)
    attempts = 0
    for driver in ("gesdd", "gesvd"):
        attempts += 1
        try:
            return scipy.linalg.svd(m, compute_uv=False, lapack_driver=driver)
        except np.linalg.LinAlgError:
            logger.debug("svd with %s did not converge on %s", driver, m.shape)
    raise TensorError(NOT_CONVERGED, f"SVD of {m.shape} matrix failed after {attempts} LAPACK drivers")


def top_singular_triplets(m, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Leading k singular triplets (U[:, :k], s[:k], Vt[:k, :]) of the skinny SVD."""
    m = as_matrix(m)
    if k < 0 or k > min(m.shape):
        raise TensorError(DIM_MISMATCH, f"cannot take {k} singular triplets of {m.shape}")
    attempts = 0
    for driver in ("gesdd", "gesvd"):
        attempts += 1
        try:
            u, s, vt = scipy.linalg.svd(m, full_matrices=False, lapack_driver=driver)
            return u[:, :k], s[:k], vt[:k, :]
        except np.linalg.LinAlgError:
            logger.debug("svd with %s did not converge on %s", driver, m.shape)
    raise TensorError(NOT_CONVERGED, f"SVD of {m.shape} matrix failed after {attempts} LAPACK drivers")


def sigma_max(m) -> float:
    s = singular_values(m)
    return float(s[0]) if s.size else 0.0


def gram_sigma_max(m) -> float:
    """sigma_max(m m^T) from the smaller Gram matrix."""
    m = as_matrix(m)
    if m.size == 0:
        return 0.0
    g = m @ m.T if m.shape[0] <= m.shape[1] else m.T @ m
    return float(max(scipy.linalg.eigvalsh(g)[-1], 0.0))
