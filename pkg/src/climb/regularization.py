"""
Smoothness penalties on the LMN factors.

Spatial factors get the nonconvex TV penalty phi_{p,eps}(H A), minimized through its
quadratic majorizer sum_i w_i x_i^2 + const with w_i = (p/2)(x_t,i^2 + eps)^((p-2)/2).
Spectral factors get Tikhonov ||H3 C||_F^2, cores get 1/2 ||D||_F^2.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from tensorkit.core import sigma_max
from tensorkit.errors import DIM_MISMATCH, INVALID_ARGUMENT, INVALID_CONFIG
from tensorkit.utils import TensorError, as_matrix

from .model import LmnModel

log = logging.getLogger("climb.regularization")
log.setLevel(logging.INFO)


@dataclass
class RegConfig:
    lam: float = 0.0
    eta: float = 0.0
    p: float = 0.5
    epsilon: float = 0.01

    def __post_init__(self):
        if self.lam < 0 or self.eta < 0:
            raise TensorError(INVALID_CONFIG, f"lambda={self.lam}, eta={self.eta} must be >= 0")
        if not 0 < self.p <= 1:
            raise TensorError(INVALID_CONFIG, f"p={self.p} must lie in (0, 1]")
        if self.epsilon <= 0:
            raise TensorError(INVALID_CONFIG, f"epsilon={self.epsilon} must be > 0")


def build_H1(n: int) -> np.ndarray:
    """(n-1) x n first differences, H(i,i)=1, H(i,i+1)=-1."""
    if n < 2:
        raise TensorError(INVALID_ARGUMENT, f"first differences need n >= 2, got {n}")
    return np.eye(n - 1, n) - np.eye(n - 1, n, k=1)


build_H2 = build_H1


def build_H3(K: int) -> np.ndarray:
    """(K-2) x K second differences with stencil [1, -2, 1]."""
    if K < 3:
        raise TensorError(INVALID_ARGUMENT, f"second differences need K >= 3, got {K}")
    return np.eye(K - 2, K) - 2 * np.eye(K - 2, K, k=1) + np.eye(K - 2, K, k=2)


def diff_rows(a: np.ndarray) -> np.ndarray:
    """H1 @ a without forming H1: first differences down the columns."""
    return a[:-1] - a[1:]


def diff_rows_T(y: np.ndarray) -> np.ndarray:
    """H1^T @ y for y with n-1 rows."""
    out = np.zeros((y.shape[0] + 1,) + y.shape[1:])
    out[:-1] += y
    out[1:] -= y
    return out


def phi_p_eps(x, p: float, epsilon: float) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sum((x**2 + epsilon) ** (p / 2)))


def majorizer_weights(x_t, p: float, epsilon: float) -> np.ndarray:
    x_t = np.asarray(x_t, dtype=np.float64)
    return (p / 2) * (x_t**2 + epsilon) ** ((p - 2) / 2)


def majorizer(x, x_t, p: float, epsilon: float) -> float:
    """Quadratic surrogate of phi_{p,eps} anchored at x_t; equals phi at x_t."""
    x = np.asarray(x, dtype=np.float64)
    x_t = np.asarray(x_t, dtype=np.float64)
    w = majorizer_weights(x_t, p, epsilon)
    const = phi_p_eps(x_t, p, epsilon) - float(np.sum(w * x_t**2))
    return float(np.sum(w * x**2)) + const


def tv_majorizer_grad(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Gradient of sum w * (H1 a)^2 with respect to a: 2 H1^T (w * H1 a)."""
    return 2.0 * diff_rows_T(w * diff_rows(a))


def tv_curvature(w: np.ndarray) -> float:
    """
    sigma_max(H~^T diag(w) H~) with H~ = H1 kron I: block diagonal over the columns of
    the factor, each block the tridiagonal H1^T diag(w[:, l]) H1.
    """
    best = 0.0
    for col in np.atleast_2d(w.T):
        d = np.zeros(col.size + 1)
        d[:-1] += col
        d[1:] += col
        if d.size == 1:
            continue
        top = scipy.linalg.eigvalsh_tridiagonal(
            d, -col, select="i", select_range=(d.size - 1, d.size - 1)
        )
        best = max(best, float(top[0]))
    return best


def difference_norm_sq(n: int, order: int = 1) -> float:
    """sigma_max(H)^2 of the first- (order=1) or second-difference matrix."""
    H = build_H1(n) if order == 1 else build_H3(n)
    return sigma_max(H) ** 2


def tikhonov(C, H3) -> float:
    C = as_matrix(C, "C")
    H3 = as_matrix(H3, "H3")
    if H3.shape[1] != C.shape[0]:
        raise TensorError(DIM_MISMATCH, f"H3 {H3.shape} cannot act on C {C.shape}")
    return float(np.sum((H3 @ C) ** 2))


def core_penalty(model: LmnModel) -> float:
    """1/2 sum_r ||D_r||_F^2 over the cores the solver may update."""
    return 0.5 * sum(float(np.sum(t.D**2)) for t in model.terms if not t.core_frozen)


def smoothness_penalty(model: LmnModel, reg: RegConfig, H3: np.ndarray | None = None) -> float:
    """sum_r phi(H1 A_r) + phi(H2 B_r) + ||H3 C_r||^2 with the true phi_{p,eps}."""
    total = 0.0
    K = model.dims[2]
    if H3 is None and K >= 3:
        H3 = build_H3(K)
    for term in model.terms:
        if term.A.shape[0] >= 2:
            total += phi_p_eps(diff_rows(term.A), reg.p, reg.epsilon)
        if term.B.shape[0] >= 2:
            total += phi_p_eps(diff_rows(term.B), reg.p, reg.epsilon)
        if H3 is not None:
            total += tikhonov(term.C, H3)
    return total
