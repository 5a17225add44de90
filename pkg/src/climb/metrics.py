"""
Reconstruction quality: RSNR, SSIM, CC, ERGAS, RMSE, SAM and NRE between a reference
SRI and an estimate, both (I, J, K) with bands on mode 3.
"""

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd
from skimage.metrics import structural_similarity

from tensorkit.core import frobenius_norm
from tensorkit.errors import DIM_MISMATCH, ZERO_SIGNAL
from tensorkit.utils import TensorError, as_tensor3

log = logging.getLogger("climb.metrics")
log.setLevel(logging.INFO)

# reported in place of +inf for an exact reconstruction
RSNR_SENTINEL = 300.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


@dataclass
class MetricsReport:
    rsnr_db: float
    ssim: float | None
    cc: float
    ergas: float
    rmse: float
    sam_rad: float
    nre: float

    def as_dict(self) -> dict:
        return asdict(self)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([self.as_dict()])


def _pair(reference, estimate) -> tuple[np.ndarray, np.ndarray]:
    ref = as_tensor3(reference, "reference")
    est = as_tensor3(estimate, "estimate")
    if ref.shape != est.shape:
        raise TensorError(DIM_MISMATCH, f"reference {ref.shape} vs estimate {est.shape}")
    return ref, est


def rsnr(reference, estimate) -> float:
    ref, est = _pair(reference, estimate)
    err = float(np.sum((ref - est) ** 2))
    if err == 0.0:
        return RSNR_SENTINEL
    return 10.0 * math.log10(float(np.sum(ref**2)) / err)


def rmse(reference, estimate) -> float:
    ref, est = _pair(reference, estimate)
    return frobenius_norm(ref - est) / math.sqrt(ref.size)


def nre(reference, estimate) -> float:
    ref, est = _pair(reference, estimate)
    norm = frobenius_norm(ref)
    if norm == 0.0:
        raise TensorError(ZERO_SIGNAL, "NRE of a zero reference")
    return frobenius_norm(est - ref) / norm


def cc(reference, estimate) -> float:
    """
    Mean over bands of the Pearson correlation. A band that is constant in either tensor
    is skipped; when every band is skipped the result is 1.0 for equal tensors, else 0.0.
    """
    ref, est = _pair(reference, estimate)
    values = []
    for k in range(ref.shape[2]):
        x = ref[:, :, k].ravel() - ref[:, :, k].mean()
        y = est[:, :, k].ravel() - est[:, :, k].mean()
        denom = np.linalg.norm(x) * np.linalg.norm(y)
        if denom > 0:
            values.append(float(np.dot(x, y) / denom))
    if not values:
        return 1.0 if np.array_equal(ref, est) else 0.0
    return float(np.clip(np.mean(values), -1.0, 1.0))


def ergas(reference, estimate, ratio: int = 1) -> float:
    """(100 / d) sqrt(mean_k (RMSE_k / mean_k)^2); bands with zero mean are skipped."""
    ref, est = _pair(reference, estimate)
    terms = _ergas_terms(ref, est)
    terms = terms[np.isfinite(terms)]
    if terms.size == 0:
        return 0.0
    return 100.0 / ratio * math.sqrt(float(np.mean(terms)))


def _ergas_terms(ref: np.ndarray, est: np.ndarray) -> np.ndarray:
    rmse_k = np.sqrt(np.mean((ref - est) ** 2, axis=(0, 1)))
    mean_k = np.mean(ref, axis=(0, 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(mean_k != 0, (rmse_k / mean_k) ** 2, np.nan)


def sam(reference, estimate) -> float:
    """Mean spectral angle over pixels, in radians; zero-norm fibers are skipped."""
    ref, est = _pair(reference, estimate)
    x = ref.reshape(-1, ref.shape[2])
    y = est.reshape(-1, est.shape[2])
    nx = np.linalg.norm(x, axis=1)
    ny = np.linalg.norm(y, axis=1)
    keep = (nx > 0) & (ny > 0)
    if not np.any(keep):
        return 0.0
    cos = np.sum(x[keep] * y[keep], axis=1) / (nx[keep] * ny[keep])
    return float(np.mean(np.arccos(np.clip(cos, -1.0, 1.0))))


def ssim(reference, estimate) -> float | None:
    """
    Band-mean SSIM with an 11x11 Gaussian window (std 1.5) and data range taken from the
    reference. None when the image is smaller than the window.
    """
    ref, est = _pair(reference, estimate)
    if min(ref.shape[:2]) < SSIM_WINDOW:
        log.warning(f"SSIM needs spatial dims >= {SSIM_WINDOW}, got {ref.shape[:2]}")
        return None
    data_range = float(ref.max() - ref.min()) or 1.0
    values = [
        structural_similarity(
            ref[:, :, k],
            est[:, :, k],
            data_range=data_range,
            gaussian_weights=True,
            sigma=SSIM_SIGMA,
            use_sample_covariance=False,
        )
        for k in range(ref.shape[2])
    ]
    return float(np.mean(values))


def compute_metrics(reference, estimate, ratio: int = 1) -> MetricsReport:
    ref, est = _pair(reference, estimate)
    if not np.any(ref):
        raise TensorError(ZERO_SIGNAL, "metrics against a zero reference")
    return MetricsReport(
        rsnr_db=rsnr(ref, est),
        ssim=ssim(ref, est),
        cc=cc(ref, est),
        ergas=ergas(ref, est, ratio),
        rmse=rmse(ref, est),
        sam_rad=sam(ref, est),
        nre=nre(ref, est),
    )


def per_band_metrics(reference, estimate) -> pd.DataFrame:
    """One row per band: rsnr_db, cc, rmse and the ERGAS summand (RMSE_k / mean_k)^2."""
    ref, est = _pair(reference, estimate)
    rows = []
    terms = _ergas_terms(ref, est)
    for k in range(ref.shape[2]):
        r = ref[:, :, k : k + 1]
        e = est[:, :, k : k + 1]
        rows.append(
            {
                "band": k,
                "rsnr_db": rsnr(r, e) if np.any(r) else float("nan"),
                "cc": cc(r, e),
                "rmse": rmse(r, e),
                "ergas_term": float(terms[k]),
            }
        )
    return pd.DataFrame(rows)


def hsi_sam_proxy(Y_H, estimate_hsi) -> float:
    """SAM between the observed HSI and the estimate degraded onto the HSI grid."""
    return sam(Y_H, estimate_hsi)
