"""
Synthetic ground truth for recovery experiments and the unfolding-spectrum, smoothness
and sparsity diagnostics.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from tensorkit.core import mode_product, singular_values, unfold
from tensorkit.errors import INVALID_ARGUMENT, INVALID_RANK
from tensorkit.utils import TensorError, as_tensor3

from .degradation import (
    DegradationPreset,
    DegradationSet,
    add_noise,
    degrade_spatial,
    degrade_spectral,
    load_preset,
    make_degradation,
)
from .model import LmnModel, LmnTerm, RecoverabilityReport, check_recoverability, make_special_shape, reconstruct
from .regularization import build_H1, build_H2, build_H3

log = logging.getLogger("climb.synth")
log.setLevel(logging.INFO)


@dataclass
class SyntheticSpec:
    dims_sri: tuple[int, int, int] = (24, 24, 32)
    ratio: int = 2
    K_M: int = 8
    R: int = 2
    ranks: tuple[int, int, int] = (3, 3, 3)
    snr_db: float | None = None
    seed: int | None = 0
    # preset name or path; None builds one from ratio, K_M and the blur fields
    preset: str | None = None
    blur_size: int = 5
    blur_sigma: float | None = None

    def __post_init__(self):
        self.dims_sri = tuple(int(d) for d in self.dims_sri)
        self.ranks = tuple(int(n) for n in self.ranks)
        if len(self.dims_sri) != 3 or len(self.ranks) != 3:
            raise TensorError(INVALID_ARGUMENT, f"dims {self.dims_sri} and ranks {self.ranks} need three entries")
        I, J, K = self.dims_sri
        if self.ratio < 1 or I % self.ratio or J % self.ratio:
            raise TensorError(INVALID_ARGUMENT, f"dims {self.dims_sri} not divisible by ratio {self.ratio}")
        L, M, N = self.ranks
        if self.R < 1 or min(self.ranks) < 1 or L > I or M > J or N > K:
            raise TensorError(INVALID_RANK, f"R={self.R}, ranks {self.ranks} infeasible for {self.dims_sri}")

    def degradation_preset(self) -> DegradationPreset:
        if self.preset is not None:
            return load_preset(self.preset)
        return DegradationPreset(
            ratio=self.ratio,
            blur_size=self.blur_size,
            blur_sigma=self.blur_sigma,
            band_windows={"uniform": self.K_M},
        )


@dataclass
class SyntheticData:
    model: LmnModel
    Y_S: np.ndarray
    Y_H: np.ndarray
    Y_M: np.ndarray
    degradation: DegradationSet
    report: RecoverabilityReport = field(repr=False, default=None)


def generate(spec: SyntheticSpec) -> SyntheticData:
    """Gaussian LMN truth, its Wald-protocol HSI/MSI and the recoverability report."""
    model = make_special_shape("LMN", spec.dims_sri, [spec.ranks] * spec.R, spec.seed)
    Y_S = reconstruct(model)
    deg = make_degradation(spec.dims_sri, spec.degradation_preset())
    Y_H = degrade_spatial(Y_S, deg.P1, deg.P2)
    Y_M = degrade_spectral(Y_S, deg.PM)
    if spec.snr_db is not None:
        seed_h, seed_m = np.random.SeedSequence(spec.seed).spawn(2)
        Y_H = add_noise(Y_H, spec.snr_db, seed_h)
        Y_M = add_noise(Y_M, spec.snr_db, seed_m)
    report = check_recoverability(spec.dims_sri, deg.dims_hsi, deg.K_M, spec.ranks, spec.R, blind=True)
    log.debug(f"generated {spec.dims_sri} SRI, R={spec.R}, ranks {spec.ranks}, snr {spec.snr_db}")
    return SyntheticData(model, Y_S, Y_H, Y_M, deg, report)


def _bumps(n: int, count: int, rng) -> np.ndarray:
    """Nonnegative smooth columns: Gaussian bumps at random centers and widths."""
    t = np.arange(n, dtype=np.float64)[:, np.newaxis]
    centers = rng.uniform(0, n - 1, count)
    widths = rng.uniform(n / 8, n / 3, count)
    return np.exp(-((t - centers) ** 2) / (2 * widths**2))


def _smooth_spectra(K: int, count: int, rng) -> np.ndarray:
    walk = np.cumsum(rng.standard_normal((K, count)), axis=0)
    walk -= walk.min(axis=0)
    return walk / np.maximum(walk.max(axis=0), 1e-12)


def generate_ev_tensor(dims, R: int = 3, ranks=(3, 3, 2), variability: float = 0.2, seed=None):
    """
    SRI with per-pixel endmember variation: each material has smooth nonnegative spatial
    factors and a base spectrum plus N-1 variation directions scaled by `variability`.
    Returns (truth LmnModel, tensor).
    """
    I, J, K = (int(d) for d in dims)
    L, M, N = (int(n) for n in ranks)
    if L > I or M > J or N > K:
        raise TensorError(INVALID_RANK, f"ranks {ranks} exceed dims {dims}")
    rng = np.random.default_rng(seed)
    terms = []
    for _ in range(R):
        A = _bumps(I, L, rng)
        B = _bumps(J, M, rng)
        C = 0.5 + _smooth_spectra(K, N, rng)
        C[:, 1:] *= variability
        D = np.abs(rng.standard_normal((L, M, N)))
        terms.append(LmnTerm(D, A, B, C))
    model = LmnModel(terms)
    return model, reconstruct(model)


########################################
### Diagnostics


def unfolding_spectrum(t, mode: int) -> tuple[np.ndarray, np.ndarray]:
    """Singular values of the mode-n unfolding and their cumulative energy fractions."""
    s = singular_values(unfold(t, mode))
    energy = np.cumsum(s**2)
    total = energy[-1] if energy.size else 0.0
    if total == 0.0:
        return s, np.zeros_like(s)
    return s, energy / total


def spectrum_frame(t) -> pd.DataFrame:
    rows = []
    for mode in (1, 2, 3):
        s, energy = unfolding_spectrum(t, mode)
        rows += [
            {"mode": mode, "index": i + 1, "singular_value": float(v), "energy": float(e)}
            for i, (v, e) in enumerate(zip(s, energy))
        ]
    return pd.DataFrame(rows)


def smoothness_profile(t) -> tuple[list[np.ndarray], pd.DataFrame]:
    """
    |t x1 H1|, |t x2 H2|, |t x3 H3| and a summary of each normalized by its largest value.
    """
    t = as_tensor3(t)
    I, J, K = t.shape
    if I < 2 or J < 2 or K < 3:
        raise TensorError(INVALID_ARGUMENT, f"difference stencils need dims >= (2, 2, 3), got {t.shape}")
    profiles = [
        np.abs(mode_product(t, build_H1(I), 1)),
        np.abs(mode_product(t, build_H2(J), 2)),
        np.abs(mode_product(t, build_H3(K), 3)),
    ]
    rows = []
    for mode, p in zip((1, 2, 3), profiles):
        peak = float(p.max())
        normalized = p / peak if peak > 0 else p
        rows.append(
            {
                "mode": mode,
                "max": peak,
                "mean_normalized": float(normalized.mean()),
                "median_normalized": float(np.median(normalized)),
                "zeros": sparsity_count(p),
            }
        )
    return profiles, pd.DataFrame(rows)


def sparsity_count(t, threshold: float | None = None) -> int:
    """Entries with |x| <= threshold; the default threshold is 1e-12 max|t|."""
    t = np.asarray(t, dtype=np.float64)
    if threshold is None:
        threshold = 1e-12 * float(np.max(np.abs(t))) if t.size else 0.0
    if threshold < 0:
        raise TensorError(INVALID_ARGUMENT, f"threshold={threshold} must be >= 0")
    return int(np.count_nonzero(np.abs(t) <= threshold))
