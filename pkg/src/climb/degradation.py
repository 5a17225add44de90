"""
Wald-protocol degradation: spatial blur + decimation (P1, P2) and spectral band
aggregation (PM), plus SNR-calibrated white Gaussian noise.
"""

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from tensorkit import comm
from tensorkit.core import mode_product, singular_values
from tensorkit.errors import INVALID_ARGUMENT, INVALID_CONFIG, IO_FAILURE, ZERO_SIGNAL
from tensorkit.utils import TensorError, as_matrix, as_tensor3

log = logging.getLogger("climb.degradation")
log.setLevel(logging.INFO)

RANK_TOL = 1e-10


@dataclass
class DegradationPreset:
    ratio: int = 1
    blur_size: int = 9
    blur_sigma: float | None = None
    # explicit index lists, or {"uniform": K_M} for K_M equal contiguous windows
    band_windows: list | dict = field(default_factory=lambda: {"uniform": None})

    def __post_init__(self):
        if self.blur_size < 1 or self.blur_size % 2 == 0:
            raise TensorError(INVALID_CONFIG, f"blur_size must be odd and positive, got {self.blur_size}")
        if self.ratio < 1:
            raise TensorError(INVALID_CONFIG, f"ratio must be >= 1, got {self.ratio}")
        if self.blur_sigma is not None and self.blur_sigma <= 0:
            raise TensorError(INVALID_CONFIG, f"blur_sigma must be > 0, got {self.blur_sigma}")

    @property
    def sigma(self) -> float:
        return float(self.blur_sigma) if self.blur_sigma is not None else self.ratio / 2

    def windows(self, K_H: int) -> list[list[int]]:
        if isinstance(self.band_windows, dict):
            # {"uniform": null} keeps every band
            K_M = int(self.band_windows.get("uniform") or K_H)
            if not 1 <= K_M <= K_H:
                raise TensorError(INVALID_CONFIG, f"cannot split {K_H} bands into {K_M} windows")
            return [[int(k) for k in w] for w in np.array_split(np.arange(K_H), K_M)]
        return [[int(k) for k in w] for w in self.band_windows]


@dataclass
class DegradationSet:
    P1: np.ndarray
    P2: np.ndarray
    PM: np.ndarray
    blur_size: int = 9
    blur_sigma: float = 1.0
    ratio: int = 1
    band_windows: list[list[int]] = field(default_factory=list)

    def __post_init__(self):
        self.P1 = as_matrix(self.P1, "P1")
        self.P2 = as_matrix(self.P2, "P2")
        self.PM = as_matrix(self.PM, "PM")

    @property
    def dims_sri(self) -> tuple[int, int, int]:
        return (self.P1.shape[1], self.P2.shape[1], self.PM.shape[1])

    @property
    def dims_hsi(self) -> tuple[int, int, int]:
        return (self.P1.shape[0], self.P2.shape[0], self.PM.shape[1])

    @property
    def dims_msi(self) -> tuple[int, int, int]:
        return (self.P1.shape[1], self.P2.shape[1], self.PM.shape[0])

    @property
    def K_M(self) -> int:
        return self.PM.shape[0]

    def full_row_rank(self) -> dict[str, bool]:
        return {name: has_full_row_rank(getattr(self, name)) for name in ("P1", "P2", "PM")}

    def save(self, directory, name: str = "degradation") -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        doc = {
            "blur_size": self.blur_size,
            "blur_sigma": self.blur_sigma,
            "ratio": self.ratio,
            "band_windows": self.band_windows,
        }
        for key in ("P1", "P2", "PM"):
            fname = f"{name}_{key}.t3b"
            comm.write_matrix(directory / fname, getattr(self, key))
            doc[key] = fname
        path = directory / f"{name}.json"
        path.write_text(json.dumps(doc, indent=2))
        return path

    @classmethod
    def load(cls, path) -> "DegradationSet":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, ValueError) as e:
            raise TensorError(IO_FAILURE, f"{path}: {e}") from e
        try:
            mats = {key: comm.read_matrix(path.parent / doc[key]) for key in ("P1", "P2", "PM")}
            return cls(
                blur_size=int(doc["blur_size"]),
                blur_sigma=float(doc["blur_sigma"]),
                ratio=int(doc["ratio"]),
                band_windows=doc["band_windows"],
                **mats,
            )
        except KeyError as e:
            raise TensorError(IO_FAILURE, f"{path}: missing key {e}") from e


def has_full_row_rank(m: np.ndarray) -> bool:
    s = singular_values(m)
    if s.size < m.shape[0] or s[0] == 0:
        return False
    return bool(s[-1] > RANK_TOL * s[0])


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    h = (size - 1) // 2
    t = np.arange(-h, h + 1, dtype=np.float64)
    g = np.exp(-(t**2) / (2 * sigma**2))
    return g / g.sum()


def build_spatial(n_hi: int, ratio: int, blur_size: int = 9, blur_sigma: float | None = None) -> np.ndarray:
    """
    P = S K: K is the symmetric-padded 1-D Gaussian convolution matrix, S keeps rows
    ratio//2 + t*ratio.
    """
    if ratio < 1 or n_hi % ratio != 0:
        raise TensorError(INVALID_ARGUMENT, f"n_hi={n_hi} is not divisible by ratio={ratio}")
    if blur_size < 1 or blur_size % 2 == 0:
        raise TensorError(INVALID_ARGUMENT, f"blur_size must be odd and positive, got {blur_size}")
    sigma = ratio / 2 if blur_sigma is None else blur_sigma
    g = gaussian_kernel(blur_size, sigma)
    h = (blur_size - 1) // 2
    # rows of the padded identity are basis rows, so every row of K sums to 1
    padded = np.pad(np.eye(n_hi), ((h, h), (0, 0)), mode="symmetric")
    K = np.zeros((n_hi, n_hi))
    for t, weight in enumerate(g):
        K += weight * padded[t : t + n_hi, :]
    rows = ratio // 2 + ratio * np.arange(n_hi // ratio)
    return K[rows, :]


def build_spectral(K_H: int, band_windows) -> np.ndarray:
    if not band_windows:
        raise TensorError(INVALID_ARGUMENT, "no band windows")
    PM = np.zeros((len(band_windows), K_H))
    for row, window in enumerate(band_windows):
        idx = np.asarray(list(window), dtype=int)
        if idx.size == 0:
            raise TensorError(INVALID_ARGUMENT, f"band window {row} is empty")
        if idx.min() < 0 or idx.max() >= K_H:
            raise TensorError(INVALID_ARGUMENT, f"band window {row} leaves [0, {K_H})")
        PM[row, np.unique(idx)] = 1.0 / np.unique(idx).size
    return PM


def make_degradation(dims_sri, preset: DegradationPreset) -> DegradationSet:
    I_M, J_M, K_H = (int(d) for d in dims_sri)
    windows = preset.windows(K_H)
    deg = DegradationSet(
        P1=build_spatial(I_M, preset.ratio, preset.blur_size, preset.sigma),
        P2=build_spatial(J_M, preset.ratio, preset.blur_size, preset.sigma),
        PM=build_spectral(K_H, windows),
        blur_size=preset.blur_size,
        blur_sigma=preset.sigma,
        ratio=preset.ratio,
        band_windows=windows,
    )
    for name, ok in deg.full_row_rank().items():
        if not ok:
            log.warning(f"{name} is not numerically full row rank")
    return deg


def identity_degradation(dims_sri) -> DegradationSet:
    I, J, K = (int(d) for d in dims_sri)
    return DegradationSet(
        np.eye(I), np.eye(J), np.eye(K), blur_size=1, blur_sigma=1.0, ratio=1,
        band_windows=[[k] for k in range(K)],
    )


def degrade_spatial(sri, P1, P2) -> np.ndarray:
    """Y_H = Y_S x1 P1 x2 P2, i.e. P1 Y(:,:,k) P2^T per band."""
    sri = as_tensor3(sri, "SRI")
    return mode_product(mode_product(sri, P1, 1), P2, 2)


def degrade_spectral(sri, PM) -> np.ndarray:
    """Y_M = Y_S x3 PM."""
    return mode_product(as_tensor3(sri, "SRI"), PM, 3)


def add_noise(t, snr_db: float, seed=None) -> np.ndarray:
    """
    t + e with e ~ N(0, s^2), s^2 = (||t||_F^2 / numel) 10^(-snr/10).
    Philox is counter-based, so the draw depends only on (seed, dims).
    """
    t = as_tensor3(t)
    power = float(np.sum(t**2)) / t.size
    if power == 0.0:
        raise TensorError(ZERO_SIGNAL, "SNR is undefined for a zero tensor")
    sigma = np.sqrt(power * 10.0 ** (-snr_db / 10.0))
    rng = np.random.Generator(np.random.Philox(seed))
    noise = rng.standard_normal(t.shape)
    return t + sigma * noise


def noise_sigma(t, snr_db: float) -> float:
    t = as_tensor3(t)
    return float(np.sqrt(float(np.sum(t**2)) / t.size * 10.0 ** (-snr_db / 10.0)))


########################################
### Presets


def load_preset(name_or_path) -> DegradationPreset:
    """Preset by package name ("desk", "identity", "landsat", "quickbird") or by file path."""
    path = Path(str(name_or_path))
    if path.suffix == ".json" or path.exists():
        if not path.exists():
            raise TensorError(IO_FAILURE, f"preset not found: {path}")
        text = path.read_text()
    else:
        try:
            text = resources.files("climb.presets").joinpath(f"{name_or_path}.json").read_text()
        except (FileNotFoundError, ModuleNotFoundError) as e:
            raise TensorError(IO_FAILURE, f"preset not found: {name_or_path}") from e
    try:
        doc = json.loads(text)
    except ValueError as e:
        raise TensorError(INVALID_CONFIG, f"preset {name_or_path}: {e}") from e
    allowed = set(DegradationPreset.__dataclass_fields__)
    unknown = set(doc) - allowed
    if unknown:
        raise TensorError(INVALID_CONFIG, f"preset {name_or_path}: unknown keys {sorted(unknown)}")
    return DegradationPreset(**doc)

