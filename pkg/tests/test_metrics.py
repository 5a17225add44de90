import math

import numpy as np
import pytest

from climb.metrics import (
    RSNR_SENTINEL,
    cc,
    compute_metrics,
    ergas,
    nre,
    per_band_metrics,
    rmse,
    rsnr,
    sam,
    ssim,
)
from tensorkit.utils import TensorError


@pytest.fixture
def pair(rng):
    ref = rng.uniform(0.5, 2.0, (16, 16, 5))
    est = ref + 0.1 * rng.standard_normal(ref.shape)
    return ref, est


def test_identity(pair):
    ref, _ = pair
    report = compute_metrics(ref, ref.copy(), 2)
    assert report.rmse == 0.0 and report.nre == 0.0 and report.ergas == 0.0
    assert report.sam_rad == pytest.approx(0.0, abs=1e-7)
    assert report.cc == pytest.approx(1.0)
    assert report.ssim == pytest.approx(1.0)
    assert report.rsnr_db == RSNR_SENTINEL


def test_half_scale(pair):
    ref, _ = pair
    assert rsnr(ref, 0.5 * ref) == pytest.approx(6.0206, abs=1e-4)
    assert sam(ref, 0.5 * ref) == pytest.approx(0.0, abs=1e-7)


def test_loop_oracles(rng):
    ref = rng.uniform(0.5, 2.0, (5, 4, 3))
    est = rng.uniform(0.5, 2.0, (5, 4, 3))
    I, J, K = ref.shape

    angles = []
    for i in range(I):
        for j in range(J):
            x, y = ref[i, j], est[i, j]
            angles.append(math.acos(sum(x * y) / math.sqrt(sum(x * x) * sum(y * y))))
    assert sam(ref, est) == pytest.approx(sum(angles) / len(angles), rel=1e-9)

    corr = []
    terms = []
    for k in range(K):
        x = ref[:, :, k].ravel()
        y = est[:, :, k].ravel()
        mx, my = x.mean(), y.mean()
        num = sum((a - mx) * (b - my) for a, b in zip(x, y))
        den = math.sqrt(sum((a - mx) ** 2 for a in x) * sum((b - my) ** 2 for b in y))
        corr.append(num / den)
        rmse_k = math.sqrt(sum((a - b) ** 2 for a, b in zip(x, y)) / x.size)
        terms.append((rmse_k / mx) ** 2)
    assert cc(ref, est) == pytest.approx(sum(corr) / K, rel=1e-9)
    assert ergas(ref, est, 4) == pytest.approx(25.0 * math.sqrt(sum(terms) / K), rel=1e-9)

    diff = sum((a - b) ** 2 for a, b in zip(ref.ravel(), est.ravel()))
    assert rmse(ref, est) == pytest.approx(math.sqrt(diff / ref.size), rel=1e-9)
    assert rsnr(ref, est) == pytest.approx(10 * math.log10(np.sum(ref**2) / diff), rel=1e-9)


def test_consistency_identities(pair):
    ref, est = pair
    numel = ref.size
    expected = 20 * math.log10(np.linalg.norm(ref) / (rmse(ref, est) * math.sqrt(numel)))
    assert abs(rsnr(ref, est) - expected) <= 1e-9
    assert abs(rsnr(ref, est) + 20 * math.log10(nre(ref, est))) <= 1e-9


def test_sam_scale_invariance(pair, rng):
    ref, est = pair
    scale = rng.uniform(0.1, 10.0, ref.shape[:2])[:, :, np.newaxis]
    assert sam(ref, est * scale) == pytest.approx(sam(ref, est), rel=1e-9)


def test_ranges(rng):
    for _ in range(20):
        ref = rng.standard_normal((4, 4, 3))
        est = rng.standard_normal((4, 4, 3))
        assert -1.0 <= cc(ref, est) <= 1.0
        assert 0.0 <= sam(ref, est) <= math.pi
    assert cc(np.ones((3, 3, 2)), np.ones((3, 3, 2))) == 1.0
    assert cc(np.ones((3, 3, 2)), 2 * np.ones((3, 3, 2))) == 0.0


def test_cc_leaves_out_constant_bands(rng):
    ref = rng.standard_normal((4, 4, 3))
    ref[:, :, 1] = 2.0
    est = ref.copy()
    est[:, :, 1] = 5.0
    assert cc(ref, est) == pytest.approx(1.0)


def test_sam_skips_zero_fibers(pair):
    ref, est = pair
    est = est.copy()
    est[0, 0, :] = 0.0
    K = ref.shape[2]
    rest = sam(ref.reshape(-1, 1, K)[1:], est.reshape(-1, 1, K)[1:])
    assert sam(ref, est) == pytest.approx(rest, rel=1e-12)
    assert sam(np.zeros((2, 2, 2)), np.zeros((2, 2, 2))) == 0.0


def test_ssim_small_image_is_none(rng):
    ref = rng.uniform(size=(5, 5, 3))
    assert ssim(ref, ref) is None
    assert compute_metrics(ref, ref).ssim is None


def test_ssim_decreases_with_noise(pair, rng):
    ref, _ = pair
    low = ref + 0.01 * rng.standard_normal(ref.shape)
    high = ref + 0.5 * rng.standard_normal(ref.shape)
    assert 1.0 > ssim(ref, low) > ssim(ref, high)


def test_errors(pair):
    ref, est = pair
    with pytest.raises(TensorError) as e:
        compute_metrics(ref, est[:, :, :4])
    assert e.value.code == 102
    with pytest.raises(TensorError) as e:
        compute_metrics(np.zeros_like(ref), est)
    assert e.value.code == 304


def test_report_and_per_band(pair):
    ref, est = pair
    report = compute_metrics(ref, est, 2)
    frame = report.to_frame()
    assert list(frame.columns) == ["rsnr_db", "ssim", "cc", "ergas", "rmse", "sam_rad", "nre"]
    assert frame.loc[0, "nre"] == report.nre

    bands = per_band_metrics(ref, est)
    assert list(bands.columns) == ["band", "rsnr_db", "cc", "rmse", "ergas_term"]
    assert len(bands) == 5
    assert np.sqrt(bands["ergas_term"].mean()) * 50 == pytest.approx(report.ergas, rel=1e-12)
    assert bands.loc[2, "rmse"] == pytest.approx(rmse(ref[:, :, 2:3], est[:, :, 2:3]))
