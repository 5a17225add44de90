import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from climb.degradation import degrade_spatial, degrade_spectral
from climb.model import make_special_shape, reconstruct, reconstruct_term
from climb.regularization import build_H1, build_H3
from climb.synth import (
    SyntheticSpec,
    generate,
    generate_ev_tensor,
    smoothness_profile,
    sparsity_count,
    spectrum_frame,
    unfolding_spectrum,
)
from tensorkit.core import mode_product
from tensorkit.utils import TensorError


def test_desk_instance(desk):
    assert desk.report.passed
    assert desk.report.blind
    assert desk.Y_S.shape == (24, 24, 32)
    assert desk.Y_H.shape == (12, 12, 32)
    assert desk.Y_M.shape == (24, 24, 8)
    assert_array_equal(desk.Y_H, degrade_spatial(desk.Y_S, desk.degradation.P1, desk.degradation.P2))
    assert_array_equal(desk.Y_M, degrade_spectral(desk.Y_S, desk.degradation.PM))
    assert_array_equal(desk.Y_S, reconstruct(desk.model))


def test_generate_deterministic(desk):
    again = generate(SyntheticSpec())
    assert_array_equal(again.Y_H, desk.Y_H)
    assert_array_equal(again.Y_M, desk.Y_M)
    other = generate(SyntheticSpec(seed=1))
    assert not np.array_equal(other.Y_S, desk.Y_S)


def test_generate_with_noise(desk):
    noisy = generate(SyntheticSpec(snr_db=30.0))
    assert_array_equal(noisy.Y_S, desk.Y_S)
    err_h = noisy.Y_H - desk.Y_H
    snr = 10 * np.log10(np.sum(desk.Y_H**2) / np.sum(err_h**2))
    assert abs(snr - 30.0) <= 0.5
    assert_array_equal(noisy.Y_H, generate(SyntheticSpec(snr_db=30.0)).Y_H)


def test_generate_reports_failed_conditions():
    data = generate(SyntheticSpec(K_M=4))
    assert data.report.failed() == ["K_M >= 2N"]


def test_generate_with_preset():
    data = generate(SyntheticSpec(dims_sri=(32, 32, 48), preset="quickbird", ranks=(2, 2, 3)))
    assert data.Y_H.shape == (8, 8, 48)
    assert data.Y_M.shape == (32, 32, 4)


@pytest.mark.parametrize(
    "kwargs, code",
    [({"dims_sri": (25, 24, 32)}, 303), ({"ranks": (30, 3, 3)}, 301), ({"R": 0}, 301), ({"ranks": (3, 3)}, 303)],
)
def test_invalid_spec(kwargs, code):
    with pytest.raises(TensorError) as e:
        SyntheticSpec(**kwargs)
    assert e.value.code == code


def test_unfolding_spectrum_rank_one(rng):
    a, b, c = rng.standard_normal(4), rng.standard_normal(5), rng.standard_normal(6)
    t = np.einsum("i,j,k->ijk", a, b, c)
    for mode in (1, 2, 3):
        s, energy = unfolding_spectrum(t, mode)
        assert np.all(s[1:] <= 1e-12 * s[0])
        assert energy[0] == pytest.approx(1.0, abs=1e-12)


def test_unfolding_spectrum_multilinear_rank():
    model = make_special_shape("LMN", (8, 8, 8), [(3, 3, 3)], 4)
    t = reconstruct_term(model, 0)
    for mode in (1, 2, 3):
        s, energy = unfolding_spectrum(t, mode)
        assert abs(energy[2] - 1.0) <= 1e-10
        assert energy[1] < 1.0
        assert np.all(np.diff(energy) >= 0)
        assert energy[-1] == pytest.approx(1.0)


def test_unfolding_spectrum_zero():
    s, energy = unfolding_spectrum(np.zeros((3, 4, 5)), 2)
    assert_array_equal(s, 0.0)
    assert_array_equal(energy, 0.0)


def test_spectrum_frame(rng):
    frame = spectrum_frame(rng.standard_normal((4, 5, 6)))
    assert list(frame.columns) == ["mode", "index", "singular_value", "energy"]
    assert len(frame) == 4 + 5 + 6
    assert frame.groupby("mode")["energy"].max().round(12).tolist() == [1.0, 1.0, 1.0]


def test_smoothness_constant():
    profiles, summary = smoothness_profile(np.full((4, 5, 6), 3.0))
    for p in profiles:
        assert_array_equal(p, 0.0)
    assert summary["max"].tolist() == [0.0, 0.0, 0.0]
    assert summary["zeros"].tolist() == [3 * 5 * 6, 4 * 4 * 6, 4 * 5 * 4]


def test_smoothness_affine_spectrum(rng):
    f = rng.standard_normal((4, 5, 1))
    g = rng.standard_normal((4, 5, 1))
    t = f + g * np.arange(6.0)
    profiles, _ = smoothness_profile(t)
    assert np.max(profiles[2]) <= 1e-12 * np.max(np.abs(t))
    assert np.max(profiles[0]) > 0 and np.max(profiles[1]) > 0


def test_smoothness_random(rng):
    t = rng.standard_normal((4, 5, 6))
    profiles, summary = smoothness_profile(t)
    assert_allclose(profiles[0], np.abs(mode_product(t, build_H1(4), 1)))
    assert_allclose(profiles[2], np.abs(mode_product(t, build_H3(6), 3)))
    assert summary.loc[1, "max"] == pytest.approx(profiles[1].max())
    assert 0 < summary.loc[0, "mean_normalized"] <= 1
    with pytest.raises(TensorError):
        smoothness_profile(np.ones((4, 5, 2)))


def test_sparsity_count(rng):
    assert sparsity_count(np.zeros((2, 3, 4)), 0.0) == 24
    assert sparsity_count(np.zeros((2, 3, 4))) == 24
    assert sparsity_count(np.ones((2, 3, 4)), 0.0) == 0
    t = rng.standard_normal((3, 3, 3))
    expected = sum(1 for x in t.ravel() if abs(x) <= 0.5)
    assert sparsity_count(t, 0.5) == expected
    with pytest.raises(TensorError):
        sparsity_count(t, -1.0)


def test_generate_ev_tensor():
    model, t = generate_ev_tensor((12, 10, 8), R=3, ranks=(3, 3, 2), seed=2)
    assert t.shape == (12, 10, 8)
    assert model.ranks == [(3, 3, 2)] * 3
    assert np.all(t >= 0)
    assert_array_equal(t, reconstruct(model))
    _, again = generate_ev_tensor((12, 10, 8), R=3, ranks=(3, 3, 2), seed=2)
    assert_array_equal(t, again)
    with pytest.raises(TensorError):
        generate_ev_tensor((4, 4, 4), ranks=(5, 3, 2))
