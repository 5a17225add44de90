import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from climb.model import (
    LmnModel,
    LmnTerm,
    SemiBlindModel,
    check_recoverability,
    count_params,
    load_model,
    make_special_shape,
    normalize_rank_spec,
    ranks_for_budget,
    reconstruct,
    reconstruct_term,
    save_model,
)
from tensorkit.utils import TensorError

URBAN = (200, 200, 162)
PAVIA = (200, 200, 103)


def loop_reconstruct(model):
    """Direct sum over (l, m, n) of outer products."""
    I, J, K = model.dims
    out = np.zeros((I, J, K))
    for term in model.terms:
        L, M, N = term.ranks
        for l in range(L):
            for m in range(M):
                for n in range(N):
                    out += term.D[l, m, n] * np.einsum("i,j,k->ijk", term.A[:, l], term.B[:, m], term.C[:, n])
    return out


@pytest.mark.parametrize(
    "kind, spec",
    [("CPD", 3), ("TUCKER", (2, 3, 2)), ("LL1", [2, 1, 3]), ("LMN", [(2, 2, 2), (1, 3, 2)])],
)
def test_reconstruct_matches_loop(kind, spec):
    model = make_special_shape(kind, (5, 4, 6), spec, 3)
    assert_allclose(reconstruct(model), loop_reconstruct(model), rtol=1e-12, atol=1e-12)


def test_reconstruct_examples():
    term = LmnTerm(np.ones((1, 1, 1)), np.ones((2, 1)), np.ones((2, 1)), np.ones((2, 1)))
    assert_array_equal(reconstruct(LmnModel([term])), np.ones((2, 2, 2)))

    term = LmnTerm(np.zeros((1, 1, 1)), np.ones((2, 1)), np.ones((2, 1)), np.ones((2, 1)))
    assert_array_equal(reconstruct(LmnModel([term, term.copy()])), np.zeros((2, 2, 2)))


def test_reconstruct_is_additive(rng):
    model = make_special_shape("LMN", (4, 5, 6), [(2, 2, 2)] * 3, 11)
    total = sum(reconstruct_term(model, r) for r in range(model.R))
    assert_allclose(reconstruct(model), total, rtol=1e-12)
    with pytest.raises(TensorError) as e:
        reconstruct_term(model, 3)
    assert e.value.code == 302


def test_gauge_invariance(rng):
    model = make_special_shape("LMN", (5, 5, 6), [(2, 3, 2), (3, 2, 2)], 5)
    moved = model.copy()
    for term in moved.terms:
        L, M, N = term.ranks
        T1 = rng.standard_normal((L, L)) + 3 * np.eye(L)
        T2 = rng.standard_normal((M, M)) + 3 * np.eye(M)
        T3 = rng.standard_normal((N, N)) + 3 * np.eye(N)
        term.A = term.A @ T1
        term.B = term.B @ T2
        term.C = term.C @ T3
        D = np.einsum("ai,ijk->ajk", np.linalg.inv(T1), term.D)
        D = np.einsum("bj,ajk->abk", np.linalg.inv(T2), D)
        term.D = np.einsum("ck,abk->abc", np.linalg.inv(T3), D)
    Y = reconstruct(model)
    assert np.linalg.norm(reconstruct(moved) - Y) <= 1e-10 * np.linalg.norm(Y)


def test_term_validation():
    with pytest.raises(TensorError) as e:
        LmnTerm(np.ones((2, 2, 2)), np.ones((4, 3)), np.ones((4, 2)), np.ones((4, 2)))
    assert e.value.code == 102
    with pytest.raises(TensorError) as e:
        LmnTerm(np.ones((3, 1, 1)), np.ones((2, 3)), np.ones((4, 1)), np.ones((4, 1)))
    assert e.value.code == 301
    term = LmnTerm(np.ones((1, 1, 1)), np.ones((3, 1)), np.ones((3, 1)), np.ones((3, 1)))
    other = LmnTerm(np.ones((1, 1, 1)), np.ones((4, 1)), np.ones((3, 1)), np.ones((3, 1)))
    with pytest.raises(TensorError) as e:
        LmnModel([term, other])
    assert e.value.code == 102


def test_special_shapes():
    cpd = make_special_shape("CPD", (4, 4, 4), 3, 0)
    assert cpd.ranks == [(1, 1, 1)] * 3
    tucker = make_special_shape("TUCKER", (4, 4, 4), (2, 3, 4), 0)
    assert tucker.ranks == [(2, 3, 4)]
    ll1 = make_special_shape("LL1", (4, 4, 4), [2, 3], 0)
    assert ll1.ranks == [(2, 2, 1), (3, 3, 1)]
    for term in ll1.terms:
        assert term.core_frozen
        assert_array_equal(term.D[:, :, 0], np.eye(term.ranks[0]))

    a = make_special_shape("LMN", (4, 4, 4), [(2, 2, 2)], 9)
    b = make_special_shape("LMN", (4, 4, 4), [(2, 2, 2)], 9)
    assert_array_equal(reconstruct(a), reconstruct(b))


@pytest.mark.parametrize(
    "kind, spec",
    [("TUCKER", (5, 1, 1)), ("CPD", 0), ("LMN", [(1, 1)]), ("LL1", []), ("CPD", [1, 2])],
)
def test_invalid_rank_specs(kind, spec):
    with pytest.raises(TensorError) as e:
        make_special_shape(kind, (4, 4, 4), spec, 0)
    assert e.value.code == 301


def test_count_params_examples():
    assert count_params("LMN", URBAN, [(14, 14, 5)] * 4) == 29560
    assert count_params("CPD", URBAN, 52) == 29224
    assert count_params("TUCKER", (1, 1, 1), (1, 1, 1)) == 4
    assert count_params("LL1", (10, 10, 5), [2, 3]) == 20 * 2 + 20 * 3 + 5 * 2


def test_count_params_matches_model_size():
    # CPD scales live in the factors, so its 1x1x1 cores are not counted; frozen LL1 cores never are
    for kind, spec in [("CPD", 3), ("TUCKER", (2, 3, 2)), ("LMN", [(2, 2, 2), (1, 3, 2)]), ("LL1", [2, 3])]:
        model = make_special_shape(kind, (5, 6, 7), spec, 0)
        counted = [t.D.size if kind != "CPD" and not t.core_frozen else 0 for t in model.terms]
        size = sum(t.A.size + t.B.size + t.C.size + d for t, d in zip(model.terms, counted))
        assert count_params(kind, (5, 6, 7), spec) == size


def _buckets(start, step):
    return [start + i * step for i in range(7)]


# budget-matched settings on the two real-data cubes; every count must land within 5% of its bucket
URBAN_ROWS = (
    [("CPD", F) for F in (52, 80, 106, 133, 160, 186, 212)],
    [("TUCKER", t) for t in [(51, 54, 3), (66, 66, 4), (90, 88, 3), (96, 96, 4), (108, 104, 4), (120, 118, 4), (120, 118, 5)]],
    [("LMN", [(L, L, N)] * 4) for L, N in [(14, 5), (22, 3), (28, 4), (32, 5), (39, 4), (44, 4), (49, 4)]],
)
PAVIA_ROWS = (
    [("CPD", F) for F in (39, 59, 79, 99, 119, 139, 155)],
    [("TUCKER", t) for t in [(39, 37, 3), (42, 42, 7), (62, 60, 4), (78, 78, 3), (80, 98, 3), (91, 91, 4), (98, 101, 4)]],
    [("LL1", [L] * 4) for L in (12, 18, 24, 30, 37, 43, 49)],
    [("LMN", [(L, L, N)] * R) for L, N, R in [(10, 4, 4), (16, 3, 4), (20, 3, 4), (25, 3, 4), (29, 3, 4), (34, 3, 4), (38, 3, 4)]],
)


def _cases(dims, rows, buckets):
    return [(dims, kind, spec, b) for row in rows for (kind, spec), b in zip(row, buckets)]


@pytest.mark.parametrize(
    "dims, kind, spec, bucket",
    _cases(URBAN, URBAN_ROWS, _buckets(30_000, 15_000))
    + [(URBAN, "LL1", [L] * 4, b) for L, b in [(18, 30_000), (27, 45_000), (37, 60_000), (46, 75_000)]]
    + _cases(PAVIA, PAVIA_ROWS, _buckets(20_000, 10_000)),
)
def test_budget_buckets(dims, kind, spec, bucket):
    n = count_params(kind, dims, spec)
    assert abs(n - bucket) <= 0.05 * bucket


def test_ranks_for_budget():
    dims = (24, 24, 16)
    assert count_params("LMN", dims, [(3, 3, 2)] * 3) == 582
    assert ranks_for_budget("LMN", dims, 582, R=3, N=2) == [(3, 3, 2)] * 3
    assert ranks_for_budget("LL1", dims, 582, R=3) == [3, 3, 3]
    assert count_params("LL1", dims, [3, 3, 3]) == 480
    assert ranks_for_budget("CPD", dims, 582) == 9
    spec = ranks_for_budget("TUCKER", dims, 582, N=2)
    assert count_params("TUCKER", dims, spec) <= 582
    with pytest.raises(TensorError):
        ranks_for_budget("CPD", dims, 10)


def test_normalize_rank_spec():
    assert normalize_rank_spec("LL1", [2, 4]) == [(2, 2, 1), (4, 4, 1)]
    assert normalize_rank_spec("CPD", 2) == [(1, 1, 1), (1, 1, 1)]
    assert normalize_rank_spec("LMN", [[1, 2, 3]]) == [(1, 2, 3)]


def test_recoverability_examples():
    dims, hsi = (24, 24, 32), (12, 12)
    assert check_recoverability(dims, hsi, 8, (3, 3, 3), 2).passed
    assert check_recoverability(dims, hsi, 8, (3, 3, 3), 2, blind=True).passed

    report = check_recoverability(dims, hsi, 8, (3, 3, 2), 2)
    assert not report.passed
    assert report.failed() == ["N >= max(ceil(L/M)+ceil(M/L), 3)"]

    report = check_recoverability(dims, hsi, 5, (3, 3, 3), 2, blind=True)
    assert report.failed() == ["K_M >= 2N"]

    report = check_recoverability((8, 24, 32), hsi, 8, (3, 3, 3), 3)
    assert "I_M >= L*R" in report.failed()
    doc = report.as_dict()
    assert doc["passed"] is False and len(doc["conditions"]) == 5

    # L/M = 4 raises the floor on N to ceil(4) + ceil(1/4) = 5
    assert "N >= max(ceil(L/M)+ceil(M/L), 3)" in check_recoverability(dims, hsi, 8, (4, 1, 4), 1).failed()
    assert check_recoverability(dims, hsi, 8, [(3, 3, 3), (3, 3, 3)], 2).passed
    with pytest.raises(TensorError):
        check_recoverability(dims, hsi, 8, [(3, 3, 3), (2, 2, 3)], 2)


def test_save_load(tmp_path):
    model = make_special_shape("LL1", (6, 5, 4), [2, 1], 4)
    path = save_model(model, tmp_path / "out", "truth")
    loaded = load_model(path)
    assert isinstance(loaded, LmnModel)
    assert [t.core_frozen for t in loaded.terms] == [True, True]
    for a, b in zip(model.terms, loaded.terms):
        for key in "DABC":
            assert_array_equal(getattr(a, key), getattr(b, key))

    P1 = np.full((3, 6), 0.5)
    P2 = np.full((2, 5), 0.2)
    semi = SemiBlindModel.from_model(model, P1, P2)
    assert_allclose(semi.A_tilde[0], P1 @ model.terms[0].A)
    loaded = load_model(save_model(semi, tmp_path, "semi"))
    assert isinstance(loaded, SemiBlindModel)
    assert loaded.hsi_dims == (3, 2)
    assert_array_equal(loaded.B_tilde[1], semi.B_tilde[1])


def test_load_model_errors(tmp_path):
    with pytest.raises(TensorError) as e:
        load_model(tmp_path / "missing.json")
    assert e.value.code == 203
    (tmp_path / "other.json").write_text('{"format": "something-else"}')
    with pytest.raises(TensorError) as e:
        load_model(tmp_path / "other.json")
    assert e.value.code == 203


def test_semi_blind_hsi_reconstruction(rng):
    model = make_special_shape("LMN", (6, 6, 5), [(2, 2, 2)] * 2, 1)
    P1 = rng.standard_normal((3, 6))
    P2 = rng.standard_normal((3, 6))
    semi = SemiBlindModel.from_model(model, P1, P2)
    expected = np.einsum("ai,bj,ijk->abk", P1, P2, reconstruct(model))
    assert_allclose(semi.reconstruct_hsi(), expected, rtol=1e-10, atol=1e-10)
    with pytest.raises(TensorError):
        SemiBlindModel(model, semi.A_tilde[:1], semi.B_tilde)
