import numpy as np
import pytest

from ChandraMCC.exceptions import (
    ConditioningError,
    DefinitenessError,
    SchemaError,
    ShapeError,
    SymmetryError,
)
from ChandraMCC.linalg import (
    LowRankFactors,
    as_matrix,
    invert_small,
    ldlt_bunch_kaufman,
    low_rank_trim,
    mat_add,
    mat_mul,
    matrix_from_json,
    matrix_to_json,
    max_relative_error,
    psd_factor,
    spd_factor,
    spd_inverse,
    spd_solve,
    symmetrize,
)


def test_as_matrix_shapes():
    assert as_matrix(2.0).shape == (1, 1)
    assert as_matrix([1.0, 2.0, 3.0]).shape == (3, 1)
    with pytest.raises(ShapeError):
        as_matrix(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        as_matrix([[np.nan]])


def test_arithmetic_shape_checks():
    a = np.ones((2, 3))
    with pytest.raises(ShapeError):
        mat_add(a, np.ones((3, 2)))
    with pytest.raises(ShapeError):
        mat_mul(a, np.ones((2, 3)))
    np.testing.assert_array_equal(mat_mul(a, np.ones((3, 1))), np.full((2, 1), 3.0))


def test_spd_solve_and_inverse():
    a = np.array([[4.0, 1.0], [1.0, 3.0]])
    b = np.array([[1.0], [2.0]])
    x = spd_solve(a, b)
    np.testing.assert_allclose(a @ x, b, atol=1e-14)
    inv = spd_inverse(a)
    np.testing.assert_allclose(inv @ a, np.eye(2), atol=1e-14)
    np.testing.assert_array_equal(inv, inv.T)


def test_spd_factor_reports_pivot():
    a = np.diag([1.0, -1.0, 2.0])
    with pytest.raises(DefinitenessError) as exc:
        spd_factor(a)
    assert exc.value.pivot == 1


def test_spd_solve_rejects_asymmetric():
    with pytest.raises(SymmetryError):
        spd_solve(np.array([[1.0, 2.0], [0.0, 1.0]]), np.ones((2, 1)))


def test_invert_small_singular():
    with pytest.raises(ConditioningError) as exc:
        invert_small(np.zeros((2, 2)), step=5)
    assert exc.value.step == 5
    assert invert_small(np.zeros((0, 0))).shape == (0, 0)


def test_ldlt_reconstructs_indefinite():
    a = np.array([[0.0, 1.0, 2.0], [1.0, -3.0, 0.5], [2.0, 0.5, 1.0]])
    f = ldlt_bunch_kaufman(a)
    np.testing.assert_allclose(f.reconstruct(), a, atol=1e-12)
    # unit lower triangular after permutation
    np.testing.assert_allclose(np.diag(f.unit_lower), np.ones(3))
    np.testing.assert_allclose(np.triu(f.unit_lower, 1), 0.0)
    assert sum(size for _, size in f.blocks) == 3


def test_ldlt_zero_diagonal_uses_2x2_block():
    # no usable 1x1 pivot: Bunch-Kaufman must take a 2x2 block
    a = np.array([[0.0, 1.0], [1.0, 0.0]])
    f = ldlt_bunch_kaufman(a)
    assert f.blocks == ((0, 2),)
    np.testing.assert_allclose(f.reconstruct(), a, atol=1e-14)


def test_ldlt_rejects_asymmetric():
    with pytest.raises(SymmetryError):
        ldlt_bunch_kaufman(np.array([[1.0, 2.0], [3.0, 1.0]]))


def test_ldlt_empty():
    f = ldlt_bunch_kaufman(np.zeros((0, 0)))
    assert f.n == 0
    assert low_rank_trim(f).alpha == 0


def test_trim_keeps_numerical_rank():
    rng = np.random.default_rng(3)
    u = rng.standard_normal((5, 2))
    a = u @ np.diag([2.0, -1.0]) @ u.T
    factors = low_rank_trim(ldlt_bunch_kaufman(a))
    assert factors.alpha == 2
    np.testing.assert_allclose(factors.product(), a, atol=1e-10)


def test_trim_rank_one_diagonal():
    q = np.diag([0.0, 0.0, 0.0, 0.63e-2])
    factors = low_rank_trim(ldlt_bunch_kaufman(q))
    assert factors.alpha == 1
    np.testing.assert_allclose(factors.product(), q)


def test_trim_zero_matrix_gives_rank_zero():
    factors = low_rank_trim(ldlt_bunch_kaufman(np.zeros((3, 3))))
    assert factors.alpha == 0
    assert factors.L.shape == (3, 0)


def test_trim_reference_scale_drops_rounding_noise():
    noise = np.diag([1e-17, -2e-17])
    assert low_rank_trim(ldlt_bunch_kaufman(noise)).alpha == 2
    assert low_rank_trim(ldlt_bunch_kaufman(noise), reference_scale=1.0).alpha == 0


def test_trim_rejects_negative_tolerance():
    with pytest.raises(ValueError):
        low_rank_trim(ldlt_bunch_kaufman(np.eye(2)), rel_tol=-1.0)


def test_low_rank_factors_shape_check():
    with pytest.raises(ShapeError):
        LowRankFactors(L=np.zeros((3, 2)), M=np.zeros((1, 1)))


def test_psd_factor_semidefinite():
    sigma = np.diag([0.0, 2.0, 0.0, 0.5])
    s = psd_factor(sigma)
    assert s.shape == (4, 2)
    np.testing.assert_allclose(s @ s.T, sigma, atol=1e-15)
    np.testing.assert_array_equal(s[0], 0.0)
    assert psd_factor(np.zeros((2, 2))).shape == (2, 0)


def test_max_relative_error_uses_global_scale():
    ref = np.array([[100.0, 0.0]])
    assert max_relative_error(ref + np.array([[0.0, 1e-6]]), ref) == pytest.approx(1e-8)


def test_matrix_json_codec():
    a = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(matrix_from_json(matrix_to_json(a)), a)
    np.testing.assert_array_equal(matrix_from_json([[1.0, 2.0]]), np.array([[1.0, 2.0]]))
    with pytest.raises(SchemaError):
        matrix_from_json({"rows": 2, "cols": 2, "data": [1.0]})
    with pytest.raises(SchemaError):
        matrix_from_json({"rows": 2})


def test_symmetrize():
    a = np.array([[1.0, 2.0], [0.0, 1.0]])
    np.testing.assert_array_equal(symmetrize(a), np.array([[1.0, 1.0], [1.0, 1.0]]))


# --- RANDOMIZED CASES ---

SEEDS = range(100)


@pytest.mark.parametrize("seed", SEEDS)
def test_ldlt_random_symmetric(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 8))
    x = rng.standard_normal((n, n))
    a = x + x.T
    hollow = seed % 2 == 0
    if hollow:
        # zero diagonal: the first pivot has to be a 2x2 block
        np.fill_diagonal(a, 0.0)
    f = ldlt_bunch_kaufman(a)
    np.testing.assert_allclose(f.reconstruct(), a, atol=1e-10 * max(1.0, np.linalg.norm(a)))
    np.testing.assert_array_equal(np.diag(f.unit_lower), np.ones(n))
    np.testing.assert_array_equal(np.triu(f.unit_lower, 1), 0.0)
    assert sum(size for _, size in f.blocks) == n
    if hollow:
        assert f.blocks[0][1] == 2


@pytest.mark.parametrize("seed", SEEDS)
def test_trim_recovers_difference_of_grams(seed):
    rng = np.random.default_rng(1000 + seed)
    n = int(rng.integers(2, 9))
    r_plus = int(rng.integers(0, n + 1))
    r_minus = int(rng.integers(0, n - r_plus + 1))
    b = rng.standard_normal((n, r_plus))
    c = rng.standard_normal((n, r_minus))
    a = b @ b.T - c @ c.T
    factors = low_rank_trim(ldlt_bunch_kaufman(a))
    np.testing.assert_allclose(factors.product(), a, atol=1e-9 * (1.0 + np.linalg.norm(a)))
    assert factors.alpha == r_plus + r_minus
    # inertia of M matches the signature of BBᵀ − CCᵀ
    eig = np.linalg.eigvalsh(factors.M) if factors.alpha else np.zeros(0)
    assert int(np.sum(eig > 0)) == r_plus
    assert int(np.sum(eig < 0)) == r_minus


@pytest.mark.parametrize("seed", SEEDS)
def test_spd_solve_random_residual(seed):
    rng = np.random.default_rng(2000 + seed)
    n = int(rng.integers(1, 7))
    x = rng.standard_normal((n, n))
    a = x @ x.T + n * np.eye(n)
    b = rng.standard_normal((n, int(rng.integers(1, 4))))
    sol = spd_solve(a, b)
    scale = np.linalg.norm(a) * np.linalg.norm(sol)
    assert np.linalg.norm(a @ sol - b) <= 1e-12 * scale
    np.testing.assert_allclose(a @ spd_inverse(a), np.eye(n), atol=1e-12 * np.linalg.norm(a))


def test_order_one_systems():
    np.testing.assert_allclose(spd_solve(np.array([[4.0]]), np.array([[2.0, 8.0]])), [[0.5, 2.0]])
    np.testing.assert_array_equal(spd_inverse(np.array([[4.0]])), [[0.25]])
    np.testing.assert_array_equal(invert_small(np.array([[-2.0]])), [[-0.5]])
    with pytest.raises(DefinitenessError):
        spd_solve(np.array([[0.0]]), np.ones((1, 1)))
    with pytest.raises(DefinitenessError):
        spd_inverse(np.array([[-1.0]]))
    with pytest.raises(ConditioningError):
        invert_small(np.array([[0.0]]), step=3)
