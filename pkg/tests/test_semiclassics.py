import numpy as np
import pytest
from scipy.linalg import expm

from ir_response.dynamics import propagate
from ir_response.model import ModelSystem
from ir_response.sampling import BoltzmannProposal, draw_samples
from ir_response.semiclassics import (
    WidthMatrix,
    factorized_determinants,
    identity_ratio,
    matrix_A,
    matrix_A_B,
    overlap,
    prefactor_matrix,
    r_s_matrices,
)


def random_symplectic(n: int, rng: np.random.Generator, scale: float = 0.7) -> np.ndarray:
    """Точно симплектическая матрица exp(J·S) с симметричной S"""
    a = rng.normal(scale=scale, size=(2 * n, 2 * n))
    s = 0.5 * (a + a.T)
    j = np.block([[np.zeros((n, n)), -np.eye(n)], [np.eye(n), np.zeros((n, n))]])
    return expm(j @ s)


def test_width_matrix_validation():
    with pytest.raises(ValueError):
        WidthMatrix([1.0, -2.0])
    with pytest.raises(ValueError):
        WidthMatrix([1.0, np.inf])
    with pytest.raises(ValueError):
        WidthMatrix([1.0, 2.0], n_system=3)


def test_matched_widths(coupled_2d):
    widths = WidthMatrix.matched(coupled_2d)
    np.testing.assert_allclose(widths.diagonal, [4.0, 3.6], rtol=1e-12)
    np.testing.assert_allclose(widths.system, [4.0], rtol=1e-12)
    np.testing.assert_allclose(widths.bath, [3.6], rtol=1e-12)


def test_overlap_normalization_and_symmetry(rng):
    widths = WidthMatrix([4.0, 3.6])
    z1 = rng.normal(size=4)
    z2 = rng.normal(size=4)
    assert overlap(z1, z1, widths) == pytest.approx(1.0)
    assert abs(overlap(z1, z2, widths)) == pytest.approx(abs(overlap(z2, z1, widths)))
    assert overlap(z1, z2, widths) == pytest.approx(np.conj(overlap(z2, z1, widths)))
    assert abs(overlap(z1, z2, widths)) < 1.0


def test_overlap_matches_closed_form():
    widths = WidthMatrix([2.0])
    z1 = np.array([0.5, 0.3])
    z2 = np.array([-0.1, 0.1])
    dp, dq, p_bar = 0.6, 0.2, 0.2
    expected = np.exp(-0.25 * 2.0 * dq ** 2 - 1j * p_bar * dq - dp ** 2 / (4.0 * 2.0))
    assert overlap(z2, z1, widths) == pytest.approx(expected, rel=1e-14)


def test_prefactor_of_identity_monodromy():
    widths = WidthMatrix([4.0, 3.6])
    np.testing.assert_allclose(prefactor_matrix(np.eye(4), widths), np.eye(2), atol=1e-15)


def test_harmonic_prefactor_is_a_phase():
    omega, t = 4.0, 0.37
    c, s = np.cos(omega * t), np.sin(omega * t)
    M = np.array([[c, -omega * s], [s / omega, c]])
    h = prefactor_matrix(M, WidthMatrix([omega]))
    assert h[0, 0] == pytest.approx(np.exp(-1j * omega * t), abs=1e-14)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_identity_ratio_for_symplectic_matrices(n):
    rng = np.random.default_rng(100 + n)
    widths = WidthMatrix(rng.uniform(0.5, 4.0, size=n))
    for _ in range(20):
        M = random_symplectic(n, rng)
        assert identity_ratio(M, widths) == pytest.approx(1.0, abs=1e-10)


def test_det_A_equals_squared_prefactor_modulus():
    rng = np.random.default_rng(7)
    widths = WidthMatrix([4.0, 3.6])
    for _ in range(10):
        M = random_symplectic(2, rng)
        det_h = np.linalg.det(prefactor_matrix(M, widths))
        det_a = np.linalg.det(matrix_A(M, widths))
        assert det_a * 4.0 ** 2 == pytest.approx(abs(det_h) ** 2, rel=1e-10)


def test_factorized_determinants_agree():
    rng = np.random.default_rng(8)
    widths = WidthMatrix([4.0, 3.6])
    Ms = np.stack([random_symplectic(2, rng) for _ in range(10)])
    c_sq, det_a = factorized_determinants(Ms, widths)
    direct_c_sq = np.abs(np.linalg.det(prefactor_matrix(Ms, widths)))
    direct_det_a = np.linalg.det(matrix_A(Ms, widths))
    np.testing.assert_allclose(c_sq, direct_c_sq, rtol=1e-10)
    np.testing.assert_allclose(det_a, direct_det_a, rtol=1e-10)


def test_matrix_A_is_symmetric_positive_definite():
    rng = np.random.default_rng(9)
    widths = WidthMatrix([4.0, 3.6])
    A = matrix_A(random_symplectic(2, rng), widths)
    np.testing.assert_allclose(A, A.T, atol=1e-12)
    assert np.all(np.linalg.eigvalsh(A) > 0)


def test_matrix_A_at_zero_time():
    widths = WidthMatrix([4.0, 3.6])
    g = widths.diagonal
    expected = np.diag(np.concatenate([2.0 / g, 2.0 * g])) / 4.0
    np.testing.assert_allclose(matrix_A(np.eye(4), widths), expected, atol=1e-15)


def test_matrix_A_B_shapes_and_limits():
    rng = np.random.default_rng(10)
    widths = WidthMatrix([4.0, 3.6, 2.0], n_system=1)
    M = random_symplectic(3, rng)
    A_B = matrix_A_B(M, widths)
    assert A_B.shape == (4, 4)
    np.testing.assert_allclose(A_B, A_B.T, atol=1e-12)
    assert np.all(np.linalg.eigvalsh(A_B) > 0)
    # Все степени свободы в бане: A_B совпадает с A
    np.testing.assert_allclose(matrix_A_B(M, widths, bath_columns=[0, 1, 2]), matrix_A(M, widths),
                               atol=1e-14)


def test_r_s_at_zero_time():
    widths = WidthMatrix([2.0])
    r, s = r_s_matrices(np.eye(2), widths)
    assert r[0, 0] == pytest.approx(1j)
    assert s[0, 0] == pytest.approx(2.0)


def test_batched_evaluation_matches_single():
    rng = np.random.default_rng(11)
    widths = WidthMatrix([1.5, 0.7])
    Ms = np.stack([random_symplectic(2, rng) for _ in range(4)])
    batched = identity_ratio(Ms, widths)
    single = [identity_ratio(M, widths) for M in Ms]
    np.testing.assert_allclose(batched, single, rtol=1e-14)


def test_uncoupled_A_B_is_the_bath_matrix_A(uncoupled_2d):
    widths = WidthMatrix.matched(uncoupled_2d)
    traj = propagate(uncoupled_2d, [3.0, -2.0, 0.4, 0.3], t_final=5.0, dt=1e-3)
    M = traj.monodromy[-1, 0]
    # порядок (p_S, p_B, q_S, q_B): блок бани - индексы 1 и 3
    bath = [1, 3]
    M_bath = M[np.ix_(bath, bath)]
    assert np.all(M[np.ix_(bath, [0, 2])] == 0.0)
    expected = matrix_A(M_bath, WidthMatrix([widths.diagonal[1]]))
    np.testing.assert_allclose(matrix_A_B(M, widths), expected, rtol=1e-12, atol=1e-14)


def test_A_B_determinant_is_positive_along_coupled_trajectories(coupled_2d, beta):
    widths = WidthMatrix.matched(coupled_2d)
    batch = draw_samples(BoltzmannProposal(coupled_2d, beta), None, [], seed=3, start=0, stop=64)
    traj = propagate(coupled_2d, batch.z_bar, t_final=20.0, dt=1e-3, output_stride=0.5)
    assert not np.any(traj.escaped)
    sign, _ = np.linalg.slogdet(matrix_A_B(traj.monodromy, widths))
    assert sign.shape == (len(traj.times), 64)
    assert np.all(sign > 0)
