import numpy as np
import pytest
from pydantic import ValidationError

from ir_response.model import (
    HarmonicPotential,
    ModelSystem,
    MorseBathParams,
    bound_state_count,
    morse_levels,
)


def test_potential_examples(coupled_2d):
    assert coupled_2d.potential(np.zeros(2)) == 0.0
    expected = 100.0 * (1.0 - np.exp(-0.02 * np.sqrt(2.0))) ** 2
    assert coupled_2d.potential(np.array([0.1, 0.0])) == pytest.approx(expected, rel=1e-14)
    assert coupled_2d.potential(np.array([60.0, 0.0])) == pytest.approx(100.0, rel=1e-6)


def test_potential_is_vectorized(coupled_2d):
    q = np.array([[0.1, 0.0], [0.0, 0.2], [0.3, -0.1]])
    values = coupled_2d.potential(q)
    assert values.shape == (3,)
    for row, v in zip(q, values):
        assert coupled_2d.potential(row) == pytest.approx(v, rel=1e-15)


def test_derived_morse_constants(morse_params):
    assert morse_params.omega_e == pytest.approx(4.0, rel=1e-14)
    assert morse_params.x_e == pytest.approx(0.01, rel=1e-14)
    assert bound_state_count(morse_params) == 50


def test_morse_levels(morse_params):
    levels = morse_levels(morse_params, 2)
    np.testing.assert_allclose(levels, [4 * 0.5 - 0.04 * 0.25, 4 * 1.5 - 0.04 * 2.25, 4 * 2.5 - 0.04 * 6.25])


@pytest.mark.parametrize("field", ["D", "alpha", "chi"])
def test_params_must_be_positive(field):
    with pytest.raises(ValidationError):
        MorseBathParams(**{field: -1.0})


def test_gradient_and_hessian_at_origin(uncoupled_2d, coupled_2d):
    np.testing.assert_allclose(uncoupled_2d.gradient(np.zeros(2)), 0.0, atol=1e-15)
    hess = uncoupled_2d.hessian(np.zeros(2))
    assert hess[0, 0] == pytest.approx(16.0, rel=1e-12)
    assert hess[1, 1] == pytest.approx(3.6 ** 2, rel=1e-12)
    for q in ([0.0, 0.0], [1.5, -2.0], [4.0, 3.0]):
        assert coupled_2d.hessian(np.array(q))[0, 1] == -0.1


def test_derivatives_match_finite_differences(coupled_2d):
    rng = np.random.default_rng(5)
    h = 1e-5
    eye = np.eye(2)
    for q in rng.uniform(-1.0, 5.0, size=(100, 2)):
        grad = coupled_2d.gradient(q)
        hess = coupled_2d.hessian(q)
        fd_grad = np.array([(coupled_2d.potential(q + h * e) - coupled_2d.potential(q - h * e)) / (2 * h)
                            for e in eye])
        fd_hess = np.array([(coupled_2d.gradient(q + h * e) - coupled_2d.gradient(q - h * e)) / (2 * h)
                            for e in eye])
        np.testing.assert_allclose(grad, fd_grad, rtol=1e-6, atol=1e-6)
        np.testing.assert_allclose(hess, fd_hess, rtol=1e-6, atol=1e-6)
        np.testing.assert_array_equal(hess, hess.T)


def test_uncoupled_hessian_is_block_diagonal(uncoupled_2d):
    rng = np.random.default_rng(6)
    hess = uncoupled_2d.hessian(rng.uniform(-1.0, 5.0, size=(50, 2)))
    assert np.all(hess[:, 0, 1] == 0.0)
    assert np.all(hess[:, 1, 0] == 0.0)


def test_dimension_mismatch_is_rejected(coupled_2d):
    with pytest.raises(ValueError):
        coupled_2d.potential(np.zeros(3))
    with pytest.raises(ValueError):
        coupled_2d.classical_hamiltonian(np.zeros(3))


def test_classical_hamiltonian(coupled_2d):
    assert coupled_2d.classical_hamiltonian(np.zeros(4)) == 0.0
    assert coupled_2d.classical_hamiltonian(np.array([1.0, 0.0, 0.0, 0.0])) == pytest.approx(0.5)
    z = np.array([0.0, 0.0, 0.1, 0.0])
    assert coupled_2d.classical_hamiltonian(z) == pytest.approx(coupled_2d.potential(z[2:]))


def test_masses_enter_kinetic_energy():
    model = ModelSystem.harmonic([1.0, 2.0], masses=[2.0, 0.5])
    assert model.classical_hamiltonian(np.array([2.0, 1.0, 0.0, 0.0])) == pytest.approx(1.0 + 1.0)
    np.testing.assert_allclose(model.reference_frequencies(), [1.0, 2.0])


def test_coupled_minimum_is_a_positive_definite_descent_minimum(coupled_2d):
    q_min, v_min = coupled_2d.find_minimum()
    assert np.max(np.abs(coupled_2d.gradient(q_min))) < 1e-8
    assert v_min <= 0.0
    assert np.all(np.linalg.eigvalsh(coupled_2d.hessian(q_min)) > 0)
    # Билинейная связь не сдвигает минимум из начала координат
    np.testing.assert_allclose(q_min, 0.0, atol=1e-10)


def test_partition(coupled_2d):
    assert coupled_2d.n_total == 2
    assert coupled_2d.n_system == 1
    assert coupled_2d.n_bath == 1
    np.testing.assert_array_equal(coupled_2d.bath_indices, [1])


def test_invalid_partition_and_masses():
    with pytest.raises(ValueError):
        ModelSystem(HarmonicPotential([1.0]), n_system=0)
    with pytest.raises(ValueError):
        ModelSystem(HarmonicPotential([1.0, 1.0]), masses=[1.0, -1.0])


def test_harmonic_couplings_enter_hessian():
    pot = HarmonicPotential([4.0, 3.6], couplings=np.array([[0.0, -0.1], [-0.1, 0.0]]))
    np.testing.assert_allclose(pot.hessian(np.zeros(2)), [[16.0, -0.1], [-0.1, 12.96]])
    q = np.array([0.3, -0.2])
    assert pot.energy(q) == pytest.approx(0.5 * 16 * 0.09 + 0.5 * 12.96 * 0.04 - 0.1 * 0.3 * (-0.2))
