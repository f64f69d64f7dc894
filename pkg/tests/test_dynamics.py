import numpy as np
import pytest

from ir_response.common import BranchError
from ir_response.dynamics import hk_prefactor, propagate, symplectic_defect
from ir_response.semiclassics import WidthMatrix, identity_ratio


def test_harmonic_trajectory_is_analytic(oscillator):
    omega = 4.0
    traj = propagate(oscillator, [0.7, -0.3], t_final=2.0, dt=1e-3)
    t = traj.times
    q_exact = -0.3 * np.cos(omega * t) + 0.7 / omega * np.sin(omega * t)
    p_exact = 0.7 * np.cos(omega * t) + 0.3 * omega * np.sin(omega * t)
    np.testing.assert_allclose(traj.q[:, 0, 0], q_exact, atol=1e-9)
    np.testing.assert_allclose(traj.p[:, 0, 0], p_exact, atol=1e-9)


def test_harmonic_action(oscillator):
    # Для осциллятора S(t) = ½(p_t q_t − p_0 q_0)
    traj = propagate(oscillator, [0.7, -0.3], t_final=2.0, dt=1e-3)
    expected = 0.5 * (traj.p[:, 0, 0] * traj.q[:, 0, 0] - 0.7 * (-0.3))
    np.testing.assert_allclose(traj.action[:, 0], expected, atol=1e-9)


def test_harmonic_prefactor_follows_continuous_branch(oscillator):
    widths = WidthMatrix.matched(oscillator)
    traj = propagate(oscillator, [0.2, 0.1], t_final=2.0, dt=1e-3, widths=widths)
    assert not traj.branch_error[0]
    # ωt = 8 проходит через несколько разрезов главного корня
    expected = np.exp(-0.5j * 4.0 * traj.times)
    np.testing.assert_allclose(np.exp(traj.prefactor_log[:, 0]), expected, atol=1e-8)
    state = traj[len(traj) - 1]
    assert hk_prefactor(state, widths) == pytest.approx(expected[-1], abs=1e-8)


def test_morse_energy_conservation(coupled_2d):
    z0 = np.array([[3.0, -2.0, 0.1, 0.2], [0.0, 0.0, -0.3, 0.5]])
    traj = propagate(coupled_2d, z0, t_final=10.0, dt=1e-3, track_monodromy=False)
    energy = traj.energies(coupled_2d)
    drift = np.max(np.abs(energy - energy[0]), axis=0)
    assert np.all(drift < 1e-7 * np.maximum(1.0, np.abs(energy[0])))
    assert traj.monodromy is None


def test_monodromy_is_symplectic(coupled_2d):
    rng = np.random.default_rng(3)
    z0 = np.concatenate([rng.normal(scale=2.0, size=(10, 2)), rng.normal(scale=0.3, size=(10, 2))], axis=1)
    widths = WidthMatrix.matched(coupled_2d)
    traj = propagate(coupled_2d, z0, t_final=5.0, dt=1e-3, widths=widths)
    assert np.max(symplectic_defect(traj.monodromy[-1])) < 1e-6
    np.testing.assert_allclose(np.linalg.det(traj.monodromy[-1]), 1.0, atol=1e-6)
    np.testing.assert_allclose(identity_ratio(traj.monodromy[-1], widths), 1.0, atol=1e-6)


def test_monodromy_matches_finite_differences(morse_1d):
    z0 = np.array([2.0, 0.4])
    traj = propagate(morse_1d, z0, t_final=3.0, dt=1e-3)
    h = 1e-6
    shifted = np.array([z0 + h * e for e in np.eye(2)] + [z0 - h * e for e in np.eye(2)])
    ends = propagate(morse_1d, shifted, t_final=3.0, dt=1e-3, track_monodromy=False)
    z_end = np.concatenate([ends.p[-1], ends.q[-1]], axis=1)
    fd = ((z_end[:2] - z_end[2:]) / (2.0 * h)).T
    np.testing.assert_allclose(traj.monodromy[-1, 0], fd, rtol=1e-5, atol=1e-5)


def test_batch_rows_are_independent(coupled_2d):
    z0 = np.array([[1.0, 0.0, 0.1, 0.0], [0.0, 2.0, 0.0, -0.2]])
    batch = propagate(coupled_2d, z0, t_final=1.0, dt=1e-3)
    single = propagate(coupled_2d, z0[1], t_final=1.0, dt=1e-3)
    np.testing.assert_allclose(batch.q[:, 1], single.q[:, 0], rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(batch.monodromy[:, 1], single.monodromy[:, 0], rtol=1e-13, atol=1e-15)


def test_dissociating_trajectory_is_flagged(morse_1d):
    widths = WidthMatrix.matched(morse_1d)
    z0 = np.array([[20.0, 0.0], [1.0, 0.0]])
    traj = propagate(morse_1d, z0, t_final=5.0, dt=1e-3, widths=widths, escape_radius=10.0)
    np.testing.assert_array_equal(traj.escaped, [True, False])
    np.testing.assert_array_equal(traj.failed, [True, False])
    assert np.all(np.isfinite(traj.q))
    assert np.all(np.isfinite(traj.prefactor_log))


def test_branch_jump_is_detected(oscillator):
    widths = WidthMatrix.matched(oscillator)
    traj = propagate(oscillator, [0.0, 0.1], t_final=1.0, dt=0.5, output_stride=0.5, widths=widths)
    assert traj.branch_error[0]
    with pytest.raises(BranchError):
        propagate(oscillator, [0.0, 0.1], t_final=1.0, dt=0.5, output_stride=0.5, widths=widths,
                  strict=True)


def test_invalid_grids_are_rejected(oscillator):
    with pytest.raises(ValueError):
        propagate(oscillator, [0.0, 0.1], t_final=1.05, dt=0.01, output_stride=0.1)
    with pytest.raises(ValueError):
        propagate(oscillator, [0.0, 0.1], t_final=1.0, dt=0.03, output_stride=0.1)
    with pytest.raises(ValueError):
        propagate(oscillator, [0.0, 0.1, 0.2], t_final=1.0)


def test_state_accessor(coupled_2d):
    traj = propagate(coupled_2d, [0.5, 0.0, 0.1, 0.0], t_final=0.2, dt=1e-3)
    state = traj[1]
    assert state.t == pytest.approx(0.1)
    assert state.z.shape == (4,)
    assert state.monodromy.shape == (4, 4)
    assert state.prefactor_log is None
