import numpy as np
import pytest

from ir_response.common import ConvergenceError, signal_envelope, time_grid
from ir_response.model import ModelSystem, MorseBathParams, bound_state_count, morse_levels
from ir_response.quantum_ref import (
    GridSpec,
    colbert_miller_kinetic,
    default_grid,
    response_quantum,
    solve_eigenproblem,
    thermal_populations,
)


def test_kinetic_matrix_is_symmetric():
    x = np.linspace(-1.0, 1.0, 21)
    kin = colbert_miller_kinetic(x, mass=2.0)
    np.testing.assert_allclose(kin, kin.T)
    assert np.all(np.isfinite(kin))
    assert np.all(np.linalg.eigvalsh(kin) > 0)


def test_morse_levels_on_default_grid(morse_params, morse_1d):
    spectrum = solve_eigenproblem(morse_1d)
    np.testing.assert_allclose(spectrum.eigenvalues[:11], morse_levels(morse_params, 10), atol=1e-8)
    np.testing.assert_allclose(spectrum.dipole, spectrum.dipole.T)


def test_harmonic_levels_and_dipole(oscillator, beta):
    spectrum = solve_eigenproblem(oscillator, beta=beta)
    n = np.arange(10)
    np.testing.assert_allclose(spectrum.eigenvalues[:10], 4.0 * (n + 0.5), atol=1e-8)
    # |⟨n|q|n+1⟩|² = (n+1)/(2mω)
    x2 = np.abs(np.diag(spectrum.dipole, 1)[:9]) ** 2
    np.testing.assert_allclose(x2, (n[:9] + 1) / 8.0, rtol=1e-8)


def test_harmonic_response_is_exact(oscillator, beta):
    times = time_grid(20.0, 0.1)
    series = response_quantum(solve_eigenproblem(oscillator, beta=beta), beta, times)
    np.testing.assert_allclose(series.real, np.sin(4.0 * times) / 4.0, atol=1e-8)
    assert np.all(series.imag == 0.0)
    assert np.all(series.stderr_real == 0.0)
    assert series.metadata["top_population"] < 1e-10


def test_high_temperature_populations(oscillator, beta):
    times = time_grid(5.0, 0.1)
    series = response_quantum(solve_eigenproblem(oscillator, beta=beta), beta, times,
                              thermal="high_temperature")
    expected = 0.5 * beta / np.tanh(0.5 * beta * 4.0) * np.sin(4.0 * times)
    np.testing.assert_allclose(series.real, expected, atol=1e-8)


def test_uncoupled_two_dimensional_spectrum(morse_params, uncoupled_2d):
    beta = 0.5
    spectrum = solve_eigenproblem(uncoupled_2d, beta=beta)
    assert spectrum.metadata["coupling_rank"] == 0
    bath = 3.6 * (np.arange(40) + 0.5)
    sums = np.sort((morse_levels(morse_params, 40)[:, None] + bath[None, :]).ravel())
    np.testing.assert_allclose(spectrum.eigenvalues[:40], sums[:40], atol=1e-7)


def test_coupled_product_basis_matches_full_grid():
    # Малая сетка: усеченный базис без отсечки равен прямой диагонализации
    model = ModelSystem.morse_bath(MorseBathParams(coupling=0.5), n_bath=1)
    grid = GridSpec((24, 24), ((-2.0, 6.0), (-3.0, 3.0)))
    spectrum = solve_eigenproblem(model, grid, n_states=30, beta=1e-3, basis_margin=1e6)
    x, y = grid.axis(0), grid.axis(1)
    kin = (np.kron(colbert_miller_kinetic(x), np.eye(len(y)))
           + np.kron(np.eye(len(x)), colbert_miller_kinetic(y)))
    xx, yy = np.meshgrid(x, y, indexing="ij")
    v = model.potential(np.stack([xx.ravel(), yy.ravel()], axis=-1))
    reference = np.linalg.eigvalsh(kin + np.diag(v))
    np.testing.assert_allclose(spectrum.eigenvalues, reference[:30], rtol=1e-9, atol=1e-9)


def test_morse_recurrence(morse_1d, beta):
    times = time_grid(100.0, 0.1)
    series = response_quantum(solve_eigenproblem(morse_1d, beta=beta), beta, times)
    envelope = signal_envelope(series.real, times, 2.0 * np.pi / 4.0)
    late = times > 40.0
    peak = times[late][np.argmax(envelope[late])]
    assert 70.0 <= peak <= 90.0
    assert abs(series.real[0]) < 1e-12


def test_truncation_is_detected(oscillator, beta):
    spectrum = solve_eigenproblem(oscillator, beta=beta, n_states=5)
    with pytest.raises(ConvergenceError):
        response_quantum(spectrum, beta, time_grid(1.0, 0.1))


def test_grid_refinement_check(morse_1d, morse_params):
    spectrum = solve_eigenproblem(morse_1d, beta=1.0 / 7.0, check_convergence=True)
    assert spectrum.metadata["convergence_drift"] < 1e-8
    # все уровни Морзе с заселенностью не ниже 1e-5: E − E0 <= 7·ln(1e5)
    levels = morse_levels(morse_params, bound_state_count(morse_params) - 1)
    populated = int(np.sum(levels - levels[0] <= 7.0 * np.log(1e5)))
    assert populated > 20
    assert spectrum.metadata["converged_states"] == populated
    coarse = GridSpec((40,), ((-3.5, 16.0),))
    with pytest.raises(ConvergenceError):
        solve_eigenproblem(morse_1d, coarse, beta=1.0 / 7.0, check_convergence=True)


def test_default_grids(coupled_2d, oscillator, beta):
    morse = default_grid(coupled_2d)
    assert morse.domains == ((-3.5, 16.0), (-10.0, 10.0))
    assert morse.points == (256, 256)
    harmonic = default_grid(oscillator, beta)
    lo, hi = harmonic.domains[0]
    assert lo == -hi
    with pytest.raises(ValueError):
        default_grid(oscillator)


def test_invalid_requests(coupled_2d, beta):
    with pytest.raises(ValueError):
        solve_eigenproblem(ModelSystem.harmonic([1.0, 2.0, 3.0]), beta=beta)
    with pytest.raises(ValueError):
        solve_eigenproblem(coupled_2d)
    with pytest.raises(ValueError):
        GridSpec((4,), ((0.0, 1.0),))
    spectrum = solve_eigenproblem(ModelSystem.harmonic([4.0]), beta=beta)
    with pytest.raises(ValueError):
        response_quantum(spectrum, beta, [0.0], thermal="classical")


def test_thermal_populations_are_normalized():
    pops = thermal_populations(np.array([1.0, 2.0, 3.0]), 1.0)
    assert pops.sum() == pytest.approx(1.0)
    assert pops[0] / pops[1] == pytest.approx(np.e)


def test_only_confining_grid_edges_are_reported(morse_1d, oscillator, beta):
    # правый край Морзе лежит на плато диссоциации, e^(-βV) там ~1e-6
    spectrum = solve_eigenproblem(morse_1d, beta=beta)
    assert spectrum.metadata["uncovered_edges"] == []
    narrow = GridSpec((64,), ((-0.5, 0.5),))
    spectrum = solve_eigenproblem(oscillator, narrow, n_states=5, beta=beta)
    assert spectrum.metadata["uncovered_edges"] == ["q[0]=-0.5", "q[0]=0.5"]
