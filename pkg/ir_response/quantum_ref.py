"""
Точный квантовый эталон: ДВП-решение на сетке и тепловой отклик в собственном базисе

Одномерная задача решается на сетке Колберта-Миллера. Двумерная - в
усеченном по энергии прямом произведении одномерных собственных функций
с малоранговым разложением остатка связи.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigh

from ir_response.common import HBAR, ConvergenceError, ResponseSeries
from ir_response.model import HarmonicPotential, ModelSystem, MorseBathPotential

logger = logging.getLogger(__name__)

MORSE_DOMAIN = (-3.5, 16.0)
BATH_DOMAIN = (-10.0, 10.0)
DEFAULT_POINTS = 256

# Окно по времени при суммировании по парам состояний
TIME_CHUNK = 64


@dataclass
class GridSpec:
    """Число точек и отрезок по каждой степени свободы"""
    points: Tuple[int, ...]
    domains: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        self.points = tuple(int(n) for n in self.points)
        self.domains = tuple((float(lo), float(hi)) for lo, hi in self.domains)
        if len(self.points) != len(self.domains):
            raise ValueError("Число отрезков сетки не совпадает с числом размеров")
        for n, (lo, hi) in zip(self.points, self.domains):
            if n < 8 or hi <= lo:
                raise ValueError(f"Некорректная сетка: {n} точек на [{lo}, {hi}]")

    def axis(self, i: int) -> np.ndarray:
        return np.linspace(*self.domains[i], self.points[i])

    def refined(self) -> "GridSpec":
        return GridSpec(tuple(2 * n for n in self.points), self.domains)


@dataclass
class SpectralDecomposition:
    """Собственные значения по возрастанию и матрица ⟨a|q_S|b⟩"""
    eigenvalues: np.ndarray
    dipole: np.ndarray
    grid: GridSpec
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_states(self) -> int:
        return len(self.eigenvalues)


def thermal_energy_cutoff(beta: float, population_tol: float = 1e-10) -> float:
    """Энергия над основным состоянием, где больцмановский множитель падает до population_tol"""
    return -np.log(population_tol) / beta


def default_grid(model: ModelSystem, beta: Optional[float] = None,
                 population_tol: float = 1e-10, basis_margin: float = 40.0,
                 points: int = DEFAULT_POINTS) -> GridSpec:
    """
    Сетка по умолчанию

    Морзе: [−3.5, 16], баня: [−10, 10]. Гармонический потенциал: ±L по каждой оси,
    где ½K_ii·L² вдвое превышает энергию отсечения базиса.
    """
    pot = model.potential_fn
    if isinstance(pot, MorseBathPotential):
        domains = [MORSE_DOMAIN] + [BATH_DOMAIN] * pot.n_bath
    elif isinstance(pot, HarmonicPotential):
        if beta is None:
            raise ValueError("Для сетки гармонической модели нужна температура")
        e_ref = 2.0 * (thermal_energy_cutoff(beta, population_tol) + basis_margin)
        k = np.diag(pot.force_constants)
        half = np.sqrt(2.0 * e_ref / k)
        domains = [(-h, h) for h in half]
    else:
        raise ValueError("Нет сетки по умолчанию для этого потенциала")
    return GridSpec(tuple([points] * model.n_total), tuple(domains))


def colbert_miller_kinetic(x: np.ndarray, mass: float = 1.0, hbar: float = HBAR) -> np.ndarray:
    """Кинетическая энергия ДВП Колберта-Миллера на равномерной сетке"""
    dx = x[1] - x[0]
    idx = np.arange(len(x))
    diff = idx[:, None] - idx[None, :]
    coeff = hbar ** 2 / (2.0 * mass * dx ** 2)
    with np.errstate(divide="ignore"):
        kin = coeff * 2.0 * (-1.0) ** np.abs(diff) / diff.astype(float) ** 2
    np.fill_diagonal(kin, coeff * np.pi ** 2 / 3.0)
    return kin


def _solve_axis(model: ModelSystem, grid: GridSpec, axis: int, hbar: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Одномерная задача вдоль оси axis при остальных координатах, равных нулю"""
    x = grid.axis(axis)
    q = np.zeros((len(x), model.n_total))
    q[:, axis] = x
    v = model.potential(q)
    energies, vectors = eigh(colbert_miller_kinetic(x, model.masses[axis], hbar) + np.diag(v))
    return x, energies, vectors


def _check_boundaries(model: ModelSystem, grid: GridSpec, beta: Optional[float]) -> List[str]:
    """
    Границы сетки, не покрывающие тепловую область

    На диссоциативной стороне потенциал выходит на плато, и e^(-βV) у края не падает
    ниже 1e-12; такой край допустим, если далеко за ним V выше не более чем на kT.
    """
    if beta is None:
        return []
    _, v_min = model.find_minimum()
    uncovered = []
    for i, (lo, hi) in enumerate(grid.domains):
        for edge, direction in ((lo, -1.0), (hi, 1.0)):
            q = np.zeros(model.n_total)
            q[i] = edge
            v_edge = float(model.potential(q))
            q[i] = edge + direction * 10.0 * (hi - lo)
            with np.errstate(over="ignore", invalid="ignore"):
                v_far = float(model.potential(q))
            weight = np.exp(-beta * (v_edge - v_min))
            rising = not np.isfinite(v_far) or beta * (v_far - v_edge) > 1.0
            if weight >= 1e-12 and rising:
                uncovered.append(f"q[{i}]={edge}")
                logger.warning(f"Граница сетки q[{i}]={edge} не покрывает тепловую область: e^(-βV)={weight:.1e}")
    return uncovered


def _solve_1d(model: ModelSystem, grid: GridSpec, hbar: float):
    x, energies, vectors = _solve_axis(model, grid, 0, hbar)
    dipole = vectors.T @ (x[:, None] * vectors)
    return energies, dipole, {"basis_size": len(x)}


def _solve_2d(model: ModelSystem, grid: GridSpec, cutoff: float, hbar: float):
    x, e1, u1 = _solve_axis(model, grid, 0, hbar)
    y, e2, u2 = _solve_axis(model, grid, 1, hbar)
    v00 = float(model.potential(np.zeros(2)))
    # Остаток W(x, y) = V(x, y) − V(x, 0) − V(0, y) + V(0, 0)
    xx, yy = np.meshgrid(x, y, indexing="ij")
    v_grid = model.potential(np.stack([xx, yy], axis=-1))
    w = (v_grid
         - model.potential(np.stack([x, np.zeros_like(x)], axis=-1))[:, None]
         - model.potential(np.stack([np.zeros_like(y), y], axis=-1))[None, :]
         + v00)

    floor = e1[0] + e2[0]
    keep1 = e1 - e1[0] <= cutoff
    keep2 = e2 - e2[0] <= cutoff
    e1, u1 = e1[keep1], u1[:, keep1]
    e2, u2 = e2[keep2], u2[:, keep2]
    a_idx, b_idx = np.nonzero(e1[:, None] + e2[None, :] - floor <= cutoff)
    size = len(a_idx)
    logger.info(f"Базис произведения: {len(e1)}×{len(e2)} → {size} состояний")

    # H = H_x + H_y − V(0, 0) + W
    hamiltonian = np.diag(e1[a_idx] + e2[b_idx] - v00)
    rank = 0
    if np.max(np.abs(w)) > 1e-13 * np.max(np.abs(v_grid)):
        left, sigma, right = np.linalg.svd(w, full_matrices=False)
        significant = sigma > 1e-12 * sigma[0]
        rank = int(significant.sum())
        for k in np.nonzero(significant)[0]:
            f = u1.T @ (left[:, k, None] * u1)
            g = u2.T @ (right[k, :, None] * u2)
            hamiltonian += sigma[k] * f[np.ix_(a_idx, a_idx)] * g[np.ix_(b_idx, b_idx)]

    energies, vectors = eigh(hamiltonian)
    x1 = u1.T @ (x[:, None] * u1)
    x_product = x1[np.ix_(a_idx, a_idx)] * (b_idx[:, None] == b_idx[None, :])
    dipole = vectors.T @ x_product @ vectors
    return energies, dipole, {"basis_size": size, "coupling_rank": rank,
                              "axis_states": [len(e1), len(e2)]}


def solve_eigenproblem(model: ModelSystem, grid: Optional[GridSpec] = None,
                       n_states: Optional[int] = None, beta: Optional[float] = None,
                       population_tol: float = 1e-10, basis_margin: float = 40.0,
                       check_convergence: bool = False, convergence_tol: float = 1e-8,
                       convergence_population: Optional[float] = None,
                       hbar: float = HBAR) -> SpectralDecomposition:
    """
    Собственные состояния дискретизованного гамильтониана

    Параметры:
    - n_states: число сохраняемых нижних состояний; по умолчанию при заданном beta
      сохраняются состояния до тепловой отсечки + basis_margin/2
    - check_convergence: пересчет на сетке с удвоенным числом точек; сравниваются все
      сохраненные состояния с больцмановской заселенностью не ниже convergence_population
      (по умолчанию sqrt(population_tol)), без beta - все сохраненные

    Возвращает:
    - SpectralDecomposition с дипольной матрицей по системной координате
    """
    if model.n_total > 2:
        raise ValueError("Квантовый эталон поддерживает не более двух степеней свободы")
    if grid is None:
        grid = default_grid(model, beta, population_tol, basis_margin)
    if len(grid.points) != model.n_total:
        raise ValueError("Размерность сетки не совпадает с числом степеней свободы")
    uncovered = _check_boundaries(model, grid, beta)

    thermal = None if beta is None else thermal_energy_cutoff(beta, population_tol)
    if model.n_total == 1:
        energies, dipole, meta = _solve_1d(model, grid, hbar)
    else:
        if thermal is None:
            raise ValueError("Для двумерной задачи нужна температура (энергия отсечки базиса)")
        energies, dipole, meta = _solve_2d(model, grid, thermal + basis_margin, hbar)

    keep = len(energies)
    if n_states is not None:
        keep = min(keep, n_states)
    elif thermal is not None:
        keep = int(np.sum(energies - energies[0] <= thermal + 0.5 * basis_margin))
    energies = energies[:keep]
    dipole = dipole[:keep, :keep]
    dipole = 0.5 * (dipole + dipole.T)

    if check_convergence:
        fine = solve_eigenproblem(model, grid.refined(), n_states=keep, beta=beta,
                                  population_tol=population_tol, basis_margin=basis_margin,
                                  check_convergence=False, hbar=hbar)
        m = min(keep, fine.n_states)
        if beta is not None:
            floor = convergence_population if convergence_population is not None else np.sqrt(population_tol)
            m = min(m, int(np.sum(energies - energies[0] <= -np.log(floor) / beta)))
        meta["converged_states"] = m
        drift = float(np.max(np.abs(fine.eigenvalues[:m] - energies[:m])))
        meta["convergence_drift"] = drift
        if drift > convergence_tol:
            raise ConvergenceError(
                f"Собственные значения не сошлись при удвоении сетки: сдвиг {drift:.2e} > {convergence_tol:.0e}"
            )

    meta.update({"points": list(grid.points), "domains": [list(d) for d in grid.domains],
                 "n_states": keep, "uncovered_edges": uncovered})
    return SpectralDecomposition(energies, dipole, grid, meta)


def thermal_populations(energies: np.ndarray, beta: float) -> np.ndarray:
    w = np.exp(-beta * (energies - energies[0]))
    return w / w.sum()


def response_quantum(spectrum: SpectralDecomposition, beta: float, t_grid: Sequence[float],
                     thermal: str = "exact", population_tol: float = 1e-10,
                     hbar: float = HBAR) -> ResponseSeries:
    """
    R(t) = (2/ħ) Σ_{a<b} |x_ab|² (p_a − p_b) sin((E_b − E_a)t/ħ)

    thermal="high_temperature": p_a − p_b заменяется на β(E_b − E_a)(p_a + p_b)/2.
    """
    if beta <= 0:
        raise ValueError("beta должно быть положительным")
    if thermal not in ("exact", "high_temperature"):
        raise ValueError(f"Неизвестный режим заселенностей: {thermal}")
    energies = spectrum.eigenvalues
    pops = thermal_populations(energies, beta)
    if pops[-1] >= population_tol:
        raise ConvergenceError(
            f"Заселенность верхнего сохраненного состояния {pops[-1]:.1e} не ниже {population_tol:.0e}; "
            f"увеличьте число состояний"
        )

    a, b = np.triu_indices(len(energies), 1)
    x2 = spectrum.dipole[a, b] ** 2
    gap = energies[b] - energies[a]
    if thermal == "exact":
        factor = pops[a] - pops[b]
    else:
        factor = 0.5 * beta * gap * (pops[a] + pops[b])
    amplitude = 2.0 / hbar * x2 * factor
    significant = np.abs(amplitude) > 1e-16 * np.max(np.abs(amplitude))
    amplitude, freq = amplitude[significant], gap[significant] / hbar

    times = np.asarray(t_grid, dtype=float)
    values = np.empty(len(times))
    for start in range(0, len(times), TIME_CHUNK):
        chunk = times[start:start + TIME_CHUNK]
        values[start:start + TIME_CHUNK] = np.sin(np.outer(chunk, freq)) @ amplitude

    zeros = np.zeros(len(times))
    metadata = {
        "method": "quantum",
        "beta": beta,
        "thermal": thermal,
        "n_states": spectrum.n_states,
        "pairs": int(significant.sum()),
        "top_population": float(pops[-1]),
        "grid": dict(spectrum.metadata),
    }
    return ResponseSeries(times, values.astype(complex), zeros, zeros.copy(), "quantum", metadata)
