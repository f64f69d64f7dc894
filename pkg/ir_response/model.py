"""
Модель: осциллятор Морзе, билинейно связанный с гармоническими модами бани

Координаты упорядочены так: сначала системные (ИК-активные) степени свободы,
затем степени свободы бани. Точка фазового пространства z = (p, q) длины 2N.
"""
import logging
from abc import ABC, abstractmethod
from typing import Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import minimize

from ir_response.common import HBAR, NumericalError

logger = logging.getLogger(__name__)

# Массив (..., 2N): первые N компонент - импульсы, последние N - координаты
PhasePoint = np.ndarray


class MorseBathParams(BaseModel):
    """Параметры потенциала Морзе с баней (значения по умолчанию - D=100, α=0.2√2, χ=0.9)"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    D: float = Field(100.0, gt=0)
    alpha: float = Field(0.2 * np.sqrt(2.0), gt=0)
    chi: float = Field(0.9, gt=0)
    coupling: float = 0.0

    @property
    def omega_e(self) -> float:
        return self.alpha * np.sqrt(2.0 * self.D)

    @property
    def x_e(self) -> float:
        return self.omega_e / (4.0 * self.D)


def morse_levels(params: MorseBathParams, n_max: int) -> np.ndarray:
    """
    Аналитические уровни осциллятора Морзе единичной массы

    E_n = ω_e(n+½) − x_e·ω_e(n+½)², n = 0..n_max
    """
    n = np.arange(n_max + 1) + 0.5
    return HBAR * params.omega_e * n - params.x_e * HBAR * params.omega_e * n ** 2


def bound_state_count(params: MorseBathParams) -> int:
    """Число связанных состояний: n < 1/(2x_e) − ½"""
    return int(np.ceil(1.0 / (2.0 * params.x_e) - 0.5))


class Potential(ABC):
    """Абстрактный потенциал: тройка (V, ∇V, ∇²V), векторизованная по ведущим осям"""

    n_dof: int

    @abstractmethod
    def energy(self, q: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def gradient(self, q: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def hessian(self, q: np.ndarray) -> np.ndarray:
        ...

    def _check(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.ndim == 0 or q.shape[-1] != self.n_dof:
            raise ValueError(
                f"Ожидался вектор координат длины {self.n_dof}, получена форма {q.shape}"
            )
        return q


class MorseBathPotential(Potential):
    """
    V = D(1−e^{−α q_S})² + Σ_k D(χ α q_k)² − γ_c q_S Σ_k q_k

    Все моды бани имеют общие χ и γ_c; системная координата одна (индекс 0).
    """

    def __init__(self, params: MorseBathParams, n_bath: int = 1):
        if n_bath < 0:
            raise ValueError("Число мод бани не может быть отрицательным")
        self.params = params
        self.n_bath = n_bath
        self.n_dof = 1 + n_bath
        self._bath_k = 2.0 * params.D * (params.chi * params.alpha) ** 2

    def energy(self, q):
        q = self._check(q)
        D, a, c = self.params.D, self.params.alpha, self.params.coupling
        qs, qb = q[..., 0], q[..., 1:]
        v = D * (1.0 - np.exp(-a * qs)) ** 2
        if self.n_bath:
            v = v + 0.5 * self._bath_k * np.sum(qb ** 2, axis=-1) - c * qs * np.sum(qb, axis=-1)
        return v

    def gradient(self, q):
        q = self._check(q)
        D, a, c = self.params.D, self.params.alpha, self.params.coupling
        qs, qb = q[..., 0], q[..., 1:]
        e = np.exp(-a * qs)
        grad = np.empty_like(q)
        grad[..., 0] = 2.0 * D * a * e * (1.0 - e)
        if self.n_bath:
            grad[..., 0] -= c * np.sum(qb, axis=-1)
            grad[..., 1:] = self._bath_k * qb - c * qs[..., None]
        return grad

    def hessian(self, q):
        q = self._check(q)
        D, a, c = self.params.D, self.params.alpha, self.params.coupling
        e = np.exp(-a * q[..., 0])
        hess = np.zeros(q.shape + (self.n_dof,))
        hess[..., 0, 0] = 2.0 * D * a ** 2 * e * (2.0 * e - 1.0)
        if self.n_bath:
            idx = np.arange(1, self.n_dof)
            hess[..., idx, idx] = self._bath_k
            hess[..., 0, 1:] = -c
            hess[..., 1:, 0] = -c
        return hess


class HarmonicPotential(Potential):
    """
    Гармонический потенциал V = ½ qᵀKq, K = diag(m ω²) + связи

    couplings - симметричная матрица недиагональных элементов K (диагональ игнорируется).
    """

    def __init__(self, frequencies: Sequence[float], masses: Optional[Sequence[float]] = None,
                 couplings: Optional[np.ndarray] = None):
        omega = np.asarray(frequencies, dtype=float)
        if omega.ndim != 1 or np.any(omega <= 0):
            raise ValueError("Частоты должны быть положительными")
        self.n_dof = len(omega)
        masses = np.ones(self.n_dof) if masses is None else np.asarray(masses, dtype=float)
        self.force_constants = np.diag(masses * omega ** 2)
        if couplings is not None:
            couplings = np.asarray(couplings, dtype=float)
            if couplings.shape != (self.n_dof, self.n_dof) or not np.allclose(couplings, couplings.T):
                raise ValueError("Матрица связей должна быть симметричной N×N")
            off = couplings - np.diag(np.diag(couplings))
            self.force_constants = self.force_constants + off

    def energy(self, q):
        q = self._check(q)
        return 0.5 * np.einsum("...i,ij,...j->...", q, self.force_constants, q)

    def gradient(self, q):
        q = self._check(q)
        return q @ self.force_constants

    def hessian(self, q):
        q = self._check(q)
        return np.broadcast_to(self.force_constants, q.shape + (self.n_dof,)).copy()


class ModelSystem:
    """
    Модель: потенциал, массы и разбиение степеней свободы на систему и баню

    Состояние не меняется после построения (кроме кэша минимума).
    """

    def __init__(self, potential: Potential, n_system: int = 1,
                 masses: Optional[Sequence[float]] = None):
        self.potential_fn = potential
        self.n_total = potential.n_dof
        if not 1 <= n_system <= self.n_total:
            raise ValueError(f"n_system должно быть в диапазоне [1, {self.n_total}]")
        self.n_system = n_system
        self.n_bath = self.n_total - n_system
        self.masses = np.ones(self.n_total) if masses is None else np.asarray(masses, dtype=float)
        if self.masses.shape != (self.n_total,) or np.any(self.masses <= 0):
            raise ValueError("Массы должны быть положительными, по одной на степень свободы")
        self._minimum: Optional[Tuple[np.ndarray, float]] = None

    @classmethod
    def morse_bath(cls, params: MorseBathParams, n_bath: int = 1,
                   masses: Optional[Sequence[float]] = None) -> "ModelSystem":
        return cls(MorseBathPotential(params, n_bath), n_system=1, masses=masses)

    @classmethod
    def harmonic(cls, frequencies: Sequence[float], n_system: int = 1,
                 masses: Optional[Sequence[float]] = None,
                 couplings: Optional[np.ndarray] = None) -> "ModelSystem":
        return cls(HarmonicPotential(frequencies, masses, couplings), n_system=n_system, masses=masses)

    @property
    def system_indices(self) -> np.ndarray:
        return np.arange(self.n_system)

    @property
    def bath_indices(self) -> np.ndarray:
        return np.arange(self.n_system, self.n_total)

    def potential(self, q: np.ndarray) -> np.ndarray:
        return self.potential_fn.energy(q)

    def gradient(self, q: np.ndarray) -> np.ndarray:
        return self.potential_fn.gradient(q)

    def hessian(self, q: np.ndarray) -> np.ndarray:
        return self.potential_fn.hessian(q)

    def classical_hamiltonian(self, z: PhasePoint) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != 2 * self.n_total:
            raise ValueError(f"Ожидалась точка фазового пространства длины {2 * self.n_total}")
        p, q = z[..., :self.n_total], z[..., self.n_total:]
        return 0.5 * np.sum(p ** 2 / self.masses, axis=-1) + self.potential(q)

    def reference_frequencies(self) -> np.ndarray:
        """Гармонические частоты √(K_ii/m_i) из гессиана в начале координат"""
        k = np.diag(self.hessian(np.zeros(self.n_total)))
        if np.any(k <= 0):
            raise NumericalError("Гессиан в начале координат не положительно определен")
        return np.sqrt(k / self.masses)

    def find_minimum(self) -> Tuple[np.ndarray, float]:
        """
        Локальный минимум потенциала спуском из начала координат

        Возвращает:
        - (q_min, V(q_min)); гессиан в минимуме обязан быть положительно определен
        """
        if self._minimum is None:
            result = minimize(
                lambda q: float(self.potential(q)),
                np.zeros(self.n_total),
                jac=lambda q: self.gradient(q),
                method="BFGS",
                options={"gtol": 1e-12, "maxiter": 1000},
            )
            q_min = np.asarray(result.x, dtype=float)
            eig = np.linalg.eigvalsh(self.hessian(q_min))
            if np.any(eig <= 0):
                raise NumericalError(f"Гессиан в найденном минимуме не положительно определен: {eig}")
            self._minimum = (q_min, float(self.potential(q_min)))
            logger.debug(f"Минимум потенциала: q={q_min}, V={self._minimum[1]:.3e}")
        q_min, v_min = self._minimum
        return q_min.copy(), v_min
