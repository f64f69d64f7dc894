"""
Замкнутые полуклассические ядра: перекрытия когерентных состояний,
матрицы A, A_B, r, s и префактор Херман-Клюка

Монодромия M задается в порядке (p, q): блоки
m11 = ∂p_t/∂p, m12 = ∂p_t/∂q, m21 = ∂q_t/∂p, m22 = ∂q_t/∂q.
Все функции векторизованы по ведущим осям массива M.
"""
from typing import Optional, Sequence, Tuple

import numpy as np

from ir_response.common import HBAR
from ir_response.model import ModelSystem, PhasePoint


class WidthMatrix:
    """Диагональная матрица ширин γ когерентных состояний с разбиением на систему и баню"""

    def __init__(self, diagonal: Sequence[float], n_system: int = 1):
        self.diagonal = np.asarray(diagonal, dtype=float)
        if self.diagonal.ndim != 1 or np.any(self.diagonal <= 0) or not np.all(np.isfinite(self.diagonal)):
            raise ValueError("Ширины γ должны быть конечными и положительными")
        if not 1 <= n_system <= len(self.diagonal):
            raise ValueError("Некорректное число системных степеней свободы для γ")
        self.n_system = n_system

    @classmethod
    def matched(cls, model: ModelSystem, hbar: float = HBAR) -> "WidthMatrix":
        """γ_i = m_i·ω_i/ħ по гармоническим частотам в начале координат"""
        return cls(model.masses * model.reference_frequencies() / hbar, model.n_system)

    @property
    def n_dof(self) -> int:
        return len(self.diagonal)

    @property
    def inverse(self) -> np.ndarray:
        return 1.0 / self.diagonal

    @property
    def system(self) -> np.ndarray:
        return self.diagonal[:self.n_system]

    @property
    def bath(self) -> np.ndarray:
        return self.diagonal[self.n_system:]

    def matrix(self) -> np.ndarray:
        return np.diag(self.diagonal)

    def __repr__(self):
        return f"WidthMatrix({self.diagonal.tolist()}, n_system={self.n_system})"


def monodromy_blocks(M: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    n = M.shape[-1] // 2
    return M[..., :n, :n], M[..., :n, n:], M[..., n:, :n], M[..., n:, n:]


def _t(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def overlap(z2: PhasePoint, z1: PhasePoint, widths: WidthMatrix, hbar: float = HBAR) -> np.ndarray:
    """
    Перекрытие когерентных состояний ⟨z2|z1⟩

    exp{−¼ΔqᵀγΔq − (i/ħ)p̄ᵀΔq − Δpᵀγ⁻¹Δp/(4ħ²)}, Δz = z1 − z2, z̄ = (z1 + z2)/2
    """
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    n = widths.n_dof
    if z1.shape[-1] != 2 * n or z2.shape[-1] != 2 * n:
        raise ValueError("Размерность точек не совпадает с матрицей ширин")
    dp = z1[..., :n] - z2[..., :n]
    dq = z1[..., n:] - z2[..., n:]
    p_bar = 0.5 * (z1[..., :n] + z2[..., :n])
    g = widths.diagonal
    exponent = (-0.25 * np.sum(g * dq ** 2, axis=-1)
                - 1j / hbar * np.sum(p_bar * dq, axis=-1)
                - np.sum(dp ** 2 / g, axis=-1) / (4.0 * hbar ** 2))
    return np.exp(exponent)


def prefactor_matrix(M: np.ndarray, widths: WidthMatrix, hbar: float = HBAR) -> np.ndarray:
    """h = ½(m11 + γm22γ⁻¹ − iħγm21 − (1/iħ)m12γ⁻¹); префактор HK равен √det h"""
    m11, m12, m21, m22 = monodromy_blocks(M)
    g = widths.diagonal
    return 0.5 * (m11
                  + g[:, None] * m22 / g[None, :]
                  - 1j * hbar * g[:, None] * m21
                  + 1j / hbar * m12 / g[None, :])


def _linearized_gaussian(M: np.ndarray, widths: WidthMatrix, columns: np.ndarray,
                         hbar: float) -> np.ndarray:
    """
    Матрица линеаризованной гауссовой экспоненты по выбранным столбцам монодромии

    При columns = все степени свободы совпадает с матрицей A.
    """
    m11, m12, m21, m22 = monodromy_blocks(M)
    m11, m12, m21, m22 = (b[..., columns] for b in (m11, m12, m21, m22))
    g = widths.diagonal
    g_inv = widths.inverse
    gc = g[columns]
    h2 = hbar ** 2

    def quad(left, weight, right):
        return _t(left) @ (weight[:, None] * right)

    b11 = np.diag(1.0 / gc) + quad(m11, g_inv, m11) + h2 * quad(m21, g, m21)
    b12 = h2 * quad(m21, g, m22) + quad(m11, g_inv, m12)
    b22 = h2 * np.diag(gc) + h2 * quad(m22, g, m22) + quad(m12, g_inv, m12)
    top = np.concatenate([b11, b12], axis=-1)
    bottom = np.concatenate([_t(b12), b22], axis=-1)
    return np.concatenate([top, bottom], axis=-2) / (4.0 * h2)


def matrix_A(M: np.ndarray, widths: WidthMatrix, hbar: float = HBAR) -> np.ndarray:
    """Матрица A (2N×2N) линеаризованной экспоненты −ΔzᵀAΔz в порядке (Δp, Δq)"""
    return _linearized_gaussian(M, widths, np.arange(widths.n_dof), hbar)


def matrix_A_B(M: np.ndarray, widths: WidthMatrix, bath_columns: Optional[Sequence[int]] = None,
               hbar: float = HBAR) -> np.ndarray:
    """
    Матрица A_B (2n×2n) гибридного метода

    m̃_ij - все N строк блока ij и только n столбцов бани; во внутренних
    произведениях стоит полная матрица γ, в первых слагаемых - γ_B.
    """
    if bath_columns is None:
        bath_columns = np.arange(widths.n_system, widths.n_dof)
    return _linearized_gaussian(M, widths, np.asarray(bath_columns, dtype=int), hbar)


def r_s_matrices(M: np.ndarray, widths: WidthMatrix, hbar: float = HBAR) -> Tuple[np.ndarray, np.ndarray]:
    """r = m21ᵀγ + (i/ħ)m11ᵀ, s = m22ᵀγ + (i/ħ)m12ᵀ"""
    m11, m12, m21, m22 = monodromy_blocks(M)
    g = widths.diagonal
    r = _t(m21) * g[None, :] + 1j / hbar * _t(m11)
    s = _t(m22) * g[None, :] + 1j / hbar * _t(m12)
    return r, s


def factorized_determinants(M: np.ndarray, widths: WidthMatrix,
                            hbar: float = HBAR) -> Tuple[np.ndarray, np.ndarray]:
    """
    Определители через r и s

    Возвращает:
    - |C|² = √(det(½[iħr† + s†γ⁻¹])·det(½[−iħr + γ⁻¹s]ᵀ))
    - det A = (1/4ħ²)^N·det(½[iħr† + s†γ⁻¹])·det(½[−iħr + γ⁻¹s])
    """
    r, s = r_s_matrices(M, widths, hbar)
    g_inv = widths.inverse
    n = widths.n_dof
    left = 0.5 * (1j * hbar * np.conj(_t(r)) + np.conj(_t(s)) * g_inv[None, :])
    right = 0.5 * (-1j * hbar * r + g_inv[:, None] * s)
    det_left = np.linalg.det(left)
    det_right = np.linalg.det(right)
    modulus_sq = np.sqrt(det_left * np.linalg.det(_t(right)))
    det_a = det_left * det_right / (4.0 * hbar ** 2) ** n
    return modulus_sq.real, det_a.real


def identity_ratio(M: np.ndarray, widths: WidthMatrix, hbar: float = HBAR) -> np.ndarray:
    """|C|²·(π^{2N}/det A)^{1/2}/(2πħ)^N; равно 1 для любой симплектической M"""
    n = widths.n_dof
    c_sq = np.abs(np.linalg.det(prefactor_matrix(M, widths, hbar)))
    det_a = np.linalg.det(matrix_A(M, widths, hbar))
    return c_sq * np.sqrt(np.pi ** (2 * n) / det_a) / (2.0 * np.pi * hbar) ** n
