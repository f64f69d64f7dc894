"""
Классическая динамика: траектории вместе с монодромией, действием и префактором HK

Интегрирование - классический RK4 для упакованного вектора состояния
y = (p, q, S, vec M), векторизованный по пачке траекторий.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ir_response.common import HBAR, BranchError, time_grid
from ir_response.model import ModelSystem, PhasePoint
from ir_response.semiclassics import WidthMatrix, monodromy_blocks, prefactor_matrix

logger = logging.getLogger(__name__)

# Максимальный допустимый скачок arg det h за шаг интегратора
BRANCH_JUMP_LIMIT = 0.5 * np.pi


@dataclass
class TrajectoryState:
    """Состояние одной траектории в момент t"""
    t: float
    z: PhasePoint
    action: float
    monodromy: Optional[np.ndarray] = None
    prefactor_log: Optional[complex] = None


@dataclass
class Trajectory:
    """
    Пачка из B траекторий на выходной сетке из T точек

    p, q: (T, B, N); action: (T, B); monodromy: (T, B, 2N, 2N);
    prefactor_log: (T, B) комплексный ln C.
    """
    times: np.ndarray
    p: np.ndarray
    q: np.ndarray
    action: np.ndarray
    monodromy: Optional[np.ndarray]
    prefactor_log: Optional[np.ndarray]
    escaped: np.ndarray
    branch_error: np.ndarray

    @property
    def n_times(self) -> int:
        return len(self.times)

    @property
    def n_batch(self) -> int:
        return self.p.shape[1]

    @property
    def failed(self) -> np.ndarray:
        return self.escaped | self.branch_error

    def state(self, k: int, b: int = 0) -> TrajectoryState:
        return TrajectoryState(
            t=float(self.times[k]),
            z=np.concatenate([self.p[k, b], self.q[k, b]]),
            action=float(self.action[k, b]),
            monodromy=None if self.monodromy is None else self.monodromy[k, b],
            prefactor_log=None if self.prefactor_log is None else complex(self.prefactor_log[k, b]),
        )

    def __len__(self):
        return self.n_times

    def __getitem__(self, k: int) -> TrajectoryState:
        return self.state(k, 0)

    def energies(self, model: ModelSystem) -> np.ndarray:
        return model.classical_hamiltonian(np.concatenate([self.p, self.q], axis=-1))


def _equations_of_motion(y: np.ndarray, model: ModelSystem, track_monodromy: bool) -> np.ndarray:
    """ṗ = −∇V, q̇ = p/m, Ṡ = p²/(2m) − V, Ṁ = [[0, −∇²V], [1/m, 0]]·M"""
    n = model.n_total
    inv_m = 1.0 / model.masses
    p = y[:, :n]
    q = y[:, n:2 * n]
    dy = np.empty_like(y)
    dy[:, :n] = -model.gradient(q)
    dy[:, n:2 * n] = p * inv_m
    dy[:, 2 * n] = 0.5 * np.sum(p * p * inv_m, axis=1) - model.potential(q)
    if track_monodromy:
        M = y[:, 2 * n + 1:].reshape(-1, 2 * n, 2 * n)
        dM = np.empty_like(M)
        dM[:, :n, :] = -model.hessian(q) @ M[:, n:, :]
        dM[:, n:, :] = inv_m[None, :, None] * M[:, :n, :]
        dy[:, 2 * n + 1:] = dM.reshape(len(y), -1)
    return dy


def _rk4_step(y: np.ndarray, dt: float, model: ModelSystem, track_monodromy: bool) -> np.ndarray:
    k1 = _equations_of_motion(y, model, track_monodromy)
    k2 = _equations_of_motion(y + 0.5 * dt * k1, model, track_monodromy)
    k3 = _equations_of_motion(y + 0.5 * dt * k2, model, track_monodromy)
    k4 = _equations_of_motion(y + dt * k3, model, track_monodromy)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def propagate(model: ModelSystem, z0: PhasePoint, t_final: float, dt: float = 1e-3,
              output_stride: float = 0.1, widths: Optional[WidthMatrix] = None,
              track_monodromy: bool = True, escape_radius: float = np.inf,
              strict: bool = False, hbar: float = HBAR) -> Trajectory:
    """
    Совместное интегрирование уравнений Гамильтона, уравнений в вариациях и действия

    Параметры:
    - z0: начальная точка (2N,) или пачка (B, 2N)
    - widths: если задано (и track_monodromy), ведется непрерывная ветвь ln C
    - escape_radius: траектория с |q| > escape_radius помечается как ушедшая
    - strict: при скачке фазы префактора бросать BranchError вместо пометки

    Возвращает:
    - Trajectory на сетке 0, output_stride, ..., t_final
    """
    if dt <= 0:
        raise ValueError("Шаг интегрирования должен быть положительным")
    n = model.n_total
    z0 = np.atleast_2d(np.asarray(z0, dtype=float))
    if z0.shape[-1] != 2 * n:
        raise ValueError(f"Ожидалась точка фазового пространства длины {2 * n}")
    times = time_grid(t_final, output_stride)
    n_sub = int(round(output_stride / dt))
    if n_sub < 1 or abs(n_sub * dt - output_stride) > 1e-9 * output_stride:
        raise ValueError(f"Шаг вывода {output_stride} не кратен dt={dt}")
    track_prefactor = track_monodromy and widths is not None

    batch = len(z0)
    width = 2 * n + 1 + (4 * n * n if track_monodromy else 0)
    y0 = np.zeros((batch, width))
    y0[:, :2 * n] = z0
    if track_monodromy:
        y0[:, 2 * n + 1:] = np.tile(np.eye(2 * n).ravel(), (batch, 1))
    y = y0.copy()

    n_t = len(times)
    p_out = np.empty((n_t, batch, n))
    q_out = np.empty((n_t, batch, n))
    s_out = np.empty((n_t, batch))
    m_out = np.empty((n_t, batch, 2 * n, 2 * n)) if track_monodromy else None
    l_out = np.zeros((n_t, batch), dtype=complex) if track_prefactor else None
    escaped = np.zeros(batch, dtype=bool)
    branch_error = np.zeros(batch, dtype=bool)

    phase = np.zeros(batch)
    log_abs = np.zeros(batch)
    prev_sign = np.ones(batch, dtype=complex)

    def record(k):
        p_out[k] = y[:, :n]
        q_out[k] = y[:, n:2 * n]
        s_out[k] = y[:, 2 * n]
        if track_monodromy:
            m_out[k] = y[:, 2 * n + 1:].reshape(batch, 2 * n, 2 * n)
        if track_prefactor:
            l_out[k] = 0.5 * (log_abs + 1j * phase)

    record(0)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, n_t):
            for _ in range(n_sub):
                y = _rk4_step(y, dt, model, track_monodromy)
                if track_prefactor:
                    M = y[:, 2 * n + 1:].reshape(batch, 2 * n, 2 * n)
                    sign, log_abs = np.linalg.slogdet(prefactor_matrix(M, widths, hbar))
                    dphi = np.angle(sign * np.conj(prev_sign))
                    jump = np.abs(dphi) > BRANCH_JUMP_LIMIT
                    if np.any(jump & ~escaped & ~branch_error):
                        if strict:
                            raise BranchError(
                                f"Скачок фазы det h на {np.max(np.abs(dphi[jump])):.3f} рад "
                                f"около t={times[k - 1]:.3f}; уменьшите dt"
                            )
                        branch_error |= jump
                    phase += dphi
                    prev_sign = sign
            # Ушедшие траектории возвращаются в начальное состояние, чтобы не плодить NaN
            q = y[:, n:2 * n]
            lost = ~np.all(np.isfinite(y), axis=1) | np.any(np.abs(q) > escape_radius, axis=1)
            new = lost & ~escaped
            if np.any(new):
                logger.debug(f"Траекторий ушло на t={times[k]:.1f}: {int(new.sum())}")
            escaped |= lost
            if np.any(lost):
                y[lost] = y0[lost]
                if track_prefactor:
                    phase[lost] = 0.0
                    log_abs = np.where(lost, 0.0, log_abs)
                    prev_sign[lost] = 1.0
            record(k)

    return Trajectory(times, p_out, q_out, s_out, m_out, l_out, escaped, branch_error)


def hk_prefactor(state: TrajectoryState, widths: WidthMatrix, hbar: float = HBAR) -> complex:
    """
    Префактор Херман-Клюка C = √det h на непрерывной ветви

    Главное значение корня сверяется с отслеживаемым exp(prefactor_log).
    """
    if state.monodromy is None:
        raise ValueError("Для префактора нужна монодромия")
    principal = complex(np.sqrt(complex(np.linalg.det(prefactor_matrix(state.monodromy, widths, hbar)))))
    if state.prefactor_log is None:
        return principal
    tracked = complex(np.exp(state.prefactor_log))
    return principal if abs(principal - tracked) <= abs(principal + tracked) else -principal


def symplectic_defect(M: np.ndarray) -> np.ndarray:
    """Максимальное отклонение блочных симплектических соотношений по последним двум осям"""
    m11, m12, m21, m22 = monodromy_blocks(M)
    t = lambda x: np.swapaxes(x, -1, -2)
    eye = np.eye(M.shape[-1] // 2)
    d1 = t(m22) @ m11 - t(m12) @ m21 - eye
    d2 = t(m11) @ m21 - t(m21) @ m11
    d3 = t(m22) @ m12 - t(m12) @ m22
    return np.max(np.abs(np.concatenate([d1, d2, d3], axis=-1)), axis=(-1, -2))
