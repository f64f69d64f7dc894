"""
Монте-Карло: выборка суммарных переменных по фактору Больцмана,
разностных переменных по гауссианам t = 0 и учет весов
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import cholesky

from ir_response.common import HBAR
from ir_response.model import ModelSystem, PhasePoint

logger = logging.getLogger(__name__)

RNG_ALGORITHM = "philox-4x64"

# Порог |log_w − медиана| для учета экстремальных весов
EXTREME_LOG_WEIGHT = 30.0


def sample_stream(seed: int, index: int) -> np.random.Generator:
    """Независимый поток для образца index: счетчик Philox [0, 0, index, 0] с ключом seed"""
    if seed < 0 or index < 0:
        raise ValueError("seed и index должны быть неотрицательными")
    return np.random.Generator(np.random.Philox(key=seed, counter=index << 128))


@dataclass
class SampleDraw:
    """Одна выборка: z̄, Δz (нули в линеаризованных степенях свободы) и лог-вес"""
    z_bar: PhasePoint
    dz: PhasePoint
    log_weight: float
    seed_index: int


@dataclass
class SampleBatch:
    """Пачка выборок с индексами seed_index"""
    z_bar: np.ndarray
    dz: np.ndarray
    log_weight: np.ndarray
    indices: np.ndarray

    def __len__(self):
        return len(self.indices)

    def draw(self, i: int) -> SampleDraw:
        return SampleDraw(self.z_bar[i], self.dz[i], float(self.log_weight[i]), int(self.indices[i]))


class BoltzmannProposal:
    """
    Гауссово предложение для z̄

    Импульсы - точно N(0, m/β); координаты - N(q_min, s²·β⁻¹·(∇²V(q_min))⁻¹),
    s = inflation. Лог-вес: −β(V(q) − V_min) + ½δqᵀΣ⁻¹δq.
    """

    def __init__(self, model: ModelSystem, beta: float, inflation: float = 1.0):
        if beta <= 0:
            raise ValueError("beta должно быть положительным")
        if inflation <= 0:
            raise ValueError("Коэффициент расширения предложения должен быть положительным")
        self.model = model
        self.beta = beta
        self.inflation = inflation
        self.q_min, self.v_min = model.find_minimum()
        covariance = inflation ** 2 * np.linalg.inv(model.hessian(self.q_min)) / beta
        self.covariance = 0.5 * (covariance + covariance.T)
        self.chol = cholesky(self.covariance, lower=True)
        self.precision = np.linalg.inv(self.covariance)
        self.momentum_scale = np.sqrt(model.masses / beta)

    def log_weight(self, q: np.ndarray) -> np.ndarray:
        dq = q - self.q_min
        return (-self.beta * (self.model.potential(q) - self.v_min)
                + 0.5 * np.einsum("...i,ij,...j->...", dq, self.precision, dq))

    def draw(self, rng: np.random.Generator) -> Tuple[np.ndarray, float]:
        """Сначала импульсы, затем координаты"""
        n = self.model.n_total
        p = self.momentum_scale * rng.standard_normal(n)
        q = self.q_min + self.chol @ rng.standard_normal(n)
        return np.concatenate([p, q]), float(self.log_weight(q))

    def gaussian_normalization(self) -> float:
        """∫exp(−½δqᵀΣ⁻¹δq)dq = (2π)^{N/2}·√det Σ"""
        n = self.model.n_total
        return float((2.0 * np.pi) ** (0.5 * n) * np.sqrt(np.linalg.det(self.covariance)))


def sample_boltzmann(model: ModelSystem, beta: float, rng: np.random.Generator,
                     proposal: Optional[BoltzmannProposal] = None) -> Tuple[np.ndarray, float]:
    """
    Выборка z̄ с весом важности

    Возвращает:
    - (z̄, log_weight); самонормировка весов поглощает константу Q
    """
    if proposal is None:
        proposal = BoltzmannProposal(model, beta)
    return proposal.draw(rng)


def sample_difference(widths: Sequence[float], rng: np.random.Generator,
                      hbar: float = HBAR) -> Tuple[np.ndarray, float]:
    """
    Выборка Δz по гауссианам t = 0 для k степеней свободы с ширинами widths

    Δp ~ N(0, 2ħ²γ), Δq ~ N(0, 2/γ); сначала Δp, затем Δq.

    Возвращает:
    - (Δz длины 2k, ln нормировки предложения k·ln(4πħ))
    """
    g = np.asarray(widths, dtype=float)
    k = len(g)
    dp = hbar * np.sqrt(2.0 * g) * rng.standard_normal(k)
    dq = np.sqrt(2.0 / g) * rng.standard_normal(k)
    return np.concatenate([dp, dq]), k * np.log(4.0 * np.pi * hbar)


def draw_samples(proposal: BoltzmannProposal, widths: Optional[np.ndarray],
                 sampled_dofs: Sequence[int], seed: int, start: int, stop: int,
                 hbar: float = HBAR) -> SampleBatch:
    """
    Выборки с индексами start..stop-1, каждая из собственного потока

    sampled_dofs - степени свободы, по которым разыгрывается Δz (пусто для ЛСК).
    """
    model = proposal.model
    n = model.n_total
    sampled = np.asarray(sampled_dofs, dtype=int)
    indices = np.arange(start, stop)
    z_bar = np.empty((len(indices), 2 * n))
    dz = np.zeros((len(indices), 2 * n))
    log_weight = np.empty(len(indices))
    for row, index in enumerate(indices):
        rng = sample_stream(seed, int(index))
        z_bar[row], log_weight[row] = proposal.draw(rng)
        if len(sampled):
            d, _ = sample_difference(widths[sampled], rng, hbar)
            dz[row, sampled] = d[:len(sampled)]
            dz[row, n + sampled] = d[len(sampled):]
    return SampleBatch(z_bar, dz, log_weight, indices)


def count_extreme_weights(log_weight: np.ndarray) -> int:
    if len(log_weight) == 0:
        return 0
    return int(np.sum(np.abs(log_weight - np.median(log_weight)) > EXTREME_LOG_WEIGHT))


def jackknife_ratio(numerators: np.ndarray, denominators: np.ndarray,
                    counts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Отношение сумм и его ошибка методом складного ножа по блокам (ось 0)

    Пустые блоки пропускаются; при менее чем двух непустых блоках ошибка равна 0.
    """
    total_num = numerators.sum(axis=0)
    total_den = denominators.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        estimate = np.where(total_den != 0, total_num / np.where(total_den != 0, total_den, 1.0), 0.0)
    error = np.zeros(np.shape(total_num), dtype=float)
    active = counts > 0
    k = active.sum(axis=0)
    if np.all(k < 2):
        return estimate, error
    with np.errstate(invalid="ignore", divide="ignore"):
        leave_out = (total_num - numerators) / (total_den - denominators)
    leave_out = np.where(active, leave_out, 0.0)
    k_safe = np.maximum(k, 1)
    mean = leave_out.sum(axis=0) / k_safe
    sq = np.where(active, (leave_out - mean) ** 2, 0.0).sum(axis=0)
    error = np.where(k >= 2, np.sqrt((k - 1) / k_safe * sq), 0.0)
    return estimate, error


@dataclass
class EstimatorAccumulator:
    """
    Накопитель самонормированной оценки Σwc/Σw по блокам для складного ножа

    Блок образца - seed_index % n_blocks, поэтому результат не зависит от
    разбиения на порции и числа процессов.
    """
    n_times: int
    n_blocks: int = 100
    sum_wc: np.ndarray = None
    sum_w: np.ndarray = None
    count: np.ndarray = None
    sum_abs_wc: np.ndarray = None
    sum_sq_abs_wc: np.ndarray = None
    weight_sum: float = 0.0
    weight_sq_sum: float = 0.0
    accepted: int = 0
    rejected: Dict[str, int] = field(default_factory=dict)
    rejected_weight: float = 0.0
    extreme_weights: int = 0

    def __post_init__(self):
        if self.n_blocks < 1:
            raise ValueError("Число блоков должно быть положительным")
        shape = (self.n_blocks, self.n_times)
        if self.sum_wc is None:
            self.sum_wc = np.zeros(shape, dtype=complex)
            self.sum_w = np.zeros(shape)
            self.count = np.zeros(shape, dtype=np.int64)
            self.sum_abs_wc = np.zeros(self.n_times)
            self.sum_sq_abs_wc = np.zeros(self.n_times)

    def accumulate(self, t_index: int, contribution: complex, weight: float,
                   seed_index: int = 0) -> "EstimatorAccumulator":
        """Вклад одного образца в один бин; образец учитывается в счетчиках на бине t_index = 0"""
        if not (np.isfinite(contribution) and np.isfinite(weight)):
            raise ValueError("Вклад и вес должны быть конечными")
        block = seed_index % self.n_blocks
        wc = weight * contribution
        self.sum_wc[block, t_index] += wc
        self.sum_w[block, t_index] += weight
        self.count[block, t_index] += 1
        self.sum_abs_wc[t_index] += abs(wc)
        self.sum_sq_abs_wc[t_index] += abs(wc) ** 2
        if t_index == 0:
            self.weight_sum += float(weight)
            self.weight_sq_sum += float(weight) ** 2
            self.accepted += 1
        return self

    def add_batch(self, seed_indices: np.ndarray, contributions: np.ndarray,
                  weights: np.ndarray) -> "EstimatorAccumulator":
        """Вклады (B, T) и веса (B,) принятых образцов"""
        if len(seed_indices) == 0:
            return self
        blocks = np.asarray(seed_indices) % self.n_blocks
        wc = weights[:, None] * contributions
        np.add.at(self.sum_wc, blocks, wc)
        np.add.at(self.sum_w, blocks, np.broadcast_to(weights[:, None], wc.shape))
        np.add.at(self.count, blocks, 1)
        abs_wc = np.abs(wc)
        self.sum_abs_wc += abs_wc.sum(axis=0)
        self.sum_sq_abs_wc += (abs_wc ** 2).sum(axis=0)
        self.weight_sum += float(weights.sum())
        self.weight_sq_sum += float((weights ** 2).sum())
        self.accepted += len(seed_indices)
        return self

    def reject(self, reason: str, count: int = 1, weight: float = 0.0) -> "EstimatorAccumulator":
        if count:
            self.rejected[reason] = self.rejected.get(reason, 0) + int(count)
            self.rejected_weight += float(weight)
        return self

    def merge(self, other: "EstimatorAccumulator") -> "EstimatorAccumulator":
        if (other.n_blocks, other.n_times) != (self.n_blocks, self.n_times):
            raise ValueError("Несовместимые накопители")
        self.sum_wc += other.sum_wc
        self.sum_w += other.sum_w
        self.count += other.count
        self.sum_abs_wc += other.sum_abs_wc
        self.sum_sq_abs_wc += other.sum_sq_abs_wc
        self.weight_sum += other.weight_sum
        self.weight_sq_sum += other.weight_sq_sum
        self.accepted += other.accepted
        for reason, n in other.rejected.items():
            self.rejected[reason] = self.rejected.get(reason, 0) + n
        self.rejected_weight += other.rejected_weight
        self.extreme_weights += other.extreme_weights
        return self

    def estimate(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Возвращает:
        - (среднее, ошибка Re, ошибка Im) по всем бинам времени
        """
        real, err_real = jackknife_ratio(self.sum_wc.real, self.sum_w, self.count)
        imag, err_imag = jackknife_ratio(self.sum_wc.imag, self.sum_w, self.count)
        return real + 1j * imag, err_real, err_imag

    def phase_cancellation(self) -> np.ndarray:
        """|Σwc| / Σ|wc| по бинам; 1 - нет сокращения фаз"""
        total = np.abs(self.sum_wc.sum(axis=0))
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.sum_abs_wc > 0, total / np.where(self.sum_abs_wc > 0, self.sum_abs_wc, 1.0), 1.0)

    def effective_sample_size(self) -> float:
        if self.weight_sq_sum <= 0:
            return 0.0
        return self.weight_sum ** 2 / self.weight_sq_sum

    @property
    def total_rejected(self) -> int:
        return int(sum(self.rejected.values()))
