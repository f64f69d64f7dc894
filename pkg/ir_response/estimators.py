"""
Оценки функции линейного отклика R(t) по траекториям: ЛСК-НЗП, полный HK и гибридный метод

Каждый образец дает вклад c(t) на всей выходной сетке; итог R = Σwc/Σw.
Множители β и 2^k (k - число степеней свободы с разыгрываемым Δz) входят в c.
"""
import logging
import time
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from ir_response.common import HBAR, ResponseSeries, time_grid
from ir_response.dynamics import Trajectory, propagate
from ir_response.model import ModelSystem
from ir_response.sampling import (
    RNG_ALGORITHM,
    BoltzmannProposal,
    EstimatorAccumulator,
    SampleBatch,
    count_extreme_weights,
    draw_samples,
)
from ir_response.semiclassics import WidthMatrix, matrix_A_B

logger = logging.getLogger(__name__)

AB_MODES = ("average", "plus", "minus")

# Предупреждение, если доля ушедших траекторий выше
ESCAPED_WARNING_FRACTION = 0.01


@dataclass
class EnsembleOptions:
    """Параметры интегрирования и ансамбля, общие для всех траекторных методов"""
    t_max: float = 100.0
    dt: float = 1e-3
    output_stride: float = 0.1
    n_blocks: int = 100
    chunk_size: int = 1024
    workers: int = 1
    escape_radius: float = 100.0
    proposal_inflation: float = 1.0

    def validate(self):
        if self.dt <= 0 or self.output_stride <= 0 or self.t_max < 0:
            raise ValueError("Шаги и t_max должны быть положительными")
        if self.chunk_size < 1 or self.n_blocks < 1:
            raise ValueError("chunk_size и n_blocks должны быть положительными")
        time_grid(self.t_max, self.output_stride)


class _Kernel:
    """Вычисление вкладов пачки образцов одним методом"""

    method = ""

    def __init__(self, model: ModelSystem, beta: float, widths: Optional[WidthMatrix]):
        self.model = model
        self.beta = beta
        self.widths = widths

    @property
    def sampled_dofs(self) -> np.ndarray:
        return np.array([], dtype=int)

    def evaluate(self, batch: SampleBatch, options: EnsembleOptions) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        """
        Возвращает:
        - вклады (B, T) и маски отбракованных образцов по причинам
        """
        raise NotImplementedError

    def _propagate(self, z0: np.ndarray, options: EnsembleOptions, track: bool) -> Trajectory:
        return propagate(self.model, z0, options.t_max, options.dt, options.output_stride,
                         widths=self.widths if track else None, track_monodromy=track,
                         escape_radius=options.escape_radius)


class LscKernel(_Kernel):
    """c = β Σ_{i∈S} (p̄_i/m_i) q_i(t) по одной траектории из z̄"""

    method = "lsc"

    def evaluate(self, batch, options):
        model = self.model
        s = model.system_indices
        traj = self._propagate(batch.z_bar, options, track=False)
        velocity = batch.z_bar[:, s] / model.masses[s]
        contributions = self.beta * np.einsum("bs,tbs->bt", velocity, traj.q[:, :, s])
        return contributions.astype(complex), {"escaped": traj.escaped}


class HermanKlukKernel(_Kernel):
    """
    Двойной интеграл HK по паре траекторий z̄ ± Δz/2

    dofs - степени свободы с разыгрываемой разностью (все для полного HK).
    bath - линеаризованные степени свободы, учитываемые через det A_B.
    """

    method = "hk"

    def __init__(self, model, beta, widths, symmetrize: bool = True):
        super().__init__(model, beta, widths)
        self.symmetrize = symmetrize
        self.dofs = np.arange(model.n_total)
        self.bath = np.array([], dtype=int)
        self.ab_mode = "average"

    @property
    def sampled_dofs(self):
        return self.dofs

    def evaluate(self, batch, options):
        b = len(batch)
        if len(self.dofs):
            z1 = batch.z_bar + 0.5 * batch.dz
            z2 = batch.z_bar - 0.5 * batch.dz
            traj = self._propagate(np.concatenate([z1, z2]), options, track=True)
            first, second = _slice_batch(traj, 0, b), _slice_batch(traj, b, 2 * b)
        else:
            traj = self._propagate(batch.z_bar, options, track=True)
            first = second = _slice_batch(traj, 0, b)

        # A_B берется от исходной пары и в переставленном слагаемом
        ab_logdet, bad_ab = self._ab_logdet(first, second, b)
        c = self._pair_contribution(batch.z_bar, batch.dz, first, second, ab_logdet)
        if self.symmetrize and len(self.dofs):
            c_swap = self._pair_contribution(batch.z_bar, -batch.dz, second, first, ab_logdet)
            c = 0.5 * (c + c_swap)

        escaped = first.escaped | second.escaped
        branch = (first.branch_error | second.branch_error) & ~escaped
        reasons = {"escaped": escaped, "branch_error": branch}
        if len(self.bath):
            reasons["nonpositive_ab"] = bad_ab & ~escaped & ~branch
        return c, reasons

    def _ab_logdet(self, first: Trajectory, second: Trajectory, b: int):
        """log det A_B вдоль пары (T, B) и маска det A_B <= 0"""
        if not len(self.bath):
            return None, np.zeros(b, dtype=bool)
        M = _select_monodromy(first.monodromy, second.monodromy, self.ab_mode)
        with np.errstate(over="ignore", invalid="ignore"):
            sign, logdet = np.linalg.slogdet(matrix_A_B(M, self.widths, self.bath))
        return logdet, np.any(sign <= 0, axis=0)

    def _pair_contribution(self, z_bar, dz, first: Trajectory, second: Trajectory, ab_logdet):
        model, widths = self.model, self.widths
        n = model.n_total
        d = self.dofs
        s = model.system_indices
        g = widths.diagonal[d]

        with np.errstate(over="ignore", invalid="ignore"):
            dp_t = first.p[..., d] - second.p[..., d]
            dq_t = first.q[..., d] - second.q[..., d]
            p_bar_t = 0.5 * (first.p[..., d] + second.p[..., d])
            phase_0 = np.sum(z_bar[:, d] * dz[:, n + d], axis=-1) / HBAR

            exponent = (first.prefactor_log + np.conj(second.prefactor_log)
                        + 1j * (first.action - second.action) / HBAR
                        - 0.25 * np.sum(g * dq_t ** 2, axis=-1)
                        - np.sum(dp_t ** 2 / g, axis=-1) / (4.0 * HBAR ** 2)
                        - 1j / HBAR * np.sum(p_bar_t * dq_t, axis=-1)
                        + 1j * phase_0[None, :])

            if ab_logdet is not None:
                exponent = exponent - 0.5 * (len(self.bath) * np.log(4.0 * HBAR ** 2) + ab_logdet)

            q_bar_t = 0.5 * (first.q[..., s] + second.q[..., s])
            dp_s = first.p[..., s] - second.p[..., s]
            dipole = q_bar_t + 1j * dp_s / (2.0 * HBAR * widths.diagonal[s])
            velocity = z_bar[:, s] / model.masses[s]
            norm = self.beta * 2.0 ** len(d)
            c = norm * np.einsum("bs,tbs->tb", velocity, dipole) * np.exp(exponent)
        return c.T


class HybridKernel(HermanKlukKernel):
    """
    Гибридный метод: HK по системным степеням свободы, линеаризация по бане

    freeze_system_difference=True линеаризует и системные степени свободы.
    """

    method = "hybrid"

    def __init__(self, model, beta, widths, symmetrize: bool = True, ab_mode: str = "average",
                 freeze_system_difference: bool = False):
        super().__init__(model, beta, widths, symmetrize)
        if ab_mode not in AB_MODES:
            raise ValueError(f"Неизвестный режим A_B: {ab_mode}")
        self.ab_mode = ab_mode
        self.freeze_system_difference = freeze_system_difference
        if freeze_system_difference:
            self.dofs = np.array([], dtype=int)
            self.bath = np.arange(model.n_total)
        else:
            self.dofs = model.system_indices
            self.bath = model.bath_indices


def _slice_batch(traj: Trajectory, start: int, stop: int) -> Trajectory:
    return Trajectory(
        times=traj.times,
        p=traj.p[:, start:stop],
        q=traj.q[:, start:stop],
        action=traj.action[:, start:stop],
        monodromy=None if traj.monodromy is None else traj.monodromy[:, start:stop],
        prefactor_log=None if traj.prefactor_log is None else traj.prefactor_log[:, start:stop],
        escaped=traj.escaped[start:stop],
        branch_error=traj.branch_error[start:stop],
    )


def _select_monodromy(plus: np.ndarray, minus: np.ndarray, mode: str) -> np.ndarray:
    if mode == "plus":
        return plus
    if mode == "minus":
        return minus
    return 0.5 * (plus + minus)


def evaluate_samples(kernel: _Kernel, proposal: BoltzmannProposal, seed: int, start: int, stop: int,
                     options: EnsembleOptions) -> Tuple[SampleBatch, np.ndarray, np.ndarray]:
    """
    Вклады отдельных образцов start..stop-1

    Возвращает:
    - (выборки, вклады (B, T), маска отбракованных)
    """
    widths = None if kernel.widths is None else kernel.widths.diagonal
    batch = draw_samples(proposal, widths, kernel.sampled_dofs, seed, start, stop)
    contributions, reasons = kernel.evaluate(batch, options)
    failed = np.zeros(len(batch), dtype=bool)
    for mask in reasons.values():
        failed |= mask
    return batch, contributions, failed


def _evaluate_chunk(kernel: _Kernel, proposal: BoltzmannProposal, seed: int, start: int, stop: int,
                    options: EnsembleOptions, n_times: int) -> EstimatorAccumulator:
    widths = None if kernel.widths is None else kernel.widths.diagonal
    batch = draw_samples(proposal, widths, kernel.sampled_dofs, seed, start, stop)
    contributions, reasons = kernel.evaluate(batch, options)
    weights = np.exp(batch.log_weight)

    acc = EstimatorAccumulator(n_times, options.n_blocks)
    failed = np.zeros(len(batch), dtype=bool)
    for reason, mask in reasons.items():
        mask = mask & ~failed
        acc.reject(reason, int(mask.sum()), float(weights[mask].sum()))
        failed |= mask
    ok = ~failed & np.all(np.isfinite(contributions), axis=1)
    acc.reject("non_finite", int((~ok & ~failed).sum()), float(weights[~ok & ~failed].sum()))
    acc.add_batch(batch.indices[ok], contributions[ok], weights[ok])
    acc.extreme_weights += count_extreme_weights(batch.log_weight)
    logger.debug(f"Порция [{start}, {stop}) метода {kernel.method}: отбраковано {int((~ok).sum())}")
    return acc


def run_ensemble(kernel: _Kernel, n_samples: int, seed: int,
                 options: Optional[EnsembleOptions] = None) -> ResponseSeries:
    """
    Параллельная карта по порциям образцов и свертка в фиксированном порядке

    Порции не зависят от числа процессов, поэтому результат побитово воспроизводим.
    """
    options = options or EnsembleOptions()
    options.validate()
    if n_samples < 1:
        raise ValueError("Число образцов должно быть положительным")
    times = time_grid(options.t_max, options.output_stride)
    proposal = BoltzmannProposal(kernel.model, kernel.beta, options.proposal_inflation)

    started = time.perf_counter()
    chunks = [(start, min(start + options.chunk_size, n_samples))
              for start in range(0, n_samples, options.chunk_size)]
    results = Parallel(n_jobs=options.workers)(
        delayed(_evaluate_chunk)(kernel, proposal, seed, start, stop, options, len(times))
        for start, stop in chunks
    )
    acc = EstimatorAccumulator(len(times), options.n_blocks)
    for partial in results:
        acc.merge(partial)
    elapsed = time.perf_counter() - started

    values, err_real, err_imag = acc.estimate()
    escaped_fraction = acc.rejected.get("escaped", 0) / n_samples
    warnings = []
    if escaped_fraction > ESCAPED_WARNING_FRACTION:
        warnings.append(f"доля ушедших траекторий {escaped_fraction:.2%} превышает 1%")
    if acc.total_rejected:
        logger.warning(f"Метод {kernel.method}: отбраковано образцов {acc.rejected}")
    for message in warnings:
        logger.warning(message)

    pairs = 1 if isinstance(kernel, LscKernel) or not len(kernel.sampled_dofs) else 2
    cancellation = acc.phase_cancellation()
    metadata = {
        "method": kernel.method,
        "beta": kernel.beta,
        "widths": None if kernel.widths is None else kernel.widths.diagonal.tolist(),
        "n_samples": n_samples,
        "seed": seed,
        "rng": RNG_ALGORITHM,
        "options": asdict(options),
        "diagnostics": {
            "accepted": acc.accepted,
            "rejected": dict(acc.rejected),
            "rejected_weight": acc.rejected_weight,
            "escaped_fraction": escaped_fraction,
            "extreme_weights": acc.extreme_weights,
            "effective_sample_size": acc.effective_sample_size(),
            "phase_cancellation": cancellation.tolist(),
            "phase_cancellation_min": float(np.min(cancellation)),
            "trajectories": n_samples * pairs,
            "warnings": warnings,
        },
        "timing": {"ensemble_seconds": elapsed},
    }
    if isinstance(kernel, HermanKlukKernel):
        metadata["symmetrize"] = kernel.symmetrize
    if isinstance(kernel, HybridKernel):
        metadata["ab_mode"] = kernel.ab_mode
        metadata["freeze_system_difference"] = kernel.freeze_system_difference
    logger.info(f"Метод {kernel.method}: {n_samples} образцов, {n_samples * pairs} траекторий, {elapsed:.1f} с")
    return ResponseSeries(times, values, err_real, err_imag, kernel.method, metadata)


def response_lsc(model: ModelSystem, beta: float, n_samples: int, seed: int,
                 options: Optional[EnsembleOptions] = None) -> ResponseSeries:
    """R(t) = β⟨Σ_S p̄ q̄(t)/m⟩ по классическому ансамблю Больцмана"""
    return run_ensemble(LscKernel(model, beta, None), n_samples, seed, options)


def response_hk(model: ModelSystem, beta: float, widths: WidthMatrix, n_samples: int, seed: int,
                symmetrize: bool = True, options: Optional[EnsembleOptions] = None) -> ResponseSeries:
    """Полный двойной интеграл HK с разностями по всем степеням свободы"""
    _check_widths(model, widths)
    return run_ensemble(HermanKlukKernel(model, beta, widths, symmetrize), n_samples, seed, options)


def response_hybrid(model: ModelSystem, beta: float, widths: WidthMatrix, n_samples: int, seed: int,
                    symmetrize: bool = True, ab_mode: str = "average",
                    freeze_system_difference: bool = False,
                    options: Optional[EnsembleOptions] = None) -> ResponseSeries:
    """Гибрид: HK для системы, линеаризованная баня через det A_B"""
    _check_widths(model, widths)
    kernel = HybridKernel(model, beta, widths, symmetrize, ab_mode, freeze_system_difference)
    return run_ensemble(kernel, n_samples, seed, options)


def _check_widths(model: ModelSystem, widths: WidthMatrix):
    if widths.n_dof != model.n_total or widths.n_system != model.n_system:
        raise ValueError("Матрица ширин не согласована с моделью")
