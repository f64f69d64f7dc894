"""
Общие определения для расчета линейного отклика ИК-спектроскопии

Безразмерные единицы: hbar = 1, k_B = 1.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

HBAR = 1.0

SCHEMA_VERSION = 1
SERIES_COLUMNS = ["t", "R_real", "R_imag", "stderr_real", "stderr_imag"]


class NumericalError(RuntimeError):
    """Численная ошибка расчета (код выхода 3)"""


class BranchError(NumericalError):
    """Скачок фазы префактора HK между соседними шагами интегратора"""


class ConvergenceError(NumericalError):
    """Нарушение критериев сходимости сетки или усечения базиса"""


@dataclass
class ResponseSeries:
    """
    Временной ряд функции отклика R(t)

    values - комплексная оценка (Re - R(t), Im - диагностика),
    stderr_real / stderr_imag - статистические ошибки по частям.
    """
    times: np.ndarray
    values: np.ndarray
    stderr_real: np.ndarray
    stderr_imag: np.ndarray
    method: str
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        self.stderr_real = np.asarray(self.stderr_real, dtype=float)
        self.stderr_imag = np.asarray(self.stderr_imag, dtype=float)
        n = len(self.times)
        if not (len(self.values) == len(self.stderr_real) == len(self.stderr_imag) == n):
            raise ValueError("Длины массивов ResponseSeries не совпадают")

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    @property
    def imag(self) -> np.ndarray:
        return self.values.imag

    def to_frame(self) -> pd.DataFrame:
        """Таблица с колонками в фиксированном порядке CSV-схемы"""
        return pd.DataFrame({
            "t": self.times,
            "R_real": self.values.real,
            "R_imag": self.values.imag,
            "stderr_real": self.stderr_real,
            "stderr_imag": self.stderr_imag,
        }, columns=SERIES_COLUMNS)

    @classmethod
    def from_frame(cls, df: pd.DataFrame, method: str,
                   metadata: Optional[Dict[str, Any]] = None) -> "ResponseSeries":
        missing = [c for c in SERIES_COLUMNS if c not in df.columns]
        if missing:
            raise ValueError(f"В таблице отсутствуют колонки: {missing}")
        return cls(
            times=df["t"].to_numpy(dtype=float),
            values=df["R_real"].to_numpy(dtype=float) + 1j * df["R_imag"].to_numpy(dtype=float),
            stderr_real=df["stderr_real"].to_numpy(dtype=float),
            stderr_imag=df["stderr_imag"].to_numpy(dtype=float),
            method=method,
            metadata=dict(metadata or {}),
        )

    def max_stderr(self) -> float:
        return float(np.max(self.stderr_real)) if len(self.stderr_real) else 0.0


def time_grid(t_max: float, stride: float) -> np.ndarray:
    """
    Выходная сетка времени [0, t_max] с шагом stride

    t_max должно быть кратно stride.
    """
    if stride <= 0:
        raise ValueError("Шаг вывода должен быть положительным")
    n_out = int(round(t_max / stride))
    if abs(n_out * stride - t_max) > 1e-9 * max(t_max, 1.0):
        raise ValueError(f"t_max={t_max} не кратно шагу вывода {stride}")
    return np.arange(n_out + 1) * stride


def signal_envelope(values: np.ndarray, times: np.ndarray, window: float) -> np.ndarray:
    """
    Огибающая сигнала: скользящий максимум |R| по окну заданной длины

    Используется для качественных проверок (рекуррентность, затухание).
    """
    values = np.abs(np.asarray(values))
    if len(times) < 2:
        return values
    dt = times[1] - times[0]
    half = max(1, int(round(0.5 * window / dt)))
    padded = np.pad(values, half, mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, 2 * half + 1)
    return windows.max(axis=1)
