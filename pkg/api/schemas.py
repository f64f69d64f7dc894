from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import Optional, List, Dict, Any, Literal, Tuple
from datetime import datetime
import math


Method = Literal["quantum", "lsc", "hk", "hybrid"]


# ============== Model Schemas ==============
class ModelParams(BaseModel):
    """Параметры модельного гамильтониана"""
    model_config = ConfigDict(extra="forbid")

    potential: Literal["morse_bath", "harmonic"] = "morse_bath"
    D: float = Field(100.0, gt=0)
    alpha: float = Field(0.2 * math.sqrt(2.0), gt=0)
    chi: float = Field(0.9, gt=0)
    coupling: float = 0.0
    n_bath: int = Field(1, ge=0)
    # Только для гармонической модели: частоты по всем степеням свободы
    frequencies: Optional[List[float]] = None
    n_system: int = Field(1, ge=1)
    masses: Optional[List[float]] = None

    @model_validator(mode="after")
    def check_dimensions(self):
        if self.potential == "harmonic":
            if not self.frequencies:
                raise ValueError("Для гармонической модели нужны частоты frequencies")
            if any(w <= 0 for w in self.frequencies):
                raise ValueError("Частоты должны быть положительными")
            if self.n_system > len(self.frequencies):
                raise ValueError("n_system больше числа степеней свободы")
        elif self.n_system != 1:
            raise ValueError("Модель Морзе с баней имеет одну системную степень свободы")
        if self.masses is not None:
            if len(self.masses) != self.n_total or any(m <= 0 for m in self.masses):
                raise ValueError("masses: по одной положительной массе на степень свободы")
        return self

    @property
    def n_total(self) -> int:
        if self.potential == "harmonic":
            return len(self.frequencies or [])
        return 1 + self.n_bath


class QuantumGridParams(BaseModel):
    """Параметры сеточного квантового эталона"""
    model_config = ConfigDict(extra="forbid")

    points: int = Field(256, ge=8)
    # По умолчанию: [-3.5, 16] для Морзе и [-10, 10] для бани
    domains: Optional[List[Tuple[float, float]]] = None
    n_states: Optional[int] = Field(None, ge=2)
    population_tol: float = Field(1e-10, gt=0, lt=1)
    basis_margin: float = Field(40.0, ge=0)
    thermal: Literal["exact", "high_temperature"] = "exact"
    check_convergence: bool = True


# ============== Run Schemas ==============
class RunConfig(BaseModel):
    """Полная конфигурация одного расчета; эхо этой модели пишется в каждый результат"""
    model_config = ConfigDict(extra="forbid")

    method: Method
    model: ModelParams = Field(default_factory=ModelParams)
    temperature: Optional[float] = Field(None, gt=0)
    beta: Optional[float] = Field(None, gt=0)
    widths: Optional[List[float]] = None
    t_max: float = Field(100.0, gt=0)
    dt: float = Field(1e-3, gt=0)
    output_stride: float = Field(0.1, gt=0)
    n_samples: int = Field(1_000_000, ge=1)
    seed: int = Field(0, ge=0)
    n_blocks: int = Field(100, ge=2)
    chunk_size: int = Field(1024, ge=1)
    workers: int = 1
    symmetrize: bool = True
    ab_mode: Literal["average", "plus", "minus"] = "average"
    freeze_system_difference: bool = False
    escape_radius: float = Field(100.0, gt=0)
    proposal_inflation: float = Field(1.0, gt=0)
    quantum: QuantumGridParams = Field(default_factory=QuantumGridParams)
    output: Optional[str] = None
    name: Optional[str] = None

    @model_validator(mode="after")
    def resolve_temperature(self):
        if self.temperature is None and self.beta is None:
            raise ValueError("Нужно задать temperature или beta")
        if self.temperature is not None and self.beta is not None:
            if abs(self.beta * self.temperature - 1.0) > 1e-12:
                raise ValueError("temperature и beta заданы одновременно и противоречат друг другу")
        elif self.beta is None:
            self.beta = 1.0 / self.temperature
        else:
            self.temperature = 1.0 / self.beta
        if self.widths is not None:
            if len(self.widths) != self.model.n_total or any(g <= 0 for g in self.widths):
                raise ValueError("widths: по одной положительной ширине на степень свободы")
        return self


class SweepConfig(BaseModel):
    """Серия расчетов: все сочетания методов и объемов выборки"""
    model_config = ConfigDict(extra="forbid")

    base: RunConfig
    methods: List[Method] = Field(..., min_length=1)
    n_samples: List[int] = Field(..., min_length=1)
    name: str = "sweep"

    @model_validator(mode="after")
    def check_samples(self):
        if any(n < 1 for n in self.n_samples):
            raise ValueError("n_samples должны быть положительными")
        return self


# ============== Result Schemas ==============
class ResultRecord(BaseModel):
    """Сохраненный результат расчета"""
    schema_version: int
    config: Dict[str, Any]
    method: str
    csv_path: str
    json_path: str
    diagnostics: Dict[str, Any]
    wall_clock: float
    created_at: str


class RunResponse(BaseModel):
    id: int
    method: str
    status: str
    n_samples: Optional[int] = None
    config: Optional[Dict[str, Any]] = None
    diagnostics: Optional[Dict[str, Any]] = None
    csv_path: Optional[str] = None
    json_path: Optional[str] = None
    wall_clock: Optional[float] = None
    error: Optional[str] = None
    sweep_id: Optional[int] = None
    created_at: datetime

    class Config:
        from_attributes = True


class SeriesResponse(BaseModel):
    run_id: int
    method: str
    t: List[float]
    R_real: List[float]
    R_imag: List[float]
    stderr_real: List[float]
    stderr_imag: List[float]
