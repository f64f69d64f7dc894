from sqlalchemy.orm import Session
from typing import Any, Dict, List, Optional, Tuple
from itertools import combinations
import logging
import os
import time

import numpy as np
import pandas as pd

from api.schemas import ModelParams, ResultRecord, RunConfig, SweepConfig
from ir_response.common import SCHEMA_VERSION, NumericalError, ResponseSeries, time_grid
from ir_response.dynamics import propagate
from ir_response.estimators import EnsembleOptions, response_hk, response_hybrid, response_lsc
from ir_response.model import ModelSystem, MorseBathParams
from ir_response.quantum_ref import GridSpec, default_grid, response_quantum, solve_eigenproblem
from ir_response.semiclassics import WidthMatrix
from services.database_service import RunRecordService, SweepService
from services.file_service import FileService

logger = logging.getLogger(__name__)


class RunService:
    """Сервис для выполнения расчетов отклика"""

    @staticmethod
    def build_model(params: ModelParams) -> ModelSystem:
        """Построение модели по параметрам конфигурации"""
        if params.potential == "harmonic":
            n = len(params.frequencies)
            couplings = None
            if params.coupling:
                # Билинейная связь первой координаты со всеми остальными
                couplings = np.zeros((n, n))
                couplings[0, 1:] = couplings[1:, 0] = -params.coupling
            return ModelSystem.harmonic(params.frequencies, params.n_system, params.masses, couplings)
        morse = MorseBathParams(D=params.D, alpha=params.alpha, chi=params.chi, coupling=params.coupling)
        return ModelSystem.morse_bath(morse, params.n_bath, params.masses)

    @staticmethod
    def build_widths(config: RunConfig, model: ModelSystem) -> WidthMatrix:
        if config.widths is not None:
            return WidthMatrix(config.widths, model.n_system)
        return WidthMatrix.matched(model)

    @staticmethod
    def ensemble_options(config: RunConfig) -> EnsembleOptions:
        return EnsembleOptions(
            t_max=config.t_max,
            dt=config.dt,
            output_stride=config.output_stride,
            n_blocks=config.n_blocks,
            chunk_size=config.chunk_size,
            workers=config.workers,
            escape_radius=config.escape_radius,
            proposal_inflation=config.proposal_inflation,
        )

    @staticmethod
    def execute(config: RunConfig) -> ResponseSeries:
        """
        Выполнение расчета выбранным методом

        Включает:
        - построение модели и матрицы ширин
        - квантовый эталон или траекторный ансамбль
        """
        model = RunService.build_model(config.model)
        beta = config.beta

        if config.method == "quantum":
            q = config.quantum
            if q.domains is not None:
                if len(q.domains) != model.n_total:
                    raise ValueError("quantum.domains: по одному отрезку на степень свободы")
                grid = GridSpec(tuple([q.points] * model.n_total), tuple(q.domains))
            else:
                grid = default_grid(model, beta, q.population_tol, q.basis_margin, q.points)
            spectrum = solve_eigenproblem(
                model, grid, n_states=q.n_states, beta=beta,
                population_tol=q.population_tol, basis_margin=q.basis_margin,
                check_convergence=q.check_convergence,
            )
            return response_quantum(spectrum, beta, time_grid(config.t_max, config.output_stride),
                                    thermal=q.thermal, population_tol=q.population_tol)

        options = RunService.ensemble_options(config)
        if config.method == "lsc":
            return response_lsc(model, beta, config.n_samples, config.seed, options)

        widths = RunService.build_widths(config, model)
        if config.method == "hk":
            return response_hk(model, beta, widths, config.n_samples, config.seed,
                               symmetrize=config.symmetrize, options=options)
        return response_hybrid(model, beta, widths, config.n_samples, config.seed,
                               symmetrize=config.symmetrize, ab_mode=config.ab_mode,
                               freeze_system_difference=config.freeze_system_difference,
                               options=options)

    @staticmethod
    def diagnostics(series: ResponseSeries) -> Dict[str, Any]:
        """Сводная диагностика для записи в БД и JSON"""
        diag = dict(series.metadata.get("diagnostics", {}))
        diag.pop("phase_cancellation", None)
        diag["max_stderr_real"] = series.max_stderr()
        diag["max_abs_imag"] = float(np.max(np.abs(series.imag))) if len(series.times) else 0.0
        diag["R0_real"] = float(series.real[0])
        return diag

    @staticmethod
    def run(config: RunConfig, db: Optional[Session] = None, out_dir: Optional[str] = None,
            sweep_id: Optional[int] = None) -> Tuple[ResultRecord, ResponseSeries, Optional[int]]:
        """
        Расчет, запись CSV + JSON и (при наличии db) регистрация в базе данных

        Возвращает:
        - (ResultRecord, ResponseSeries, id записи в БД или None)
        """
        resolved = config.model_dump(mode="json")
        directory = FileService.output_dir(out_dir or config.output)
        stem = config.name or f"{config.method}_n{config.n_samples}_s{config.seed}"
        if config.method == "quantum":
            stem = config.name or "quantum"

        run_id = None
        if db is not None:
            run_id = RunRecordService.create_run(db, config.method, resolved, config.n_samples, sweep_id).id

        started = time.perf_counter()
        try:
            series = RunService.execute(config)
        except (NumericalError, ValueError) as e:
            if db is not None:
                RunRecordService.fail_run(db, run_id, str(e))
            raise
        wall_clock = time.perf_counter() - started

        diagnostics = RunService.diagnostics(series)
        timing = dict(series.metadata.get("timing", {}))
        timing["wall_clock"] = wall_clock
        csv_path, json_path = FileService.write_series(series, resolved, diagnostics, directory, stem, timing)
        logger.info(f"Результат {config.method} записан в {csv_path} ({wall_clock:.1f} с)")

        if db is not None:
            RunRecordService.complete_run(db, run_id, csv_path, json_path, diagnostics, wall_clock)

        sidecar = FileService.read_sidecar(json_path)
        record = ResultRecord(
            schema_version=SCHEMA_VERSION,
            config=resolved,
            method=config.method,
            csv_path=csv_path,
            json_path=json_path,
            diagnostics=diagnostics,
            wall_clock=wall_clock,
            created_at=sidecar["created_at"],
        )
        return record, series, run_id

    @staticmethod
    def sweep(config: SweepConfig, db: Optional[Session] = None,
              out_dir: Optional[str] = None) -> Dict[str, Any]:
        """
        Все сочетания метод × объем выборки и таблица сравнения пар

        Ошибка отдельной ячейки записывается, серия продолжается.
        """
        directory = os.path.join(FileService.output_dir(out_dir or config.base.output), config.name)
        sweep_id = SweepService.create_sweep(db, config.name).id if db is not None else None

        cells: List[Dict[str, Any]] = []
        seen = set()
        for method in config.methods:
            for n_samples in config.n_samples:
                # Квантовый эталон не зависит от объема выборки
                key = (method, None if method == "quantum" else n_samples)
                if key in seen:
                    continue
                seen.add(key)
                label = method if method == "quantum" else f"{method}@{n_samples}"
                cell_config = config.base.model_copy(update={
                    "method": method,
                    "n_samples": n_samples,
                    "name": label.replace("@", "_n"),
                    "output": directory,
                })
                cell = {"label": label, "method": method, "n_samples": n_samples}
                try:
                    record, series, run_id = RunService.run(cell_config, db, directory, sweep_id)
                    cell.update({"status": "completed", "series": series, "record": record, "run_id": run_id})
                except (NumericalError, ValueError) as e:
                    logger.error(f"Ячейка {label} завершилась ошибкой: {e}")
                    cell.update({"status": "failed", "error": str(e)})
                cells.append(cell)

        table = RunService.comparison_table(cells)
        table_path = FileService.write_table(table, os.path.join(directory, "comparison.csv"))
        summary = {
            "cells": [{k: v for k, v in c.items() if k not in ("series", "record")} for c in cells],
            "table_path": table_path,
        }
        if db is not None:
            SweepService.complete_sweep(db, sweep_id, table_path, summary)
        return {"sweep_id": sweep_id, "table": table, "table_path": table_path, "cells": cells}

    @staticmethod
    def comparison_table(cells: List[Dict[str, Any]]) -> pd.DataFrame:
        """
        Таблица сравнения пар ячеек

        Стоимость при равной ошибке: (n_a·se_a²)/(n_b·se_b²), se - максимум ошибки по t.
        """
        rows = []
        done = [c for c in cells if c.get("status") == "completed"]
        for a, b in combinations(done, 2):
            sa, sb = a["series"], b["series"]
            if len(sa.times) != len(sb.times) or not np.allclose(sa.times, sb.times):
                logger.warning(f"Сетки времени {a['label']} и {b['label']} не совпадают, пара пропущена")
                continue
            diff = np.abs(sa.real - sb.real)
            combined = np.sqrt(sa.stderr_real ** 2 + sb.stderr_real ** 2)
            with np.errstate(divide="ignore", invalid="ignore"):
                in_sigma = np.where(combined > 0, diff / np.where(combined > 0, combined, 1.0), np.inf)
            in_sigma = np.where(diff == 0, 0.0, in_sigma)
            se_a, se_b = sa.max_stderr(), sb.max_stderr()
            traj_a = sa.metadata.get("diagnostics", {}).get("trajectories", 0)
            traj_b = sb.metadata.get("diagnostics", {}).get("trajectories", 0)
            cost_ratio = np.nan
            if a["method"] != "quantum" and b["method"] != "quantum" and se_b > 0:
                cost_ratio = (a["n_samples"] * se_a ** 2) / (b["n_samples"] * se_b ** 2)
            rows.append({
                "cell_a": a["label"],
                "cell_b": b["label"],
                "max_abs_diff": float(diff.max()),
                "max_diff_sigma": float(in_sigma.max()),
                "max_stderr_a": se_a,
                "max_stderr_b": se_b,
                "trajectories_a": traj_a,
                "trajectories_b": traj_b,
                "wall_clock_a": a["record"].wall_clock,
                "wall_clock_b": b["record"].wall_clock,
                "equal_error_cost_ratio": cost_ratio,
            })
        columns = ["cell_a", "cell_b", "max_abs_diff", "max_diff_sigma", "max_stderr_a", "max_stderr_b",
                   "trajectories_a", "trajectories_b", "wall_clock_a", "wall_clock_b",
                   "equal_error_cost_ratio"]
        return pd.DataFrame(rows, columns=columns)

    @staticmethod
    def dump_trajectory(config: RunConfig, z0: List[float], out_dir: Optional[str] = None) -> str:
        """Отладочная выгрузка одной траектории из z0 = (p, q)"""
        model = RunService.build_model(config.model)
        if len(z0) != 2 * model.n_total:
            raise ValueError(f"Нужно {2 * model.n_total} чисел: сначала импульсы, затем координаты")
        widths = RunService.build_widths(config, model)
        traj = propagate(model, np.asarray(z0, dtype=float), config.t_max, config.dt,
                         config.output_stride, widths=widths, escape_radius=config.escape_radius,
                         strict=True)
        directory = FileService.output_dir(out_dir or config.output)
        return FileService.write_trajectory(traj, widths, os.path.join(directory, "trajectory.csv"))
