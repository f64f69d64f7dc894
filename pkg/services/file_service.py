import aiofiles
import json
import os
import numpy as np
import pandas as pd
from datetime import datetime
from typing import Any, Dict, Optional, Tuple
from fastapi import UploadFile

from ir_response.common import SCHEMA_VERSION, SERIES_COLUMNS, ResponseSeries
from ir_response.dynamics import Trajectory
from ir_response.semiclassics import WidthMatrix, prefactor_matrix

FLOAT_FORMAT = "%.17g"


def _to_builtin(value: Any) -> Any:
    """Приведение типов numpy к встроенным для json.dumps"""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Тип {type(value).__name__} не сериализуется в JSON")


class FileService:
    """Сервис для работы с файлами результатов"""

    @staticmethod
    def output_dir(override: Optional[str] = None) -> str:
        return override or os.environ.get("IR_RESPONSE_OUTPUT_DIR", "data/runs")

    @staticmethod
    async def save_upload_file(file: UploadFile, file_path: str) -> Dict[str, Any]:
        """Сохранение загруженного файла конфигурации и разбор JSON"""
        os.makedirs(os.path.dirname(file_path) or ".", exist_ok=True)
        async with aiofiles.open(file_path, 'wb') as out_file:
            content = await file.read()
            await out_file.write(content)

        try:
            return json.loads(content.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise ValueError(f"Файл конфигурации не является корректным JSON: {e}")

    @staticmethod
    def load_config(file_path: str) -> Dict[str, Any]:
        """Чтение JSON-конфигурации"""
        with open(file_path, encoding="utf-8") as f:
            try:
                return json.load(f)
            except json.JSONDecodeError as e:
                raise ValueError(f"Некорректный JSON в {file_path}: {e}")

    @staticmethod
    def write_series(series: ResponseSeries, config: Dict[str, Any], diagnostics: Dict[str, Any],
                     directory: str, stem: str, timing: Optional[Dict[str, float]] = None) -> Tuple[str, str]:
        """
        Запись ряда в CSV и метаданных в JSON

        При фиксированном seed JSON совпадает побитово, кроме created_at.
        Время счета пишется отдельно в <stem>.timing.json.
        """
        os.makedirs(directory, exist_ok=True)
        csv_path = os.path.join(directory, f"{stem}.csv")
        json_path = os.path.join(directory, f"{stem}.json")
        series.to_frame().to_csv(csv_path, index=False, float_format=FLOAT_FORMAT)

        metadata = {k: v for k, v in series.metadata.items() if k != "timing"}
        sidecar = {
            "schema_version": SCHEMA_VERSION,
            "method": series.method,
            "config": config,
            "metadata": metadata,
            "diagnostics": diagnostics,
            "columns": SERIES_COLUMNS,
            "created_at": datetime.utcnow().isoformat(),
        }
        with open(json_path, "w", encoding="utf-8") as f:
            json.dump(sidecar, f, ensure_ascii=False, indent=2, sort_keys=True, default=_to_builtin)
        with open(FileService.timing_path(json_path), "w", encoding="utf-8") as f:
            json.dump(timing or {}, f, indent=2, sort_keys=True, default=_to_builtin)
        return csv_path, json_path

    @staticmethod
    def timing_path(json_path: str) -> str:
        return os.path.splitext(json_path)[0] + ".timing.json"

    @staticmethod
    def read_timing(json_path: str) -> Dict[str, float]:
        with open(FileService.timing_path(json_path), encoding="utf-8") as f:
            return json.load(f)

    @staticmethod
    def read_sidecar(json_path: str) -> Dict[str, Any]:
        with open(json_path, encoding="utf-8") as f:
            sidecar = json.load(f)
        if sidecar.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"Неподдерживаемая версия схемы: {sidecar.get('schema_version')}")
        return sidecar

    @staticmethod
    def read_series(csv_path: str, json_path: Optional[str] = None) -> ResponseSeries:
        """Восстановление ResponseSeries из CSV (и метаданных из JSON)"""
        df = pd.read_csv(csv_path, float_precision="round_trip")
        if list(df.columns) != SERIES_COLUMNS:
            raise ValueError(f"CSV должен содержать колонки {SERIES_COLUMNS}")
        method, metadata = "unknown", {}
        if json_path:
            sidecar = FileService.read_sidecar(json_path)
            method, metadata = sidecar["method"], sidecar.get("metadata", {})
        return ResponseSeries.from_frame(df, method, metadata)

    @staticmethod
    def write_table(df: pd.DataFrame, file_path: str) -> str:
        os.makedirs(os.path.dirname(file_path) or ".", exist_ok=True)
        df.to_csv(file_path, index=False, float_format=FLOAT_FORMAT)
        return file_path

    @staticmethod
    def write_trajectory(traj: Trajectory, widths: Optional[WidthMatrix], file_path: str) -> str:
        """Отладочная выгрузка одной траектории: t, p, q, S, элементы M, Re C, Im C"""
        n = traj.p.shape[-1]
        data = {"t": traj.times}
        for i in range(n):
            data[f"p{i + 1}"] = traj.p[:, 0, i]
        for i in range(n):
            data[f"q{i + 1}"] = traj.q[:, 0, i]
        data["S"] = traj.action[:, 0]
        if traj.monodromy is not None:
            for i in range(2 * n):
                for j in range(2 * n):
                    data[f"M{i + 1}{j + 1}"] = traj.monodromy[:, 0, i, j]
        if traj.prefactor_log is not None:
            c = np.exp(traj.prefactor_log[:, 0])
            data["C_real"] = c.real
            data["C_imag"] = c.imag
            data["abs_det_h"] = np.abs(np.linalg.det(prefactor_matrix(traj.monodromy[:, 0], widths)))
        return FileService.write_table(pd.DataFrame(data), file_path)
