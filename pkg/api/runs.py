from fastapi import APIRouter, Depends, File, HTTPException, UploadFile
from fastapi.concurrency import run_in_threadpool
from sqlalchemy.orm import Session
from pydantic import ValidationError
from typing import List, Optional
import logging
import os
import traceback

from database.models import get_db
from api.schemas import RunConfig, RunResponse, SeriesResponse
from ir_response.common import NumericalError
from services.database_service import RunRecordService, serialize_run
from services.file_service import FileService
from services.run_service import RunService

router = APIRouter()
logger = logging.getLogger(__name__)


def _launch(config: RunConfig, db: Session) -> dict:
    try:
        _, _, run_id = RunService.run(config, db)
    except ValueError as e:
        raise HTTPException(status_code=422, detail=f"Ошибка конфигурации: {e}")
    except NumericalError as e:
        logger.error(f"Численная ошибка расчета {config.method}: {e}")
        logger.debug(f"Полная трассировка: {traceback.format_exc()}")
        raise HTTPException(status_code=500, detail=f"Численная ошибка расчета: {e}")
    return serialize_run(RunRecordService.get_run(db, run_id))


@router.post("/", response_model=RunResponse, status_code=201)
def create_run(config: RunConfig, db: Session = Depends(get_db)):
    """
    Запуск расчета по конфигурации

    - **method**: quantum, lsc, hk или hybrid
    - **temperature** или **beta**: температура ансамбля
    - **n_samples**, **seed**: объем выборки и зерно для траекторных методов
    """
    return _launch(config, db)


@router.post("/upload", response_model=RunResponse, status_code=201)
async def upload_run_config(file: UploadFile = File(...), db: Session = Depends(get_db)):
    """Запуск расчета по загруженному JSON-файлу конфигурации"""
    if not file.filename or not file.filename.endswith(".json"):
        raise HTTPException(status_code=400, detail="Ожидается файл конфигурации .json")
    path = os.path.join(FileService.output_dir(), "configs", os.path.basename(file.filename))
    try:
        raw = await FileService.save_upload_file(file, path)
        config = RunConfig.model_validate(raw)
    except ValidationError as e:
        raise HTTPException(status_code=422, detail=f"Ошибка конфигурации: {e}")
    except ValueError as e:
        raise HTTPException(status_code=422, detail=str(e))
    # долгий расчет - в пуле потоков
    return await run_in_threadpool(_launch, config, db)


@router.get("/", response_model=List[RunResponse])
async def list_runs(method: Optional[str] = None, skip: int = 0, limit: int = 100,
                    db: Session = Depends(get_db)):
    """Список выполненных расчетов"""
    return RunRecordService.list_runs(db, method, skip, limit)


@router.get("/{run_id}", response_model=RunResponse)
async def get_run(run_id: int, db: Session = Depends(get_db)):
    """Получение записи расчета"""
    run = RunRecordService.get_run(db, run_id)
    if not run:
        raise HTTPException(status_code=404, detail="Расчет не найден")
    return serialize_run(run)


@router.get("/{run_id}/series", response_model=SeriesResponse)
async def get_run_series(run_id: int, db: Session = Depends(get_db)):
    """Временной ряд R(t) расчета"""
    run = RunRecordService.get_run(db, run_id)
    if not run:
        raise HTTPException(status_code=404, detail="Расчет не найден")
    if run.status != "completed" or not run.csv_path:
        raise HTTPException(status_code=409, detail=f"Расчет в состоянии {run.status}, ряда нет")
    try:
        series = FileService.read_series(run.csv_path, run.json_path)
    except (OSError, ValueError) as e:
        logger.error(f"Ошибка чтения результата {run_id}: {e}")
        raise HTTPException(status_code=500, detail=f"Ошибка чтения результата: {e}")
    return {
        "run_id": run.id,
        "method": series.method,
        "t": series.times.tolist(),
        "R_real": series.real.tolist(),
        "R_imag": series.imag.tolist(),
        "stderr_real": series.stderr_real.tolist(),
        "stderr_imag": series.stderr_imag.tolist(),
    }


@router.delete("/{run_id}")
async def delete_run(run_id: int, db: Session = Depends(get_db)):
    """Удаление записи расчета"""
    if not RunRecordService.delete_run(db, run_id):
        raise HTTPException(status_code=404, detail="Расчет не найден")
    return {"message": "Расчет удален"}
