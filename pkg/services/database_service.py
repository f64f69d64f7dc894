from sqlalchemy.orm import Session
from typing import List, Optional, Dict, Any
import json
import logging

from database.models import RunRecord, SweepRecord

logger = logging.getLogger(__name__)


def _load_json(text: Optional[str], field: str, record_id: int) -> Optional[Any]:
    if not text:
        return None
    try:
        return json.loads(text)
    except (json.JSONDecodeError, TypeError) as e:
        logger.error(f"Ошибка разбора поля {field} записи {record_id}: {e}")
        return None


def serialize_run(run: RunRecord) -> Dict[str, Any]:
    """Сериализация записи расчета с преобразованием JSON строк в словари"""
    return {
        "id": run.id,
        "method": run.method,
        "status": run.status,
        "n_samples": run.n_samples,
        "config": _load_json(run.config, "config", run.id),
        "diagnostics": _load_json(run.diagnostics, "diagnostics", run.id),
        "csv_path": run.csv_path,
        "json_path": run.json_path,
        "wall_clock": run.wall_clock,
        "error": run.error,
        "sweep_id": run.sweep_id,
        "created_at": run.created_at,
    }


class RunRecordService:
    """Сервис для управления записями расчетов"""

    @staticmethod
    def create_run(db: Session, method: str, config: Dict[str, Any],
                   n_samples: Optional[int] = None, sweep_id: Optional[int] = None) -> RunRecord:
        """Создание записи до начала расчета"""
        db_run = RunRecord(
            method=method,
            status="pending",
            n_samples=n_samples,
            config=json.dumps(config, ensure_ascii=False),
            sweep_id=sweep_id,
        )
        db.add(db_run)
        db.commit()
        db.refresh(db_run)
        return db_run

    @staticmethod
    def complete_run(db: Session, run_id: int, csv_path: str, json_path: str,
                     diagnostics: Dict[str, Any], wall_clock: float) -> Optional[RunRecord]:
        db_run = db.query(RunRecord).filter(RunRecord.id == run_id).first()
        if not db_run:
            return None
        db_run.status = "completed"
        db_run.csv_path = csv_path
        db_run.json_path = json_path
        db_run.diagnostics = json.dumps(diagnostics, ensure_ascii=False)
        db_run.wall_clock = wall_clock
        db.commit()
        db.refresh(db_run)
        return db_run

    @staticmethod
    def fail_run(db: Session, run_id: int, error: str) -> Optional[RunRecord]:
        db_run = db.query(RunRecord).filter(RunRecord.id == run_id).first()
        if not db_run:
            return None
        db_run.status = "failed"
        db_run.error = error
        db.commit()
        db.refresh(db_run)
        return db_run

    @staticmethod
    def get_run(db: Session, run_id: int) -> Optional[RunRecord]:
        """Получение записи по ID"""
        return db.query(RunRecord).filter(RunRecord.id == run_id).first()

    @staticmethod
    def list_runs(db: Session, method: Optional[str] = None,
                  skip: int = 0, limit: int = 100) -> List[Dict[str, Any]]:
        """Список расчетов, новые первыми"""
        query = db.query(RunRecord)
        if method:
            query = query.filter(RunRecord.method == method)
        runs = query.order_by(RunRecord.id.desc()).offset(skip).limit(limit).all()
        return [serialize_run(run) for run in runs]

    @staticmethod
    def delete_run(db: Session, run_id: int) -> bool:
        """Удаление записи (файлы результата не трогаются)"""
        db_run = db.query(RunRecord).filter(RunRecord.id == run_id).first()
        if not db_run:
            return False
        db.delete(db_run)
        db.commit()
        return True


class SweepService:
    """Сервис для записей серий расчетов"""

    @staticmethod
    def create_sweep(db: Session, name: str) -> SweepRecord:
        db_sweep = SweepRecord(name=name)
        db.add(db_sweep)
        db.commit()
        db.refresh(db_sweep)
        return db_sweep

    @staticmethod
    def complete_sweep(db: Session, sweep_id: int, table_path: str,
                       summary: Dict[str, Any]) -> Optional[SweepRecord]:
        db_sweep = db.query(SweepRecord).filter(SweepRecord.id == sweep_id).first()
        if not db_sweep:
            return None
        db_sweep.table_path = table_path
        db_sweep.summary = json.dumps(summary, ensure_ascii=False)
        db.commit()
        db.refresh(db_sweep)
        return db_sweep
