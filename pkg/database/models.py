from sqlalchemy import create_engine, Column, Integer, String, Float, DateTime, ForeignKey, Text
from sqlalchemy.orm import declarative_base, sessionmaker, relationship
from datetime import datetime
import os

DATABASE_URL = os.environ.get("IR_RESPONSE_DATABASE_URL", "sqlite:///./ir_response.db")

Base = declarative_base()
engine = None
SessionLocal = sessionmaker(autocommit=False, autoflush=False)


class SweepRecord(Base):
    __tablename__ = "sweeps"

    id = Column(Integer, primary_key=True, index=True)
    name = Column(String, nullable=True)
    table_path = Column(String, nullable=True)
    summary = Column(Text, nullable=True)  # JSON со сводкой серии
    created_at = Column(DateTime, default=datetime.utcnow)

    # Отношения
    runs = relationship("RunRecord", back_populates="sweep")


class RunRecord(Base):
    __tablename__ = "runs"

    id = Column(Integer, primary_key=True, index=True)
    method = Column(String, index=True, nullable=False)
    status = Column(String, default="pending")  # pending, completed, failed
    n_samples = Column(Integer, nullable=True)

    # Разрешенная конфигурация и диагностика (JSON)
    config = Column(Text, nullable=False)
    diagnostics = Column(Text, nullable=True)
    error = Column(Text, nullable=True)

    # Пути к файлам результата
    csv_path = Column(String, nullable=True)
    json_path = Column(String, nullable=True)

    wall_clock = Column(Float, nullable=True)
    sweep_id = Column(Integer, ForeignKey("sweeps.id"), nullable=True)
    created_at = Column(DateTime, default=datetime.utcnow)

    # Отношения
    sweep = relationship("SweepRecord", back_populates="runs")


def configure_database(url: str = None):
    """Подключение к базе данных по URL (по умолчанию из IR_RESPONSE_DATABASE_URL)"""
    global engine
    url = url or os.environ.get("IR_RESPONSE_DATABASE_URL", DATABASE_URL)
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    engine = create_engine(url, connect_args=connect_args)
    SessionLocal.configure(bind=engine)
    return engine


def init_db():
    """Инициализация базы данных"""
    if engine is None:
        configure_database()
    Base.metadata.create_all(bind=engine)


def get_db():
    """Получение сессии БД"""
    if engine is None:
        init_db()
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()
