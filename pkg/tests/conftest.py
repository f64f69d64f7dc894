import numpy as np
import pytest

from ir_response.model import ModelSystem, MorseBathParams

TEMPERATURE = 7.0
BETA = 1.0 / TEMPERATURE


@pytest.fixture
def beta():
    return BETA


@pytest.fixture
def morse_params():
    return MorseBathParams()


@pytest.fixture
def morse_1d(morse_params):
    return ModelSystem.morse_bath(morse_params, n_bath=0)


@pytest.fixture
def coupled_2d():
    return ModelSystem.morse_bath(MorseBathParams(coupling=0.1), n_bath=1)


@pytest.fixture
def uncoupled_2d():
    return ModelSystem.morse_bath(MorseBathParams(coupling=0.0), n_bath=1)


@pytest.fixture
def oscillator():
    """Гармонический осциллятор ω = 4 единичной массы"""
    return ModelSystem.harmonic([4.0])


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


@pytest.fixture
def database(tmp_path, monkeypatch):
    """Временная SQLite база и каталог результатов"""
    from database import models

    url = f"sqlite:///{tmp_path / 'test.db'}"
    monkeypatch.setenv("IR_RESPONSE_DATABASE_URL", url)
    monkeypatch.setenv("IR_RESPONSE_OUTPUT_DIR", str(tmp_path / "runs"))
    models.configure_database(url)
    models.init_db()
    db = models.SessionLocal()
    try:
        yield db
    finally:
        db.close()


@pytest.fixture
def client(database):
    from fastapi.testclient import TestClient
    from app import app

    with TestClient(app) as test_client:
        yield test_client


def harmonic_config(method: str, **overrides) -> dict:
    """Короткая конфигурация гармонического осциллятора для быстрых проверок"""
    config = {
        "method": method,
        "model": {"potential": "harmonic", "frequencies": [4.0]},
        "temperature": TEMPERATURE,
        "t_max": 2.0,
        "dt": 0.01,
        "output_stride": 0.1,
        "n_samples": 400,
        "chunk_size": 200,
        "n_blocks": 20,
        "seed": 1,
    }
    config.update(overrides)
    return config
