from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from contextlib import asynccontextmanager
import logging
import uvicorn

from api import runs
from database.models import init_db

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    # Startup
    init_db()
    logger.info("База данных инициализирована")
    yield
    # Shutdown
    logger.info("Сервер остановлен")


app = FastAPI(title="IR Linear Response", version="1.0.0", lifespan=lifespan)

# CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Подключение роутеров API
app.include_router(runs.router, prefix="/api/runs", tags=["Runs"])


@app.get("/")
async def read_index():
    return {"service": "ir-response", "endpoints": "/api/runs", "docs": "/docs"}


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format="[%(module)-12s] %(message)s")
    uvicorn.run("app:app", host="0.0.0.0", port=8000, reload=True)
