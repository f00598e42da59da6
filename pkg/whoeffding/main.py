from __future__ import annotations

import logging
import os
import sys
from contextlib import asynccontextmanager
from pathlib import Path
from typing import AsyncGenerator

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

if __name__ == "__main__" and __package__ is None:
    sys.path.append(str(Path(__file__).resolve().parents[1]))

from whoeffding import __version__
from whoeffding.db import init_db
from whoeffding.errors import WhoeffdingError
from whoeffding.routers.bounds import router as bounds_router
from whoeffding.routers.health import router as health_router
from whoeffding.routers.runs import router as runs_router
from whoeffding.utils import get_log_level


@asynccontextmanager
async def lifespan(app: FastAPI) -> AsyncGenerator[None, None]:
    logging.basicConfig(level=get_log_level())
    init_db()
    yield


app = FastAPI(title="whoeffding", version=__version__, lifespan=lifespan)


@app.exception_handler(WhoeffdingError)
async def whoeffding_error_handler(request: Request, exc: WhoeffdingError) -> JSONResponse:
    return JSONResponse(status_code=exc.status_code, content={"detail": exc.detail})


app.include_router(health_router)
app.include_router(bounds_router)
app.include_router(runs_router)


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(
        "whoeffding.main:app",
        host=os.getenv("HOST", "127.0.0.1"),
        port=int(os.getenv("PORT", "10000")),
        reload=os.getenv("RELOAD", "0") == "1",
    )
