from __future__ import annotations

from collections.abc import Generator

from fastapi import Depends
from sqlalchemy.orm import Session

from whoeffding.db import get_session
from whoeffding.repositories.run_repository import RunRepository
from whoeffding.services.bound_service import BoundService


def session_dep() -> Generator[Session, None, None]:
    db = get_session()
    try:
        yield db
    finally:
        db.close()


def run_repository_dep(db: Session = Depends(session_dep)) -> RunRepository:
    return RunRepository(db)


def bound_service_dep() -> BoundService:
    return BoundService()
