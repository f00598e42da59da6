from __future__ import annotations

from typing import Optional

from sqlalchemy import select
from sqlalchemy.orm import Session

from whoeffding.orm import ExperimentRun


class RunRepository:
    def __init__(self, db: Session):
        self._db = db

    def add(self, run: ExperimentRun) -> None:
        self._db.add(run)

    def get(self, run_id: int) -> Optional[ExperimentRun]:
        return self._db.get(ExperimentRun, int(run_id))

    def list(self, model: Optional[str] = None, limit: int = 100) -> list[ExperimentRun]:
        stmt = select(ExperimentRun)
        if model:
            stmt = stmt.where(ExperimentRun.model == model.strip())
        return list(self._db.scalars(stmt.order_by(ExperimentRun.id.desc()).limit(limit)))

    def latest_for_config(self, config_hash: str) -> Optional[ExperimentRun]:
        stmt = (
            select(ExperimentRun)
            .where(ExperimentRun.config_hash == config_hash)
            .order_by(ExperimentRun.id.desc())
            .limit(1)
        )
        return self._db.scalar(stmt)
