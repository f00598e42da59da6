from __future__ import annotations

from typing import Optional

from fastapi import APIRouter, Depends, HTTPException

from whoeffding.deps import run_repository_dep
from whoeffding.repositories.run_repository import RunRepository
from whoeffding.schemas import RunDetail, RunRead

router = APIRouter(tags=["runs"])


@router.get("/runs", response_model=list[RunRead])
def list_runs(
    model: Optional[str] = None,
    limit: int = 100,
    repo: RunRepository = Depends(run_repository_dep),
) -> list[RunRead]:
    return [RunRead.model_validate(r) for r in repo.list(model=model, limit=limit)]


@router.get("/runs/{run_id}", response_model=RunDetail)
def get_run(
    run_id: int,
    repo: RunRepository = Depends(run_repository_dep),
) -> RunDetail:
    run = repo.get(run_id)
    if run is None:
        raise HTTPException(status_code=404, detail="run not found")
    return RunDetail.model_validate(run)
