from __future__ import annotations

from fastapi import APIRouter, Depends

from whoeffding.deps import bound_service_dep
from whoeffding.schemas import BoundRequest, GammaRead, GammaRequest
from whoeffding.services.bound_service import BoundService
from whoeffding.services.concentration import BoundReport

router = APIRouter(tags=["bounds"])


@router.post("/bound", response_model=BoundReport)
def compute_bound(
    payload: BoundRequest,
    service: BoundService = Depends(bound_service_dep),
) -> BoundReport:
    return service.bound(payload)


@router.post("/gamma", response_model=GammaRead)
def compute_gamma(
    payload: GammaRequest,
    service: BoundService = Depends(bound_service_dep),
) -> GammaRead:
    return service.gamma(payload)
