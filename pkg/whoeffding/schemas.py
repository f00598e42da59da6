from __future__ import annotations

from datetime import datetime
from typing import Dict, List, Optional

from pydantic import BaseModel, field_validator

from whoeffding.services.concentration import BoundInput


class BoundRequest(BoundInput):
    one_sided: bool = False


class GammaRequest(BaseModel):
    model: str
    alpha: float = 1.0
    subordinator: Optional[str] = None
    horizon: Optional[float] = None
    x_grid: Optional[List[float]] = None

    @field_validator("x_grid")
    @classmethod
    def _grid_not_empty(cls, v: Optional[List[float]]) -> Optional[List[float]]:
        if v is not None and not v:
            raise ValueError("x_grid must not be empty")
        return v


class GammaRead(BaseModel):
    model: str
    value: float
    argmax: float
    horizon: float
    tail: float
    strategy: str
    certified: bool
    divergent: bool
    lipschitz_correction: float
    closed_form: Optional[float] = None
    rate_propagation: Optional[float] = None
    series: List[float]
    per_state: Dict[str, float]


class RunEventRead(BaseModel):
    id: int
    action: str
    detail: Optional[str]
    created_at: Optional[datetime] = None

    model_config = {"from_attributes": True}


class RunRead(BaseModel):
    id: int
    config_hash: str
    model: str
    seed: int
    rows: int
    passed: bool
    complete: bool
    csv_path: Optional[str]
    json_path: Optional[str]
    created_at: Optional[datetime] = None

    model_config = {"from_attributes": True}


class RunDetail(RunRead):
    events: List[RunEventRead] = []

