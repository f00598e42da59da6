from __future__ import annotations

import logging

from whoeffding.schemas import BoundRequest, GammaRead, GammaRequest
from whoeffding.services.concentration import BoundInput, BoundReport, gamma_bound, hoeffding_bound
from whoeffding.services.markov_core import ModelSpec
from whoeffding.services.markov_models import build_model
from whoeffding.services.subordination import parse_subordinator, subordinate_model

logger = logging.getLogger(__name__)


class BoundService:
    """Entry points shared by the HTTP routers."""

    def bound(self, payload: BoundRequest) -> BoundReport:
        inp = BoundInput.model_validate(payload.model_dump(exclude={"one_sided"}))
        return hoeffding_bound(inp, one_sided=payload.one_sided)

    def model(self, name: str, alpha: float = 1.0, subordinator: str | None = None) -> ModelSpec:
        model = build_model(name, alpha)
        if subordinator:
            model = subordinate_model(model, parse_subordinator(subordinator))
        return model

    def gamma(self, payload: GammaRequest) -> GammaRead:
        model = self.model(payload.model, payload.alpha, payload.subordinator)
        report = gamma_bound(model, x_grid=payload.x_grid, horizon=payload.horizon)
        logger.debug("gamma for %s: %s", model.model_id, report.value)
        return GammaRead.model_validate(report.to_json())
