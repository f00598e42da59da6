from __future__ import annotations

import json
import logging
from typing import Any, Optional

from sqlalchemy.orm import Session

from whoeffding.orm import ExperimentRun, RunEvent

logger = logging.getLogger(__name__)


def log_event(
    db: Session,
    run: Optional[ExperimentRun],
    action: str,
    detail: Optional[dict[str, Any]] = None,
) -> None:
    row = RunEvent(
        run_id=run.id if run is not None else None,
        action=action,
        detail=json.dumps(detail or {}, ensure_ascii=False, sort_keys=True, default=str) if detail is not None else None,
    )
    db.add(row)
    try:
        db.commit()
    except Exception:
        db.rollback()
        logger.warning("audit event %s was not recorded", action)
