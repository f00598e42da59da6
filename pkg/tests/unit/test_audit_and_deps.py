from __future__ import annotations

import json

from sqlalchemy.orm import Session

from whoeffding.audit import log_event
from whoeffding.deps import bound_service_dep, run_repository_dep, session_dep
from whoeffding.orm import ExperimentRun, RunEvent
from whoeffding.repositories.run_repository import RunRepository
from whoeffding.services.bound_service import BoundService


def test_log_event_persists_run_event(db_session: Session, stored_run: ExperimentRun) -> None:
    log_event(db_session, stored_run, "certify", {"status": "certified", "gamma": 1.0625})

    row = db_session.query(RunEvent).filter(RunEvent.action == "certify").one()
    assert row.run_id == stored_run.id
    assert row.detail == '{"gamma": 1.0625, "status": "certified"}'
    assert json.loads(row.detail)["status"] == "certified"
    db_session.refresh(stored_run)
    assert [e.action for e in stored_run.events] == ["certify"]


def test_log_event_without_run_or_detail(db_session: Session) -> None:
    log_event(db_session, None, "startup")

    row = db_session.query(RunEvent).one()
    assert row.run_id is None
    assert row.detail is None


def test_session_dep_yields_and_closes(monkeypatch):
    class DummySession:
        def __init__(self):
            self.closed = False

        def close(self):
            self.closed = True

    dummy = DummySession()
    monkeypatch.setattr("whoeffding.deps.get_session", lambda: dummy)

    gen = session_dep()
    yielded = next(gen)
    assert yielded is dummy
    try:
        next(gen)
        assert False, "generator should stop"
    except StopIteration:
        pass

    assert dummy.closed is True


def test_dependency_factories(db_session: Session) -> None:
    assert isinstance(run_repository_dep(db_session), RunRepository)
    assert isinstance(bound_service_dep(), BoundService)
