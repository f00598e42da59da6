from __future__ import annotations

import pytest
from sqlalchemy import create_engine
from sqlalchemy.orm import Session, sessionmaker
from sqlalchemy.pool import StaticPool

from whoeffding import config as experiment_config
from whoeffding.db import Base
from whoeffding.orm import ExperimentRun
from whoeffding.services.markov_models import Ar1BinaryModel, FlowModel, TorusWalkModel


@pytest.fixture
def db_session() -> Session:
    engine = create_engine(
        "sqlite+pysqlite:///:memory:",
        connect_args={"check_same_thread": False},
        poolclass=StaticPool,
    )
    TestingSessionLocal = sessionmaker(bind=engine, autoflush=False, autocommit=False)

    Base.metadata.create_all(bind=engine)
    db = TestingSessionLocal()
    try:
        yield db
    finally:
        db.close()
        Base.metadata.drop_all(bind=engine)
        engine.dispose()


@pytest.fixture(autouse=True)
def _clear_config_cache() -> None:
    experiment_config._cached_configs.clear()


@pytest.fixture
def ar1() -> Ar1BinaryModel:
    return Ar1BinaryModel()


@pytest.fixture
def torus() -> TorusWalkModel:
    return TorusWalkModel()


@pytest.fixture
def flow() -> FlowModel:
    return FlowModel(1.0)


@pytest.fixture
def stored_run(db_session: Session) -> ExperimentRun:
    run = ExperimentRun(config_hash="abc123", model="ar1", seed=7, rows=4, passed=True, complete=True, csv_path="out.csv", json_path="out.json")
    db_session.add(run)
    db_session.commit()
    db_session.refresh(run)
    return run
