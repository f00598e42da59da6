from __future__ import annotations

import os

from sqlalchemy import create_engine
from sqlalchemy.orm import DeclarativeBase, Session, sessionmaker

DATABASE_URL = os.getenv("WHOEFFDING_DATABASE_URL", "sqlite+pysqlite:///./whoeffding_runs.db")

_connect_args: dict = {}
if DATABASE_URL.startswith("sqlite"):
    _connect_args = {"check_same_thread": False}

engine = create_engine(DATABASE_URL, connect_args=_connect_args, pool_pre_ping=True)

SessionLocal = sessionmaker(bind=engine, autoflush=False, autocommit=False)


class Base(DeclarativeBase):
    pass


def get_session() -> Session:
    return SessionLocal()


def session_for_url(url: str) -> Session:
    """Session on an explicit ledger URL (the CLI's --ledger), tables created on demand."""
    args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    bind = create_engine(url, connect_args=args, pool_pre_ping=True)
    Base.metadata.create_all(bind=bind)
    return sessionmaker(bind=bind, autoflush=False, autocommit=False)()


def init_db() -> None:
    Base.metadata.create_all(bind=engine)
