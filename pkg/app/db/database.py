from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import declarative_base, sessionmaker

from app.core.config import RUNS_DATABASE_URL

Base = declarative_base()


def make_engine(url: str = RUNS_DATABASE_URL) -> Engine:
    connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
    return create_engine(url, connect_args=connect_args)


def make_session_factory(url: str = RUNS_DATABASE_URL) -> sessionmaker:
    """Session factory bound to ``url`` with every run-store table created."""
    import app.models  # noqa: F401  registers the tables on Base

    engine = make_engine(url)
    Base.metadata.create_all(bind=engine)
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)
