from typing import Generator

from sqlalchemy.pool import StaticPool
from sqlmodel import Session, SQLModel, create_engine

from rbdoa.settings import get_settings

# Database configuration
DATABASE_URL = get_settings().database_url


def build_engine(url: str = DATABASE_URL, echo: bool = False):
    """Engine for a database URL; in-memory SQLite shares one connection across threads."""
    if url.startswith("sqlite"):
        kwargs = {"connect_args": {"check_same_thread": False}}
        if url in ("sqlite://", "sqlite:///:memory:"):
            kwargs["poolclass"] = StaticPool
        return create_engine(url, echo=echo, **kwargs)
    return create_engine(url, echo=echo, pool_pre_ping=True)


# Create engine
engine = build_engine(DATABASE_URL, echo=get_settings().sql_echo)


def create_db_and_tables(bind=None):
    """Create all tables defined in SQLModel models"""
    import models  # noqa: F401  registers the tables on SQLModel.metadata

    SQLModel.metadata.create_all(bind or engine)


def get_session() -> Generator[Session, None, None]:
    """Dependency to get database session"""
    with Session(engine) as session:
        yield session


def get_session_sync() -> Session:
    """Get synchronous database session"""
    return Session(engine)
