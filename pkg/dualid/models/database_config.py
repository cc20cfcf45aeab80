"""
Database configuration for the DUALID results ledger.

The ledger lives in SQLite next to the run output by default; set
``DUALID_DATABASE_URL`` to record into PostgreSQL (or any other SQLAlchemy
URL) instead.
"""

import os
from pathlib import Path
from typing import Optional, Union

from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker

DATABASE_URL_ENV = "DUALID_DATABASE_URL"


def get_database_url(out_dir: Optional[Union[str, Path]] = None) -> str:
    """
    Get database URL from environment variable or use default.

    Args:
        out_dir: Output directory holding the default ``ledger.db``

    Returns:
        Database URL string
    """
    url = os.getenv(DATABASE_URL_ENV)
    if url:
        return url
    base = Path(out_dir) if out_dir is not None else Path(".")
    return f"sqlite:///{(base / 'ledger.db').as_posix()}"


def create_engine_and_session(database_url: Optional[str] = None):
    """
    Create SQLAlchemy engine and session factory.

    Args:
        database_url: Database connection URL. If None, uses environment or default.

    Returns:
        Tuple of (engine, SessionLocal)
    """
    if database_url is None:
        database_url = get_database_url()

    if database_url.startswith("sqlite"):
        engine = create_engine(
            database_url,
            echo=False,
            connect_args={"check_same_thread": False},
        )
    elif database_url.startswith("postgresql"):
        engine = create_engine(
            database_url,
            echo=False,
            pool_pre_ping=True,
            pool_recycle=300,
        )
    else:
        engine = create_engine(database_url, echo=False)

    SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
    return engine, SessionLocal


def describe_database(database_url: str) -> str:
    """Short human-readable name of a database URL, without credentials."""
    if database_url.startswith("sqlite"):
        return "SQLite " + database_url.replace("sqlite:///", "").replace("sqlite://", "")
    if database_url.startswith("postgresql"):
        return "PostgreSQL " + database_url.split("/")[-1].split("?")[0]
    return database_url.split("://")[0]
