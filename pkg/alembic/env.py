"""
Alembic environment configuration for the DUALID results ledger.

Supports SQLite (the default, next to the run output) and PostgreSQL,
selected through ``DUALID_DATABASE_URL``.
"""

import os
from logging.config import fileConfig

from sqlalchemy import engine_from_config, pool
from alembic import context

from dualid.models.database_config import DATABASE_URL_ENV, get_database_url
from dualid.models.ledger_model import Base

config = context.config

if config.config_file_name is not None:
    fileConfig(config.config_file_name)

target_metadata = Base.metadata


def ledger_url() -> str:
    """``DUALID_DATABASE_URL`` if set, else the URL in alembic.ini."""
    if os.getenv(DATABASE_URL_ENV):
        return get_database_url()
    return config.get_main_option("sqlalchemy.url") or get_database_url()


def run_migrations_offline() -> None:
    """Run migrations in 'offline' mode, emitting SQL without a connection."""
    context.configure(
        url=ledger_url(),
        target_metadata=target_metadata,
        literal_binds=True,
        dialect_opts={"paramstyle": "named"},
    )

    with context.begin_transaction():
        context.run_migrations()


def run_migrations_online() -> None:
    """Run migrations in 'online' mode against a live connection."""
    config.set_main_option("sqlalchemy.url", ledger_url())

    connectable = engine_from_config(
        config.get_section(config.config_ini_section, {}),
        prefix="sqlalchemy.",
        poolclass=pool.NullPool,
    )

    with connectable.connect() as connection:
        context.configure(connection=connection, target_metadata=target_metadata)

        with context.begin_transaction():
            context.run_migrations()


if context.is_offline_mode():
    run_migrations_offline()
else:
    run_migrations_online()
