"""
DUALID results ledger.

Every run records its scenario, seed and scalar metrics, so sweeps can be
aggregated with SQL instead of re-reading CSV files.
"""

import math
from datetime import datetime, timezone
from typing import List, Optional, Sequence

import pandas as pd
from sqlalchemy import Column, Float, ForeignKey, Integer, String, Text, func, select
from sqlalchemy.orm import Session, declarative_base, relationship

from dualid.models.database_config import create_engine_and_session

Base = declarative_base()


class Run(Base):
    """
    One scenario run.

    Runs of a sweep share ``sweep_id`` and carry the varied key and value.
    """

    __tablename__ = "run"

    id = Column(Integer, primary_key=True, autoincrement=True)
    scenario = Column(String, nullable=False)
    kind = Column(String, nullable=False)
    seed = Column(Integer, nullable=False)
    out_dir = Column(Text, nullable=False)
    sweep_id = Column(String, nullable=True, index=True)
    sweep_key = Column(String, nullable=True)
    sweep_value = Column(Float, nullable=True)
    created_on = Column(Text, nullable=False)

    metrics = relationship("MetricRecord", back_populates="run", cascade="all, delete-orphan")

    def __repr__(self) -> str:
        return f"<Run(id={self.id}, scenario='{self.scenario}', seed={self.seed})>"


class MetricRecord(Base):
    """One scalar metric of a run. NaN is stored as NULL."""

    __tablename__ = "metric"

    id = Column(Integer, primary_key=True, autoincrement=True)
    run_id = Column(Integer, ForeignKey("run.id"), nullable=False, index=True)
    name = Column(String, nullable=False)
    value = Column(Float, nullable=True)

    run = relationship("Run", back_populates="metrics")

    def __repr__(self) -> str:
        return f"<MetricRecord(run_id={self.run_id}, name='{self.name}', value={self.value})>"


def create_tables(engine) -> None:
    Base.metadata.create_all(bind=engine)


def record_run(
    session: Session,
    scenario: str,
    kind: str,
    seed: int,
    metrics: dict,
    out_dir: str,
    sweep_id: Optional[str] = None,
    sweep_key: Optional[str] = None,
    sweep_value: Optional[float] = None,
) -> Run:
    """
    Store one run and its metrics, committing the session.

    Returns:
        The persisted run
    """
    run = Run(
        scenario=scenario,
        kind=kind,
        seed=seed,
        out_dir=out_dir,
        sweep_id=sweep_id,
        sweep_key=sweep_key,
        sweep_value=sweep_value,
        created_on=datetime.now(timezone.utc).isoformat(),
    )
    run.metrics = [
        MetricRecord(name=name, value=None if math.isnan(value) else float(value))
        for name, value in metrics.items()
    ]
    session.add(run)
    session.commit()
    session.refresh(run)
    return run


def sweep_means(session: Session, sweep_id: str, metric_order: Sequence[str] = ()) -> pd.DataFrame:
    """
    Per-(value, metric) means over the seeds of one sweep.

    Args:
        session: Ledger session
        sweep_id: Sweep to aggregate
        metric_order: Canonical metric order; unknown names sort last

    Returns:
        Frame with columns key, value, metric, mean, n_seeds
    """
    statement = (
        select(
            Run.sweep_key,
            Run.sweep_value,
            MetricRecord.name,
            func.avg(MetricRecord.value),
            func.count(Run.seed.distinct()),
        )
        .join(MetricRecord, MetricRecord.run_id == Run.id)
        .where(Run.sweep_id == sweep_id)
        .group_by(Run.sweep_key, Run.sweep_value, MetricRecord.name)
    )
    rows: List[tuple] = [tuple(r) for r in session.execute(statement).all()]
    frame = pd.DataFrame(rows, columns=["key", "value", "metric", "mean", "n_seeds"])
    frame["mean"] = frame["mean"].astype(float)
    rank = {name: i for i, name in enumerate(metric_order)}
    frame["order"] = frame["metric"].map(lambda m: rank.get(m, len(rank)))
    frame = frame.sort_values(["value", "order", "metric"], kind="mergesort")
    return frame.drop(columns="order").reset_index(drop=True)


def open_ledger(database_url: str):
    """Engine and session factory of a ledger, tables created if missing."""
    engine, SessionLocal = create_engine_and_session(database_url)
    create_tables(engine)
    return engine, SessionLocal
