"""
Seed and parameter sweeps for DUALID.

A sweep runs every (value, seed) combination of one varied config key,
writes a report directory per run, records every run in the results ledger
and summarizes the per-value metric means in ``sweep_summary.csv``.
"""

import logging
import uuid
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from dualid.errors import ConfigError
from dualid.models.database_config import describe_database, get_database_url
from dualid.models.ledger_model import open_ledger, record_run, sweep_means
from dualid.scenarios.config import ScenarioConfig, apply_override
from dualid.scenarios.metrics import METRICS_BY_KIND, Metrics
from dualid.scenarios.report import FLOAT_FORMAT, emit_report
from dualid.scenarios.runner import run_scenario

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VarySpec:
    """``key=start:stop:steps``, expanded to evenly spaced values."""

    key: str
    start: float
    stop: float
    steps: int

    @classmethod
    def parse(cls, text: str) -> "VarySpec":
        key, sep, span = text.partition("=")
        parts = span.split(":")
        if not sep or not key or len(parts) != 3:
            raise ConfigError(f"--vary: expected key=start:stop:steps, got {text!r}")
        try:
            start, stop, steps = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise ConfigError(f"--vary: expected numbers in {text!r}")
        if steps < 1:
            raise ConfigError("--vary: steps must be at least 1")
        return cls(key.strip(), start, stop, steps)

    def values(self) -> List[float]:
        return [float(v) for v in np.linspace(self.start, self.stop, self.steps)]


@dataclass(frozen=True)
class SweepJob:
    config: ScenarioConfig
    value: Optional[float]
    out_dir: Path


def with_seed(config: ScenarioConfig, seed: int) -> ScenarioConfig:
    return config.model_copy(update={"scenario": config.scenario.model_copy(update={"seed": seed})})


def run_to_directory(config: ScenarioConfig, out_dir: Path) -> Metrics:
    """Run one scenario and write its report files."""
    metrics, events = run_scenario(config)
    emit_report(metrics, out_dir, config, events)
    return metrics


def _execute(job: SweepJob) -> Tuple[SweepJob, Metrics]:
    return job, run_to_directory(job.config, job.out_dir)


def plan_sweep(
    config: ScenarioConfig, seeds: int, out_dir: Path, vary: Optional[VarySpec] = None
) -> List[SweepJob]:
    """
    Every run of a sweep, in execution order.

    Seeds count up from the config's own seed. Each varied value gets its
    own config, validated before any run starts.
    """
    if seeds < 1:
        raise ConfigError("--seeds must be at least 1")
    first = config.scenario.seed
    jobs = []
    for value in vary.values() if vary is not None else [None]:
        base = config
        run_root = Path(out_dir)
        if vary is not None:
            base = apply_override(config, vary.key, value)
            run_root = run_root / f"{vary.key}={format(value, '.9g')}"
        for seed in range(first, first + seeds):
            jobs.append(SweepJob(with_seed(base, seed), value, run_root / f"seed_{seed}"))
    return jobs


def run_sweep(
    config: ScenarioConfig,
    seeds: int,
    out_dir: Path,
    vary: Optional[VarySpec] = None,
    workers: int = 1,
    database_url: Optional[str] = None,
) -> pd.DataFrame:
    """
    Run a sweep and summarize it.

    Args:
        config: Base scenario
        seeds: Number of seeds per value
        out_dir: Root directory of the sweep
        vary: Varied key and its values; seeds only when omitted
        workers: Process pool size; 1 runs in this process
        database_url: Ledger URL; ``DUALID_DATABASE_URL`` or ``<out>/ledger.db`` by default

    Returns:
        The sweep summary frame, also written to ``sweep_summary.csv``
    """
    out_dir = Path(out_dir)
    jobs = plan_sweep(config, seeds, out_dir, vary)
    out_dir.mkdir(parents=True, exist_ok=True)
    logger.info("sweep of %d runs with %d worker(s)", len(jobs), workers)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_execute, jobs))
    else:
        results = [_execute(job) for job in jobs]

    url = database_url or get_database_url(out_dir)
    _, SessionLocal = open_ledger(url)
    sweep_id = uuid.uuid4().hex
    kind = config.scenario.kind
    with SessionLocal() as session:
        for done, (job, metrics) in enumerate(results, start=1):
            record_run(
                session,
                scenario=job.config.scenario.name,
                kind=kind.value,
                seed=job.config.scenario.seed,
                metrics=metrics,
                out_dir=str(job.out_dir),
                sweep_id=sweep_id,
                sweep_key=vary.key if vary is not None else None,
                sweep_value=job.value,
            )
            logger.debug("recorded run %d/%d", done, len(results))
        summary = sweep_means(session, sweep_id, METRICS_BY_KIND[kind])
    logger.info("sweep recorded in %s", describe_database(url))

    path = out_dir / "sweep_summary.csv"
    summary.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="nan")
    logger.info("sweep summary written to %s", path)
    return summary
