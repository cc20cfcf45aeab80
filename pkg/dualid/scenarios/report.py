"""
Report files for one DUALID run.

A run directory holds ``summary.csv`` (one row per metric), ``events.jsonl``
(one event per line) and ``config.echo`` (the fully resolved config).
Floats are written with 9 significant digits so that two runs of the same
config and seed produce byte-identical files.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import pandas as pd

from dualid.errors import ReportError
from dualid.scenarios.config import ScenarioConfig, to_ini
from dualid.scenarios.engine import Event
from dualid.scenarios.metrics import Metrics

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ["scenario", "seed", "metric", "value"]
FLOAT_FORMAT = "%.9g"


def summary_frame(metrics: Metrics, scenario: str, seed: int) -> pd.DataFrame:
    """Metrics as rows of (scenario, seed, metric, value), in the given order."""
    rows = [(scenario, seed, name, float(value)) for name, value in metrics.items()]
    frame = pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
    return frame.astype({"seed": "int64", "value": "float64"})


def _rounded(value: Any) -> Any:
    if isinstance(value, bool):
        return value
    if isinstance(value, float):
        return float(format(value, ".9g"))
    if isinstance(value, dict):
        return {str(k): _rounded(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_rounded(v) for v in value]
    return value


def event_line(event: Event) -> str:
    return json.dumps(_rounded(event.as_record()), sort_keys=True)


def _write(path: Path, writer) -> None:
    try:
        writer(path)
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc.strerror or exc}")


def emit_report(
    metrics: Metrics,
    out_dir: Path,
    config: Optional[ScenarioConfig] = None,
    events: Iterable[Event] = (),
) -> Dict[str, Path]:
    """
    Write the report files of one run.

    Args:
        metrics: Metrics in canonical order
        out_dir: Run directory, created if missing
        config: Resolved config to echo; also names the scenario and seed
        events: Event log of the run

    Returns:
        Paths of the written files by name
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportError(f"cannot create {out_dir}: {exc.strerror or exc}")

    scenario = config.scenario.name if config is not None else "scenario"
    seed = config.scenario.seed if config is not None else 0
    paths = {
        "summary": out_dir / "summary.csv",
        "events": out_dir / "events.jsonl",
    }

    frame = summary_frame(metrics, scenario, seed)
    _write(
        paths["summary"],
        lambda p: frame.to_csv(p, index=False, float_format=FLOAT_FORMAT, na_rep="nan"),
    )

    def write_events(path: Path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            for event in events:
                handle.write(event_line(event) + "\n")

    _write(paths["events"], write_events)

    if config is not None:
        paths["config"] = out_dir / "config.echo"

        def write_config(path: Path) -> None:
            with open(path, "w", encoding="utf-8") as handle:
                to_ini(config).write(handle)

        _write(paths["config"], write_config)

    logger.info("report written to %s", out_dir)
    return paths
