"""Evaluation metrics for generated software.

Per task: completeness (share of files free of TODO/FIXME placeholders),
executability (the program passes the sandbox check), consistency (cosine of
code and requirement embeddings), granularity (lines of code against a cap)
and their product, quality.  Across tasks: the same averaged, plus the
budgeted completion rate (BCR).
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from .embedder import Embedder, cosine
from .errors import InvalidArgument
from .graph import SolutionState
from .sandbox import PYTHON_PROFILE, ExecutionVerdict, LanguageProfile, check_compilable

__all__ = [
    "TaskMetrics",
    "MetricsReport",
    "completeness",
    "executability",
    "consistency",
    "count_loc",
    "granularity",
    "quality",
    "bcr",
    "evaluate_solution",
    "aggregate",
    "load_run_records",
    "evaluate_run_dir",
    "write_metrics_csv",
    "METRICS_COLUMNS",
    "DEFAULT_GRANULARITY_CAP",
]

log = logging.getLogger(__name__)

PLACEHOLDER_RE = re.compile(r"(?<![A-Za-z0-9_])(?:todo|fixme)(?![A-Za-z0-9_])", re.IGNORECASE)
METRICS_COLUMNS = ("task_id", "completeness", "executability", "consistency", "granularity", "quality", "within_budget")
DEFAULT_GRANULARITY_CAP = 300
AGGREGATE_ID = "aggregate"


def completeness(files: Sequence[tuple[str, str]]) -> float:
    if not files:
        log.warning("completeness of an empty file list is defined as 0")
        return 0.0
    clean = sum(1 for _, body in files if not PLACEHOLDER_RE.search(body))
    return clean / len(files)


def executability(verdicts: Sequence[ExecutionVerdict | bool]) -> float:
    if not verdicts:
        raise InvalidArgument("executability needs at least one verdict")
    passed = sum(1 for v in verdicts if (v.compilable if isinstance(v, ExecutionVerdict) else bool(v)))
    return passed / len(verdicts)


def consistency(code_text: str, task_text: str, embedder: Embedder) -> float:
    if not code_text.strip() or not task_text.strip():
        return 0.0
    return cosine(embedder.embed(code_text), embedder.embed(task_text))


def count_loc(files: Sequence[tuple[str, str]], profile: LanguageProfile = PYTHON_PROFILE) -> int:
    """Non-blank lines that do not start with one of the profile's comment prefixes."""
    total = 0
    for _, body in files:
        for line in body.splitlines():
            stripped = line.strip()
            if stripped and not stripped.startswith(profile.comment_prefixes):
                total += 1
    return total


def granularity(loc: float, cap: int = DEFAULT_GRANULARITY_CAP) -> float:
    if cap <= 0:
        raise InvalidArgument("granularity cap must be positive")
    return min(1.0, max(0.0, loc) / cap)


def quality(c: float, e: float, s: float, g: float) -> float:
    values = (c, e, s, g)
    if not all(math.isfinite(v) for v in values):
        raise InvalidArgument("quality factors must be finite")
    return c * e * s * g


def bcr(results: Sequence[Any]) -> float:
    """Share of runs finished within budget, whatever their quality."""
    if not results:
        raise InvalidArgument("BCR needs at least one run")
    flags = [r if isinstance(r, bool) else bool(r.within_budget) for r in results]
    return sum(flags) / len(flags)


@dataclass
class TaskMetrics:
    task_id: str
    within_budget: bool
    completeness: float = 0.0
    executability: float = 0.0
    consistency: float = 0.0
    granularity: float = 0.0
    quality: float = 0.0
    loc: int = 0
    flag: str | None = None


@dataclass
class MetricsReport:
    completeness: float
    executability: float
    consistency: float
    granularity: float
    quality: float
    bcr: float
    per_task: list[TaskMetrics] = field(default_factory=list)


Checker = Callable[[SolutionState, LanguageProfile], ExecutionVerdict]


def evaluate_solution(
    task_id: str,
    task_text: str,
    files: Sequence[tuple[str, str]],
    within_budget: bool,
    embedder: Embedder,
    *,
    profile: LanguageProfile = PYTHON_PROFILE,
    cap: int = DEFAULT_GRANULARITY_CAP,
    checker: Checker = check_compilable,
) -> TaskMetrics:
    if not files:
        return TaskMetrics(task_id, within_budget, flag="missing solution files")
    files = sorted(files)
    verdict = checker(SolutionState(1, "", list(files)), profile)
    code_text = "\n".join(body for _, body in files)
    loc = count_loc(files, profile)
    c = completeness(files)
    e = executability([verdict])
    s = consistency(code_text, task_text, embedder)
    g = granularity(loc, cap)
    return TaskMetrics(task_id, within_budget, c, e, s, g, quality(c, e, s, g), loc)


def aggregate(rows: Sequence[TaskMetrics], cap: int = DEFAULT_GRANULARITY_CAP) -> MetricsReport:
    """Average unflagged rows; granularity uses the mean LOC per task."""
    scored = [r for r in rows if r.flag is None]
    if not scored:
        raise InvalidArgument("no evaluable task rows")
    n = len(scored)
    c = sum(r.completeness for r in scored) / n
    e = executability([r.executability == 1.0 for r in scored])
    s = sum(r.consistency for r in scored) / n
    g = granularity(sum(r.loc for r in scored) / n, cap)
    return MetricsReport(c, e, s, g, quality(c, e, s, g), bcr(scored), list(rows))


def load_run_records(run_dir: str | Path) -> list[tuple[dict[str, Any], list[tuple[str, str]]]]:
    """Find ``result.json`` task directories under ``run_dir``.

    Returns ``(result, files)`` pairs; files come from each task's
    ``solution/`` directory and may be empty.
    """
    base = Path(run_dir)
    records = []
    for result_path in sorted(base.rglob("result.json")):
        result = json.loads(result_path.read_text(encoding="utf-8"))
        solution_dir = result_path.parent / "solution"
        files = []
        if solution_dir.is_dir():
            for path in sorted(p for p in solution_dir.rglob("*") if p.is_file()):
                files.append((path.relative_to(solution_dir).as_posix(), path.read_text(encoding="utf-8")))
        records.append((result, files))
    return records


def evaluate_run_dir(
    run_dir: str | Path,
    embedder: Embedder,
    *,
    profile: LanguageProfile = PYTHON_PROFILE,
    cap: int = DEFAULT_GRANULARITY_CAP,
    checker: Checker = check_compilable,
) -> MetricsReport:
    rows = [
        evaluate_solution(
            str(result["task_id"]),
            str(result["task_text"]),
            files,
            bool(result["within_budget"]),
            embedder,
            profile=profile,
            cap=cap,
            checker=checker,
        )
        for result, files in load_run_records(run_dir)
    ]
    return aggregate(rows, cap)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _rows(report: MetricsReport) -> Iterable[list[str]]:
    for r in report.per_task:
        budget_cell = "true" if r.within_budget else "false"
        if r.flag is not None:
            yield [r.task_id, "", "", "", "", "", budget_cell]
        else:
            metrics = (r.completeness, r.executability, r.consistency, r.granularity, r.quality)
            yield [r.task_id, *map(_fmt, metrics), budget_cell]
    aggregate_metrics = (report.completeness, report.executability, report.consistency, report.granularity, report.quality)
    yield [AGGREGATE_ID, *map(_fmt, aggregate_metrics), _fmt(report.bcr)]


def write_metrics_csv(report: MetricsReport, path: str | Path) -> Path:
    """Write one row per task plus the aggregate row (its within_budget cell holds BCR)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_COLUMNS)
        writer.writerows(_rows(report))
    return path
