"""Command-line entry point: ``chainshort {mine,run,eval,stats}``.

Exit codes: 0 success within budget, 2 configuration or input error,
3 run finished over budget (results are still written).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

from .backend import API_KEY_ENV, AgentBackend, ChatCompletionsBackend, ScriptedBackend, ScriptEntry
from .embedder import Embedder, HttpEmbedder, OfflineEmbedder
from .errors import ChainShortError, ConfigurationError
from .evalkit import DEFAULT_GRANULARITY_CAP, evaluate_run_dir, load_run_records, write_metrics_csv
from .graph import write_trajectory
from .mining import DiffSynthesizer, load_library, load_trajectories, mine_library, save_library
from .pipeline import COMPLETION_SIGNAL, RunConfig, RunResult, run_task
from .retrieval import index_tasks
from .sandbox import PYTHON_PROFILE, PYTHON_SYNTAX_PROFILE, LanguageProfile

log = logging.getLogger("chainshort")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_OVER_BUDGET = 3

PROFILES = {p.name: p for p in (PYTHON_PROFILE, PYTHON_SYNTAX_PROFILE)}

# Used by --offline when no script_path is configured.
DEFAULT_OFFLINE_SCRIPT = [
    ScriptEntry("programmer", 'main.py\n```python\nprint("hello from chainshort")\n```'),
    ScriptEntry("reviewer", COMPLETION_SIGNAL),
]


@dataclass
class Config:
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-3.5-turbo"
    api_key_env: str = API_KEY_ENV
    embedder: str = "offline"
    embedding_url: str | None = None
    embedding_model: str = "text-embedding-ada-002"
    budget_seconds: float = 600.0
    budget_tokens: int = 20000
    disable_selection: bool = False
    disable_cost: bool = False
    disable_gamma: bool = False
    use_shortcuts: bool = True
    utility_floor: float = 0.0
    min_reference_sim: float = 0.0
    max_rounds: int = 10
    library_dir: str = "library"
    output_dir: str = "runs"
    language: str = "python"
    timeout_seconds: float = 10.0
    granularity_cap: int = DEFAULT_GRANULARITY_CAP
    script_path: str | None = None
    final_only_pairs: bool = False
    max_pairs: int | None = None
    offline: bool = False
    jobs: int = 1

    @classmethod
    def load(cls, path: str | Path | None) -> Config:
        if path is None:
            return cls()
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict) or any(isinstance(v, (dict, list)) for v in data.values()):
            raise ConfigurationError(f"{path}: config must be a flat JSON object")
        if any("key" in k.lower() and k != "api_key_env" for k in data):
            raise ConfigurationError(f"{path}: credentials belong in ${API_KEY_ENV}, not the config file")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"{path}: unknown keys {unknown}")
        for key in ("library_dir", "output_dir", "script_path"):
            if data.get(key) is not None:
                data[key] = str((path.parent / data[key]).resolve())
        return cls(**data)

    def validate(self) -> None:
        if self.budget_seconds <= 0 or self.budget_tokens <= 0:
            raise ConfigurationError("budgets must be positive")
        if self.embedder not in ("offline", "http"):
            raise ConfigurationError(f"embedder must be 'offline' or 'http', got {self.embedder!r}")
        if self.language not in PROFILES:
            raise ConfigurationError(f"unknown language profile {self.language!r}; choose from {sorted(PROFILES)}")
        if self.script_path is not None and not Path(self.script_path).is_file():
            raise ConfigurationError(f"script file not found: {self.script_path}")

    @property
    def profile(self) -> LanguageProfile:
        return dataclasses.replace(PROFILES[self.language], timeout_seconds=self.timeout_seconds)

    def run_config(self) -> RunConfig:
        return RunConfig(
            time_budget=self.budget_seconds,
            token_budget=self.budget_tokens,
            disable_selection=self.disable_selection,
            disable_cost=self.disable_cost,
            disable_gamma=self.disable_gamma,
            use_shortcuts=self.use_shortcuts,
            utility_floor=self.utility_floor,
            language_profile=self.profile,
            min_reference_sim=self.min_reference_sim,
            max_rounds=self.max_rounds,
        )

    def make_embedder(self) -> Embedder:
        if self.offline or self.embedder == "offline":
            return OfflineEmbedder()
        url = self.embedding_url or f"{self.base_url.rstrip('/')}/embeddings"
        return HttpEmbedder(url, self.embedding_model, os.environ.get(self.api_key_env))

    def make_backend(self) -> AgentBackend:
        """A fresh backend per run so parallel jobs never share a script cursor."""
        if self.offline:
            if self.script_path:
                return ScriptedBackend.from_file(self.script_path, cycle=True)
            return ScriptedBackend(DEFAULT_OFFLINE_SCRIPT, cycle=True)
        return ChatCompletionsBackend(self.base_url, self.model, os.environ.get(self.api_key_env))

    def make_synthesizer(self) -> AgentBackend:
        if self.offline:
            if self.script_path:
                return ScriptedBackend.from_file(self.script_path, cycle=True)
            return DiffSynthesizer()
        return self.make_backend()


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_mine(trajectory_dir: str | Path, out_dir: str | Path, config: Config) -> int:
    trajectory_dir = Path(trajectory_dir)
    if not trajectory_dir.is_dir():
        print(f"error: {trajectory_dir} is not a directory", file=sys.stderr)
        return EXIT_INPUT
    graphs = load_trajectories(trajectory_dir, config.profile)
    graphs = [g for g in graphs if len(g.nodes) >= 2]
    if not graphs:
        print(f"error: no valid trajectories in {trajectory_dir}", file=sys.stderr)
        return EXIT_INPUT
    library = mine_library(
        graphs,
        config.make_synthesizer(),
        config.make_embedder(),
        profile=config.profile,
        final_only=config.final_only_pairs,
        max_pairs=config.max_pairs,
    )
    shortcuts_path, stats_path = save_library(library, out_dir)
    print(f"mined {len(library.entries)} shortcuts from {len(library.tasks)} trajectories")
    print(f"wrote {shortcuts_path} and {stats_path}")
    return EXIT_OK


def _slug(text: str, limit: int = 40) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-")
    return slug[:limit].rstrip("-") or "task"


def _read_tasks(task: str) -> list[tuple[str, str]]:
    path = Path(task)
    if path.is_file():
        lines = [line.strip() for line in path.read_text(encoding="utf-8").splitlines()]
        tasks = [line for line in lines if line]
        return [(f"task-{k:03d}-{_slug(text, 24)}", text) for k, text in enumerate(tasks)]
    return [(_slug(task), task)]


def write_run(result: RunResult, task_dir: Path) -> None:
    task_dir.mkdir(parents=True, exist_ok=True)
    write_trajectory(task_dir / "trajectory.jsonl", result.inference_graph)
    (task_dir / "result.json").write_text(result.to_json(), encoding="utf-8")
    solution = task_dir / "solution"
    solution.mkdir(exist_ok=True)
    for rel, body in result.final_solution.files:
        target = solution / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(body, encoding="utf-8")


def cmd_run(task_text_or_file: str, config: Config, out_dir: str | Path | None = None) -> int:
    tasks = _read_tasks(task_text_or_file)
    if not tasks:
        print("error: no tasks given", file=sys.stderr)
        return EXIT_INPUT
    embedder = config.make_embedder()
    library = index = None
    if config.use_shortcuts:
        library_dir = Path(config.library_dir)
        if not (library_dir / "shortcuts.json").is_file() or not (library_dir / "stats.json").is_file():
            print(f"error: no shortcut library in {library_dir} (run 'chainshort mine' first)", file=sys.stderr)
            return EXIT_INPUT
        library = load_library(library_dir)
        index = index_tasks(library, embedder)
    run_config = config.run_config()
    out = Path(out_dir or config.output_dir)

    def job(task: tuple[str, str]) -> RunResult:
        task_id, text = task
        # a private embedder per job keeps memo tables unshared
        job_embedder = config.make_embedder()
        result = run_task(text, run_config, library, index, config.make_backend(), job_embedder, task_id=task_id)
        write_run(result, out / task_id)
        return result

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(job, tasks))
    else:
        results = [job(t) for t in tasks]

    for result in results:
        print(
            f"{result.inference_graph.task_id}: {result.path_length} rounds, "
            f"{result.budget.tokens_used} tokens, {result.budget.time_used:.2f}s, "
            f"{result.terminated_by}, within_budget={str(result.within_budget).lower()}"
        )
    return EXIT_OK if all(r.within_budget for r in results) else EXIT_OVER_BUDGET


def cmd_eval(run_dir: str | Path, config: Config) -> int:
    run_dir = Path(run_dir)
    if not run_dir.is_dir() or not load_run_records(run_dir):
        print(f"error: no run results under {run_dir}", file=sys.stderr)
        return EXIT_INPUT
    report = evaluate_run_dir(run_dir, config.make_embedder(), profile=config.profile, cap=config.granularity_cap)
    path = write_metrics_csv(report, run_dir / "metrics.csv")
    for row in report.per_task:
        if row.flag:
            print(f"warning: {row.task_id}: {row.flag}; excluded from the aggregate", file=sys.stderr)
    print(
        f"aggregate: completeness={report.completeness:.4f} executability={report.executability:.4f} "
        f"consistency={report.consistency:.4f} granularity={report.granularity:.4f} "
        f"quality={report.quality:.4f} bcr={report.bcr:.4f}"
    )
    print(f"wrote {path}")
    return EXIT_OK


DISTRIBUTION_COLUMNS = ("group", "path_length", "time_seconds", "tokens")


def cmd_stats(run_dirs: Sequence[str | Path], out_dir: str | Path) -> int:
    """Per-run path length, time and tokens as CSV plus one histogram SVG per column."""
    rows: list[tuple[str, int, float, int]] = []
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        group = run_dir.name
        for result, _ in load_run_records(run_dir):
            budget = result["budget"]
            rows.append((group, int(result["path_length"]), float(budget["time_used"]), int(budget["tokens_used"])))
    if not rows:
        print("error: no run results found", file=sys.stderr)
        return EXIT_INPUT
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "distributions.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DISTRIBUTION_COLUMNS)
        for group, path_length, seconds, tokens in rows:
            writer.writerow([group, path_length, f"{seconds:.6f}", tokens])
    _histograms(rows, out)
    groups = sorted({r[0] for r in rows})
    for group in groups:
        mine = [r for r in rows if r[0] == group]
        n = len(mine)
        print(
            f"{group}: runs={n} mean_path_length={sum(r[1] for r in mine) / n:.3f} "
            f"mean_time={sum(r[2] for r in mine) / n:.3f}s mean_tokens={sum(r[3] for r in mine) / n:.1f}"
        )
    return EXIT_OK


def _histograms(rows: Sequence[tuple[str, int, float, int]], out: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    plt.rcParams["svg.hashsalt"] = "chainshort"
    groups = sorted({r[0] for r in rows})
    for column, label in ((1, "path_length"), (2, "time_seconds"), (3, "tokens")):
        values = np.array([r[column] for r in rows], dtype=float)
        bins = np.histogram_bin_edges(values, bins=min(20, max(1, len(np.unique(values)))))
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for group in groups:
            ax.hist([r[column] for r in rows if r[0] == group], bins=bins, alpha=0.55, label=group)
        ax.set_xlabel(label.replace("_", " "))
        ax.set_ylabel("runs")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / f"{label}.svg", format="svg", metadata={"Date": None})
        plt.close(fig)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _common_flags() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="flat JSON config file")
    parent.add_argument("--offline", action="store_true", default=None, help="scripted backend + offline embedder")
    parent.add_argument("--budget-seconds", type=float)
    parent.add_argument("--budget-tokens", type=int)
    parent.add_argument("--disable-selection", action="store_true", default=None)
    parent.add_argument("--disable-cost", action="store_true", default=None)
    parent.add_argument("--disable-gamma", action="store_true", default=None)
    parent.add_argument("--no-shortcuts", dest="use_shortcuts", action="store_false", default=None,
                        help="plain chat chain without reference or shortcuts")
    parent.add_argument("--utility-floor", type=float)
    parent.add_argument("--min-reference-sim", type=float)
    parent.add_argument("--library", dest="library_dir")
    parent.add_argument("--script", dest="script_path")
    parent.add_argument("--jobs", type=int)
    parent.add_argument("-v", "--verbose", action="store_true")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parent = _common_flags()
    parser = argparse.ArgumentParser(prog="chainshort", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    mine = sub.add_parser("mine", parents=[parent], help="mine a shortcut library from trajectories")
    mine.add_argument("trajectory_dir")
    mine.add_argument("--out", help="library output directory (default: config library_dir)")

    run = sub.add_parser("run", parents=[parent], help="run one task, or a file with one task per line")
    run.add_argument("task", help="task text or path to a task list file")
    run.add_argument("--out", help="output directory (default: config output_dir)")

    ev = sub.add_parser("eval", parents=[parent], help="compute metrics.csv for a run directory")
    ev.add_argument("run_dir")

    stats = sub.add_parser("stats", parents=[parent], help="path length / time / token distributions")
    stats.add_argument("run_dirs", nargs="+")
    stats.add_argument("--out", required=True)
    return parser


def _resolve_config(args: argparse.Namespace) -> Config:
    config = Config.load(args.config)
    overrides: dict[str, Any] = {}
    for field in dataclasses.fields(Config):
        value = getattr(args, field.name, None)
        if value is not None:
            overrides[field.name] = value
    config = dataclasses.replace(config, **overrides)
    config.validate()
    return config


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _resolve_config(args)
        if args.command == "mine":
            return cmd_mine(args.trajectory_dir, args.out or config.library_dir, config)
        if args.command == "run":
            return cmd_run(args.task, config, args.out)
        if args.command == "eval":
            return cmd_eval(args.run_dir, config)
        return cmd_stats(args.run_dirs, args.out)
    except ChainShortError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
