"""Experience mining: historical trajectories -> shortcut library + stats corpus.

For every training trajectory we enumerate forward node pairs ``(i, j)``,
ask a synthesizer backend for an instruction that moves the solution from
``n_i`` straight to ``n_j``, price each shortcut by the measured cost of that
synthesis call, and precompute its value ``w(n_j) - w(n_i)``.
"""

from __future__ import annotations

import difflib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from .backend import AgentBackend, AgentReply, AgentRequest, count_tokens_fallback
from .embedder import Embedder
from .errors import ChainShortError, EmptyCorpus, ForwardViolation, MissingAnnotation, ParseError, SynthesisError
from .graph import ResourceDelta, Shortcut, TaskGraph, graph_from_jsonl
from .sandbox import LanguageProfile, PYTHON_PROFILE, check_compilable
from .scoring import node_weight, shortcut_value

__all__ = [
    "StatsCorpus",
    "ReferenceTask",
    "ShortcutLibrary",
    "NO_CHANGE_SENTINEL",
    "DiffSynthesizer",
    "ingest_trajectory",
    "annotate_graph",
    "enumerate_pairs",
    "synthesize_shortcut",
    "precompute_values",
    "build_stats_corpus",
    "mine_library",
    "load_trajectories",
    "save_library",
    "load_library",
]

log = logging.getLogger(__name__)

NO_CHANGE_SENTINEL = "no change required"
SYNTHESIZER_ROLE = "synthesizer"
SYNTHESIS_SYSTEM_PROMPT = (
    "You distil software-development experience. Given a source version of a program, "
    "a target version, and the review instructions that led from one to the other, write a "
    "single self-contained instruction that takes the source directly to the target. Organize "
    "it by modules and classes, data structures, main program flow and exception handling."
)


@dataclass
class StatsCorpus:
    """Sorted multisets of historical shortcut time and token consumptions."""

    times: list[float]
    tokens: list[int]

    def __post_init__(self) -> None:
        if len(self.times) != len(self.tokens):
            raise ValueError("times and tokens must have the same length")
        self.times = sorted(float(t) for t in self.times)
        self.tokens = sorted(int(t) for t in self.tokens)

    @property
    def size(self) -> int:
        return len(self.times)

    def to_dict(self) -> dict[str, Any]:
        return {"times": self.times, "tokens": self.tokens, "size": self.size}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> StatsCorpus:
        corpus = cls(data["times"], data["tokens"])
        if "size" in data and int(data["size"]) != corpus.size:
            raise ParseError(f"stats size {data['size']} does not match {corpus.size} entries")
        return corpus


@dataclass(frozen=True)
class ReferenceTask:
    task_id: str
    task_text: str
    edge_count: int


@dataclass
class ShortcutLibrary:
    entries: list[Shortcut]
    corpus: StatsCorpus
    tasks: dict[str, ReferenceTask] = field(default_factory=dict)

    def shortcuts_for(self, task_id: str) -> list[Shortcut]:
        return [s for s in self.entries if s.origin_task_id == task_id]

    def to_records(self) -> list[dict[str, Any]]:
        records = []
        for shortcut in self.entries:
            record = shortcut.to_record()
            task = self.tasks[shortcut.origin_task_id]
            record["origin_task_text"] = task.task_text
            record["origin_edge_count"] = task.edge_count
            records.append(record)
        return records

    @classmethod
    def from_records(cls, records: list[dict[str, Any]], corpus: StatsCorpus | None = None) -> ShortcutLibrary:
        entries: list[Shortcut] = []
        tasks: dict[str, ReferenceTask] = {}
        for k, record in enumerate(records):
            try:
                shortcut = Shortcut.from_record(record)
                task = ReferenceTask(
                    shortcut.origin_task_id, str(record["origin_task_text"]), int(record["origin_edge_count"])
                )
            except (KeyError, TypeError, ValueError, ChainShortError) as exc:
                raise ParseError(f"shortcut record {k}: {exc}") from exc
            if tasks.setdefault(task.task_id, task) != task:
                raise ParseError(f"shortcut record {k}: inconsistent metadata for task {task.task_id!r}")
            entries.append(shortcut)
        if corpus is None:
            corpus = build_stats_corpus(entries)
        return cls(entries, corpus, tasks)


class DiffSynthesizer:
    """Offline synthesizer that writes the shortcut from the code itself.

    The instruction lists, per file, the lines to add and remove between the
    source and target versions, so it describes the source-to-target change
    as a whole rather than concatenating the intermediate review comments.
    Usage is charged with :func:`count_tokens_fallback` and 5 ms per token.
    """

    SECONDS_PER_TOKEN = 0.005

    def complete(self, request: AgentRequest) -> AgentReply:
        source = dict(request.variables.get("source_files", []))
        target = dict(request.variables.get("target_files", []))
        lines = ["To transition from the source version to the target version, follow these instructions:"]
        for path in sorted(set(source) | set(target)):
            before = source.get(path, "").splitlines()
            after = target.get(path, "").splitlines()
            if before == after:
                continue
            if path not in source:
                lines.append(f"Create {path} with the following content:")
                lines += [f"    {line}" for line in after]
                continue
            if path not in target:
                lines.append(f"Delete {path}.")
                continue
            lines.append(f"In {path}:")
            for op in difflib.unified_diff(before, after, lineterm="", n=0):
                if op.startswith(("---", "+++", "@@")):
                    continue
                verb = "add" if op.startswith("+") else "remove"
                lines.append(f"  - {verb}: {op[1:]}")
        text = "\n".join(lines)
        tokens = count_tokens_fallback(request.prompt_text()) + count_tokens_fallback(text)
        return AgentReply(text, ResourceDelta(tokens * self.SECONDS_PER_TOKEN, tokens))


def annotate_graph(
    graph: TaskGraph,
    embedder: Embedder | None = None,
    profile: LanguageProfile | None = PYTHON_PROFILE,
) -> TaskGraph:
    """Fill in missing embeddings and compilable flags in place."""
    for node in graph.nodes:
        if embedder is not None and node.embedding is None:
            node.embedding = embedder.embed(node.content)
        if profile is not None and node.compilable is None:
            node.compilable = check_compilable(node, profile).compilable
    return graph


def ingest_trajectory(
    record: str | Iterable[str],
    profile: LanguageProfile | None = PYTHON_PROFILE,
) -> TaskGraph:
    """Parse one trajectory and recompute absent compilable flags in the sandbox."""
    graph = graph_from_jsonl(record)
    return annotate_graph(graph, embedder=None, profile=profile)


def enumerate_pairs(graph: TaskGraph, *, final_only: bool = False, max_pairs: int | None = None) -> list[tuple[int, int]]:
    n = len(graph.nodes)
    last = n - 1
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if not final_only or j == last]
    if max_pairs is not None:
        pairs = pairs[:max_pairs]
    return pairs


def _source_text(files: Sequence[tuple[str, str]]) -> str:
    if not files:
        return "(empty)"
    return "\n\n".join(f"{path}\n```\n{body}\n```" for path, body in files)


def synthesize_shortcut(graph: TaskGraph, i: int, j: int, synthesizer: AgentBackend) -> Shortcut:
    """Ask ``synthesizer`` for an instruction taking ``n_i`` directly to ``n_j``."""
    if i >= j:
        raise ForwardViolation(f"shortcuts must point forward, got ({i}, {j})")
    source, target = graph.nodes[i], graph.nodes[j]
    if source.content == target.content and source.files == target.files:
        return Shortcut(i, j, NO_CHANGE_SENTINEL, ResourceDelta(), origin_task_id=graph.task_id)

    steps = "\n".join(f"{k}. {graph.edges[k - 1].instruction}" for k in range(i + 1, j + 1))
    prompt = (
        f"Task: {graph.task_text}\n\n"
        f"Source version (n_{i}):\n{_source_text(source.files)}\n\n"
        f"Target version (n_{j}):\n{_source_text(target.files)}\n\n"
        f"Instructions that were followed in between:\n{steps}"
    )
    request = AgentRequest(
        role_profile=SYNTHESIZER_ROLE,
        system_prompt=SYNTHESIS_SYSTEM_PROMPT,
        messages=[("user", prompt)],
        variables={
            "i": i,
            "j": j,
            "task_id": graph.task_id,
            "source_files": list(source.files),
            "target_files": list(target.files),
        },
    )
    try:
        reply = synthesizer.complete(request)
    except ChainShortError as exc:
        raise SynthesisError(f"{graph.task_id} ({i}, {j}): {exc}") from exc
    text = reply.text.strip() or NO_CHANGE_SENTINEL
    return Shortcut(i, j, text, reply.usage, origin_task_id=graph.task_id)


def precompute_values(graph: TaskGraph, shortcuts: Sequence[Shortcut], embedder: Embedder) -> list[Shortcut]:
    """Return copies of ``shortcuts`` with ``value = w(n_j) - w(n_i)``."""
    for node in graph.nodes:
        if node.embedding is None or node.compilable is None:
            raise MissingAnnotation(f"{graph.task_id}: node {node.index} is not annotated")
    task_embedding = embedder.embed(graph.task_text)
    final_embedding = graph.final_node.embedding
    weights = [node_weight(node, task_embedding, final_embedding) for node in graph.nodes]
    return [
        Shortcut(
            s.from_index,
            s.to_index,
            s.instruction,
            s.consumption,
            shortcut_value(weights[s.to_index], weights[s.from_index]),
            s.origin_task_id,
        )
        for s in shortcuts
    ]


def build_stats_corpus(shortcuts: Sequence[Shortcut]) -> StatsCorpus:
    if not shortcuts:
        raise EmptyCorpus("cannot build a stats corpus from zero shortcuts")
    return StatsCorpus(
        [s.consumption.time_seconds for s in shortcuts],
        [s.consumption.tokens for s in shortcuts],
    )


def _mine_one(
    graph: TaskGraph,
    synthesizer: AgentBackend,
    embedder: Embedder,
    profile: LanguageProfile | None,
    final_only: bool,
    max_pairs: int | None,
) -> list[Shortcut]:
    annotate_graph(graph, embedder, profile)
    if profile is None:
        for node in graph.nodes:
            if node.compilable is None:
                raise MissingAnnotation(f"{graph.task_id}: node {node.index} has no compilable flag")
    mined = []
    for i, j in enumerate_pairs(graph, final_only=final_only, max_pairs=max_pairs):
        try:
            mined.append(synthesize_shortcut(graph, i, j, synthesizer))
        except SynthesisError as exc:
            log.warning("skipping shortcut: %s", exc)
    return precompute_values(graph, mined, embedder)


def mine_library(
    graphs: Sequence[TaskGraph],
    synthesizer: AgentBackend,
    embedder: Embedder,
    *,
    profile: LanguageProfile | None = PYTHON_PROFILE,
    final_only: bool = False,
    max_pairs: int | None = None,
    workers: int = 1,
) -> ShortcutLibrary:
    """Mine every graph into one library.

    ``workers > 1`` fans out across trajectories; only use it with a
    synthesizer whose replies do not depend on call order.
    """
    graphs = [g for g in graphs if len(g.nodes) >= 2]
    if not graphs:
        raise EmptyCorpus("no trajectory has at least two nodes")
    seen: set[str] = set()
    for g in graphs:
        if g.task_id in seen:
            raise ParseError(f"duplicate task_id {g.task_id!r}")
        seen.add(g.task_id)

    args = (synthesizer, embedder, profile, final_only, max_pairs)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_graph = list(pool.map(lambda g: _mine_one(g, *args), graphs))
    else:
        per_graph = [_mine_one(g, *args) for g in graphs]

    entries = [s for shortcuts in per_graph for s in shortcuts]
    tasks = {
        g.task_id: ReferenceTask(g.task_id, g.task_text, g.edge_count())
        for g, shortcuts in zip(graphs, per_graph)
        if shortcuts
    }
    return ShortcutLibrary(entries, build_stats_corpus(entries), tasks)


def load_trajectories(directory: str | Path, profile: LanguageProfile | None = PYTHON_PROFILE) -> list[TaskGraph]:
    """Read every ``*.jsonl`` under ``directory`` in sorted path order."""
    graphs = []
    for path in sorted(Path(directory).rglob("*.jsonl")):
        try:
            graphs.append(ingest_trajectory(path.read_text(encoding="utf-8"), profile))
        except ParseError as exc:
            raise ParseError(f"{path}: {exc}") from exc
    return graphs


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def save_library(library: ShortcutLibrary, out_dir: str | Path) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    shortcuts_path = out / "shortcuts.json"
    stats_path = out / "stats.json"
    shortcuts_path.write_text(_dump(library.to_records()), encoding="utf-8")
    stats_path.write_text(_dump(library.corpus.to_dict()), encoding="utf-8")
    return shortcuts_path, stats_path


def load_library(directory: str | Path) -> ShortcutLibrary:
    base = Path(directory)
    try:
        records = json.loads((base / "shortcuts.json").read_text(encoding="utf-8"))
        stats = json.loads((base / "stats.json").read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{base}: {exc}") from exc
    if not isinstance(records, list):
        raise ParseError(f"{base / 'shortcuts.json'}: expected a JSON array")
    return ShortcutLibrary.from_records(records, StatsCorpus.from_dict(stats))
