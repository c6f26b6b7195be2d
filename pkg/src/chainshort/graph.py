"""Chain graph of one task execution.

A task run is a chain of solution states ``n_0 .. n_k`` joined by instruction
edges ``(n_j -> n_{j+1})``.  Shortcuts are extra forward edges ``(n_i, n_j)``
with ``i < j`` that carry an instruction describing the whole transition.

The trajectory file is JSONL: a header line ``{task_id, task_text}``, one line
per node ``{index, content, files, compilable}``, one line per edge
``{from, to, instruction, time_seconds, tokens}`` and optionally one line per
shortcut (``from_index``/``to_index`` keyed records).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import ForwardViolation, InvalidArgument, ParseError, UnknownNode

__all__ = [
    "ResourceDelta",
    "SolutionState",
    "InstructionEdge",
    "Shortcut",
    "TaskGraph",
    "new_graph",
    "graph_to_jsonl",
    "graph_from_jsonl",
    "read_trajectory",
    "write_trajectory",
]


@dataclass(frozen=True)
class ResourceDelta:
    """Time and token usage of one call, step or shortcut."""

    time_seconds: float = 0.0
    tokens: int = 0

    def __post_init__(self) -> None:
        if not math.isfinite(self.time_seconds) or self.time_seconds < 0:
            raise InvalidArgument(f"time_seconds must be finite and >= 0, got {self.time_seconds!r}")
        if isinstance(self.tokens, bool) or int(self.tokens) != self.tokens or self.tokens < 0:
            raise InvalidArgument(f"tokens must be a non-negative integer, got {self.tokens!r}")
        object.__setattr__(self, "tokens", int(self.tokens))
        object.__setattr__(self, "time_seconds", float(self.time_seconds))

    def __add__(self, other: ResourceDelta) -> ResourceDelta:
        return ResourceDelta(self.time_seconds + other.time_seconds, self.tokens + other.tokens)

    @classmethod
    def total(cls, deltas: Iterable[ResourceDelta]) -> ResourceDelta:
        # left-to-right float addition, the same order a Budget accumulates in
        result = cls()
        for delta in deltas:
            result = result + delta
        return result


@dataclass
class SolutionState:
    """One node of the chain: a complete code snapshot.

    ``content`` is the flat text used for embeddings; ``files`` is the
    ``(path, body)`` list that metrics and the sandbox operate on.
    """

    index: int
    content: str = ""
    files: list[tuple[str, str]] = field(default_factory=list)
    embedding: np.ndarray | None = None
    compilable: bool | None = None

    def __post_init__(self) -> None:
        if self.index < 0:
            raise InvalidArgument("node index must be non-negative")
        self.files = [(str(p), str(b)) for p, b in self.files]
        if self.index == 0 and (self.content or self.files):
            raise InvalidArgument("the initial state n_0 must be empty")
        if self.embedding is not None:
            self.embedding = np.asarray(self.embedding, dtype=float)
            norm = float(np.linalg.norm(self.embedding))
            if norm != 0.0 and abs(norm - 1.0) > 1e-6:
                raise InvalidArgument(f"embedding must be unit-norm or zero, got norm {norm}")


@dataclass(frozen=True)
class InstructionEdge:
    from_index: int
    to_index: int
    instruction: str
    consumption: ResourceDelta = ResourceDelta()
    # (origin_task_id, from_index, to_index) of a reference shortcut applied on this step
    shortcut_origin: tuple[str, int, int] | None = None

    def __post_init__(self) -> None:
        if self.to_index != self.from_index + 1:
            raise InvalidArgument(
                f"ordinary edges connect adjacent nodes, got {self.from_index}->{self.to_index}"
            )


@dataclass
class Shortcut:
    """Forward edge ``(from_index, to_index)`` mined from a historical trajectory."""

    from_index: int
    to_index: int
    instruction: str
    consumption: ResourceDelta = ResourceDelta()
    value: float | None = None
    origin_task_id: str = ""

    def __post_init__(self) -> None:
        if self.from_index >= self.to_index:
            raise ForwardViolation(
                f"shortcuts must point forward, got ({self.from_index}, {self.to_index})"
            )

    @property
    def span(self) -> int:
        return self.to_index - self.from_index

    def to_record(self) -> dict[str, Any]:
        return {
            "origin_task_id": self.origin_task_id,
            "from_index": self.from_index,
            "to_index": self.to_index,
            "instruction": self.instruction,
            "consumption": {
                "time_seconds": self.consumption.time_seconds,
                "tokens": self.consumption.tokens,
            },
            "value": self.value,
        }

    @classmethod
    def from_record(cls, record: dict[str, Any]) -> Shortcut:
        try:
            consumption = record["consumption"]
            return cls(
                from_index=int(record["from_index"]),
                to_index=int(record["to_index"]),
                instruction=str(record["instruction"]),
                consumption=ResourceDelta(consumption["time_seconds"], consumption["tokens"]),
                value=None if record.get("value") is None else float(record["value"]),
                origin_task_id=str(record["origin_task_id"]),
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed shortcut record: {exc}") from exc


@dataclass
class TaskGraph:
    task_id: str
    task_text: str
    nodes: list[SolutionState] = field(default_factory=lambda: [SolutionState(0)])
    edges: list[InstructionEdge] = field(default_factory=list)
    shortcuts: list[Shortcut] = field(default_factory=list)

    @property
    def final_node(self) -> SolutionState:
        """Highest-index node; the goal state when the chain is complete."""
        return self.nodes[-1]

    def edge_count(self) -> int:
        """Number of instruction edges, i.e. interaction rounds performed."""
        return len(self.edges)

    def append_step(
        self,
        instruction: str,
        content: str,
        files: Sequence[tuple[str, str]] | None = None,
        usage: ResourceDelta = ResourceDelta(),
        shortcut_origin: tuple[str, int, int] | None = None,
    ) -> int:
        """Append a solution reached by following ``instruction``; return its index."""
        index = len(self.nodes)
        self.nodes.append(SolutionState(index, content, list(files or [])))
        self.edges.append(InstructionEdge(index - 1, index, instruction, usage, shortcut_origin))
        return index

    def add_shortcut(
        self,
        i: int,
        j: int,
        instruction: str,
        consumption: ResourceDelta = ResourceDelta(),
    ) -> Shortcut:
        if i >= j:
            raise ForwardViolation(f"shortcuts must point forward, got ({i}, {j})")
        for k in (i, j):
            if not 0 <= k < len(self.nodes):
                raise UnknownNode(f"node {k} does not exist in a {len(self.nodes)}-node graph")
        shortcut = Shortcut(i, j, instruction, consumption, origin_task_id=self.task_id)
        self.shortcuts.append(shortcut)
        return shortcut


def new_graph(task_id: str, task_text: str) -> TaskGraph:
    """Create a graph holding only the empty initial state ``n_0``."""
    if not task_text or not task_text.strip():
        raise InvalidArgument("task_text must be non-empty")
    return TaskGraph(task_id=task_id, task_text=task_text)


# ---------------------------------------------------------------------------
# JSONL trajectory format
# ---------------------------------------------------------------------------


def _node_record(node: SolutionState) -> dict[str, Any]:
    record: dict[str, Any] = {
        "index": node.index,
        "content": node.content,
        "files": [{"path": p, "body": b} for p, b in node.files],
        "compilable": node.compilable,
    }
    if node.embedding is not None:
        record["embedding"] = [float(x) for x in node.embedding]
    return record


def _edge_record(edge: InstructionEdge) -> dict[str, Any]:
    record: dict[str, Any] = {
        "from": edge.from_index,
        "to": edge.to_index,
        "instruction": edge.instruction,
        "time_seconds": edge.consumption.time_seconds,
        "tokens": edge.consumption.tokens,
    }
    if edge.shortcut_origin is not None:
        origin_task_id, i, j = edge.shortcut_origin
        record["shortcut"] = {"origin_task_id": origin_task_id, "from_index": i, "to_index": j}
    return record


def graph_to_jsonl(graph: TaskGraph) -> str:
    records: list[dict[str, Any]] = [{"task_id": graph.task_id, "task_text": graph.task_text}]
    records += [_node_record(n) for n in graph.nodes]
    records += [_edge_record(e) for e in graph.edges]
    records += [s.to_record() for s in graph.shortcuts]
    return "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in records)


def _parse_files(raw: Any, line: int) -> list[tuple[str, str]]:
    if not isinstance(raw, list):
        raise ParseError("'files' must be a list", line)
    files = []
    for item in raw:
        if isinstance(item, dict) and "path" in item and "body" in item:
            files.append((str(item["path"]), str(item["body"])))
        elif isinstance(item, (list, tuple)) and len(item) == 2:
            files.append((str(item[0]), str(item[1])))
        else:
            raise ParseError(f"malformed file entry {item!r}", line)
    return files


def graph_from_jsonl(lines: str | Iterable[str]) -> TaskGraph:
    """Parse a trajectory; raises :class:`ParseError` naming the offending line."""
    if isinstance(lines, str):
        lines = lines.splitlines()
    header: dict[str, Any] | None = None
    nodes: list[SolutionState] = []
    edges: list[InstructionEdge] = []
    shortcuts: list[tuple[int, dict[str, Any]]] = []

    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            record = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON ({exc.msg})", lineno) from exc
        if not isinstance(record, dict):
            raise ParseError("each line must be a JSON object", lineno)

        try:
            if header is None:
                if "task_id" not in record or "task_text" not in record:
                    raise ParseError("first line must carry task_id and task_text", lineno)
                header = record
            elif "index" in record:
                index = int(record["index"])
                if index != len(nodes):
                    what = "missing initial node n_0" if not nodes else f"expected node {len(nodes)}"
                    raise ParseError(f"{what}, got index {index}", lineno)
                compilable = record.get("compilable")
                nodes.append(
                    SolutionState(
                        index=index,
                        content=str(record.get("content", "")),
                        files=_parse_files(record.get("files", []), lineno),
                        embedding=record.get("embedding"),
                        compilable=None if compilable is None else bool(compilable),
                    )
                )
            elif "from" in record and "to" in record:
                origin = record.get("shortcut")
                edges.append(
                    InstructionEdge(
                        from_index=int(record["from"]),
                        to_index=int(record["to"]),
                        instruction=str(record.get("instruction", "")),
                        consumption=ResourceDelta(record["time_seconds"], record["tokens"]),
                        shortcut_origin=None
                        if origin is None
                        else (str(origin["origin_task_id"]), int(origin["from_index"]), int(origin["to_index"])),
                    )
                )
            elif "from_index" in record:
                shortcuts.append((lineno, record))
            else:
                raise ParseError(f"unrecognized record with keys {sorted(record)}", lineno)
        except ParseError:
            raise
        except (InvalidArgument, KeyError, TypeError, ValueError) as exc:
            raise ParseError(str(exc), lineno) from exc

    if header is None:
        raise ParseError("empty trajectory")
    if not nodes:
        raise ParseError("missing initial node n_0")
    if not str(header["task_text"]).strip():
        raise ParseError("task_text must be non-empty", 1)
    graph = TaskGraph(str(header["task_id"]), str(header["task_text"]), nodes, [], [])
    for k, edge in enumerate(edges):
        if edge.from_index != k or edge.to_index >= len(nodes):
            raise ParseError(f"edge {edge.from_index}->{edge.to_index} does not extend the chain")
        graph.edges.append(edge)
    if len(edges) != len(nodes) - 1:
        raise ParseError(f"{len(nodes)} nodes need {len(nodes) - 1} edges, found {len(edges)}")
    for lineno, record in shortcuts:
        try:
            shortcut = Shortcut.from_record(record)
        except (InvalidArgument, ValueError) as exc:
            raise ParseError(str(exc), lineno) from exc
        if shortcut.to_index >= len(nodes):
            raise ParseError(f"shortcut references unknown node {shortcut.to_index}", lineno)
        graph.shortcuts.append(shortcut)
    return graph


def write_trajectory(path: str | Path, graph: TaskGraph) -> None:
    Path(path).write_text(graph_to_jsonl(graph), encoding="utf-8")


def read_trajectory(path: str | Path) -> TaskGraph:
    return graph_from_jsonl(Path(path).read_text(encoding="utf-8"))
