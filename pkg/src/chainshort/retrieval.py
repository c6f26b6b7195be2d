"""Reference-task retrieval by embedding similarity (exact linear scan)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .embedder import Embedder, cosine
from .errors import InvalidArgument, RetrievalIndexError
from .graph import TaskGraph
from .mining import ShortcutLibrary

__all__ = ["ReferenceIndex", "index_tasks", "retrieve_reference"]


@dataclass
class ReferenceIndex:
    entries: list[tuple[str, str, np.ndarray]]
    dimension: int
    embedder: Embedder | None = None

    def __len__(self) -> int:
        return len(self.entries)


def index_tasks(
    library: ShortcutLibrary,
    embedder: Embedder,
    graphs: Sequence[TaskGraph] | None = None,
) -> ReferenceIndex:
    """Embed one entry per training task.

    Task texts come from ``graphs`` when given, otherwise from the library's
    own task table (which is what ``shortcuts.json`` persists).
    """
    if graphs is not None:
        pairs = [(g.task_id, g.task_text) for g in graphs]
    else:
        pairs = [(t.task_id, t.task_text) for t in library.tasks.values()]
    if not pairs:
        raise RetrievalIndexError("cannot index an empty task list")
    seen: set[str] = set()
    entries = []
    for task_id, text in pairs:
        if task_id in seen:
            raise RetrievalIndexError(f"duplicate task_id {task_id!r}")
        seen.add(task_id)
        entries.append((task_id, text, embedder.embed(text)))
    dims = {vec.shape[0] for _, _, vec in entries}
    if len(dims) != 1:
        raise RetrievalIndexError(f"embeddings disagree on dimension: {sorted(dims)}")
    return ReferenceIndex(entries, dims.pop(), embedder)


def retrieve_reference(
    index: ReferenceIndex,
    task_text: str,
    k: int = 1,
    embedder: Embedder | None = None,
) -> list[tuple[str, float]]:
    """Top-``k`` ``(task_id, similarity)``; ties go to the smaller task_id."""
    if k <= 0:
        raise InvalidArgument("k must be positive")
    if not index.entries:
        raise RetrievalIndexError("index is empty")
    embedder = embedder or index.embedder
    if embedder is None:
        raise InvalidArgument("no embedder available for the query")
    query = embedder.embed(task_text)
    scored = [(task_id, cosine(query, vec)) for task_id, _, vec in index.entries]
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[:k]
