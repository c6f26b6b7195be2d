"""Budget-aware chat-chain executor.

One run retrieves the most similar historical task, lets the programmer write
an initial solution, then loops reviewer -> programmer rounds.  Before each
round the reference task's shortcuts departing at or after the current
aligned reference node are filtered for feasibility, scored with
:func:`~chainshort.scoring.utility` and the best one (if it clears
``utility_floor``) is handed to the reviewer.  The run stops when the
inference chain has as many edges as the reference chain, when the budget is
exhausted, or when the reviewer declares the work finished and no shortcut
applies.
"""

from __future__ import annotations

import json
import re
import uuid
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Sequence

from .backend import AgentBackend, AgentRequest
from .budget import Budget
from .embedder import Embedder
from .errors import ConfigurationError, MissingAnnotation, ProviderError
from .graph import ResourceDelta, Shortcut, SolutionState, TaskGraph, new_graph
from .mining import ShortcutLibrary, StatsCorpus
from .retrieval import ReferenceIndex, retrieve_reference
from .sandbox import PYTHON_PROFILE, ExecutionVerdict, LanguageProfile, check_compilable
from .scoring import emergency_factor, node_weight, shortcut_cost, utility

__all__ = [
    "RunConfig",
    "RunResult",
    "AppliedShortcut",
    "ScoredShortcut",
    "score_shortcuts",
    "select_shortcut",
    "run_task",
    "parse_code_reply",
    "render_files",
    "COMPLETION_SIGNAL",
]

PROGRAMMER = "programmer"
REVIEWER = "reviewer"
COMPLETION_SIGNAL = "<INFO> Finished"

# Default prompts: generic placeholders meant to be replaced per deployment.
# PREAMBLE stands in for the demand-analysis and language-selection phases.
PREAMBLE = (
    "Demand analysis is done: the product is a standalone application. "
    "Language chosen: Python. Deliver complete, runnable code."
)
PROGRAMMER_SYSTEM_PROMPT = (
    "You are a programmer. " + PREAMBLE + " Reply with every file as its file name on one "
    "line followed by a fenced code block. Always write the full content of each file."
)
REVIEWER_SYSTEM_PROMPT = (
    "You are a code reviewer. Give the programmer one concrete, prioritized instruction that "
    "improves the code. If the code fully satisfies the task and nothing needs changing, reply "
    f"with exactly '{COMPLETION_SIGNAL}'."
)

TERMINATED_REFERENCE = "reference-length"
TERMINATED_BUDGET = "budget-exhausted"
TERMINATED_NATURAL = "natural-completion"


@dataclass(frozen=True)
class RunConfig:
    """Per-run settings; the three ``disable_*`` flags are the ablation switches."""

    time_budget: float = 600.0
    token_budget: int = 20000
    disable_selection: bool = False
    disable_cost: bool = False
    disable_gamma: bool = False
    # False runs a plain chat chain: no reference, no shortcuts, capped by max_rounds
    use_shortcuts: bool = True
    utility_floor: float = 0.0
    language_profile: LanguageProfile = PYTHON_PROFILE
    reference_k: int = 1
    min_reference_sim: float = 0.0
    max_rounds: int = 10
    temperature: float = 0.2

    def __post_init__(self) -> None:
        if self.utility_floor != self.utility_floor or abs(self.utility_floor) == float("inf"):
            raise ConfigurationError("utility_floor must be finite")
        if self.reference_k <= 0 or self.max_rounds <= 0:
            raise ConfigurationError("reference_k and max_rounds must be positive")


@dataclass(frozen=True)
class ScoredShortcut:
    shortcut: Shortcut
    position: int
    feasible: bool
    value: float
    cost: float
    gamma: float
    utility: float


@dataclass(frozen=True)
class AppliedShortcut:
    origin_task_id: str
    from_index: int
    to_index: int
    step: int
    ledger_index: int
    estimate: ResourceDelta
    time_remaining: float
    tokens_remaining: int
    value: float
    cost: float
    gamma: float
    utility: float


@dataclass
class RunResult:
    inference_graph: TaskGraph
    final_solution: SolutionState
    ledger: list[ResourceDelta]
    terminated_by: str
    within_budget: bool
    applied_shortcuts: list[AppliedShortcut]
    budget: Budget
    reference: tuple[str, float] | None = None
    reference_edge_count: int | None = None
    gamma_trace: list[float] = field(default_factory=list)

    @property
    def path_length(self) -> int:
        return self.inference_graph.edge_count()

    @property
    def total_usage(self) -> ResourceDelta:
        return ResourceDelta.total(self.ledger)

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.inference_graph.task_id,
            "task_text": self.inference_graph.task_text,
            "terminated_by": self.terminated_by,
            "within_budget": self.within_budget,
            "path_length": self.path_length,
            "final_node": self.final_solution.index,
            "reference": None
            if self.reference is None
            else {"task_id": self.reference[0], "similarity": self.reference[1]},
            "reference_edge_count": self.reference_edge_count,
            "budget": {
                "time_allocated": self.budget.time_allocated,
                "tokens_allocated": self.budget.tokens_allocated,
                "time_used": self.budget.time_used,
                "tokens_used": self.budget.tokens_used,
            },
            "ledger": [{"time_seconds": d.time_seconds, "tokens": d.tokens} for d in self.ledger],
            "gamma_trace": self.gamma_trace,
            "applied_shortcuts": [
                {
                    "origin_task_id": a.origin_task_id,
                    "from_index": a.from_index,
                    "to_index": a.to_index,
                    "step": a.step,
                    "ledger_index": a.ledger_index,
                    "estimate": {"time_seconds": a.estimate.time_seconds, "tokens": a.estimate.tokens},
                    "time_remaining": a.time_remaining,
                    "tokens_remaining": a.tokens_remaining,
                    "value": a.value,
                    "cost": a.cost,
                    "gamma": a.gamma,
                    "utility": a.utility,
                }
                for a in self.applied_shortcuts
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# Code replies
# ---------------------------------------------------------------------------

_FILE_BLOCK = re.compile(
    r"^[ \t]*`?(?P<name>[\w./-]+\.\w+)`?:?[ \t]*\n```[\w+-]*[ \t]*\n(?P<body>.*?)\n```",
    re.MULTILINE | re.DOTALL,
)
_BARE_BLOCK = re.compile(r"```[\w+-]*[ \t]*\n(?P<body>.*?)\n```", re.DOTALL)


def parse_code_reply(text: str, default_name: str = "main.py") -> list[tuple[str, str]]:
    """Extract ``(path, body)`` files from a programmer reply.

    Recognizes ``name.ext`` lines followed by a fenced block; a single
    unnamed fenced block or a reply with no fences becomes ``default_name``.
    """
    files: dict[str, str] = {}
    for match in _FILE_BLOCK.finditer(text):
        files[match.group("name")] = match.group("body")
    if files:
        return sorted(files.items())
    bare = _BARE_BLOCK.search(text)
    body = bare.group("body") if bare else text.strip()
    return [(default_name, body)] if body.strip() else []


def render_files(files: Sequence[tuple[str, str]]) -> str:
    return "\n\n".join(f"{path}\n```\n{body}\n```" for path, body in files)


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------


def score_shortcuts(
    candidates: Sequence[Shortcut],
    corpus: StatsCorpus | None,
    budget: Budget,
    config: RunConfig,
) -> list[ScoredShortcut]:
    """Score every candidate; infeasible ones are marked, not dropped."""
    gamma = 0.0 if config.disable_gamma else emergency_factor(budget).gamma
    scored = []
    for position, shortcut in enumerate(candidates):
        if shortcut.value is None:
            raise MissingAnnotation(
                f"shortcut {shortcut.origin_task_id}({shortcut.from_index},{shortcut.to_index}) has no value"
            )
        if config.disable_cost:
            cost = 0.0
        else:
            if corpus is None:
                raise ConfigurationError("cost scoring needs a stats corpus")
            cost = shortcut_cost(corpus, shortcut.consumption.time_seconds, shortcut.consumption.tokens).cost
        scored.append(
            ScoredShortcut(
                shortcut=shortcut,
                position=position,
                feasible=budget.feasible(shortcut.consumption),
                value=shortcut.value,
                cost=cost,
                gamma=gamma,
                utility=utility(shortcut.value, cost, gamma),
            )
        )
    return scored


def _preference(item: ScoredShortcut) -> tuple:
    # higher utility, then longer span, then cheaper, then earlier departure
    s = item.shortcut
    return (-item.utility, -s.span, item.cost, s.from_index, item.position)


def _best(scored: Sequence[ScoredShortcut], config: RunConfig) -> ScoredShortcut | None:
    eligible = [
        item
        for item in scored
        if (item.feasible or config.disable_selection) and item.utility > config.utility_floor
    ]
    return min(eligible, key=_preference) if eligible else None


def select_shortcut(
    candidates: Sequence[Shortcut],
    corpus: StatsCorpus | None,
    budget: Budget,
    config: RunConfig,
) -> Shortcut | None:
    """Highest-utility feasible candidate above the floor, or ``None``."""
    best = _best(score_shortcuts(candidates, corpus, budget, config), config)
    return None if best is None else best.shortcut


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

Checker = Callable[[SolutionState, LanguageProfile], ExecutionVerdict]


class _Run:
    def __init__(
        self,
        task_text: str,
        task_id: str,
        config: RunConfig,
        backend: AgentBackend,
        embedder: Embedder,
        checker: Checker | None,
    ) -> None:
        self.config = config
        self.backend = backend
        self.embedder = embedder
        self.checker = checker
        self.graph = new_graph(task_id, task_text)
        self.budget = Budget(config.time_budget, config.token_budget)
        self.ledger: list[ResourceDelta] = []
        self.applied: list[AppliedShortcut] = []
        self.gamma_trace: list[float] = []
        self.pending = ResourceDelta()

    def call(self, role: str, system_prompt: str, prompt: str) -> str:
        request = AgentRequest(role, system_prompt, [("user", prompt)], self.config.temperature)
        try:
            reply = self.backend.complete(request)
        except ProviderError as exc:
            # time burnt on failed retries still counts against the budget
            self.charge(ResourceDelta(exc.elapsed_seconds, 0))
            if self.budget.exhausted():
                raise _BudgetSpent from exc
            raise
        self.charge(reply.usage)
        return reply.text

    def charge(self, usage: ResourceDelta) -> None:
        self.budget.record_usage(usage)
        self.pending = self.pending + usage

    def close_step(self) -> ResourceDelta:
        """Move the current step's accumulated usage into the ledger."""
        step, self.pending = self.pending, ResourceDelta()
        self.ledger.append(step)
        return step

    def annotate(self, index: int) -> None:
        node = self.graph.nodes[index]
        if self.checker is not None:
            node.compilable = self.checker(node, self.config.language_profile).compilable

    def best_so_far(self) -> SolutionState:
        candidates = self.graph.nodes[1:] or self.graph.nodes
        task_vec = self.embedder.embed(self.graph.task_text)
        final_vec = self.embedder.embed(self.graph.final_node.content)
        best, best_weight = candidates[-1], float("-inf")
        for node in candidates:
            probe = replace(
                node,
                embedding=self.embedder.embed(node.content),
                compilable=True if node.compilable is None else node.compilable,
            )
            weight = node_weight(probe, task_vec, final_vec).weight
            # ties keep the later node
            if weight >= best_weight:
                best, best_weight = node, weight
        return best


class _BudgetSpent(Exception):
    pass


def run_task(
    task_text: str,
    config: RunConfig,
    library: ShortcutLibrary | None,
    index: ReferenceIndex | None,
    backend: AgentBackend,
    embedder: Embedder,
    checker: Checker | None = check_compilable,
    task_id: str | None = None,
) -> RunResult:
    """Execute one task end to end; see the module docstring for the loop."""
    if task_id is None:
        task_id = "task-" + uuid.uuid5(uuid.NAMESPACE_URL, task_text).hex[:12]
    run = _Run(task_text, task_id, config, backend, embedder, checker)

    reference: tuple[str, float] | None = None
    reference_shortcuts: list[Shortcut] = []
    corpus: StatsCorpus | None = None
    limit = config.max_rounds
    reference_edges: int | None = None
    if config.use_shortcuts:
        if library is None or not library.entries or index is None or not index.entries:
            raise ConfigurationError("shortcut runs need a non-empty library and reference index")
        corpus = library.corpus
        hits = retrieve_reference(index, task_text, config.reference_k, embedder)
        top_id, top_sim = hits[0]
        if top_sim >= config.min_reference_sim:
            reference = (top_id, top_sim)
            reference_edges = library.tasks[top_id].edge_count
            limit = reference_edges
            reference_shortcuts = library.shortcuts_for(top_id)

    terminated_by = TERMINATED_REFERENCE
    try:
        code = run.call(PROGRAMMER, PROGRAMMER_SYSTEM_PROMPT, f"Task: {task_text}\nWrite the initial version.")
        files = parse_code_reply(code)
        usage = run.close_step()
        run.graph.append_step(f"Write the initial version of: {task_text}", render_files(files), files, usage)
        run.annotate(1)
        position = 1

        while True:
            if run.budget.exhausted():
                terminated_by = TERMINATED_BUDGET
                break
            if run.graph.edge_count() >= limit:
                terminated_by = TERMINATED_REFERENCE
                break

            run.gamma_trace.append(emergency_factor(run.budget).gamma)
            candidates = [s for s in reference_shortcuts if s.from_index >= position]
            chosen = _best(score_shortcuts(candidates, corpus, run.budget, config), config) if candidates else None
            snapshot = run.budget.snapshot()

            current = run.graph.final_node
            prompt = f"Task: {task_text}\n\nCurrent code:\n{current.content or '(empty)'}"
            if chosen is not None:
                prompt += (
                    "\n\nExperience from a similar finished task. Adapt it into your instruction:\n"
                    + chosen.shortcut.instruction
                )
            feedback = run.call(REVIEWER, REVIEWER_SYSTEM_PROMPT, prompt)

            if run.budget.exhausted():
                run.close_step()
                terminated_by = TERMINATED_BUDGET
                break
            if chosen is None and COMPLETION_SIGNAL.lower() in feedback.lower():
                run.close_step()
                terminated_by = TERMINATED_NATURAL
                break

            code = run.call(
                PROGRAMMER,
                PROGRAMMER_SYSTEM_PROMPT,
                f"Task: {task_text}\n\nCurrent code:\n{current.content or '(empty)'}\n\nReview:\n{feedback}",
            )
            # files the programmer did not resend are carried over unchanged
            merged = dict(current.files)
            merged.update(parse_code_reply(code))
            files = sorted(merged.items())
            step_usage = run.close_step()
            origin = None
            if chosen is not None:
                s = chosen.shortcut
                origin = (s.origin_task_id, s.from_index, s.to_index)
            new_index = run.graph.append_step(feedback, render_files(files), files, step_usage, origin)
            if chosen is not None:
                s = chosen.shortcut
                run.applied.append(
                    AppliedShortcut(
                        origin_task_id=s.origin_task_id,
                        from_index=s.from_index,
                        to_index=s.to_index,
                        step=new_index,
                        ledger_index=len(run.ledger) - 1,
                        estimate=s.consumption,
                        time_remaining=snapshot.time_remaining,
                        tokens_remaining=snapshot.tokens_remaining,
                        value=chosen.value,
                        cost=chosen.cost,
                        gamma=chosen.gamma,
                        utility=chosen.utility,
                    )
                )
                position = s.to_index
            else:
                position += 1
            run.annotate(new_index)
    except _BudgetSpent:
        run.close_step()
        terminated_by = TERMINATED_BUDGET

    if terminated_by == TERMINATED_BUDGET:
        final = run.best_so_far()
    else:
        final = run.graph.final_node
    return RunResult(
        inference_graph=run.graph,
        final_solution=final,
        ledger=run.ledger,
        terminated_by=terminated_by,
        within_budget=not run.budget.exhausted(),
        applied_shortcuts=run.applied,
        budget=run.budget,
        reference=reference,
        reference_edge_count=reference_edges,
        gamma_trace=run.gamma_trace,
    )
