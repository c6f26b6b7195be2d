"""Resource-aware multi-agent task execution with mined shortcut instructions."""

from .backend import AgentReply, AgentRequest, ChatCompletionsBackend, ScriptedBackend, ScriptEntry, count_tokens_fallback
from .budget import Budget, new_budget
from .embedder import HttpEmbedder, OfflineEmbedder, cosine
from .graph import InstructionEdge, ResourceDelta, Shortcut, SolutionState, TaskGraph, new_graph
from .mining import DiffSynthesizer, ShortcutLibrary, StatsCorpus, build_stats_corpus, mine_library
from .pipeline import RunConfig, RunResult, run_task, select_shortcut
from .retrieval import ReferenceIndex, index_tasks, retrieve_reference
from .sandbox import ExecutionVerdict, LanguageProfile, check_compilable
from .scoring import emergency_factor, harmonic_mean, node_weight, percentile_ranks, shortcut_value, utility

__version__ = "0.1.0"
