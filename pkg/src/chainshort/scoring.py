"""Shortcut scoring: node weight, value, percentile cost, emergency factor, utility.

All functions are pure.  The selection utility combines them as::

    U = (1 - gamma) * value - gamma * cost,   gamma clamped to [0, 1]

so value dominates while resources are plentiful and cost takes over as the
budget runs out.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .embedder import cosine
from .errors import EmptyCorpus, InvalidArgument, InvalidBudget, MissingAnnotation
from .graph import SolutionState

if TYPE_CHECKING:
    from .budget import Budget
    from .mining import StatsCorpus

__all__ = [
    "NodeWeight",
    "CostBreakdown",
    "EmergencyFactor",
    "node_weight",
    "shortcut_value",
    "percentile_ranks",
    "harmonic_mean",
    "shortcut_cost",
    "emergency_factor",
    "utility",
]


@dataclass(frozen=True)
class NodeWeight:
    node_index: int
    sim_task: float
    sim_final: float
    compilable: int
    weight: float


@dataclass(frozen=True)
class CostBreakdown:
    alpha: float
    beta: float
    cost: float


@dataclass(frozen=True)
class EmergencyFactor:
    gamma_t: float
    gamma_tau: float
    gamma: float


def node_weight(
    solution: SolutionState, task_embedding: np.ndarray, final_embedding: np.ndarray
) -> NodeWeight:
    """``sim(node, task) * sim(node, final) * [compilable]``, unclamped."""
    if solution.embedding is None:
        raise MissingAnnotation(f"node {solution.index} has no embedding")
    if solution.compilable is None:
        raise MissingAnnotation(f"node {solution.index} has no compilable flag")
    sim_task = cosine(solution.embedding, task_embedding)
    sim_final = cosine(solution.embedding, final_embedding)
    indicator = 1 if solution.compilable else 0
    return NodeWeight(solution.index, sim_task, sim_final, indicator, sim_task * sim_final * indicator)


def shortcut_value(w_target: NodeWeight | float, w_source: NodeWeight | float) -> float:
    """Weight gained by moving from the source node to the target node."""
    target = w_target.weight if isinstance(w_target, NodeWeight) else float(w_target)
    source = w_source.weight if isinstance(w_source, NodeWeight) else float(w_source)
    return target - source


def percentile_ranks(corpus: StatsCorpus, t0: float, tau0: int) -> tuple[float, float]:
    """Fraction of corpus entries strictly below ``t0`` and ``tau0``."""
    if corpus.size == 0:
        raise EmptyCorpus("percentile ranks need a non-empty corpus")
    alpha = bisect_left(corpus.times, t0) / corpus.size
    beta = bisect_left(corpus.tokens, tau0) / corpus.size
    return alpha, beta


def harmonic_mean(a: float, b: float) -> float:
    if a < 0 or b < 0:
        raise InvalidArgument(f"harmonic mean needs non-negative inputs, got ({a}, {b})")
    if a + b == 0:
        return 0.0
    if a == b:
        return float(a)
    return 2.0 * a * b / (a + b)


def shortcut_cost(corpus: StatsCorpus, t0: float, tau0: int) -> CostBreakdown:
    alpha, beta = percentile_ranks(corpus, t0, tau0)
    return CostBreakdown(alpha, beta, harmonic_mean(alpha, beta))


def emergency_factor(budget: Budget) -> EmergencyFactor:
    """Harmonic mean of the consumed fractions of time and tokens; may exceed 1."""
    if budget.time_allocated <= 0 or budget.tokens_allocated <= 0:
        raise InvalidBudget("emergency factor needs positive allocations")
    gamma_t = budget.time_used / budget.time_allocated
    gamma_tau = budget.tokens_used / budget.tokens_allocated
    return EmergencyFactor(gamma_t, gamma_tau, harmonic_mean(gamma_t, gamma_tau))


def utility(value: float, cost: float, gamma: float) -> float:
    g = min(1.0, max(0.0, gamma))
    return (1.0 - g) * value - g * cost
