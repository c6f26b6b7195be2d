"""Per-run time and token budget.

Wall-clock time is never read here; callers pass measured deltas in, which
keeps the arithmetic deterministic under synthetic clocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InvalidArgument, InvalidBudget
from .graph import ResourceDelta

__all__ = ["Budget", "new_budget"]


@dataclass
class Budget:
    time_allocated: float
    tokens_allocated: int
    time_used: float = field(default=0.0, init=False)
    tokens_used: int = field(default=0, init=False)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.time_allocated) and self.time_allocated > 0):
            raise InvalidBudget(f"time allocation must be positive, got {self.time_allocated!r}")
        if int(self.tokens_allocated) != self.tokens_allocated or self.tokens_allocated <= 0:
            raise InvalidBudget(f"token allocation must be a positive integer, got {self.tokens_allocated!r}")
        self.tokens_allocated = int(self.tokens_allocated)

    @property
    def time_remaining(self) -> float:
        return self.time_allocated - self.time_used

    @property
    def tokens_remaining(self) -> int:
        return self.tokens_allocated - self.tokens_used

    @property
    def used(self) -> ResourceDelta:
        return ResourceDelta(self.time_used, self.tokens_used)

    def record_usage(self, delta: ResourceDelta) -> Budget:
        """Charge ``delta``; consumption may overshoot the allocation."""
        if delta.time_seconds < 0 or delta.tokens < 0:
            raise InvalidArgument("usage deltas must be non-negative")
        self.time_used += delta.time_seconds
        self.tokens_used += delta.tokens
        return self

    def feasible(self, estimate: ResourceDelta) -> bool:
        """Strictly below both remaining amounts."""
        return estimate.time_seconds < self.time_remaining and estimate.tokens < self.tokens_remaining

    def exhausted(self) -> bool:
        return self.time_used >= self.time_allocated or self.tokens_used >= self.tokens_allocated

    def snapshot(self) -> Budget:
        copy = Budget(self.time_allocated, self.tokens_allocated)
        copy.time_used = self.time_used
        copy.tokens_used = self.tokens_used
        return copy


def new_budget(time_allocated: float, tokens_allocated: int) -> Budget:
    return Budget(time_allocated, tokens_allocated)
