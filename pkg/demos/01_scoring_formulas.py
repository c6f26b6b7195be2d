"""Walk through how one shortcut is scored.

Run with ``python3 demos/01_scoring_formulas.py``.
"""

# %%
# A stats corpus holds the time and token consumption of every mined shortcut.
from chainshort import Budget, ResourceDelta, StatsCorpus
from chainshort.scoring import emergency_factor, harmonic_mean, shortcut_cost, utility

corpus = StatsCorpus(
    times=[1.2, 3.5, 4.0, 7.5, 9.0, 12.0, 15.5, 20.0],
    tokens=[120, 300, 310, 650, 800, 1100, 1500, 2400],
)

# %%
# Cost is the harmonic mean of the strict percentile ranks of a shortcut's
# own consumption.  A shortcut that took 8 s and 700 tokens sits above four
# of eight times and four of eight token counts.
cost = shortcut_cost(corpus, 8.0, 700)
print(f"alpha={cost.alpha:.3f} beta={cost.beta:.3f} cost={cost.cost:.3f}")

# %%
# The harmonic mean punishes imbalance: a shortcut cheap in one dimension but
# expensive in the other lands closer to the cheap side.
for a, b in [(0.5, 0.5), (0.1, 0.9), (0.0, 0.9)]:
    print(f"H({a}, {b}) = {harmonic_mean(a, b):.3f}")

# %%
# The emergency factor grows as the run eats into its budget.  Utility trades
# value against cost with it: early on value dominates, late on cost does.
value = 0.4
budget = Budget(time_allocated=100.0, tokens_allocated=10_000)
for step in range(5):
    gamma = emergency_factor(budget).gamma
    print(f"used {budget.time_used:5.1f}s/{budget.tokens_used:5d} tok  gamma={gamma:.2f}  U={utility(value, cost.cost, gamma):+.3f}")
    budget.record_usage(ResourceDelta(20.0, 2000))
