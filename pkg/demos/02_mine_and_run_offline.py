"""Mine a tiny shortcut library and run a new task against it, fully offline.

Run with ``python3 demos/02_mine_and_run_offline.py``.
"""

# %%
from chainshort import DiffSynthesizer, OfflineEmbedder, RunConfig, ScriptedBackend, ScriptEntry
from chainshort.graph import new_graph
from chainshort.mining import mine_library
from chainshort.retrieval import index_tasks
from chainshort.pipeline import run_task

embedder = OfflineEmbedder()

# %%
# One historical trajectory: three rounds of a calculator getting better.
# Programs run with no stdin in the sandbox, so they must not prompt.  The
# offline embedder is a bag of words, so shared vocabulary drives similarity.
history = new_graph("calc", "a calculator that can add numbers and evaluate expressions")
versions = [
    "print(2 + 3)\n",
    "def add(a, b):\n    return a + b\n\nprint(add(2, 3))\n",
    "def add(a, b):\n    return a + b\n\ndef evaluate(expressions):\n    return [eval(e) for e in expressions]\n\n"
    "# a calculator for numbers\nprint(add(2, 3), evaluate(['2 * 4']))\n",
]
for k, body in enumerate(versions, start=1):
    history.append_step(f"revision {k}", body, [("main.py", body)])

# %%
# Mining enumerates every forward pair and writes one instruction per pair.
# The offline synthesizer derives that instruction from the code diff.
library = mine_library([history], DiffSynthesizer(), embedder)
for s in library.entries:
    print(f"({s.from_index},{s.to_index}) value={s.value:+.3f} tokens={s.consumption.tokens}")

# %%
# A scripted backend stands in for the language model.
code = 'main.py\n```python\nprint("calc v{k}")\n```'
script = [ScriptEntry("programmer", code.replace("{k}", str(k)), 1.0, 150) for k in range(4)]
script += [ScriptEntry("reviewer", "Handle invalid input.", 0.5, 40)] * 3
backend = ScriptedBackend(script)

index = index_tasks(library, embedder)
result = run_task("a calculator that adds numbers", RunConfig(), library, index, backend, embedder)
print(f"reference={result.reference}  rounds={result.path_length}  stop={result.terminated_by}")
for a in result.applied_shortcuts:
    print(f"applied ({a.from_index},{a.to_index}) at step {a.step} with U={a.utility:+.3f}")
