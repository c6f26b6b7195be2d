"""Compare path length and token use with and without shortcuts.

Run with ``python3 demos/03_distribution_shift.py [out_dir]``; the histograms
land in ``out_dir`` (default ``./distribution-demo``).
"""

# %%
import sys
from pathlib import Path
from statistics import mean

from chainshort import OfflineEmbedder, ResourceDelta, RunConfig, ScriptedBackend, ScriptEntry, Shortcut
from chainshort.cli import cmd_stats, write_run
from chainshort.mining import ReferenceTask, ShortcutLibrary, build_stats_corpus
from chainshort.pipeline import COMPLETION_SIGNAL, run_task
from chainshort.retrieval import index_tasks

out = Path(sys.argv[1] if len(sys.argv) > 1 else "distribution-demo")
embedder = OfflineEmbedder()
topics = ["calculator", "snake game", "todo list", "unit converter", "stopwatch", "quiz app"]

# %%
# Each reference finished in three rounds; every forward pair is a shortcut
# worth a little more the further it jumps.
entries, tasks = [], {}
for k, topic in enumerate(topics):
    tasks[f"ref-{k}"] = ReferenceTask(f"ref-{k}", f"a {topic} application", 3)
    for i in range(4):
        for j in range(i + 1, 4):
            entries.append(Shortcut(i, j, f"{topic}: n{i} to n{j}", ResourceDelta(2.0 * (j - i), 150 * (j - i)), 0.1 * (j - i), f"ref-{k}"))
library = ShortcutLibrary(entries, build_stats_corpus(entries), tasks)
index = index_tasks(library, embedder)


def backend():
    # the reviewer only declares the work finished on its sixth call
    script = [ScriptEntry("programmer", f'main.py\n```python\nprint({k})\n```', 2.0, 200) for k in range(12)]
    script += [ScriptEntry("reviewer", COMPLETION_SIGNAL if k >= 6 else "Keep improving.", 1.0, 50) for k in range(1, 12)]
    return ScriptedBackend(script)


# %%
for group, config in {"with": RunConfig(), "without": RunConfig(use_shortcuts=False)}.items():
    results = [run_task(f"build a {t} application", config, library, index, backend(), embedder, task_id=f"t{k}") for k, t in enumerate(topics)]
    for r in results:
        write_run(r, out / group / r.inference_graph.task_id)
    print(f"{group:8s} mean rounds={mean(r.path_length for r in results):.2f} tokens={sum(r.budget.tokens_used for r in results)}")

# %%
cmd_stats([out / "with", out / "without"], out / "stats")
print(f"histograms written to {out / 'stats'}")
