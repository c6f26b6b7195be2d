import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from chainshort.backend import ScriptedBackend, ScriptEntry
from chainshort.embedder import OfflineEmbedder
from chainshort.errors import EmptyCorpus, ForwardViolation, ParseError, SynthesisError
from chainshort.graph import ResourceDelta, Shortcut, graph_to_jsonl, new_graph
from chainshort.mining import (
    NO_CHANGE_SENTINEL,
    DiffSynthesizer,
    ShortcutLibrary,
    StatsCorpus,
    build_stats_corpus,
    enumerate_pairs,
    ingest_trajectory,
    load_library,
    load_trajectories,
    mine_library,
    precompute_values,
    save_library,
    synthesize_shortcut,
)
from chainshort.scoring import node_weight


def program(k: int) -> list[tuple[str, str]]:
    return [("main.py", f"print({k})\n")]


def small_graph(task_id="t1", steps=2, text="print a number"):
    g = new_graph(task_id, text)
    for k in range(1, steps + 1):
        files = program(k)
        g.append_step(f"step {k}", files[0][1], files, ResourceDelta(1.0, 10))
    return g


def test_ingest_three_node_trajectory():
    graph = ingest_trajectory(graph_to_jsonl(small_graph()))
    assert len(graph.nodes) == 3 and len(graph.edges) == 2
    assert [n.compilable for n in graph.nodes] == [False, True, True]


def test_ingest_rejects_skipping_edge():
    g = small_graph()
    lines = graph_to_jsonl(g).splitlines()
    edited = []
    for line in lines:
        record = json.loads(line)
        if record.get("from") == 1 and record.get("to") == 2:
            record["from"] = 0
        edited.append(json.dumps(record))
    with pytest.raises(ParseError):
        ingest_trajectory("\n".join(edited))


def test_ingest_rejects_missing_empty_start():
    lines = [json.loads(line) for line in graph_to_jsonl(small_graph()).splitlines()]
    kept = [r for r in lines if r.get("index") != 0]
    with pytest.raises(ParseError):
        ingest_trajectory("\n".join(json.dumps(r) for r in kept))


def test_ingest_reports_line_number():
    text = graph_to_jsonl(small_graph()) + "{not json\n"
    with pytest.raises(ParseError, match=r"line \d+"):
        ingest_trajectory(text)


def test_four_nodes_give_six_pairs():
    assert enumerate_pairs(small_graph(steps=3)) == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    assert enumerate_pairs(small_graph(steps=3), final_only=True) == [(0, 3), (1, 3), (2, 3)]


@pytest.mark.parametrize("nodes", range(2, 11))
def test_pair_count_is_triangular(nodes):
    pairs = enumerate_pairs(small_graph(steps=nodes - 1))
    assert len(pairs) == nodes * (nodes - 1) // 2 and all(i < j for i, j in pairs)


def test_scripted_synthesis_fills_template():
    backend = ScriptedBackend([ScriptEntry("synthesizer", "Go from {i} to {j}.", 1.5, 40)], cycle=True)
    shortcut = synthesize_shortcut(small_graph(), 0, 2, backend)
    assert shortcut.instruction == "Go from 0 to 2."
    assert shortcut.consumption == ResourceDelta(1.5, 40)
    assert shortcut.origin_task_id == "t1"


def test_synthesis_rejects_backward_pair():
    with pytest.raises(ForwardViolation):
        synthesize_shortcut(small_graph(), 2, 1, DiffSynthesizer())


def test_identical_states_give_no_change_sentinel():
    g = new_graph("same", "x")
    g.append_step("write", "print(1)\n", program(1))
    g.append_step("nothing", "print(1)\n", program(1))
    shortcut = synthesize_shortcut(g, 1, 2, DiffSynthesizer())
    assert shortcut.instruction == NO_CHANGE_SENTINEL and shortcut.consumption == ResourceDelta()


def test_diff_synthesizer_describes_the_change():
    shortcut = synthesize_shortcut(small_graph(), 1, 2, DiffSynthesizer())
    assert "remove: print(1)" in shortcut.instruction and "add: print(2)" in shortcut.instruction
    assert shortcut.consumption.tokens > 0


def test_synthesis_failure_is_wrapped():
    with pytest.raises(SynthesisError):
        synthesize_shortcut(small_graph(), 0, 1, ScriptedBackend([]))


def test_precomputed_values_match_node_weights(embedder):
    g = small_graph(steps=3)
    g.nodes[2].files = [("main.py", "print(\n")]
    g.nodes[2].content = "print(\n"
    ingest = ingest_trajectory(graph_to_jsonl(g))
    for node in ingest.nodes:
        node.embedding = embedder.embed(node.content)
    pairs = enumerate_pairs(ingest)
    shortcuts = precompute_values(ingest, [Shortcut(i, j, "s", ResourceDelta()) for i, j in pairs], embedder)
    task = embedder.embed(ingest.task_text)
    final = ingest.final_node.embedding
    weights = [node_weight(n, task, final).weight for n in ingest.nodes]
    for s in shortcuts:
        assert s.value == pytest.approx(weights[s.to_index] - weights[s.from_index], abs=1e-12)
    # the broken node weighs zero, so a shortcut into it is worth -w(n_i)
    into_broken = next(s for s in shortcuts if (s.from_index, s.to_index) == (1, 2))
    assert ingest.nodes[2].compilable is False
    assert into_broken.value == pytest.approx(-weights[1])


def test_stats_corpus_sorted_keeps_duplicates():
    corpus = build_stats_corpus(
        [Shortcut(0, 1, "a", ResourceDelta(t, tau)) for t, tau in [(3, 30), (1, 10), (3, 30), (2, 20)]]
    )
    assert corpus.times == [1, 2, 3, 3] and corpus.tokens == [10, 20, 30, 30] and corpus.size == 4


def test_empty_corpus():
    with pytest.raises(EmptyCorpus):
        build_stats_corpus([])


@given(st.lists(st.tuples(st.floats(0, 1e4), st.integers(0, 10**6)), min_size=1, max_size=40))
def test_stats_round_trip(pairs):
    corpus = StatsCorpus([p[0] for p in pairs], [p[1] for p in pairs])
    assert StatsCorpus.from_dict(json.loads(json.dumps(corpus.to_dict()))) == corpus


def write_corpus(directory, graphs):
    directory.mkdir(parents=True, exist_ok=True)
    for g in graphs:
        (directory / f"{g.task_id}.jsonl").write_text(graph_to_jsonl(g))


def test_mine_two_trajectories(tmp_path):
    write_corpus(tmp_path / "traj", [small_graph("a"), small_graph("b", text="print another number")])
    library = mine_library(load_trajectories(tmp_path / "traj"), DiffSynthesizer(), OfflineEmbedder())
    assert len(library.entries) == 6 and library.corpus.size == 6
    assert set(library.tasks) == {"a", "b"} and library.tasks["a"].edge_count == 2


def test_mining_rejects_duplicate_task_ids():
    with pytest.raises(ParseError):
        mine_library([small_graph("a"), small_graph("a")], DiffSynthesizer(), OfflineEmbedder())


def test_mining_skips_failed_pairs(embedder):
    # a synthesizer script with only two replies: the third pair fails and is skipped
    backend = ScriptedBackend([ScriptEntry("synthesizer", "x", 1, 1)] * 2)
    library = mine_library([small_graph()], backend, embedder)
    assert len(library.entries) == 2


def test_save_is_byte_idempotent(tmp_path):
    graphs = [small_graph("a"), small_graph("b", steps=3)]
    library = mine_library(graphs, DiffSynthesizer(), OfflineEmbedder())
    save_library(library, tmp_path / "one")
    save_library(load_library(tmp_path / "one"), tmp_path / "two")
    for name in ("shortcuts.json", "stats.json"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()
    assert load_library(tmp_path / "two").entries == library.entries


def test_library_inconsistent_metadata():
    record = Shortcut(0, 1, "x", ResourceDelta(1, 1), 0.0, "a").to_record()
    records = [dict(record, origin_task_text="t", origin_edge_count=2), dict(record, origin_task_text="u", origin_edge_count=2)]
    with pytest.raises(ParseError):
        ShortcutLibrary.from_records(records)
