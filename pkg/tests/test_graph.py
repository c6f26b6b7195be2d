import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chainshort.errors import ForwardViolation, InvalidArgument, ParseError, UnknownNode
from chainshort.graph import (
    ResourceDelta,
    SolutionState,
    graph_from_jsonl,
    graph_to_jsonl,
    new_graph,
)


def three_node_graph():
    g = new_graph("t1", "todo app")
    g.append_step("write it", "print(1)", [("main.py", "print(1)")], ResourceDelta(1.0, 10))
    g.append_step("fix it", "print(2)", [("main.py", "print(2)")], ResourceDelta(2.0, 20))
    return g


def test_new_graph_has_only_initial_state():
    g = new_graph("t1", "todo app")
    assert len(g.nodes) == 1 and g.edge_count() == 0 and g.shortcuts == []
    assert g.nodes[0].content == "" and g.nodes[0].files == []


def test_new_graph_rejects_empty_task():
    with pytest.raises(InvalidArgument):
        new_graph("t1", "")


def test_initial_node_not_yet_compiled():
    assert new_graph("t2", "photo defogger").nodes[0].compilable is None


def test_append_step_returns_new_index_and_records_usage():
    g = new_graph("t1", "todo app")
    assert g.append_step("go", "x = 1", usage=ResourceDelta(2.0, 150)) == 1
    assert [(e.from_index, e.to_index) for e in g.edges] == [(0, 1)]
    assert g.edges[0].consumption == ResourceDelta(2.0, 150)
    assert g.append_step("again", "x = 2") == 2
    assert g.edge_count() == 2


def test_add_shortcut_rules():
    g = three_node_graph()
    s = g.add_shortcut(0, 2, "do both")
    assert s.value is None and s.origin_task_id == "t1"
    with pytest.raises(ForwardViolation):
        g.add_shortcut(2, 0, "back")
    with pytest.raises(UnknownNode):
        g.add_shortcut(0, 5, "nowhere")


def test_edge_count_ignores_shortcuts():
    g = three_node_graph()
    g.append_step("more", "print(3)")
    before = g.edge_count()
    g.add_shortcut(0, 3, "jump")
    assert before == g.edge_count() == 3


def test_initial_state_must_be_empty():
    with pytest.raises(InvalidArgument):
        SolutionState(0, "code")


def test_embedding_must_be_unit_or_zero():
    SolutionState(1, "x", embedding=np.zeros(4))
    SolutionState(1, "x", embedding=np.array([0.6, 0.8]))
    with pytest.raises(InvalidArgument):
        SolutionState(1, "x", embedding=np.array([1.0, 1.0]))


def test_resource_delta_rejects_negative():
    with pytest.raises(InvalidArgument):
        ResourceDelta(-1.0, 0)
    with pytest.raises(InvalidArgument):
        ResourceDelta(0.0, -3)


@given(st.integers(min_value=0, max_value=15))
def test_appends_keep_chain_shape(k):
    g = new_graph("p", "prop")
    for n in range(k):
        g.append_step(f"i{n}", f"c{n}")
    assert [n.index for n in g.nodes] == list(range(k + 1))
    assert all(e.to_index == e.from_index + 1 for e in g.edges)
    assert g.edge_count() == len(g.nodes) - 1


@given(st.integers(0, 6), st.integers(0, 6))
def test_add_shortcut_never_accepts_backward(i, j):
    g = new_graph("p", "prop")
    for n in range(6):
        g.append_step("s", f"c{n}")
    if i >= j:
        with pytest.raises(ForwardViolation):
            g.add_shortcut(i, j, "x")
    else:
        assert g.add_shortcut(i, j, "x").from_index < j


def test_jsonl_round_trip_is_identity():
    g = three_node_graph()
    g.nodes[1].compilable = True
    g.nodes[2].compilable = False
    g.nodes[2].embedding = np.array([0.6, 0.8])
    g.add_shortcut(0, 2, "both", ResourceDelta(3.5, 42)).value = 0.25
    text = graph_to_jsonl(g)
    again = graph_from_jsonl(text)
    assert graph_to_jsonl(again) == text
    assert again.task_id == g.task_id and again.edge_count() == 2
    assert again.shortcuts[0].value == 0.25


def test_jsonl_field_names():
    lines = [json.loads(x) for x in graph_to_jsonl(three_node_graph()).splitlines()]
    assert set(lines[0]) == {"task_id", "task_text"}
    assert {"index", "content", "files", "compilable"} <= set(lines[1])
    assert {"from", "to", "instruction", "time_seconds", "tokens"} <= set(lines[-1])


def test_parse_rejects_non_adjacent_edge():
    lines = graph_to_jsonl(three_node_graph()).splitlines()
    bad = json.loads(lines[4])
    bad["to"] = 2
    lines[4] = json.dumps(bad)
    with pytest.raises(ParseError, match="line 5"):
        graph_from_jsonl(lines)


def test_parse_rejects_missing_initial_node():
    lines = graph_to_jsonl(three_node_graph()).splitlines()
    del lines[1]
    with pytest.raises(ParseError, match="n_0"):
        graph_from_jsonl(lines)


def test_parse_names_bad_json_line():
    with pytest.raises(ParseError, match="line 2"):
        graph_from_jsonl(['{"task_id": "a", "task_text": "b"}', "{nope"])
