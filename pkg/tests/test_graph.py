from __future__ import annotations

import json
import random

import pytest
from hypothesis import given, strategies as st

from foresight.errors import (
    DuplicateId,
    EmptyDescription,
    GraphError,
    IsRoot,
    NotFound,
    UnknownParent,
)
from foresight.graph import (
    Action,
    EventGraph,
    Horizon,
    OrdinalBucket,
    ordinal_value,
    to_dot,
)

from helpers import HIGH, LOW, MEDIUM, add, make_graph


def test_ordinal_value_mapping():
    assert ordinal_value(LOW) == 1
    assert ordinal_value(MEDIUM) == 2
    assert ordinal_value(HIGH) == 3


def test_ordinal_value_is_strictly_monotone():
    assert ordinal_value(LOW) < ordinal_value(MEDIUM) < ordinal_value(HIGH)


def test_bucket_and_horizon_from_text_normalize():
    assert OrdinalBucket.from_text(" Low ") is LOW
    assert Horizon.from_text("SHORT-TERM") is Horizon.SHORT_TERM
    with pytest.raises(ValueError):
        OrdinalBucket.from_text("severe")


def test_action_rejects_blank_fields():
    with pytest.raises(ValueError):
        Action(" ", "response")
    with pytest.raises(ValueError):
        Action("prompt", "\n\t")


def test_root_pseudo_event():
    graph = make_graph("P?", "R.")
    assert len(graph) == 1
    assert graph.root.id == "e0000"
    assert graph.root.level == 0
    assert graph.root.description == "PROMPT: P?\nRESPONSE: R."
    assert graph.root.is_root


def test_add_event_under_root():
    graph = make_graph()
    event_id = add(graph, "first consequence")
    assert event_id == "e0001"
    assert graph.node(event_id).level == 1


def test_add_event_level_is_one_past_deepest_parent():
    graph = make_graph()
    a = add(graph, "a")  # level 1
    b = add(graph, "b", parents=[a])  # level 2
    c = add(graph, "c", parents=[a, b])
    assert graph.node(c).level == 3


def test_add_event_unknown_parent():
    graph = make_graph()
    with pytest.raises(UnknownParent):
        add(graph, "orphan", parents=["zzz"])


def test_add_event_empty_description():
    graph = make_graph()
    with pytest.raises(EmptyDescription):
        add(graph, "   ")


def test_add_event_requires_a_parent():
    graph = make_graph()
    with pytest.raises(GraphError):
        graph.add_event("no parents", MEDIUM, Horizon.IMMEDIATE, MEDIUM, [])


def test_canonical_trajectory_single_chain():
    graph = make_graph()
    a = add(graph, "a")
    b = add(graph, "b", parents=[a])
    trajectory = graph.canonical_trajectory(b)
    assert [event.id for event in trajectory] == [a, b]


def test_canonical_trajectory_prefers_higher_likelihood_parent():
    # Two candidate paths to the target; the rule picks the high-likelihood one.
    graph = make_graph()
    a = add(graph, "a", likelihood=MEDIUM)
    b = add(graph, "b", likelihood=HIGH)
    target = add(graph, "t", parents=[a, b])
    assert [event.id for event in graph.canonical_trajectory(target)] == [b, target]


def test_canonical_trajectory_tie_breaks_by_smallest_id():
    graph = make_graph()
    a = add(graph, "a", likelihood=MEDIUM)
    b = add(graph, "b", likelihood=MEDIUM)
    target = add(graph, "t", parents=[b, a])
    assert [event.id for event in graph.canonical_trajectory(target)] == [a, target]


def test_canonical_trajectory_level_one_node():
    graph = make_graph()
    a = add(graph, "a")
    assert [event.id for event in graph.canonical_trajectory(a)] == [a]


def test_canonical_trajectory_errors():
    graph = make_graph()
    with pytest.raises(NotFound):
        graph.canonical_trajectory("e9999")
    with pytest.raises(IsRoot):
        graph.canonical_trajectory("e0000")


def test_level_events_root_and_past_max():
    graph = make_graph()
    assert [event.id for event in graph.level_events(0)] == ["e0000"]
    assert graph.level_events(graph.max_level + 1) == []


def test_level_events_sorted_by_id_with_interleaved_insertion():
    graph = make_graph()
    a = add(graph, "a")                      # e0001, level 1
    add(graph, "x", parents=[a])             # e0002, level 2
    add(graph, "y", parents=[a])             # e0003, level 2
    b = add(graph, "b")                      # e0004, level 1
    add(graph, "z", parents=[b])             # e0005, level 2
    assert [event.id for event in graph.level_events(2)] == ["e0002", "e0003", "e0005"]


def test_serialize_root_only_graph():
    graph = make_graph("P?", "R.")
    document = json.loads(graph.serialize())
    assert document["root_action"] == {"prompt": "P?", "response": "R."}
    assert len(document["nodes"]) == 1
    assert document["nodes"][0]["id"] == "e0000"


def test_serialize_round_trip_identity():
    graph = make_graph()
    a = add(graph, "a", likelihood=HIGH, impact=LOW)
    add(graph, "b", parents=[a], horizon=Horizon.LONG_TERM)
    text = graph.serialize()
    assert EventGraph.deserialize(text).serialize() == text


def test_serialize_ends_with_lf_and_has_no_trailing_whitespace():
    graph = make_graph()
    add(graph, "a")
    text = graph.serialize()
    assert text.endswith("\n") and not text.endswith("\n\n")
    assert "\r" not in text
    assert all(line == line.rstrip() for line in text.splitlines())


def test_serialize_key_order_is_fixed():
    graph = make_graph()
    add(graph, "a")
    document = json.loads(graph.serialize(), object_pairs_hook=list)
    top_keys = [key for key, _ in document]
    assert top_keys == ["root_action", "nodes"]
    nodes = dict(document)["nodes"]
    node_keys = [key for key, _ in nodes[0]]
    assert node_keys == [
        "id", "parent_ids", "description", "likelihood", "horizon", "impact", "level",
    ]


def test_serialize_independent_of_document_node_order():
    graph = make_graph()
    a = add(graph, "a")
    b = add(graph, "b", parents=[a])
    add(graph, "c", parents=[a, b])
    document = graph.to_document()
    shuffled = dict(document)
    for seed in range(5):
        nodes = list(document["nodes"])
        random.Random(seed).shuffle(nodes)
        shuffled["nodes"] = nodes
        assert EventGraph.from_document(shuffled).serialize() == graph.serialize()


def test_from_document_rejects_duplicate_ids():
    graph = make_graph()
    add(graph, "a")
    document = graph.to_document()
    document["nodes"].append(dict(document["nodes"][1]))
    with pytest.raises(DuplicateId):
        EventGraph.from_document(document)


def test_from_document_rejects_unresolved_parent():
    graph = make_graph()
    add(graph, "a")
    document = graph.to_document()
    document["nodes"][1]["parent_ids"] = ["e0077"]
    with pytest.raises(UnknownParent):
        EventGraph.from_document(document)


def test_from_document_rejects_inconsistent_level():
    graph = make_graph()
    add(graph, "a")
    document = graph.to_document()
    document["nodes"][1]["level"] = 5
    with pytest.raises(GraphError):
        EventGraph.from_document(document)


def test_to_dot_lists_every_node_and_edge():
    graph = make_graph()
    a = add(graph, 'needs "quoting"\nand escaping')
    dot = to_dot(graph)
    assert dot.startswith("digraph")
    assert f'"e0000" -> "{a}";' in dot
    assert '\\"quoting\\"' in dot


# -- randomized invariants ----------------------------------------------------

_buckets = st.sampled_from(list(OrdinalBucket))
_horizons = st.sampled_from(list(Horizon))


@st.composite
def random_graphs(draw) -> EventGraph:
    graph = make_graph()
    size = draw(st.integers(min_value=0, max_value=10))
    for index in range(size):
        ids = graph.ids()
        parents = draw(
            st.lists(st.sampled_from(ids), min_size=1, max_size=min(3, len(ids)), unique=True)
        )
        graph.add_event(
            f"event {index}",
            draw(_buckets),
            draw(_horizons),
            draw(_buckets),
            parents,
        )
    return graph


@given(random_graphs())
def test_level_rule_holds_everywhere(graph: EventGraph):
    for event in graph.non_root_events():
        parent_levels = [graph.node(p).level for p in event.parent_ids]
        assert event.level == 1 + max(parent_levels)


@given(random_graphs())
def test_graph_is_acyclic_by_levels(graph: EventGraph):
    for event in graph.non_root_events():
        assert all(graph.node(p).level < event.level for p in event.parent_ids)


@given(random_graphs())
def test_trajectory_length_and_links(graph: EventGraph):
    for event in graph.non_root_events():
        trajectory = graph.canonical_trajectory(event.id)
        assert len(trajectory) == event.level
        assert trajectory[0].parent_ids == ("e0000",)
        assert trajectory[-1].id == event.id
        for earlier, later in zip(trajectory, trajectory[1:]):
            assert earlier.id in later.parent_ids


@given(random_graphs(), st.randoms(use_true_random=False))
def test_serialize_pure_function_of_content(graph: EventGraph, rng):
    document = graph.to_document()
    nodes = list(document["nodes"])
    rng.shuffle(nodes)
    rebuilt = EventGraph.from_document({**document, "nodes": nodes})
    assert rebuilt.serialize() == graph.serialize()
