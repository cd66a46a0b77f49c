"""Typed causal event DAG with deterministic levels and canonical serialization.

Nodes carry a (description, likelihood, horizon, impact) tuple and are
organized into levels: the root pseudo-event is level 0, and every other
node sits one level below its deepest parent.  The graph is acyclic by
construction because parents must already exist when a node is inserted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator

from .errors import (
    DuplicateId,
    EmptyDescription,
    GraphError,
    IsRoot,
    NotFound,
    UnknownParent,
)

ROOT_ID = "e0000"

_ORDINAL = {"low": 1, "medium": 2, "high": 3}


class OrdinalBucket(Enum):
    """Three-point ordinal scale used for both likelihood and impact."""

    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"

    @classmethod
    def from_text(cls, text: str) -> OrdinalBucket:
        return cls(text.strip().lower())


class Horizon(Enum):
    """Expected timeframe for an event to manifest (days/months/years)."""

    IMMEDIATE = "immediate"
    SHORT_TERM = "short-term"
    LONG_TERM = "long-term"

    @classmethod
    def from_text(cls, text: str) -> Horizon:
        return cls(text.strip().lower())


def ordinal_value(bucket: OrdinalBucket) -> int:
    """Map low/medium/high to 1/2/3."""
    return _ORDINAL[bucket.value]


@dataclass(frozen=True)
class Action:
    """The root of a simulation: a prompt plus the candidate response."""

    prompt: str
    response: str

    def __post_init__(self) -> None:
        if not self.prompt.strip():
            raise ValueError("action prompt must be non-empty")
        if not self.response.strip():
            raise ValueError("action response must be non-empty")


@dataclass(frozen=True)
class Event:
    """One node in the graph.

    ``level`` is 0 for the root and ``1 + max(parent levels)`` otherwise.
    """

    id: str
    parent_ids: tuple[str, ...]
    description: str
    likelihood: OrdinalBucket
    horizon: Horizon
    impact: OrdinalBucket
    level: int

    @property
    def is_root(self) -> bool:
        return not self.parent_ids


# Root-first chain of events ending at a queried node (root itself excluded).
Trajectory = list[Event]


def _root_description(action: Action) -> str:
    return f"PROMPT: {action.prompt}\nRESPONSE: {action.response}"


class EventGraph:
    """Level-structured causal DAG rooted at an :class:`Action`.

    Mutation requires exclusive access (single writer); reads between
    mutations are safe from any thread.
    """

    def __init__(self, root_action: Action):
        self.root_action = root_action
        self._nodes: dict[str, Event] = {}
        self._children: dict[str, list[str]] = {}
        self._counter = 0
        # The root is a pseudo-event so trajectory prompts render uniformly.
        # Its likelihood is pinned high (the action is given, and depth-first
        # backtracking must never rule the root out as unlikely).
        self._insert(
            Event(
                id=self._next_id(),
                parent_ids=(),
                description=_root_description(root_action),
                likelihood=OrdinalBucket.HIGH,
                horizon=Horizon.IMMEDIATE,
                impact=OrdinalBucket.MEDIUM,
                level=0,
            )
        )

    # -- basic access ---------------------------------------------------

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, event_id: str) -> bool:
        return event_id in self._nodes

    @property
    def root(self) -> Event:
        return self._nodes[ROOT_ID]

    @property
    def max_level(self) -> int:
        return max(node.level for node in self._nodes.values())

    def node(self, event_id: str) -> Event:
        try:
            return self._nodes[event_id]
        except KeyError:
            raise NotFound(event_id) from None

    def ids(self) -> list[str]:
        return sorted(self._nodes)

    def events(self) -> Iterator[Event]:
        """All events, in ascending id order."""
        for event_id in self.ids():
            yield self._nodes[event_id]

    def non_root_events(self) -> Iterator[Event]:
        return (event for event in self.events() if not event.is_root)

    def children(self, event_id: str) -> list[str]:
        self.node(event_id)
        return list(self._children.get(event_id, ()))

    def child_count(self, event_id: str) -> int:
        return len(self._children.get(event_id, ()))

    # -- mutation ---------------------------------------------------------

    def _next_id(self) -> str:
        event_id = f"e{self._counter:04d}"
        self._counter += 1
        return event_id

    def _insert(self, event: Event) -> None:
        if event.id in self._nodes:
            raise DuplicateId(event.id)
        self._nodes[event.id] = event
        self._children.setdefault(event.id, [])
        for parent_id in event.parent_ids:
            self._children[parent_id].append(event.id)

    def add_event(
        self,
        description: str,
        likelihood: OrdinalBucket,
        horizon: Horizon,
        impact: OrdinalBucket,
        parent_ids: Iterable[str],
    ) -> str:
        """Insert a node below the given parents and return its id.

        Ids are "e" plus a zero-padded insertion counter, so they sort in
        insertion order.
        """
        parents: list[str] = []
        for parent_id in parent_ids:
            if parent_id not in parents:
                parents.append(parent_id)
        if not parents:
            raise GraphError("a non-root event requires at least one parent")
        for parent_id in parents:
            if parent_id not in self._nodes:
                raise UnknownParent(parent_id)
        if not description.strip():
            raise EmptyDescription()
        level = 1 + max(self._nodes[p].level for p in parents)
        event = Event(
            id=self._next_id(),
            parent_ids=tuple(parents),
            description=description,
            likelihood=likelihood,
            horizon=horizon,
            impact=impact,
            level=level,
        )
        self._insert(event)
        return event.id

    # -- queries -----------------------------------------------------------

    def level_events(self, level: int) -> list[Event]:
        """Events at the given level, sorted by id (empty past max_level)."""
        if level < 0:
            raise GraphError("level must be non-negative")
        return [event for event in self.events() if event.level == level]

    def canonical_trajectory(self, event_id: str) -> Trajectory:
        """The canonical root-to-event chain, root excluded.

        Built backwards by always stepping to the parent with the highest
        ordinal likelihood, ties broken by the lexicographically smallest id.
        Only deepest parents (one level up) are candidates, which keeps the
        chain exactly ``level`` entries long.
        """
        target = self.node(event_id)
        if target.is_root:
            raise IsRoot(event_id)
        chain: list[Event] = []
        current = target
        while not current.is_root:
            chain.append(current)
            parents = [
                self._nodes[p]
                for p in current.parent_ids
                if self._nodes[p].level == current.level - 1
            ]
            current = min(
                parents, key=lambda p: (-ordinal_value(p.likelihood), p.id)
            )
        chain.reverse()
        return chain

    # -- canonical document --------------------------------------------------

    def to_document(self) -> dict:
        """Plain-dict form of the graph, nodes sorted by id."""
        return {
            "root_action": {
                "prompt": self.root_action.prompt,
                "response": self.root_action.response,
            },
            "nodes": [
                {
                    "id": event.id,
                    "parent_ids": list(event.parent_ids),
                    "description": event.description,
                    "likelihood": event.likelihood.value,
                    "horizon": event.horizon.value,
                    "impact": event.impact.value,
                    "level": event.level,
                }
                for event in self.events()
            ],
        }

    def serialize(self) -> str:
        """Canonical text form: byte-identical for equal graph content."""
        return json.dumps(self.to_document(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_document(cls, document: dict) -> EventGraph:
        """Rebuild a graph from :meth:`to_document` output.

        Node order in the input list does not matter; ids, levels, and parent
        links are validated against the construction invariants.
        """
        try:
            action = Action(
                prompt=document["root_action"]["prompt"],
                response=document["root_action"]["response"],
            )
            raw_nodes = list(document["nodes"])
        except (KeyError, TypeError) as exc:
            raise GraphError(f"invalid graph document: {exc}") from exc

        roots = [n for n in raw_nodes if not n["parent_ids"]]
        if len(roots) != 1 or roots[0]["id"] != ROOT_ID or roots[0]["level"] != 0:
            raise GraphError("graph document must contain exactly one root node")

        graph = cls(action)
        if roots[0]["description"] != graph.root.description:
            raise GraphError("root description does not match root_action")

        seen = {ROOT_ID}
        for raw in sorted(
            (n for n in raw_nodes if n["parent_ids"]), key=lambda n: n["level"]
        ):
            if raw["id"] in seen:
                raise DuplicateId(raw["id"])
            for parent_id in raw["parent_ids"]:
                if parent_id not in seen:
                    raise UnknownParent(parent_id)
            event = Event(
                id=raw["id"],
                parent_ids=tuple(raw["parent_ids"]),
                description=raw["description"],
                likelihood=OrdinalBucket(raw["likelihood"]),
                horizon=Horizon(raw["horizon"]),
                impact=OrdinalBucket(raw["impact"]),
                level=raw["level"],
            )
            expected = 1 + max(graph._nodes[p].level for p in event.parent_ids)
            if event.level != expected:
                raise GraphError(
                    f"{event.id}: stored level {event.level} != computed {expected}"
                )
            if not event.description.strip():
                raise EmptyDescription()
            graph._insert(event)
            seen.add(event.id)

        numeric = [int(n["id"][1:]) for n in raw_nodes]
        graph._counter = max(numeric) + 1
        return graph

    @classmethod
    def deserialize(cls, text: str) -> EventGraph:
        try:
            document = json.loads(text)
        except json.JSONDecodeError as exc:
            raise GraphError(f"graph document is not valid JSON: {exc}") from exc
        return cls.from_document(document)


def _dot_escape(text: str) -> str:
    return (
        text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
    )


def to_dot(graph: EventGraph, max_label_chars: int = 48) -> str:
    """Graphviz rendering for quick inspection; graph JSON stays the source of truth."""
    lines = ["digraph consequences {", "  rankdir=LR;", '  node [shape=box, fontsize=10];']
    for event in graph.events():
        description = event.description
        if len(description) > max_label_chars:
            description = description[: max_label_chars - 1] + "…"
        if event.is_root:
            label = f"{event.id}\n{description}"
        else:
            label = (
                f"{event.id}\n{description}\n"
                f"{event.likelihood.value}/{event.horizon.value}/{event.impact.value}"
            )
        lines.append(f'  "{event.id}" [label="{_dot_escape(label)}"];')
    for event in graph.events():
        for parent_id in sorted(event.parent_ids):
            lines.append(f'  "{parent_id}" -> "{event.id}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
