"""Grows an event graph from an action by breadth-first or depth-first search.

Both strategies stop on a depth cap, a likelihood floor (every frontier event
in the low bucket), or a node budget; low-likelihood branches are pruned
before spending model calls when ``prune_low`` is set.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .errors import MalformedOutput, PipelineAborted
from .gateway import ChatRequest, Gateway, RawEvent, complete_parsed, parse_event_batch
from .graph import Action, Event, EventGraph, Horizon, OrdinalBucket, ordinal_value

logger = logging.getLogger(__name__)

EXPANSION_SYSTEM = (
    "You simulate plausible societal consequences. "
    "Respond only with the event array format."
)

_EXPANSION_INSTRUCTION = (
    "List up to {b} distinct events that could causally follow, each with "
    "likelihood (low|medium|high), horizon (immediate|short-term|long-term), "
    "impact (low|medium|high)."
)


@dataclass(frozen=True)
class SearchConfig:
    strategy: str = "bfs"
    l_max: int = 3
    branching: int = 3
    node_budget: int = 60
    prune_low: bool = True

    def __post_init__(self) -> None:
        if self.strategy not in ("bfs", "dfs"):
            raise ValueError(f"strategy must be 'bfs' or 'dfs', got {self.strategy!r}")
        if self.l_max < 1:
            raise ValueError("l_max must be positive")
        if self.branching < 1:
            raise ValueError("branching must be positive")
        if self.node_budget < 1:
            raise ValueError("node_budget must be at least 1")


def normalize_description(text: str) -> str:
    """Trim, lowercase, and collapse internal whitespace (the dedupe key)."""
    return " ".join(text.split()).lower()


def render_trajectory(graph: EventGraph, event_id: str) -> str:
    """Deterministic text form of the canonical chain ending at ``event_id``.

    The root pseudo-event comes first; each later event renders its full
    tuple.  Passing the root id renders the root alone.
    """
    lines = [graph.root.description]
    if event_id != graph.root.id:
        for event in graph.canonical_trajectory(event_id):
            lines.append(
                f"{event.id}: description={event.description}; "
                f"likelihood={event.likelihood.value}; horizon={event.horizon.value}; "
                f"impact={event.impact.value}"
            )
    return "\n".join(lines)


def expansion_request(graph: EventGraph, parent: Event, limit: int) -> ChatRequest:
    user = (
        render_trajectory(graph, parent.id)
        + "\n\n"
        + _EXPANSION_INSTRUCTION.format(b=limit)
    )
    return ChatRequest(tag=f"expand:{parent.id}", system=EXPANSION_SYSTEM, user=user)


def should_stop(frontier: list[Event], depth: int, cfg: SearchConfig) -> bool:
    """True once the depth cap is reached, the frontier is empty, or every
    frontier event has converged to the low likelihood bucket."""
    if depth >= cfg.l_max:
        return True
    if not frontier:
        return True
    return all(event.likelihood is OrdinalBucket.LOW for event in frontier)


def _remaining_budget(graph: EventGraph, cfg: SearchConfig) -> int:
    return cfg.node_budget - (len(graph) - 1)


def expand_node(
    gateway: Gateway,
    graph: EventGraph,
    parent: Event,
    cfg: SearchConfig,
    limit: int | None = None,
) -> list[str]:
    """Ask the model for successors of ``parent`` and insert the survivors.

    At most ``limit`` (default ``cfg.branching``) parsed events are kept;
    events duplicating an existing description (normalized) are dropped, and
    insertion truncates at the node budget.  A low-likelihood non-root parent
    is pruned without any model call.  A reply that stays malformed after the
    single repair retry aborts the search, partial graph attached.
    """
    if cfg.prune_low and not parent.is_root and parent.likelihood is OrdinalBucket.LOW:
        return []
    limit = cfg.branching if limit is None else limit
    request = expansion_request(graph, parent, limit)
    try:
        raw_events, _ = complete_parsed(gateway, request, parse_event_batch)
    except MalformedOutput as exc:
        raise PipelineAborted(
            f"expansion of {parent.id} stayed malformed after repair: {exc}",
            graph=graph,
        ) from exc

    existing = {normalize_description(event.description) for event in graph.events()}
    inserted: list[str] = []
    for raw in raw_events[:limit]:
        if _remaining_budget(graph, cfg) <= 0:
            logger.debug("node budget reached while inserting under %s", parent.id)
            break
        key = normalize_description(raw.description)
        if key in existing:
            continue
        existing.add(key)
        inserted.append(_insert_raw(graph, raw, parent))
    return inserted


def _insert_raw(graph: EventGraph, raw: RawEvent, parent: Event) -> str:
    return graph.add_event(
        description=raw.description,
        likelihood=OrdinalBucket(raw.likelihood),
        horizon=Horizon(raw.horizon),
        impact=OrdinalBucket(raw.impact),
        parent_ids=[parent.id],
    )


def search_bfs(gateway: Gateway, action: Action, cfg: SearchConfig) -> EventGraph:
    """Level-by-level expansion: nearer consequences before distal ones."""
    graph = EventGraph(action)
    frontier = [graph.root]
    depth = 0
    while True:
        depth += 1
        new_ids: list[str] = []
        for parent in frontier:
            if _remaining_budget(graph, cfg) <= 0:
                break
            new_ids.extend(expand_node(gateway, graph, parent, cfg))
        frontier = [graph.node(event_id) for event_id in sorted(new_ids)]
        if _remaining_budget(graph, cfg) <= 0 or should_stop(frontier, depth, cfg):
            return graph


def search_dfs(gateway: Gateway, action: Action, cfg: SearchConfig) -> EventGraph:
    """Linear projection with backtracking.

    Each step requests a single successor of the current node and descends
    while the new event stays above the low bucket and under the depth cap.
    Otherwise the search resumes from the explored node with the highest
    likelihood (ties: shallowest level, then smallest id) that still has
    child capacity.  A node whose expansion yields nothing new is exhausted
    and never revisited; the search ends at the node budget or when no
    eligible node remains.
    """
    graph = EventGraph(action)
    exhausted: set[str] = set()
    current = graph.root
    while _remaining_budget(graph, cfg) > 0:
        new_ids = expand_node(gateway, graph, current, cfg, limit=1)
        if new_ids:
            child = graph.node(new_ids[0])
            if child.likelihood is not OrdinalBucket.LOW and child.level < cfg.l_max:
                current = child
                continue
        else:
            exhausted.add(current.id)
        eligible = [
            event
            for event in graph.events()
            if event.id not in exhausted
            and graph.child_count(event.id) < cfg.branching
            and event.likelihood is not OrdinalBucket.LOW
            and event.level < cfg.l_max
        ]
        if not eligible:
            return graph
        current = min(
            eligible,
            key=lambda e: (-ordinal_value(e.likelihood), e.level, e.id),
        )
    return graph


def run_search(gateway: Gateway, action: Action, cfg: SearchConfig) -> EventGraph:
    if cfg.strategy == "dfs":
        return search_dfs(gateway, action, cfg)
    return search_bfs(gateway, action, cfg)
