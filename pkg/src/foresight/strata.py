"""Ranks projected events and expands the top ones into affected population segments."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .gateway import ChatRequest, Gateway, complete_parsed, parse_stratum_batch
from .graph import Event, EventGraph, OrdinalBucket, ordinal_value
from .search import render_trajectory

logger = logging.getLogger(__name__)

SEGMENT_SYSTEM = (
    "You simulate plausible societal consequences. "
    "Respond only with the stratum array format."
)

_SEGMENT_INSTRUCTION = (
    "Identify population groups (socio-demographic, economic, or social) likely "
    "to be significantly affected, either positively or negatively. "
    "Respond only with the stratum array format."
)

DEFAULT_TOP_EVENTS = 5
DEFAULT_MAX_STRATA = 6


@dataclass(frozen=True)
class Stratum:
    """A population segment touched by a projected event."""

    descriptor: str
    impact: OrdinalBucket
    likelihood: OrdinalBucket
    source_event: str


class ScoredEvent(NamedTuple):
    id: str
    score: int


# Non-increasing by score under the tie-break rule; at most K entries.
RankedEvents = list[ScoredEvent]


def event_score(event: Event) -> int:
    """Product of the likelihood and impact ordinals, in 1..9."""
    return ordinal_value(event.likelihood) * ordinal_value(event.impact)


def stratum_score(stratum: Stratum) -> int:
    return ordinal_value(stratum.likelihood) * ordinal_value(stratum.impact)


def rank_events(graph: EventGraph, k: int) -> RankedEvents:
    """Top ``k`` non-root events by score, nearer and smaller-id events first on ties."""
    if k < 1:
        raise ValueError("k must be at least 1")
    scored = sorted(
        graph.non_root_events(),
        key=lambda event: (-event_score(event), event.level, event.id),
    )
    return [ScoredEvent(event.id, event_score(event)) for event in scored[:k]]


def segment_request(graph: EventGraph, event_id: str) -> ChatRequest:
    event = graph.node(event_id)
    user = (
        render_trajectory(graph, event_id)
        + f"\nEVENT: description={event.description}; "
        f"likelihood={event.likelihood.value}; horizon={event.horizon.value}; "
        f"impact={event.impact.value}"
        + "\n\n"
        + _SEGMENT_INSTRUCTION
    )
    return ChatRequest(tag=f"segment:{event_id}", system=SEGMENT_SYSTEM, user=user)


def segment_expand(gateway: Gateway, graph: EventGraph, event_id: str) -> list[Stratum]:
    """Ask the model which groups the event touches; one repair retry.

    A reply that stays malformed after the repair propagates as
    ``MalformedOutput``; the caller decides what partial results to keep.
    """
    raw_strata, _ = complete_parsed(
        gateway, segment_request(graph, event_id), parse_stratum_batch
    )
    return [
        Stratum(
            descriptor=raw.descriptor,
            impact=OrdinalBucket(raw.impact),
            likelihood=OrdinalBucket(raw.likelihood),
            source_event=event_id,
        )
        for raw in raw_strata
    ]


def select_strata(
    strata: Sequence[Stratum], m: int, event_order: Sequence[str] = ()
) -> list[Stratum]:
    """Pick the ``m`` most salient strata.

    Case-insensitive duplicate descriptors collapse to the higher-scored
    instance, then strata sort by score (descending), source-event rank
    (ascending), and descriptor.  ``event_order`` fixes the rank of each
    source event; when omitted it is inferred from first occurrence in the
    input, which keeps the operation idempotent only for inputs already in
    selection order, so callers with a real ranking should pass it.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if event_order:
        rank = {event_id: index for index, event_id in enumerate(event_order)}
    else:
        rank = {}
        for stratum in strata:
            rank.setdefault(stratum.source_event, len(rank))

    best: dict[str, Stratum] = {}
    for stratum in strata:
        key = stratum.descriptor.lower()
        kept = best.get(key)
        if kept is None or stratum_score(stratum) > stratum_score(kept):
            best[key] = stratum

    ordered = sorted(
        best.values(),
        key=lambda s: (
            -stratum_score(s),
            rank.get(s.source_event, len(rank)),
            s.descriptor,
        ),
    )
    return ordered[:m]
