"""The full world-model pass: search, rank, strata expansion, feedback."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import MalformedOutput, PipelineAborted
from .feedback import FeedbackBundle, aggregate, collect_feedback, summarize_events
from .gateway import Gateway
from .graph import Action, EventGraph
from .search import SearchConfig, run_search
from .strata import (
    DEFAULT_MAX_STRATA,
    DEFAULT_TOP_EVENTS,
    RankedEvents,
    Stratum,
    rank_events,
    segment_expand,
    select_strata,
)

logger = logging.getLogger(__name__)


@dataclass
class Projection:
    """Everything one world-model pass produces."""

    graph: EventGraph
    ranked: RankedEvents
    strata_all: list[Stratum]
    strata_selected: list[Stratum]
    bundle: FeedbackBundle
    warnings: list[str] = field(default_factory=list)


def _expand_segments(
    projector: Gateway, graph: EventGraph, ranked: RankedEvents, jobs: int
) -> list[Stratum]:
    """Segment expansion over the ranked events, merged in rank order.

    With ``jobs`` > 1 the calls fan out on a thread pool; results are still
    collected in rank order, and a failure keeps only the strata of events
    ranked before it, matching the sequential behavior.
    """
    collected: list[Stratum] = []
    if jobs <= 1 or len(ranked) <= 1:
        for entry in ranked:
            try:
                collected.extend(segment_expand(projector, graph, entry.id))
            except MalformedOutput as exc:
                raise PipelineAborted(
                    f"segment expansion of {entry.id} stayed malformed after repair: {exc}",
                    graph=graph,
                    strata=collected,
                ) from exc
        return collected

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [
            pool.submit(segment_expand, projector, graph, entry.id) for entry in ranked
        ]
        for entry, future in zip(ranked, futures):
            try:
                collected.extend(future.result())
            except MalformedOutput as exc:
                raise PipelineAborted(
                    f"segment expansion of {entry.id} stayed malformed after repair: {exc}",
                    graph=graph,
                    strata=collected,
                ) from exc
    return collected


def project(
    projector: Gateway,
    action: Action,
    search_cfg: SearchConfig,
    k: int = DEFAULT_TOP_EVENTS,
    m: int = DEFAULT_MAX_STRATA,
    jobs: int = 1,
) -> Projection:
    """Run search, rank the events, expand strata, and build the feedback signal.

    Raises :class:`PipelineAborted` (partial artifacts attached) when the
    search or a segment expansion fails past its repair retry.
    """
    graph = run_search(projector, action, search_cfg)
    ranked = rank_events(graph, k) if len(graph) > 1 else []
    if not ranked:
        logger.info("projection produced no rankable events")
        bundle = aggregate([], [], degraded=False)
        return Projection(graph, [], [], [], bundle)

    strata_all = _expand_segments(projector, graph, ranked, jobs)
    selected = select_strata(strata_all, m, event_order=[entry.id for entry in ranked])
    summaries, degraded = summarize_events(projector, graph, ranked)
    entries, warnings = collect_feedback(projector, selected, graph)
    bundle = aggregate(summaries, entries, degraded=degraded)
    return Projection(graph, ranked, strata_all, selected, bundle, warnings)
