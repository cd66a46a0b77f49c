"""Builds critique prompts, collects per-stratum feedback, and renders the
aggregate signal handed to the improver."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

from .errors import GatewayError, MalformedOutput
from .gateway import ChatRequest, Gateway, complete_parsed
from .graph import Event, EventGraph
from .strata import RankedEvents, Stratum

logger = logging.getLogger(__name__)

SUMMARY_SYSTEM = "You summarize projected societal events."
CRITIQUE_SYSTEM = "You simulate the perspective of an affected population group."

EVENTS_HEADER = "PROJECTED CRITICAL EVENTS:"
STRATA_HEADER = "AFFECTED POPULATION FEEDBACK:"

_CRITIQUE_TEMPLATE = (
    "How would population group {descriptor} likely be affected by the following "
    "incident: [event information: description={d}; likelihood={p}; horizon={h}; "
    "impact={i}]? Please describe their potential concerns and any specific "
    "experience they might have."
)


@dataclass(frozen=True)
class FeedbackBundle:
    """Ordered event summaries and stratum feedback plus their rendering.

    ``degraded`` marks a run where summaries fell back to raw event
    descriptions because the model would not produce a matching list.
    """

    event_summaries: tuple[tuple[str, str], ...]
    stratum_feedback: tuple[tuple[str, str, str], ...]
    rendered: str
    degraded: bool = False


def critique_prompt(stratum: Stratum, event: Event) -> str:
    """The critique template filled with the stratum and event literals."""
    return _CRITIQUE_TEMPLATE.format(
        descriptor=stratum.descriptor,
        d=event.description,
        p=event.likelihood.value,
        h=event.horizon.value,
        i=event.impact.value,
    )


def _parse_summary_list(expected: int, text: str) -> list[str]:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedOutput(exc.pos, f"not valid JSON: {exc.msg}") from exc
    if not isinstance(data, list) or not all(isinstance(item, str) for item in data):
        raise MalformedOutput(0, "expected a JSON array of strings")
    if len(data) != expected:
        raise MalformedOutput(len(data), f"expected {expected} summaries, got {len(data)}")
    return data


def summarize_events(
    gateway: Gateway, graph: EventGraph, ranked: RankedEvents
) -> tuple[list[tuple[str, str]], bool]:
    """One call summarizing every ranked event, in rank order.

    Returns the (event id, summary) pairs and a degraded flag: if the reply
    count still mismatches after the repair retry, each event's own
    description stands in for its summary.
    """
    if not ranked:
        raise ValueError("ranked events must be non-empty")
    lines = []
    for entry in ranked:
        event = graph.node(entry.id)
        lines.append(
            f"{event.id}: description={event.description}; "
            f"likelihood={event.likelihood.value}; horizon={event.horizon.value}; "
            f"impact={event.impact.value}"
        )
    user = (
        "\n".join(lines)
        + f"\n\nWrite a summary of at most two sentences for each event above, in "
        f"order. Respond only with a JSON array of exactly {len(ranked)} strings."
    )
    request = ChatRequest(tag="summarize:E'", system=SUMMARY_SYSTEM, user=user)
    try:
        summaries, _ = complete_parsed(
            gateway, request, lambda text: _parse_summary_list(len(ranked), text)
        )
    except MalformedOutput as exc:
        logger.warning("summary reply unusable after repair (%s); using descriptions", exc)
        return [(entry.id, graph.node(entry.id).description) for entry in ranked], True
    return [(entry.id, summary) for entry, summary in zip(ranked, summaries)], False


def collect_feedback(
    gateway: Gateway, strata: list[Stratum], graph: EventGraph
) -> tuple[list[tuple[str, str, str]], list[str]]:
    """One critique call per selected stratum, outputs in selection order.

    A stratum whose call fails is dropped with a warning record; feedback
    collection never aborts the run.
    """
    entries: list[tuple[str, str, str]] = []
    warnings: list[str] = []
    for index, stratum in enumerate(strata):
        event = graph.node(stratum.source_event)
        request = ChatRequest(
            tag=f"critique:{stratum.source_event}:{index}",
            system=CRITIQUE_SYSTEM,
            user=critique_prompt(stratum, event),
        )
        try:
            text = gateway.complete(request)
        except GatewayError as exc:
            message = f"critique for {stratum.descriptor!r} ({stratum.source_event}) failed: {exc}"
            logger.warning(message)
            warnings.append(message)
            continue
        entries.append((stratum.descriptor, stratum.source_event, text))
    return entries, warnings


def aggregate(
    event_summaries: list[tuple[str, str]],
    stratum_feedback: list[tuple[str, str, str]],
    degraded: bool = False,
) -> FeedbackBundle:
    """Concatenate summaries then stratum feedback into the final signal.

    Blocks are joined by single blank lines; input order is preserved, so the
    rendering is a deterministic function of the inputs.
    """
    blocks = [EVENTS_HEADER]
    for number, (_, summary) in enumerate(event_summaries, start=1):
        blocks.append(f"{number}. {summary}")
    blocks.append(STRATA_HEADER)
    for number, (descriptor, _, text) in enumerate(stratum_feedback, start=1):
        blocks.append(f"{number}. [{descriptor}] {text}")
    return FeedbackBundle(
        event_summaries=tuple(event_summaries),
        stratum_feedback=tuple(stratum_feedback),
        rendered="\n\n".join(blocks),
        degraded=degraded,
    )
