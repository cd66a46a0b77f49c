"""Shared test helpers: scripted gateways and small graph builders."""

from __future__ import annotations

from foresight.gateway import CallLog, Gateway, Script, ScriptedBackend
from foresight.graph import Action, EventGraph, Horizon, OrdinalBucket

LOW = OrdinalBucket.LOW
MEDIUM = OrdinalBucket.MEDIUM
HIGH = OrdinalBucket.HIGH


def make_gateway(entries: dict, log: CallLog | None = None) -> Gateway:
    """Gateway over a scripted backend; values may be strings or lists."""
    normalized = {
        tag: [value] if isinstance(value, str) else list(value)
        for tag, value in entries.items()
    }
    return Gateway(ScriptedBackend(Script(normalized)), log)


def make_graph(prompt: str = "What should we do?", response: str = "A plan.") -> EventGraph:
    return EventGraph(Action(prompt, response))


def add(
    graph: EventGraph,
    description: str,
    likelihood: OrdinalBucket = MEDIUM,
    impact: OrdinalBucket = MEDIUM,
    parents: list[str] | None = None,
    horizon: Horizon = Horizon.SHORT_TERM,
) -> str:
    return graph.add_event(
        description=description,
        likelihood=likelihood,
        horizon=horizon,
        impact=impact,
        parent_ids=parents or ["e0000"],
    )


def event_json(description: str, likelihood: str = "medium", horizon: str = "short-term",
               impact: str = "medium", parent_ids: list[str] | None = None) -> dict:
    return {
        "description": description,
        "likelihood": likelihood,
        "horizon": horizon,
        "impact": impact,
        "parent_ids": parent_ids or ["e0000"],
    }
