"""Refines a response against the projected feedback and iterates to a fixpoint."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmptyRefinement, ForesightError, PipelineAborted
from .gateway import ChatRequest, Gateway
from .graph import Action
from .pipeline import Projection, project
from .search import SearchConfig
from .strata import DEFAULT_MAX_STRATA, DEFAULT_TOP_EVENTS

logger = logging.getLogger(__name__)

POLICY_SYSTEM = "You are a helpful, safety-conscious assistant."

_REFINEMENT_TEMPLATE = (
    "A user asked: {prompt}\n"
    "A draft response was: {response}\n"
    "A long-horizon simulation projected the following consequences and "
    "population feedback:\n{feedback}\n"
    "Rewrite the response so it minimizes the projected risks to every "
    "affected group while remaining helpful. Output only the revised response."
)


@dataclass(frozen=True)
class ImproverConfig:
    max_rounds: int = 2
    fixpoint_normalization: str = "whitespace"

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")
        if self.fixpoint_normalization not in ("exact", "whitespace"):
            raise ValueError("fixpoint_normalization must be 'exact' or 'whitespace'")


@dataclass(frozen=True)
class RefinementRound:
    """Audit record for one simulate-and-refine pass."""

    round: int
    input_response: str
    output_response: str
    feedback_rendered: str
    graph_file: str = ""
    degraded: bool = False


@dataclass
class RefineOutcome:
    final_response: str
    rounds: list[RefinementRound]
    warnings: list[str] = field(default_factory=list)


def refinement_prompt(prompt: str, response: str, feedback_rendered: str) -> str:
    """The refinement template with the literals substituted."""
    return _REFINEMENT_TEMPLATE.format(
        prompt=prompt, response=response, feedback=feedback_rendered
    )


def refine_once(
    policy: Gateway,
    prompt: str,
    response: str,
    feedback_rendered: str,
    round_index: int = 1,
) -> str:
    """One improver call on the policy model; an empty reply is an error."""
    request = ChatRequest(
        tag=f"refine:{round_index}",
        system=POLICY_SYSTEM,
        user=refinement_prompt(prompt, response, feedback_rendered),
    )
    refined = policy.complete(request)
    if not refined.strip():
        raise EmptyRefinement()
    return refined


def _normalize(text: str, mode: str) -> str:
    if mode == "whitespace":
        return " ".join(text.split())
    return text


def write_report(run_dir: Path, outcome: RefineOutcome, run_id: str) -> None:
    report = {
        "run_id": run_id,
        "rounds": len(outcome.rounds),
        "degraded": [r.degraded for r in outcome.rounds],
        "warnings": outcome.warnings,
    }
    (run_dir / "report.json").write_text(
        json.dumps(report, indent=2, ensure_ascii=False, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def _write_round_artifacts(
    run_dir: Path | None, round_index: int, projection: Projection, refined: str
) -> str:
    if run_dir is None:
        return ""
    graph_file = run_dir / f"graph-round{round_index}.json"
    graph_file.write_text(projection.graph.serialize(), encoding="utf-8")
    (run_dir / f"feedback-round{round_index}.txt").write_text(
        projection.bundle.rendered + "\n", encoding="utf-8"
    )
    (run_dir / f"response-round{round_index}.txt").write_text(
        refined + "\n", encoding="utf-8"
    )
    return str(graph_file)


def refine_loop(
    projector: Gateway,
    policy: Gateway,
    prompt: str,
    initial_response: str,
    search_cfg: SearchConfig,
    improver_cfg: ImproverConfig,
    k: int = DEFAULT_TOP_EVENTS,
    m: int = DEFAULT_MAX_STRATA,
    jobs: int = 1,
    run_dir: Path | None = None,
) -> RefineOutcome:
    """Simulate, refine, repeat until a textual fixpoint or the round cap.

    Every round re-projects from the current candidate response, so feedback
    always tracks what would actually be sent.  Aborts from the world-model
    pass propagate as :class:`PipelineAborted` with the completed rounds
    attached.
    """
    rounds: list[RefinementRound] = []
    warnings: list[str] = []
    current = initial_response
    for round_index in range(1, improver_cfg.max_rounds + 1):
        try:
            projection = project(
                projector, Action(prompt, current), search_cfg, k=k, m=m, jobs=jobs
            )
            refined = refine_once(policy, prompt, current, projection.bundle.rendered, round_index)
        except PipelineAborted as exc:
            exc.rounds = list(rounds)
            raise
        except ForesightError as exc:
            aborted = PipelineAborted(
                f"round {round_index} failed: {exc}", rounds=rounds
            )
            raise aborted from exc
        warnings.extend(f"round {round_index}: {w}" for w in projection.warnings)
        graph_file = _write_round_artifacts(run_dir, round_index, projection, refined)
        rounds.append(
            RefinementRound(
                round=round_index,
                input_response=current,
                output_response=refined,
                feedback_rendered=projection.bundle.rendered,
                graph_file=graph_file,
                degraded=projection.bundle.degraded,
            )
        )
        mode = improver_cfg.fixpoint_normalization
        if _normalize(refined, mode) == _normalize(current, mode):
            logger.info("refinement reached a fixpoint in round %d", round_index)
            current = refined
            break
        current = refined
    return RefineOutcome(final_response=current, rounds=rounds, warnings=warnings)
