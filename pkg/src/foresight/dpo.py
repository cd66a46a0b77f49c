"""Preference-pair export and a numerically verified DPO loss evaluator.

This module is the boundary to any external trainer: it never tokenizes or
scores text.  Callers supply the four response log-probabilities (at whatever
granularity they chose; record it in pair metadata) and get back the scalar
loss and its exact partials.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import NonFiniteInput

# Above this |z| the exact softplus is numerically indistinguishable from its
# asymptote and the naive exp would overflow.
_SOFTPLUS_CUTOFF = 30.0


@dataclass(frozen=True)
class PreferencePair:
    """One training record: the refined response is preferred over the original."""

    prompt: str
    chosen: str
    rejected: str
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RefineResult:
    """The slice of a refinement run that pair building needs."""

    prompt: str
    original: str
    refined: str
    rounds: int = 1
    run_id: str = ""
    source_id: str = ""


@dataclass(frozen=True)
class DpoInputs:
    """Log-probabilities of the chosen/rejected responses under the policy
    (theta) and reference models, plus the deviation weight beta."""

    logp_theta_w: float
    logp_theta_l: float
    logp_ref_w: float
    logp_ref_l: float
    beta: float

    def __post_init__(self) -> None:
        for name in ("logp_theta_w", "logp_theta_l", "logp_ref_w", "logp_ref_l", "beta"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise NonFiniteInput(name, value)
        if self.beta <= 0:
            raise ValueError("beta must be positive")

    @property
    def margin(self) -> float:
        """beta times the policy-vs-reference log-ratio difference."""
        return self.beta * (
            (self.logp_theta_w - self.logp_ref_w)
            - (self.logp_theta_l - self.logp_ref_l)
        )


def _normalized(text: str) -> str:
    return " ".join(text.split())


def make_pairs(results: Iterable[RefineResult]) -> tuple[list[PreferencePair], int]:
    """Build one pair per refinement result, skipping textual fixpoints.

    Returns the pairs and the number of skipped fixpoint-identical results.
    """
    pairs: list[PreferencePair] = []
    skipped = 0
    for result in results:
        if _normalized(result.refined) == _normalized(result.original):
            skipped += 1
            continue
        pairs.append(
            PreferencePair(
                prompt=result.prompt,
                chosen=result.refined,
                rejected=result.original,
                meta={
                    "rounds": result.rounds,
                    "run_id": result.run_id,
                    "source_id": result.source_id,
                },
            )
        )
    return pairs, skipped


def export_jsonl(pairs: list[PreferencePair], path: str | Path) -> int:
    """Write one JSON record per line (prompt, chosen, rejected, meta) and
    return the line count."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for pair in pairs:
            record = {
                "prompt": pair.prompt,
                "chosen": pair.chosen,
                "rejected": pair.rejected,
                "meta": pair.meta,
            }
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
    return len(pairs)


def parse_jsonl(path: str | Path) -> list[PreferencePair]:
    pairs = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        record = json.loads(line)
        pairs.append(
            PreferencePair(
                prompt=record["prompt"],
                chosen=record["chosen"],
                rejected=record["rejected"],
                meta=record.get("meta", {}),
            )
        )
    return pairs


def write_pair_stats(path: str | Path, written: int, skipped_fixpoint: int) -> None:
    Path(path).write_text(
        json.dumps({"written": written, "skipped_fixpoint": skipped_fixpoint}) + "\n",
        encoding="utf-8",
    )


def _softplus(x: float) -> float:
    """ln(1 + e^x), switching to the asymptotes for large |x|."""
    if x > _SOFTPLUS_CUTOFF:
        return x
    if x < -_SOFTPLUS_CUTOFF:
        return math.exp(x)
    return math.log1p(math.exp(x))


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def dpo_loss(x: DpoInputs) -> float:
    """-ln(sigmoid(z)) for z = beta * ((tw - rw) - (tl - rl)).

    Computed as softplus(-z), which is exact for z = 0 (ln 2) and stable for
    |z| far beyond anything a sane beta produces.
    """
    return _softplus(-x.margin)


def dpo_grad(x: DpoInputs) -> tuple[float, float, float, float]:
    """Partials of :func:`dpo_loss` with respect to the four log-probs.

    With g = beta * (1 - sigmoid(z)): returns (-g, +g, +g, -g) for
    (logp_theta_w, logp_theta_l, logp_ref_w, logp_ref_l).
    """
    g = x.beta * (1.0 - _sigmoid(x.margin))
    return (-g, g, g, -g)
