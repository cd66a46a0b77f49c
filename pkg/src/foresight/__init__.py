"""Long-horizon consequence projection and response refinement for language models.

The pipeline grows a causal event graph from a (prompt, response) action,
ranks the projected events, derives feedback from affected population
segments, refines the response against that feedback, and can export the
(original, refined) pairs as a DPO-ready preference dataset.  An evaluation
harness provides pairwise LLM-judge comparison with position-bias mitigation
and indirect-harm classification.
"""

from .dpo import DpoInputs, PreferencePair, RefineResult, dpo_grad, dpo_loss, export_jsonl, make_pairs
from .errors import ForesightError, MalformedOutput, PipelineAborted
from .evaluation import (
    BenchmarkResult,
    ComparisonRecord,
    JudgeVerdict,
    PromptRecord,
    accuracy,
    classify_indirect_harm,
    compare,
    judge_once,
    load_prompt_records,
    sample,
    tabulate,
)
from .feedback import FeedbackBundle, aggregate, collect_feedback, critique_prompt, summarize_events
from .gateway import (
    CallLog,
    ChatRequest,
    Gateway,
    HttpBackend,
    ProviderConfig,
    Script,
    ScriptedBackend,
    load_script,
    parse_event_batch,
    parse_stratum_batch,
)
from .graph import (
    Action,
    Event,
    EventGraph,
    Horizon,
    OrdinalBucket,
    Trajectory,
    ordinal_value,
    to_dot,
)
from .improver import ImproverConfig, RefinementRound, refine_loop, refine_once, refinement_prompt
from .pipeline import Projection, project
from .search import SearchConfig, expand_node, search_bfs, search_dfs, should_stop
from .strata import RankedEvents, ScoredEvent, Stratum, event_score, rank_events, segment_expand, select_strata

__version__ = "0.1.0"

__all__ = [
    "Action",
    "BenchmarkResult",
    "CallLog",
    "ChatRequest",
    "ComparisonRecord",
    "DpoInputs",
    "Event",
    "EventGraph",
    "FeedbackBundle",
    "ForesightError",
    "Gateway",
    "Horizon",
    "HttpBackend",
    "ImproverConfig",
    "JudgeVerdict",
    "MalformedOutput",
    "OrdinalBucket",
    "PipelineAborted",
    "PreferencePair",
    "Projection",
    "PromptRecord",
    "ProviderConfig",
    "RankedEvents",
    "RefineResult",
    "RefinementRound",
    "ScoredEvent",
    "Script",
    "ScriptedBackend",
    "SearchConfig",
    "Stratum",
    "Trajectory",
    "accuracy",
    "aggregate",
    "classify_indirect_harm",
    "collect_feedback",
    "compare",
    "critique_prompt",
    "dpo_grad",
    "dpo_loss",
    "event_score",
    "expand_node",
    "export_jsonl",
    "judge_once",
    "load_prompt_records",
    "load_script",
    "make_pairs",
    "ordinal_value",
    "parse_event_batch",
    "parse_stratum_batch",
    "project",
    "rank_events",
    "refine_loop",
    "refine_once",
    "refinement_prompt",
    "sample",
    "search_bfs",
    "search_dfs",
    "segment_expand",
    "select_strata",
    "should_stop",
    "summarize_events",
    "tabulate",
    "to_dot",
]
