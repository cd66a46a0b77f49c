"""Command-line entry point: project, refine, export-prefs, eval, classify."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from .dpo import (
    RefineResult,
    export_jsonl,
    make_pairs,
    write_pair_stats,
)
from .errors import ClassificationError, ForesightError, PipelineAborted
from .evaluation import (
    ComparisonRecord,
    compare,
    classify_indirect_harm,
    load_prompt_records,
    sample,
    tabulate,
)
from .gateway import CallLog, ChatRequest, Gateway, HttpBackend, ProviderConfig, ScriptedBackend, load_script
from .graph import Action, to_dot
from .improver import ImproverConfig, POLICY_SYSTEM, refine_loop, write_report, RefineOutcome
from .pipeline import project
from .search import SearchConfig
from .strata import DEFAULT_MAX_STRATA, DEFAULT_TOP_EVENTS

logger = logging.getLogger(__name__)

# Recorded for external trainers; nothing in this package consumes them.
TRAINER_HPARAM_DEFAULTS = {
    "learning_rate": 2e-5,
    "batch_size": 48,
    "weight_decay": 0.0,
    "beta": 0.1,
    "scheduler": "cosine",
    "epochs": 3,
    "max_length": 1024,
}

_CONFIG_KEYS = {
    "projector", "policy", "judge", "search", "improver", "k", "m", "seed",
    "out_dir", "eval_sample_size", "jobs", "trainer_hparams",
}

_PROVIDER_KEYS = {"base_url", "model", "api_key_env", "timeout", "max_retries", "backoff_base"}

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ABORT = 2


@dataclass(frozen=True)
class ProviderSpec:
    """Either a script path (offline) or remote endpoint settings."""

    script_path: Path | None = None
    provider: ProviderConfig | None = None


@dataclass
class RunConfig:
    projector: ProviderSpec | None = None
    policy: ProviderSpec | None = None
    judge: ProviderSpec | None = None
    search: SearchConfig = field(default_factory=SearchConfig)
    improver: ImproverConfig = field(default_factory=ImproverConfig)
    k: int = DEFAULT_TOP_EVENTS
    m: int = DEFAULT_MAX_STRATA
    seed: str = "0"
    out_dir: Path = Path("runs")
    eval_sample_size: int = 100
    jobs: int = 1
    trainer_hparams: dict = field(default_factory=lambda: dict(TRAINER_HPARAM_DEFAULTS))


def _parse_provider(raw: dict, base_dir: Path, name: str) -> ProviderSpec:
    if not isinstance(raw, dict):
        raise ValueError(f"{name} must be an object")
    if "script" in raw:
        extra = set(raw) - {"script"}
        if extra:
            raise ValueError(f"{name}: unexpected keys next to 'script': {sorted(extra)}")
        path = (base_dir / raw["script"]).resolve()
        if not path.is_file():
            raise ValueError(f"{name}: script file does not exist: {path}")
        return ProviderSpec(script_path=path)
    extra = set(raw) - _PROVIDER_KEYS
    if extra:
        raise ValueError(f"{name}: unknown provider keys: {sorted(extra)}")
    for required in ("base_url", "model"):
        if required not in raw:
            raise ValueError(f"{name}: provider requires {required!r}")
    return ProviderSpec(provider=ProviderConfig(**raw))


def load_config(path: str | Path) -> RunConfig:
    """Read and validate a run config; script paths resolve relative to it."""
    path = Path(path)
    raw = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ValueError(f"{path}: unknown config keys: {sorted(unknown)}")
    base_dir = path.parent
    config = RunConfig()
    for name in ("projector", "policy", "judge"):
        if name in raw:
            setattr(config, name, _parse_provider(raw[name], base_dir, name))
    if "search" in raw:
        config.search = SearchConfig(**raw["search"])
    if "improver" in raw:
        config.improver = ImproverConfig(**raw["improver"])
    config.k = int(raw.get("k", config.k))
    config.m = int(raw.get("m", config.m))
    config.seed = str(raw.get("seed", config.seed))
    config.out_dir = Path(raw.get("out_dir", config.out_dir))
    config.eval_sample_size = int(raw.get("eval_sample_size", config.eval_sample_size))
    config.jobs = int(raw.get("jobs", config.jobs))
    if "trainer_hparams" in raw:
        config.trainer_hparams = dict(raw["trainer_hparams"])
    if config.k < 1 or config.m < 1:
        raise ValueError("k and m must be positive")
    if config.jobs < 1:
        raise ValueError("jobs must be at least 1")
    return config


def build_gateway(spec: ProviderSpec | None, name: str, log: CallLog | None) -> Gateway:
    if spec is None:
        raise ValueError(f"config does not define the {name} model")
    if spec.script_path is not None:
        return Gateway(ScriptedBackend(load_script(spec.script_path)), log)
    assert spec.provider is not None
    return Gateway(HttpBackend(spec.provider), log)


def _run_id(*parts: str) -> str:
    return hashlib.sha256("\x00".join(parts).encode("utf-8")).hexdigest()[:12]


def _make_run_dir(config: RunConfig, run_id: str) -> Path:
    run_dir = config.out_dir / f"run-{run_id}"
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def _dump_json(path: Path, payload: dict) -> None:
    path.write_text(
        json.dumps(payload, indent=2, ensure_ascii=False, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def _initial_response(policy: Gateway, prompt: str) -> str:
    return policy.complete(
        ChatRequest(tag="refine:0", system=POLICY_SYSTEM, user=prompt)
    )


# -- commands -----------------------------------------------------------------


def cmd_project(
    config: RunConfig, prompt: str, response: str, run_id: str | None = None
) -> int:
    """Run one world-model pass and write graph.json, feedback.txt, graph.dot."""
    try:
        action = Action(prompt, response)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    run_id = run_id or _run_id("project", config.seed, prompt, response)
    run_dir = _make_run_dir(config, run_id)
    log = CallLog(run_dir)
    try:
        projector = build_gateway(config.projector, "projector", log)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        projection = project(
            projector, action, config.search, k=config.k, m=config.m, jobs=config.jobs
        )
    except PipelineAborted as exc:
        print(f"pipeline aborted: {exc}", file=sys.stderr)
        if exc.graph is not None:
            (run_dir / "graph.json").write_text(exc.graph.serialize(), encoding="utf-8")
            (run_dir / "graph.dot").write_text(to_dot(exc.graph), encoding="utf-8")
        return EXIT_ABORT
    except ForesightError as exc:
        print(f"pipeline aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    (run_dir / "graph.json").write_text(projection.graph.serialize(), encoding="utf-8")
    (run_dir / "graph.dot").write_text(to_dot(projection.graph), encoding="utf-8")
    (run_dir / "feedback.txt").write_text(projection.bundle.rendered + "\n", encoding="utf-8")
    for warning in projection.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(str(run_dir))
    return EXIT_OK


def cmd_refine(
    config: RunConfig, prompt: str, response: str | None = None, run_id: str | None = None
) -> int:
    """Full refinement loop; prints the final response to stdout."""
    if not prompt.strip():
        print("error: prompt must be non-empty", file=sys.stderr)
        return EXIT_USAGE
    run_id = run_id or _run_id("refine", config.seed, prompt, response or "")
    run_dir = _make_run_dir(config, run_id)
    log = CallLog(run_dir)
    try:
        projector = build_gateway(config.projector, "projector", log)
        policy = build_gateway(config.policy, "policy", log)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if response is None:
            response = _initial_response(policy, prompt)
        outcome = refine_loop(
            projector,
            policy,
            prompt,
            response,
            config.search,
            config.improver,
            k=config.k,
            m=config.m,
            jobs=config.jobs,
            run_dir=run_dir,
        )
    except PipelineAborted as exc:
        print(f"pipeline aborted: {exc}", file=sys.stderr)
        partial = RefineOutcome(final_response="", rounds=exc.rounds)
        write_report(run_dir, partial, run_id)
        return EXIT_ABORT
    except ForesightError as exc:
        print(f"pipeline aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    write_report(run_dir, outcome, run_id)
    for warning in outcome.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(outcome.final_response)
    return EXIT_OK


def cmd_export_prefs(
    config: RunConfig,
    prompts_file: str | Path,
    out_file: str | Path,
    run_id: str | None = None,
) -> int:
    """Refine every prompt in the dataset and export DPO preference pairs."""
    try:
        records = load_prompt_records(prompts_file)
        content = Path(prompts_file).read_bytes()
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: cannot read {prompts_file}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    run_id = run_id or _run_id("export", config.seed, hashlib.sha256(content).hexdigest())
    run_dir = _make_run_dir(config, run_id)
    log = CallLog(run_dir)
    try:
        projector = build_gateway(config.projector, "projector", log)
        policy = build_gateway(config.policy, "policy", log)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    results: list[RefineResult] = []
    aborted = False
    for index, record in enumerate(records, 1):
        print(f"[{index}/{len(records)}] refining {record.id}", file=sys.stderr)
        try:
            original = _initial_response(policy, record.prompt)
            outcome = refine_loop(
                projector,
                policy,
                record.prompt,
                original,
                config.search,
                config.improver,
                k=config.k,
                m=config.m,
                jobs=config.jobs,
            )
        except ForesightError as exc:
            print(f"pipeline aborted on {record.id}: {exc}", file=sys.stderr)
            aborted = True
            break
        results.append(
            RefineResult(
                prompt=record.prompt,
                original=original,
                refined=outcome.final_response,
                rounds=len(outcome.rounds),
                run_id=run_id,
                source_id=record.id,
            )
        )

    pairs, skipped = make_pairs(results)
    written = export_jsonl(pairs, out_file)
    write_pair_stats(Path(out_file).parent / "pairs-stats.json", written, skipped)
    _dump_json(
        run_dir / "report.json",
        {
            "run_id": run_id,
            "pairs_written": written,
            "skipped_fixpoint": skipped,
            "trainer_hparams": config.trainer_hparams,
        },
    )
    print(f"wrote {written} pairs ({skipped} fixpoint skips) to {out_file}", file=sys.stderr)
    return EXIT_ABORT if aborted else EXIT_OK


def _load_response_file(path: str | Path) -> dict[str, str]:
    responses: dict[str, str] = {}
    for number, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        raw = json.loads(line)
        record_id = str(raw["id"])
        if record_id in responses:
            raise ValueError(f"{path}:{number}: duplicate id {record_id!r}")
        responses[record_id] = raw["response"]
    return responses


def cmd_eval(
    config: RunConfig,
    prompts_file: str | Path,
    ours_file: str | Path,
    baseline_file: str | Path,
    run_id: str | None = None,
) -> int:
    """Pairwise-judge our responses against a baseline and tabulate."""
    try:
        records = load_prompt_records(prompts_file)
        ours = _load_response_file(ours_file)
        baseline = _load_response_file(baseline_file)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    n = config.eval_sample_size
    if n > len(records):
        print(
            f"warning: sample size {n} exceeds dataset size {len(records)}; capping",
            file=sys.stderr,
        )
        n = len(records)
    sampled = sample(records, n, config.seed)
    missing = [r.id for r in sampled if r.id not in ours or r.id not in baseline]
    if missing:
        print(f"error: response files missing ids: {missing}", file=sys.stderr)
        return EXIT_USAGE

    digest = hashlib.sha256()
    for path in (prompts_file, ours_file, baseline_file):
        digest.update(Path(path).read_bytes())
    run_id = run_id or _run_id("eval", config.seed, digest.hexdigest())
    run_dir = _make_run_dir(config, run_id)
    log = CallLog(run_dir)
    try:
        judge = build_gateway(config.judge, "judge", log)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    comparisons: list[ComparisonRecord] = []
    try:
        for record in sampled:
            comparisons.append(
                compare(judge, record.prompt, ours[record.id], baseline[record.id], record.id)
            )
    except ForesightError as exc:
        print(f"pipeline aborted: {exc}", file=sys.stderr)
        _write_eval_artifacts(run_dir, comparisons, None)
        return EXIT_ABORT

    comparisons.sort(key=lambda record: record.prompt_id)
    result = tabulate(comparisons)
    _write_eval_artifacts(run_dir, comparisons, result)
    print(result.render())
    return EXIT_OK


def _write_eval_artifacts(run_dir: Path, comparisons, result) -> None:
    lines = ["prompt_id,run1,run2,final"]
    for record in comparisons:
        lines.append(
            f"{record.prompt_id},{record.run1.value},{record.run2.value},{record.final.value}"
        )
    if result is not None:
        lines.append("")
        lines.append(
            f"# n={result.n} win={result.win_count} tie={result.tie_count} "
            f"lose={result.lose_count} | {result.render()}"
        )
    (run_dir / "eval.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if result is not None:
        _dump_json(
            run_dir / "report.json",
            {
                "n": result.n,
                "counts": {
                    "win": result.win_count,
                    "tie": result.tie_count,
                    "lose": result.lose_count,
                },
                "ratios": {
                    "win": f"{result.win_count}/{result.n}",
                    "tie": f"{result.tie_count}/{result.n}",
                    "lose": f"{result.lose_count}/{result.n}",
                },
                "percent": {
                    "win": str(result.win),
                    "tie": str(result.tie),
                    "lose": str(result.lose),
                },
            },
        )


def cmd_classify(
    config: RunConfig, prompts_file: str | Path, run_id: str | None = None
) -> int:
    """Classify each prompt as indirectly harmful or benign via projection."""
    try:
        records = load_prompt_records(prompts_file)
        content = Path(prompts_file).read_bytes()
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: cannot read {prompts_file}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    run_id = run_id or _run_id("classify", config.seed, hashlib.sha256(content).hexdigest())
    run_dir = _make_run_dir(config, run_id)
    log = CallLog(run_dir)
    try:
        projector = build_gateway(config.projector, "projector", log)
        policy = build_gateway(config.policy, "policy", log)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    rows: list[dict] = []
    errors = 0
    matches = 0
    labeled = 0
    for record in records:
        try:
            classification = classify_indirect_harm(
                projector, policy, record, config.search,
                k=config.k, m=config.m, jobs=config.jobs,
            )
        except (ClassificationError, ForesightError) as exc:
            print(f"error on {record.id}: {exc}", file=sys.stderr)
            rows.append({"id": record.id, "error": str(exc)})
            errors += 1
            continue
        rows.append(
            {
                "id": record.id,
                "harmful": classification.harmful,
                "rationale": classification.rationale,
            }
        )
        if record.label is not None:
            labeled += 1
            matches += classification.harmful == (record.label == "harmful")

    predictions_path = run_dir / "predictions.jsonl"
    with predictions_path.open("w", encoding="utf-8", newline="\n") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")
    if labeled:
        print(f"accuracy {matches}/{labeled}")
    print(str(predictions_path), file=sys.stderr)
    return EXIT_ABORT if errors else EXIT_OK


# -- argument parsing ----------------------------------------------------------


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", required=True, help="path to the run config JSON")
    sub.add_argument("--run-id", default=None, help="override the derived run id")
    sub.add_argument("--out-dir", default=None, help="override out_dir")
    sub.add_argument("--seed", default=None)
    sub.add_argument("--jobs", type=int, default=None, help="bound concurrent model calls")
    sub.add_argument("--k", type=int, default=None, help="top events to expand")
    sub.add_argument("--m", type=int, default=None, help="max strata to critique")
    sub.add_argument("--eval-sample-size", type=int, default=None)
    sub.add_argument("--search.strategy", dest="search_strategy", choices=("bfs", "dfs"), default=None)
    sub.add_argument("--search.l-max", dest="search_l_max", type=int, default=None)
    sub.add_argument("--search.branching", dest="search_branching", type=int, default=None)
    sub.add_argument("--search.node-budget", dest="search_node_budget", type=int, default=None)
    sub.add_argument("--search.prune-low", dest="search_prune_low", type=_parse_bool, default=None)
    sub.add_argument("--improver.max-rounds", dest="improver_max_rounds", type=int, default=None)
    sub.add_argument(
        "--improver.fixpoint-normalization",
        dest="improver_fixpoint_normalization",
        choices=("exact", "whitespace"),
        default=None,
    )


def apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    """Apply flag overrides one-to-one onto the loaded config."""
    search_fields = {
        "strategy": args.search_strategy,
        "l_max": args.search_l_max,
        "branching": args.search_branching,
        "node_budget": args.search_node_budget,
        "prune_low": args.search_prune_low,
    }
    updates = {name: value for name, value in search_fields.items() if value is not None}
    if updates:
        config.search = replace(config.search, **updates)
    improver_fields = {
        "max_rounds": args.improver_max_rounds,
        "fixpoint_normalization": args.improver_fixpoint_normalization,
    }
    updates = {name: value for name, value in improver_fields.items() if value is not None}
    if updates:
        config.improver = replace(config.improver, **updates)
    if args.out_dir is not None:
        config.out_dir = Path(args.out_dir)
    if args.seed is not None:
        config.seed = args.seed
    if args.jobs is not None:
        config.jobs = args.jobs
    if args.k is not None:
        config.k = args.k
    if args.m is not None:
        config.m = args.m
    if args.eval_sample_size is not None:
        config.eval_sample_size = args.eval_sample_size
    return config


def _read_text_arg(value: str | None, file_value: str | None) -> str | None:
    if value is not None:
        return value
    if file_value is not None:
        return Path(file_value).read_text(encoding="utf-8").strip()
    return None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foresight",
        description="Project long-horizon consequences of model responses and refine them.",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging to stderr")
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser("project", help="simulate consequences of one response")
    _add_common(sub)
    sub.add_argument("--prompt", default=None)
    sub.add_argument("--prompt-file", default=None)
    sub.add_argument("--response", default=None)
    sub.add_argument("--response-file", default=None)

    sub = commands.add_parser("refine", help="refine a response against projected feedback")
    _add_common(sub)
    sub.add_argument("--prompt", default=None)
    sub.add_argument("--prompt-file", default=None)
    sub.add_argument("--response", default=None)
    sub.add_argument("--response-file", default=None)

    sub = commands.add_parser("export-prefs", help="build a DPO preference dataset")
    _add_common(sub)
    sub.add_argument("--prompts", required=True, help="JSONL prompt dataset")
    sub.add_argument("--out", required=True, help="output JSONL path")

    sub = commands.add_parser("eval", help="pairwise judge evaluation")
    _add_common(sub)
    sub.add_argument("--prompts", required=True)
    sub.add_argument("--ours", required=True, help="JSONL of {id, response}")
    sub.add_argument("--baseline", required=True, help="JSONL of {id, response}")

    sub = commands.add_parser("classify", help="indirect-harm classification")
    _add_common(sub)
    sub.add_argument("--prompts", required=True)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = apply_overrides(load_config(args.config), args)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.command in ("project", "refine"):
        prompt = _read_text_arg(args.prompt, args.prompt_file)
        response = _read_text_arg(args.response, args.response_file)
        if prompt is None:
            print("error: --prompt or --prompt-file is required", file=sys.stderr)
            return EXIT_USAGE
        if args.command == "project":
            if response is None:
                print("error: --response or --response-file is required", file=sys.stderr)
                return EXIT_USAGE
            return cmd_project(config, prompt, response, run_id=args.run_id)
        return cmd_refine(config, prompt, response, run_id=args.run_id)
    if args.command == "export-prefs":
        return cmd_export_prefs(config, args.prompts, args.out, run_id=args.run_id)
    if args.command == "eval":
        return cmd_eval(config, args.prompts, args.ours, args.baseline, run_id=args.run_id)
    if args.command == "classify":
        return cmd_classify(config, args.prompts, run_id=args.run_id)
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
