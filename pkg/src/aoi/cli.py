"""Command-line surface.

Exit codes: 0 on success, 2 when a validation or replay check fails,
64 for usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import metrics
from .backend import (
    BackendSession,
    ScriptedBackend,
    build_backend,
    http_config_from_env,
    load_script_table,
)
from .envsim.scenario import load_scenario
from .evolution import (
    SeedLabel,
    evolve,
    load_seeds,
    pick_reference,
    plan_to_dict,
    purify,
)
from .orchestrator import RunConfig, run_suite, run_task
from .rewards import (
    TrainingBatch,
    TrainingRecord,
    aggregate_reward,
    export_batches,
    group_advantages,
    score_format,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # usage errors exit 64
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="aoi", description="incident-response runtime and evaluation tools")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one task")
    run.add_argument("--scenario", required=True, help="scenario file or packaged scenario name")
    _backend_flags(run)
    _run_flags(run)
    run.add_argument("--guidance", help="guidance file prepended to the planner prompt")
    run.add_argument("--transcript-out", help="write the run transcript to this path")

    suite = sub.add_parser("suite", help="run a scenario suite into a result matrix")
    suite.add_argument("--scenarios", required=True, help="directory of scenario files")
    suite.add_argument("--runs", type=int, default=1)
    suite.add_argument("--out", help="write the matrix JSON here")
    _backend_flags(suite)
    _run_flags(suite)

    ev = sub.add_parser("eval", help="metrics report from a matrix file")
    ev.add_argument("--matrix", required=True)
    ev.add_argument("--k", type=int, default=5)

    replay = sub.add_parser("replay", help="replay a scripted scenario against a golden transcript")
    replay.add_argument("--scenario", required=True)
    replay.add_argument("--script", required=True)
    replay.add_argument("--golden", help="golden transcript to compare byte for byte")
    _run_flags(replay)

    purify_cmd = sub.add_parser("purify", help="distill success seeds to minimal command lists")
    purify_cmd.add_argument("--seeds", required=True, help="seed store directory")
    purify_cmd.add_argument("--out", help="write purified command lists (JSON) here")

    evolve_cmd = sub.add_parser("evolve", help="generate corrected plans from a seed")
    evolve_cmd.add_argument("--seeds", required=True, help="seed store directory")
    evolve_cmd.add_argument("--seed-id", required=True)
    evolve_cmd.add_argument("--problem", required=True)
    evolve_cmd.add_argument("--group-size", type=int, default=4)
    evolve_cmd.add_argument("--out", help="write plans (JSON) here")
    _backend_flags(evolve_cmd)

    score = sub.add_parser("score", help="score a decision document or plan file")
    target = score.add_mutually_exclusive_group(required=True)
    target.add_argument("--decision", help="file with raw decision output")
    target.add_argument("--plan", help="plan JSON file ({commands, rationale, ...})")

    split = sub.add_parser("split-check", help="validate a data split spec")
    split.add_argument("--spec", required=True)

    export = sub.add_parser("export-batches", help="re-export batch records as JSONL")
    export.add_argument("--input", required=True, help="batch records JSON (list of records)")
    export.add_argument("--out", required=True)
    return parser


def _backend_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=["http", "scripted"], default="scripted")
    parser.add_argument("--script", help="script table JSON for the scripted backend")


def _run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--budget", type=int, default=4096)
    parser.add_argument("--max-iterations", type=int, default=15)
    parser.add_argument("--workers", type=int, default=1)


def _make_backend(args: argparse.Namespace):
    if args.backend == "http":
        return build_backend(http_config_from_env())
    if not args.script:
        raise _usage_error("--script is required with the scripted backend")
    return ScriptedBackend(load_script_table(args.script))


def _usage_error(message: str) -> SystemExit:
    sys.stderr.write(f"aoi: error: {message}\n")
    return SystemExit(EXIT_USAGE)


def _run_config(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        max_iterations=args.max_iterations,
        budget_tokens=args.budget,
        seed=args.seed,
        workers=getattr(args, "workers", 1),
    )


def _cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    backend = _make_backend(args)
    guidance = Path(args.guidance).read_text(encoding="utf-8") if args.guidance else None
    result = run_task(scenario, _run_config(args), backend, guidance=guidance)
    if args.transcript_out:
        Path(args.transcript_out).write_text(result.transcript, encoding="utf-8")
    print(result.transcript, end="")
    return EXIT_OK if result.verdict.success else EXIT_VALIDATION


def _cmd_suite(args: argparse.Namespace) -> int:
    directory = Path(args.scenarios)
    paths = sorted(directory.glob("*.json"))
    if not paths:
        raise _usage_error(f"no scenario files in {directory}")
    scenarios = [load_scenario(p) for p in paths]
    backend = _make_backend(args)
    suite = run_suite(scenarios, _run_config(args), backend, runs_per_task=args.runs)
    matrix = suite.matrix_dict()
    text = json.dumps(matrix, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text, end="")
    solved = sum(1 for row in matrix["cells"] if any(row))
    print(f"solved {solved}/{len(matrix['cells'])} tasks over {args.runs} run(s)", file=sys.stderr)
    return EXIT_OK


def _format_rates(label: str, rates: dict[str, float]) -> str:
    cells = [f"{rates.get(c, 0.0):.1f}" for c in metrics.CATEGORIES] + [
        f"{rates[metrics.OVERALL]:.1f}"
    ]
    return "  ".join([label.ljust(10)] + [cell.rjust(12) for cell in cells])


def _cmd_eval(args: argparse.Namespace) -> int:
    matrix = metrics.ResultMatrix.from_file(args.matrix)
    k = args.k
    header = "  ".join(
        ["metric".ljust(10)] + [c.rjust(12) for c in list(metrics.CATEGORIES) + ["Overall"]]
    )
    print(header)
    print(_format_rates(f"best@{k}", metrics.best_at_k(matrix, k)))
    print(_format_rates(f"avg@{k}", metrics.avg_at_k(matrix, k)))
    rounds = metrics.per_round_rates(matrix)[metrics.OVERALL]
    print("round rates (overall): " + ", ".join(f"{r:.1f}" for r in rounds))
    if matrix.runs == metrics.STABILITY_RUNS:
        buckets = metrics.stability(matrix).counts
        print(
            "stability: "
            + "  ".join(f"{bucket}={buckets[bucket]}" for bucket in metrics.STABILITY_BUCKETS)
        )
    gap = metrics.variance_gap(matrix, k)
    print(f"best@{k} - avg@{k} gap: {gap:.1f} pp")
    return EXIT_OK


def _cmd_replay(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    backend = ScriptedBackend(load_script_table(args.script))
    result = run_task(scenario, _run_config(args), backend)
    print(result.transcript, end="")
    if args.golden:
        golden = Path(args.golden).read_text(encoding="utf-8")
        if golden != result.transcript:
            print("replay transcript does not match the golden file", file=sys.stderr)
            return EXIT_VALIDATION
        print("transcript matches golden file", file=sys.stderr)
    return EXIT_OK if result.verdict.success else EXIT_VALIDATION


def _cmd_purify(args: argparse.Namespace) -> int:
    seeds = load_seeds(args.seeds)
    purified = {}
    for seed in seeds:
        if seed.label is SeedLabel.SUCCESS:
            purified[seed.seed_id] = purify(seed)
    text = json.dumps(purified, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text, end="")
    return EXIT_OK


def _cmd_evolve(args: argparse.Namespace) -> int:
    seeds = load_seeds(args.seeds)
    by_id = {s.seed_id: s for s in seeds}
    if args.seed_id not in by_id:
        raise _usage_error(f"seed {args.seed_id} not found")
    seed = by_id[args.seed_id]
    backend = _make_backend(args)
    session = BackendSession(backend, seed.seed_id, "evolver", 1)
    reference = pick_reference(seed, seeds)
    plans = evolve(seed, args.problem, session, reference=reference, group_size=args.group_size)
    payload = [plan_to_dict(p) for p in plans]
    text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text, end="")
    return EXIT_OK


def _cmd_score(args: argparse.Namespace) -> int:
    if args.decision:
        text = Path(args.decision).read_text(encoding="utf-8")
        dimension_score, hard_penalty = score_format(text)
        print(f"format score: {dimension_score.score:.0f}/10")
        if hard_penalty:
            print(f"hard penalty: total reward {aggregate_reward([], hard_penalty=True):.2f}")
            return EXIT_VALIDATION
        return EXIT_OK
    from .envsim.commands import is_valid_command

    obj = json.loads(Path(args.plan).read_text(encoding="utf-8"))
    commands = obj.get("commands", [])
    invalid = [c for c in commands if not is_valid_command(c)]
    print(f"commands: {len(commands)}, invalid: {len(invalid)}")
    for command in invalid:
        print(f"invalid: {command}")
    return EXIT_VALIDATION if (invalid or not commands) else EXIT_OK


def _cmd_split_check(args: argparse.Namespace) -> int:
    spec = metrics.SplitSpec.from_file(args.spec)
    report = metrics.validate_split(spec)
    for name, value in report.counts.items():
        print(f"{name}: {value}")
    if report.violations:
        for violation in report.violations:
            print(f"violation: {violation}")
        return EXIT_VALIDATION
    print("split ok")
    return EXIT_OK


def _cmd_export_batches(args: argparse.Namespace) -> int:
    records = json.loads(Path(args.input).read_text(encoding="utf-8"))
    grouped: dict[str, list[dict]] = {}
    for record in records:
        grouped.setdefault(record["group_id"], []).append(record)
    batches = []
    for group_id, group_records in grouped.items():
        rewards = [r["reward"] for r in group_records]
        advantages = group_advantages(rewards).advantages
        batches.append(
            TrainingBatch(
                records=tuple(
                    TrainingRecord(
                        group_id=group_id,
                        context=r["context"],
                        candidate=r["candidate"],
                        reward=r["reward"],
                        advantage=a,
                        dims=r.get("dims", {}),
                    )
                    for r, a in zip(group_records, advantages)
                )
            )
        )
    export_batches(batches, args.out)
    print(f"wrote {sum(len(b.records) for b in batches)} records to {args.out}")
    return EXIT_OK


_HANDLERS = {
    "run": _cmd_run,
    "suite": _cmd_suite,
    "eval": _cmd_eval,
    "replay": _cmd_replay,
    "purify": _cmd_purify,
    "evolve": _cmd_evolve,
    "score": _cmd_score,
    "split-check": _cmd_split_check,
    "export-batches": _cmd_export_batches,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _HANDLERS[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
