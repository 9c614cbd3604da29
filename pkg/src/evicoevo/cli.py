"""``evicoevo`` command line."""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path
from typing import Sequence

from .backend import sample_frames
from .errors import EngineError
from .eval_analysis import (
    as_percent,
    condition_accuracy,
    evaluate_records,
    frame_condition_plan,
    key_span_metrics,
    load_eval_records,
    read_jsonl,
    span_or_none,
)
from .orchestrator import Engine, EngineConfig, Phase, all_keys, derive_seed, resume
from .orchestrator.state import write_atomic

PHASE_COMMANDS = {
    "score-questions": Phase.QUESTIONER_OPT,
    "generate": Phase.DATA_GEN,
    "pseudo-label": Phase.PSEUDO_LABEL,
    "solver-score": Phase.SOLVER_SCORE,
    "emit-batch": Phase.BATCH_EMIT,
}
CONDITIONS = ("full", "key", "mask", "random")


def _global_parser() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g = parent.add_argument_group("global options")
    g.add_argument("--config", metavar="PATH", help="INI config with [engine], [backend], [heuristics] sections")
    g.add_argument("--seed", dest="cfg__seed", metavar="N")
    g.add_argument("--output-dir", dest="cfg__output_dir", metavar="PATH")
    g.add_argument("--backend", dest="cfg__kind", choices=("http", "scripted"))
    g.add_argument("--log-level")
    keys = parent.add_argument_group("config keys (override the config file)")
    for _, key in all_keys():
        flags = [f"--{key}"]
        dashed = f"--{key.replace('_', '-')}"
        if dashed != flags[0] and key != "output_dir":
            flags.append(dashed)
        if key == "seed":
            continue
        keys.add_argument(*flags, dest=f"cfg__{key}", metavar="VALUE", help=argparse.SUPPRESS)
    return parent


def build_parser() -> argparse.ArgumentParser:
    parent = _global_parser()
    parser = argparse.ArgumentParser(prog="evicoevo", parents=[parent], description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    it = sub.add_parser("iterate", parents=[parent], help="run co-evolution iterations (resumes saved state)")
    it.add_argument("--stop-after", choices=[p.value for p in Phase if p is not Phase.DONE])

    for name, phase in PHASE_COMMANDS.items():
        sub.add_parser(name, parents=[parent], help=f"run only the {phase.value} phase of the current iteration")

    ev = sub.add_parser("evaluate", parents=[parent], help="grounding / GQA / accuracy report")
    ev.add_argument("--predictions", required=True)
    ev.add_argument("--ground-truth", required=True)
    ev.add_argument("--report", help="write the JSON report here as well as stdout")

    an = sub.add_parser("analyze-evidence", parents=[parent], help="frame-condition plans and key-span metrics")
    an.add_argument("--oracle", required=True, help="JSON-Lines {question_id, ref_answer, key_span}")
    an.add_argument("--ground-truth", help="JSON-Lines with duration_s per question_id")
    for cond in CONDITIONS:
        an.add_argument(f"--predictions-{cond}", help=f"predictions under the {cond} condition")

    cfg = sub.add_parser("config", parents=[parent], help="show configuration")
    cfg.add_argument("--dump", action="store_true", help="print the effective configuration as INI")
    return parser


def _load_config(args: argparse.Namespace) -> EngineConfig:
    overrides = {
        key[len("cfg__"):]: value
        for key, value in vars(args).items()
        if key.startswith("cfg__") and value is not None
    }
    return EngineConfig.load(getattr(args, "config", None), overrides)


def _cmd_iterate(args, config: EngineConfig) -> int:
    config.validate()
    stop = Phase(args.stop_after) if args.stop_after else None
    state = Engine(config, stop_after=stop).run()
    print(json.dumps(state.to_dict(), sort_keys=True))
    return 0


def _cmd_phase(phase: Phase, config: EngineConfig) -> int:
    config.validate()
    state = resume(config.engine.output_dir)
    current = Phase.QUESTIONER_OPT if state is None or state.phase is Phase.DONE else state.phase
    if current is not phase:
        print(f"evicoevo: current phase is {current.value}, not {phase.value}", file=sys.stderr)
        return 2
    engine = Engine(config, stop_after=phase)
    done = state.iteration if state else 0
    state = engine.run(iterations=done + 1)
    print(json.dumps(state.to_dict(), sort_keys=True))
    return 0


def _cmd_evaluate(args) -> int:
    report = evaluate_records(load_eval_records(args.predictions, args.ground_truth))
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.report:
        write_atomic(args.report, text + "\n")
    print(text)
    return 0


def _cmd_analyze(args, config: EngineConfig) -> int:
    e = config.engine
    oracle = read_jsonl(args.oracle)
    durations = {}
    if args.ground_truth:
        durations = {str(r["question_id"]): float(r["duration_s"]) for r in read_jsonl(args.ground_truth)}
    out_dir = Path(e.output_dir) / "analysis"
    plans = []
    for row in oracle:
        qid = str(row["question_id"])
        duration = float(row.get("duration_s") or durations.get(qid) or 0)
        key = span_or_none(row.get("key_span"))
        if duration <= 0 or key is None or key.end_s > duration:
            logging.warning("skipping %s: missing duration or invalid key span", qid)
            continue
        frames = sample_frames(duration, e.fps, e.max_frames)
        rng = random.Random(derive_seed(e.seed, "random-condition", qid))
        plan = frame_condition_plan(frames, key, duration, rng)
        plans.append({"question_id": qid, **plan.to_dict()})
    write_atomic(out_dir / "frame_conditions.jsonl", "".join(json.dumps(p) + "\n" for p in plans))

    report: dict = {"questions": len(plans)}
    refs = {str(r["question_id"]): r["ref_answer"] for r in oracle if r.get("ref_answer")}
    accs = {}
    for cond in CONDITIONS:
        path = getattr(args, f"predictions_{cond}")
        if path:
            accs[cond] = condition_accuracy(read_jsonl(path), refs)
            report[f"acc_{cond}"] = as_percent(accs[cond])
    if len(accs) == len(CONDITIONS):
        metrics = key_span_metrics(accs["full"], accs["key"], accs["mask"], accs["random"])
        report["key_necessity"] = as_percent(metrics["necessity"])
        report["key_specificity"] = as_percent(metrics["specificity"])
    text = json.dumps(report, indent=2, sort_keys=True)
    write_atomic(out_dir / "report.json", text + "\n")
    print(text)
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(args, "log_level", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _load_config(args)
        if args.command == "config":
            print(config.dump(), end="")
            return 0
        if args.command == "iterate":
            return _cmd_iterate(args, config)
        if args.command in PHASE_COMMANDS:
            return _cmd_phase(PHASE_COMMANDS[args.command], config)
        if args.command == "evaluate":
            return _cmd_evaluate(args)
        if args.command == "analyze-evidence":
            return _cmd_analyze(args, config)
    except EngineError as exc:
        print(f"evicoevo: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
