"""Command-line harness: dataset generation, pipeline runs, metric evaluation,
and report rendering, all reproducible offline against the scripted backend."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import fixtures, metrics, taskgen
from .agents import MODE_HELP, MODE_LLP_ONLY, PipelineConfig, PipelineTrace, run_pipeline
from .gateway import HttpBackend, ScriptedBackend, TraceLog
from .plan import Plan, PlanError, parse_plan
from .skills import default_registry
from .taskgen import TaskInstance, load_bank
from .world import execute_plan, goal_satisfied, init_world

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2

DEFAULT_SEED = 42


class ConfigError(Exception):
    pass


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _config_hash(semantics: dict) -> str:
    """Hash of the semantic run configuration.

    Filesystem paths are deliberately excluded (the dataset is identified by
    its manifest hash instead) so reruns into different directories produce
    byte-identical artifacts.
    """
    canon = json.dumps(semantics, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _dataset_paths(dataset: str) -> tuple[Path, Path | None]:
    path = Path(dataset)
    if path.is_dir():
        tasks = path / "tasks.jsonl"
        manifest = path / "manifest.json"
        return tasks, manifest if manifest.exists() else None
    manifest = path.parent / "manifest.json"
    return path, manifest if manifest.exists() else None


def _load_tasks(dataset: str) -> tuple[list[TaskInstance], Path, Path | None]:
    tasks_path, manifest_path = _dataset_paths(dataset)
    if not tasks_path.exists():
        raise ConfigError(f"dataset not found: {tasks_path}")
    return taskgen.read_dataset(tasks_path), tasks_path, manifest_path


def _read_json(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


def _write_json(path: Path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")


# ---------------------------------------------------------------- gen

def cmd_gen(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bank = load_bank(args.bank)
    seed = args.seed

    if args.suite == "core":
        tasks = taskgen.generate_core(bank, args.per_class, seed)
        params = {"per_class": args.per_class}
    elif args.suite == "lengths":
        tasks = taskgen.compose_long_horizon(bank, taskgen.LONG_HORIZON_LENGTHS, args.per_length, seed)
        params = {"per_length": args.per_length, "lengths": list(taskgen.LONG_HORIZON_LENGTHS)}
    elif args.suite == "ambiguous":
        tasks = taskgen.generate_ambiguous(bank, args.n, seed)
        params = {"n": args.n}
    elif args.suite == "feasibility":
        tasks = taskgen.generate_feasibility_set(seed, bank)
        params = {}
    elif args.suite == "smoke":
        tasks = fixtures.build_smoke_tasks(bank)
        seed = fixtures.SMOKE_SEED
        params = {}
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown suite {args.suite!r}")

    taskgen.write_dataset(tasks, out / "tasks.jsonl")
    taskgen.write_manifest(out / "manifest.json", args.suite, seed, bank, tasks, params)
    print(f"wrote {len(tasks)} tasks to {out / 'tasks.jsonl'}")
    return EXIT_OK


# ---------------------------------------------------------------- run

def _build_backend(args: argparse.Namespace, trace_log: TraceLog | None):
    if args.backend == "scripted":
        script = Path(args.script) if args.script else fixtures.golden_script_path()
        if not script.exists():
            raise ConfigError(f"scripted backend needs a script file: {script}")
        return ScriptedBackend.from_file(script, trace_log=trace_log)
    if not args.base_url:
        raise ConfigError("http backend needs --base-url")
    api_key = os.environ.get(args.api_key_env) if args.api_key_env else None
    return HttpBackend(
        args.base_url, args.model, api_key=api_key,
        retries=args.retries, trace_log=trace_log,
    )


def _existing_trace_ids(traces_path: Path) -> set[str]:
    """Task ids already traced; a torn final line (crash artifact) is dropped."""
    ids: set[str] = set()
    if not traces_path.exists():
        return ids
    raw = traces_path.read_bytes()
    valid_end = 0
    for line in raw.splitlines(keepends=True):
        try:
            doc = json.loads(line)
        except json.JSONDecodeError:
            break
        ids.add(doc["task_id"])
        valid_end += len(line)
    if valid_end < len(raw):
        traces_path.write_bytes(raw[:valid_end])
    return ids


def cmd_run(args: argparse.Namespace) -> int:
    tasks, tasks_path, manifest_path = _load_tasks(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bank = load_bank(args.bank)

    trace_log = TraceLog(out / "llm_log.jsonl")
    backend = _build_backend(args, trace_log)
    decoding = {
        "temperature": args.temperature,
        "max_tokens": args.max_tokens,
        "timeout": args.timeout_ms / 1000.0,
    }
    config = PipelineConfig(
        mode=args.mode,
        selection=args.selection,
        grounding=not args.no_grounding,
        threshold=args.threshold,
        feasibility_check=not args.no_feasibility,
        execute=not args.no_execute,
        decoding=decoding,
    )

    manifest_sha = _sha256_file(manifest_path) if manifest_path else None
    semantics = {
        "mode": config.mode,
        "selection": config.selection,
        "grounding": config.grounding,
        "threshold": config.threshold,
        "feasibility_check": config.feasibility_check,
        "execute": config.execute,
        "decoding": decoding,
        "backend": backend.identity,
        "dataset_manifest_sha256": manifest_sha,
    }
    config_hash = _config_hash(semantics)
    _write_json(out / "run_meta.json", {"config_hash": config_hash, **semantics})

    traces_path = out / "traces.jsonl"
    done_ids = _existing_trace_ids(traces_path)
    todo = [t for t in tasks if t.id not in done_ids]

    def run_one(task: TaskInstance) -> dict:
        try:
            world = init_world(task, bank)
            trace = run_pipeline(task.instruction, world, backend, config, task=task)
            doc = trace.to_dict()
        except Exception as exc:  # per-task failures never abort the run
            doc = PipelineTrace(instruction=task.instruction, mode=config.mode, task_id=task.id).to_dict()
            doc["errors"] = [f"{type(exc).__name__}: {exc}"]
            doc["backend"] = backend.identity
        doc["config_hash"] = config_hash
        return doc

    had_errors = False
    with ThreadPoolExecutor(max_workers=max(1, args.parallel)) as pool:
        futures = [pool.submit(run_one, task) for task in todo]
        with open(traces_path, "a", encoding="utf-8") as fh:
            # Drain in submission order so the file is byte-stable under any
            # worker interleaving and resumable by line prefix.
            for future in futures:
                doc = future.result()
                if doc["errors"]:
                    had_errors = True
                fh.write(json.dumps(doc, sort_keys=True, ensure_ascii=False) + "\n")

    print(f"ran {len(todo)} tasks ({len(done_ids)} resumed) -> {traces_path}")
    return EXIT_PARTIAL if had_errors else EXIT_OK


# ---------------------------------------------------------------- eval

def _read_traces(path: Path) -> dict[str, dict]:
    traces_file = path / "traces.jsonl" if path.is_dir() else path
    if not traces_file.exists():
        raise ConfigError(f"traces not found: {traces_file}")
    traces = {}
    with open(traces_file, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                doc = json.loads(line)
                traces[doc["task_id"]] = doc
    return traces


def _is_feasibility_suite(tasks: list[TaskInstance]) -> bool:
    return any(t.task_class in (taskgen.FEASIBLE, taskgen.INFEASIBLE) for t in tasks)


def _feasibility_accuracy(tasks: list[TaskInstance], traces: dict[str, dict]) -> dict:
    correct = 0
    missing = 0
    for task in tasks:
        trace = traces.get(task.id)
        verdict = None if trace is None else trace.get("feasible")
        if trace is None:
            missing += 1
        expected = task.task_class == taskgen.FEASIBLE
        if verdict is not None and bool(verdict) == expected:
            correct += 1
    return {
        "n": len(tasks),
        "correct": correct,
        "missing_traces": missing,
        "accuracy": correct / len(tasks) if tasks else 0.0,
    }


def _predicted_plan(trace: dict | None) -> tuple[Plan, bool]:
    if trace is None or not trace.get("final_plan"):
        return Plan(), False
    try:
        plan = parse_plan(trace["final_plan"], default_registry())
    except PlanError:
        return Plan(), False
    return plan, bool(trace.get("parse_ok"))


def _simulate(task: TaskInstance, plan: Plan, bank) -> tuple[bool, bool]:
    world = init_world(task, bank)
    outcome = execute_plan(world, plan)
    return outcome.success, goal_satisfied(outcome.final_state, task)


def cmd_eval(args: argparse.Namespace) -> int:
    tasks, tasks_path, manifest_path = _load_tasks(args.dataset)
    traces = _read_traces(Path(args.traces))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    run_meta_path = (Path(args.traces) if Path(args.traces).is_dir() else Path(args.traces).parent) / "run_meta.json"
    run_meta = _read_json(run_meta_path) if run_meta_path.exists() else {}
    stamp = {
        "config_hash": run_meta.get("config_hash"),
        "dataset_manifest_sha256": _sha256_file(manifest_path) if manifest_path else None,
        "backend": run_meta.get("backend"),
    }

    if _is_feasibility_suite(tasks):
        report = {**stamp, **_feasibility_accuracy(tasks, traces)}
        _write_json(out / "feasibility_report.json", report)
        print(f"feasibility accuracy: {report['accuracy']:.4f} ({report['correct']}/{report['n']})")
        return EXIT_OK

    bank = load_bank(args.bank)
    records = []
    sim_flags = []
    for task in tasks:
        trace = traces.get(task.id)
        pred, parse_ok = _predicted_plan(trace)
        metadata = {
            "task_class": task.task_class,
            "target_length": task.metadata.get("target_length", len(task.gt_plan or ())),
            "mode": (trace or {}).get("mode", "n/a"),
        }
        records.append(metrics.record_for(task.id, pred, task.gt_plan or Plan(), parse_ok, metadata))
        exec_ok, goal_ok = _simulate(task, pred, bank)
        sim_flags.append((metadata["target_length"], task.task_class, exec_ok, goal_ok))

    metrics.write_records_jsonl(records, out / "records.jsonl")

    by_length = metrics.aggregate(records, ["target_length"])
    by_class = metrics.aggregate(records, ["task_class"])
    by_mode = metrics.aggregate(records, ["mode"])

    def sim_rates(selector) -> dict:
        chosen = [(e, g) for key, cls, e, g in sim_flags if selector(key, cls)]
        if not chosen:
            return {"exec_success_rate": 0.0, "goal_rate": 0.0, "count": 0}
        return {
            "exec_success_rate": sum(e for e, _ in chosen) / len(chosen),
            "goal_rate": sum(g for _, g in chosen) / len(chosen),
            "count": len(chosen),
        }

    simulation = {
        "overall": sim_rates(lambda key, cls: True),
        "by_length": {
            str(length): sim_rates(lambda key, cls, L=length: key == L)
            for length in sorted({key for key, _, _, _ in sim_flags})
        },
    }

    suite = _read_json(manifest_path).get("suite") if manifest_path else None
    primary = by_length if suite == "lengths" else by_class
    header = (
        f"config_hash={stamp['config_hash']} "
        f"manifest={stamp['dataset_manifest_sha256']} backend={stamp['backend']}"
    )
    (out / "report.csv").write_text(metrics.render_report_csv(primary, header), encoding="utf-8")
    _write_json(out / "eval.json", {
        **stamp,
        "suite": suite,
        "by_length": by_length.to_dict(),
        "by_class": by_class.to_dict(),
        "by_mode": by_mode.to_dict(),
        "simulation": simulation,
    })
    overall = primary.overall.means
    print(
        f"evaluated {len(records)} tasks: em_p={overall['em_p']:.4f} "
        f"lcss_p={overall['lcss_p']:.4f} lcsa_p={overall['lcsa_p']:.4f} "
        f"sim_goal_rate={simulation['overall']['goal_rate']:.4f}"
    )
    return EXIT_OK


# ---------------------------------------------------------------- report

_METRIC_COLUMNS = list(metrics.METRIC_FIELDS)


def _markdown_table(report: dict, key_name: str) -> str:
    lines = [
        "| " + " | ".join([key_name, "count", *_METRIC_COLUMNS]) + " |",
        "|" + "---|" * (2 + len(_METRIC_COLUMNS)),
    ]
    for group in report["groups"]:
        key = group["key"].get(key_name, "")
        cells = [str(key), str(group["count"])] + [f"{group[m]:.3f}" for m in _METRIC_COLUMNS]
        lines.append("| " + " | ".join(cells) + " |")
    overall = report["overall"]
    cells = ["overall", str(overall["count"])] + [f"{overall[m]:.3f}" for m in _METRIC_COLUMNS]
    lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines)


def _render_report(eval_doc: dict) -> str:
    parts = ["# Evaluation report", ""]
    parts.append(
        f"config_hash: `{eval_doc.get('config_hash')}`  \n"
        f"dataset manifest: `{eval_doc.get('dataset_manifest_sha256')}`  \n"
        f"backend: `{eval_doc.get('backend')}`"
    )
    parts += ["", "## Plan metrics by target length", "", _markdown_table(eval_doc["by_length"], "target_length")]
    parts += ["", "## Plan metrics by task class", "", _markdown_table(eval_doc["by_class"], "task_class")]
    sim = eval_doc.get("simulation", {})
    if sim:
        parts += ["", "## Simulation (reported separately from plan metrics)", ""]
        overall = sim["overall"]
        parts.append(
            f"- overall: exec_success_rate={overall['exec_success_rate']:.3f}, "
            f"goal_rate={overall['goal_rate']:.3f} (n={overall['count']})"
        )
        by_length = sim.get("by_length", {})
        for length in sorted(by_length, key=lambda k: int(k) if str(k).isdigit() else 0):
            rates = by_length[length]
            parts.append(
                f"- length {length}: exec_success_rate={rates['exec_success_rate']:.3f}, "
                f"goal_rate={rates['goal_rate']:.3f} (n={rates['count']})"
            )
    parts.append("")
    return "\n".join(parts)


def _render_comparison(base: dict, other: dict) -> str:
    def by_key(doc):
        return {tuple(g["key"].items()): g for g in doc["by_length"]["groups"]}

    left, right = by_key(base), by_key(other)
    lines = [
        "# Per-length deltas (other - base)",
        "",
        "| target_length | " + " | ".join(_METRIC_COLUMNS) + " |",
        "|" + "---|" * (1 + len(_METRIC_COLUMNS)),
    ]
    for key in sorted(left.keys() | right.keys(), key=str):
        lg, rg = left.get(key), right.get(key)
        label = dict(key).get("target_length", "?")
        if lg is None or rg is None:
            lines.append(f"| {label} | " + " | ".join(["n/a"] * len(_METRIC_COLUMNS)) + " |")
            continue
        deltas = [f"{rg[m] - lg[m]:+.3f}" for m in _METRIC_COLUMNS]
        lines.append(f"| {label} | " + " | ".join(deltas) + " |")
    lines.append("")
    return "\n".join(lines)


def cmd_report(args: argparse.Namespace) -> int:
    eval_path = Path(args.eval) / "eval.json" if Path(args.eval).is_dir() else Path(args.eval)
    if not eval_path.exists():
        print(f"error: no eval report at {eval_path}", file=sys.stderr)
        return EXIT_CONFIG
    eval_doc = _read_json(eval_path)
    text = _render_report(eval_doc)
    if args.compare:
        other_path = Path(args.compare) / "eval.json" if Path(args.compare).is_dir() else Path(args.compare)
        if not other_path.exists():
            print(f"error: no eval report at {other_path}", file=sys.stderr)
            return EXIT_CONFIG
        text += "\n" + _render_comparison(eval_doc, _read_json(other_path))
    out_path = Path(args.out) if args.out else eval_path.parent / "report.md"
    out_path.write_text(text, encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_feasibility(args: argparse.Namespace) -> int:
    tasks, _, _ = _load_tasks(args.dataset)
    if not _is_feasibility_suite(tasks):
        print("error: dataset is not a feasibility suite", file=sys.stderr)
        return EXIT_CONFIG
    traces = _read_traces(Path(args.traces))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = _feasibility_accuracy(tasks, traces)
    _write_json(out / "feasibility_report.json", report)
    print(f"feasibility accuracy: {report['accuracy']:.4f} ({report['correct']}/{report['n']})")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--bank", default=None, help="vocabulary bank JSON (default: packaged)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hierplan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a task dataset")
    _add_common(gen)
    gen.add_argument("--suite", choices=["core", "lengths", "ambiguous", "feasibility", "smoke"], required=True)
    gen.add_argument("--per-class", type=int, default=200)
    gen.add_argument("--per-length", type=int, default=200)
    gen.add_argument("--n", type=int, default=200)
    gen.set_defaults(func=cmd_gen)

    run = sub.add_parser("run", help="run the planning pipeline over a dataset")
    _add_common(run)
    run.add_argument("--dataset", required=True)
    run.add_argument("--config", default=None, help="JSON config file; flags override it")
    run.add_argument("--backend", choices=["scripted", "http"], default="scripted")
    run.add_argument("--script", default=None, help="scripted-backend rules JSON (default: packaged golden script)")
    run.add_argument("--base-url", default=None)
    run.add_argument("--model", default="default")
    run.add_argument("--api-key-env", default=None, help="environment variable holding the API key")
    run.add_argument("--retries", type=int, default=2)
    run.add_argument("--mode", choices=[MODE_HELP, MODE_LLP_ONLY], default=MODE_HELP)
    run.add_argument("--selection", choices=["similarity", "fixed"], default="similarity")
    run.add_argument("--no-grounding", action="store_true")
    run.add_argument("--threshold", type=float, default=0.35)
    run.add_argument("--no-feasibility", action="store_true")
    run.add_argument("--no-execute", action="store_true")
    run.add_argument("--parallel", type=int, default=4)
    run.add_argument("--temperature", type=float, default=0.0)
    run.add_argument("--max-tokens", type=int, default=512)
    run.add_argument("--timeout-ms", type=int, default=60000)
    run.set_defaults(func=cmd_run)

    ev = sub.add_parser("eval", help="score traces against ground truth")
    _add_common(ev)
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--traces", required=True)
    ev.set_defaults(func=cmd_eval)

    rep = sub.add_parser("report", help="render a human-readable summary")
    rep.add_argument("--eval", required=True, help="eval output directory or eval.json")
    rep.add_argument("--compare", default=None, help="second eval directory for per-length deltas")
    rep.add_argument("--out", default=None)
    rep.set_defaults(func=cmd_report)

    feas = sub.add_parser("feasibility", help="score feasibility verdicts")
    _add_common(feas)
    feas.add_argument("--dataset", required=True)
    feas.add_argument("--traces", required=True)
    feas.set_defaults(func=cmd_feasibility)

    return parser


def _apply_config_file(args: argparse.Namespace) -> argparse.Namespace:
    """Fill run options from --config JSON for flags left at their defaults."""
    if getattr(args, "config", None) is None:
        return args
    path = Path(args.config)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    doc = _read_json(path)
    defaults = build_parser().parse_args(
        ["run", "--dataset", args.dataset, "--out", args.out]
    )
    for key, value in doc.items():
        attr = key.replace("-", "_")
        if attr in ("dataset", "out", "config"):
            raise ConfigError(f"{key!r} must be given on the command line, not in the config file")
        if not hasattr(args, attr):
            raise ConfigError(f"unknown config key {key!r}")
        if getattr(args, attr) == getattr(defaults, attr, None):
            setattr(args, attr, value)
    return args


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            args = _apply_config_file(args)
        return args.func(args)
    except (
        ConfigError,
        taskgen.BankInvalid,
        taskgen.UnreachableLength,
        json.JSONDecodeError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
