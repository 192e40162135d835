"""Command-line entry points: kb-build, ask, eval, report.

Exit codes: 0 on success, 1 when a session or evaluation fails at runtime,
2 for usage and configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import TechniqueConfig
from .defaults import default_knowledge_base, read_fixture
from .errors import ProviderError, SimloopError
from .evaluation import (
    EvalResult,
    SchemeConfig,
    build_scheme_index,
    emit_report,
    load_schemes,
    load_tasks,
    render_summary,
    run_evaluation,
)
from .knowledge_base import (
    build_knowledge_base,
    chunk_manual,
    kb_from_dict,
    kb_to_dict,
    parse_example_library,
    parse_option_registry,
)
from .llm import ChatProvider, ProviderConfig, make_provider
from .orchestrator import FINAL_SUCCESS, run_session, save_transcript
from .toolbox import CASES, METHODS, default_functions

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simloop",
        description="Retrieval-assisted script assistant for an emulated "
        "power-system linearization toolbox, plus its benchmark harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    kb = sub.add_parser("kb-build", help="build a knowledge base file from source documents")
    kb.add_argument("--kb-dir", help="directory with all three source documents")
    kb.add_argument("--registry", help="option registry file (default: packaged fixture)")
    kb.add_argument("--examples", help="example library file (default: packaged fixture)")
    kb.add_argument("--manual", help="manual text file (default: packaged fixture)")
    kb.add_argument("--out", required=True, help="path of the knowledge base JSON to write")

    ask = sub.add_parser("ask", help="run one request through a full session")
    ask.add_argument("request", help="natural-language simulation request")
    _provider_args(ask)
    _kb_args(ask)
    ask.add_argument("--rag", default="enhanced", choices=("enhanced", "standard", "none"))
    ask.add_argument("--off", default="", help="comma-separated technique flags to disable")
    ask.add_argument("--n-max", type=int, default=3, help="attempt budget per request")
    ask.add_argument("--top-k", type=int, default=4, help="retrieval depth per sub-request")
    ask.add_argument("--transcript", help="write the full session transcript JSON here")

    ev = sub.add_parser("eval", help="run the benchmark deck under one or more schemes")
    _provider_args(ev)
    _kb_args(ev)
    ev.add_argument("--tasks", help="task deck file (default: packaged fixture)")
    ev.add_argument("--schemes", help="scheme sheet file (default: packaged fixture)")
    ev.add_argument(
        "--scheme",
        action="append",
        default=None,
        help="run only this scheme (repeatable; default: all in the sheet)",
    )
    ev.add_argument("--n-max", type=int, default=None, help="override the attempt budget")
    ev.add_argument("--jobs", type=int, default=1, help="tasks evaluated in parallel")
    ev.add_argument("--out", required=True, help="directory for CSV/JSON/summary reports")

    rep = sub.add_parser("report", help="re-render reports from a results JSON file")
    rep.add_argument("--results", required=True, help="results JSON written by eval")
    rep.add_argument("--format", default="summary", choices=("summary", "csv"))

    return parser


def _kb_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--kb-dir",
        help="directory holding registry.kbreg, examples.kbex and manual.txt "
        "(default: packaged fixtures)",
    )
    parser.add_argument("--kb", help="prebuilt knowledge base JSON (overrides --kb-dir)")


def _provider_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--provider", default="replay", choices=("replay", "http"))
    parser.add_argument("--replay-file", help="replay fixture (required with --provider replay)")
    parser.add_argument("--base-url", default="", help="chat endpoint URL for --provider http")
    parser.add_argument("--model", default="", help="model name for --provider http")
    parser.add_argument(
        "--api-key-env",
        default="SIMLOOP_API_KEY",
        help="environment variable holding the API key",
    )


def _make_provider(args: argparse.Namespace) -> ChatProvider:
    if args.provider == "replay":
        if not args.replay_file:
            raise SystemExit("--provider replay requires --replay-file")
        config = ProviderConfig(kind="replay", replay_path=args.replay_file)
    else:
        if not args.base_url:
            raise SystemExit("--provider http requires --base-url")
        config = ProviderConfig(
            kind="http",
            base_url=args.base_url,
            model_name=args.model,
            api_key_env_var=args.api_key_env,
        )
    return make_provider(config)


def _load_kb(args: argparse.Namespace):
    if args.kb:
        with open(args.kb, encoding="utf-8") as handle:
            return kb_from_dict(json.load(handle))
    if args.kb_dir:
        return _build_kb_from_dir(args.kb_dir)
    return default_knowledge_base()


def _build_kb_from_dir(kb_dir: str):
    import os

    def read(name: str) -> str:
        with open(os.path.join(kb_dir, name), encoding="utf-8") as handle:
            return handle.read()

    options = parse_option_registry(read("registry.kbreg"))
    examples = parse_example_library(read("examples.kbex"))
    manual = chunk_manual(read("manual.txt"), 1000, 100)
    return build_knowledge_base(options, default_functions(), examples, manual, METHODS, CASES)


def _read(path: str | None, fixture: str) -> str:
    if path is None:
        return read_fixture(fixture)
    with open(path, encoding="utf-8") as handle:
        return handle.read()


def cmd_kb_build(args: argparse.Namespace) -> int:
    if args.kb_dir:
        kb = _build_kb_from_dir(args.kb_dir)
    else:
        options = parse_option_registry(_read(args.registry, "registry.kbreg"))
        examples = parse_example_library(_read(args.examples, "examples.kbex"))
        manual = chunk_manual(_read(args.manual, "manual.txt"), 1000, 100)
        kb = build_knowledge_base(options, default_functions(), examples, manual, METHODS, CASES)
    with open(args.out, "w", encoding="utf-8") as handle:
        json.dump(kb_to_dict(kb), handle, indent=2)
        handle.write("\n")
    print(
        f"wrote {args.out}: {len(kb.options)} options, {len(kb.examples)} examples, "
        f"{len(kb.chunks)} chunks"
    )
    return EXIT_OK


def cmd_ask(args: argparse.Namespace) -> int:
    kb = _load_kb(args)
    off = [flag.strip() for flag in args.off.split(",") if flag.strip()]
    technique = TechniqueConfig(n_max=args.n_max, top_k=args.top_k).with_flags(
        **{flag: False for flag in off}
    )
    if args.rag != "enhanced" and technique.query_planning:
        technique = technique.with_flags(query_planning=False)
    scheme = SchemeConfig("ask", technique, args.rag)
    provider = _make_provider(args)
    index = build_scheme_index(kb, scheme)
    transcript = run_session(args.request, technique, kb, index, provider)
    if args.transcript:
        save_transcript(transcript, args.transcript)
    for attempt in transcript.attempts:
        print(f"attempt {attempt.attempt_no}: {attempt.outcome}")
    if transcript.final_status == FINAL_SUCCESS:
        print(transcript.attempts[-1].code)
        return EXIT_OK
    last = transcript.attempts[-1] if transcript.attempts else None
    if last is not None and last.report is not None:
        for issue in last.report.issues:
            print(f"[{issue.kind}] {issue.message}", file=sys.stderr)
    print("session exhausted without a working script", file=sys.stderr)
    return EXIT_FAILURE


def cmd_eval(args: argparse.Namespace) -> int:
    kb = _load_kb(args)
    tasks = load_tasks(_read(args.tasks, "tasks.txt"), kb)
    schemes = load_schemes(_read(args.schemes, "schemes.txt"))
    if args.scheme:
        by_name = {scheme.name: scheme for scheme in schemes}
        missing = [name for name in args.scheme if name not in by_name]
        if missing:
            raise SystemExit(f"unknown scheme(s): {', '.join(missing)}")
        schemes = [by_name[name] for name in args.scheme]
    if args.n_max is not None:
        schemes = [
            SchemeConfig(s.name, s.technique.with_flags(n_max=args.n_max), s.rag_mode)
            for s in schemes
        ]
    provider = _make_provider(args)
    results: list[EvalResult] = []
    for scheme in schemes:
        results.append(run_evaluation(tasks, scheme, kb, provider, jobs=args.jobs))
    paths = emit_report(results, args.out)
    sys.stdout.write(render_summary(results))
    print(f"reports written to {paths['csv']}, {paths['summary']}, {paths['json']}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    with open(args.results, encoding="utf-8") as handle:
        data = json.load(handle)
    if args.format == "summary":
        lines = ["scheme,tasks,points,max_points,overall,normal,complex"]
        for scheme in data["schemes"]:
            by_class = scheme.get("accuracy_by_class", {})
            lines.append(
                f"{scheme['name']},{len(scheme['tasks'])},{scheme['points']:g},"
                f"{scheme['max_points']:g},{scheme['accuracy']},"
                f"{by_class.get('normal', '-')},{by_class.get('complex', '-')}"
            )
        print("\n".join(lines))
    else:
        rows = ["scheme,task_id,class,attempt,score,triggered"]
        for scheme in data["schemes"]:
            for task in scheme["tasks"]:
                for attempt_no, score in enumerate(task["attempts"], start=1):
                    rows.append(
                        f"{scheme['name']},{task['task_id']},{task['class']},"
                        f"{attempt_no},{score:g},{task['triggered']}"
                    )
        print("\n".join(rows))
    return EXIT_OK


_COMMANDS = {
    "kb-build": cmd_kb_build,
    "ask": cmd_ask,
    "eval": cmd_eval,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_arg_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except SystemExit:
        raise
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (SimloopError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
