"""End-to-end acceptance checks, one test per criterion.

Each test exercises a full slice of the pipeline (replayed sessions, CLI
runs, brute-force oracles, generated-script property sweeps) and carries
its own runtime budget where the behavior is performance-sensitive.
"""

import math
import random
import re
import time
from decimal import Decimal

import pytest

from simloop.cli import EXIT_OK, main
from simloop.config import TechniqueConfig
from simloop.evaluation import (
    SchemeConfig,
    accuracy_percent,
    load_tasks,
    run_evaluation,
    score_attempt,
)
from simloop.executor import execute
from simloop.fixturegen import (
    find_task,
    is_planner_prompt,
    perfect_responder,
    record_evaluation,
)
from simloop.knowledge_base import SOURCE_MANUAL, KnowledgeChunk
from simloop.llm import ReplayProvider, parse_replay_text
from simloop.orchestrator import OUTCOME_SUCCESS, AttemptRecord
from simloop.parser import (
    CallNode,
    Cell,
    Flag,
    Ident,
    Logspace,
    Number,
    ScriptAST,
    Str,
    Vector,
    is_option_name,
    parse_script,
    pretty_print,
)
from simloop.query_planner import QueryPlan, SubQuery, degenerate_plan
from simloop.retrieval import MATCHED_BY_KEYWORD, build_index, retrieve, retrieve_planned
from simloop.validation import autocorrect, damerau_levenshtein, validate

ENHANCED = SchemeConfig("Enhanced", TechniqueConfig(), "enhanced")


def fenced(code: str) -> str:
    return f"Here is the script.\n\n```matlab\n{code}\n```\n"


def staged_responder(tasks, flawed):
    """Like the perfect responder, but selected tasks emit a flawed script
    first and only produce the fix once a feedback message is present."""

    def respond(messages):
        task = find_task(messages, tasks)
        if is_planner_prompt(messages):
            return f"SUBREQUEST: write the script for {task.id} ||| KEYWORD: train"
        stage = flawed.get(task.id)
        if stage is None:
            return fenced(pretty_print(task.expected))
        first, fixed = stage
        if len(messages) > 2 and fixed is not None:
            return fenced(fixed)
        return fenced(first)

    return respond


def replay_run(tasks, scheme, kb, responder):
    text = record_evaluation(tasks, [scheme], kb, responder)
    provider = ReplayProvider(parse_replay_text(text))
    return text, run_evaluation(tasks, scheme, kb, provider)


# ---------------------------------------------------------------------------
# 1. Accuracy arithmetic
# ---------------------------------------------------------------------------

# Overall percentages the formatter must reach somewhere on the half-point
# grid of a 34-task, 3-attempt run.
REPORTED_PERCENTAGES = (
    "0.00",
    "12.25",
    "20.58",
    "33.82",
    "45.09",
    "60.29",
    "74.01",
    "75.49",
    "81.37",
    "96.07",
)


def test_accuracy_grid_reaches_every_reported_percentage():
    start = time.perf_counter()
    grid = [Decimal(accuracy_percent(half / 2, 34, 3)) for half in range(0, 205)]
    for target in REPORTED_PERCENTAGES:
        wanted = Decimal(target)
        assert any(abs(value - wanted) <= Decimal("0.01") for value in grid), target
    assert time.perf_counter() - start < 1.0


# ---------------------------------------------------------------------------
# 2. Score trajectories through the full session loop
# ---------------------------------------------------------------------------

TRAJECTORY_DECK = """\
=== TASK first ===
KIND: normal
REQUEST: Generate data for case9 and train ordinary least squares.
EXPECTED:
data = generate_data('case9');
model = train(data, {'OLS'});

=== TASK fix ===
KIND: normal
REQUEST: Generate data for case14 and rank two methods with plotting off.
EXPECTED:
data = generate_data('case14');
rank(data, {'OLS', 'QR'}, 'plot.switch', off);

=== TASK never ===
KIND: complex
REQUEST: Generate data for case39 and compare ridge regression with QR.
EXPECTED:
data = generate_data('case39');
compare(data, {'RR', 'QR'});
"""


def test_replayed_sessions_produce_the_three_score_trajectories(kb):
    start = time.perf_counter()
    tasks = load_tasks(TRAJECTORY_DECK, kb)
    flawed_rank = "data = generate_data('case14');\nrank(data, {'XGB', 'QR'}, 'plot.switch', off);"
    fixed_rank = "data = generate_data('case14');\nrank(data, {'OLS', 'QR'}, 'plot.switch', off);"
    flawed_compare = "data = generate_data('case39');\ncompare(data, {'XGB', 'QR'});"
    responder = staged_responder(
        tasks,
        {"fix": (flawed_rank, fixed_rank), "never": (flawed_compare, None)},
    )
    _, result = replay_run(tasks, ENHANCED, kb, responder)
    by_id = {card.task_id: card for card in result.cards}

    first = by_id["first"]
    assert first.attempt_scores == (1.0, 1.0, 1.0)
    assert (first.triggered, first.final_status, first.points) == (1, "success", 3.0)

    fix = by_id["fix"]
    assert fix.attempt_scores == (0.0, 1.0, 1.0)
    assert (fix.triggered, fix.final_status, fix.points) == (2, "success", 2.0)

    never = by_id["never"]
    assert never.attempt_scores == (0.0, 0.0, 0.0)
    assert (never.triggered, never.final_status, never.points) == (3, "exhausted", 0.0)
    assert time.perf_counter() - start < 5.0


# ---------------------------------------------------------------------------
# 3. Deterministic CLI evaluation reports
# ---------------------------------------------------------------------------


def test_eval_cli_output_is_byte_identical_across_runs(
    kb, tasks, scheme_by_name, tmp_path, capsys
):
    scheme = scheme_by_name["GPT-4o-Full"]
    replay_path = tmp_path / "replay.txt"
    replay_path.write_text(
        record_evaluation(tasks, [scheme], kb, perfect_responder(tasks)), encoding="utf-8"
    )
    args = ["eval", "--scheme", "GPT-4o-Full", "--replay-file", str(replay_path)]

    start = time.perf_counter()
    assert main([*args, "--out", str(tmp_path / "run1")]) == EXIT_OK
    assert main([*args, "--out", str(tmp_path / "run2")]) == EXIT_OK
    assert time.perf_counter() - start < 30.0
    capsys.readouterr()

    first = (tmp_path / "run1" / "results.csv").read_bytes()
    second = (tmp_path / "run2" / "results.csv").read_bytes()
    assert first == second
    assert first.decode("utf-8").count("\n") == 1 + len(tasks) * 3


# ---------------------------------------------------------------------------
# 4. Syntax checking turns a near-miss method name into a repair
# ---------------------------------------------------------------------------

TYPO_DECK = """\
=== TASK typo ===
KIND: normal
REQUEST: Generate data for case9 and train the kernel-projected ridge method.
EXPECTED:
data = generate_data('case9');
model = train(data, {'RR_KPC'});
"""


def test_syntax_checking_repairs_a_method_typo_that_otherwise_scores_zero(kb):
    assert damerau_levenshtein("RR_KPCC", "RR_KPC") == 1
    tasks = load_tasks(TYPO_DECK, kb)
    flawed = "data = generate_data('case9');\nmodel = train(data, {'RR_KPCC'});"
    fixed = "data = generate_data('case9');\nmodel = train(data, {'RR_KPC'});"
    responder = staged_responder(tasks, {"typo": (flawed, fixed)})

    checked = SchemeConfig("SyntaxOn", TechniqueConfig(), "enhanced")
    unchecked = SchemeConfig(
        "SyntaxOff", TechniqueConfig().with_flags(syntax_checking=False), "enhanced"
    )

    text, checked_result = replay_run(tasks, checked, kb, responder)
    checked_card = checked_result.cards[0]
    assert checked_card.attempt_scores == (0.0, 1.0, 1.0)
    assert (checked_card.triggered, checked_card.points) == (2, 2.0)

    # Same recorded responses: prompts do not depend on the checking flag.
    unchecked_result = run_evaluation(
        tasks, unchecked, kb, ReplayProvider(parse_replay_text(text))
    )
    unchecked_card = unchecked_result.cards[0]
    assert unchecked_card.attempt_scores == (0.0, 0.0, 0.0)
    assert (unchecked_card.triggered, unchecked_card.points) == (1, 0.0)
    assert unchecked_card.final_status == "success"


# ---------------------------------------------------------------------------
# 5. Retrieval against a brute-force oracle
# ---------------------------------------------------------------------------

ORACLE_WORDS = (
    "grid", "load", "flow", "ridge", "train", "sample", "noise", "outlier",
    "cluster", "kernel", "voltage", "angle", "branch", "bus", "case", "plot",
    "style", "metric", "rank", "compare", "forecast", "scale", "seed", "fold",
    "range", "theme", "switch", "percent", "factor", "point",
)


def test_index_ranking_matches_brute_force_cosine_search():
    rng = random.Random(90210)
    chunks = []
    for i in range(40):
        keywords = (rng.choice(("alpha", "beta", "gamma", "delta")),) if i % 3 == 0 else ()
        text = " ".join(rng.choice(ORACLE_WORDS) for _ in range(rng.randint(5, 12)))
        chunks.append(KnowledgeChunk(f"syn:{i:03d}", SOURCE_MANUAL, keywords, text))
    index = build_index(chunks)
    embedder = index.embedder

    start = time.perf_counter()
    for _ in range(100):
        query = " ".join(rng.choice(ORACLE_WORDS) for _ in range(rng.randint(2, 6)))
        k = rng.randint(1, 10)
        query_vector = embedder.embed(query)
        brute = sorted(
            (
                -min(1.0, max(-1.0, math.fsum((embedder.embed(chunk.text) * query_vector).tolist()))),
                chunk.id,
            )
            for chunk in chunks
        )[:k]
        got = retrieve(index, query, k)
        assert [r.chunk_id for r in got] == [chunk_id for _, chunk_id in brute]
        for result, (negated, _) in zip(got, brute):
            assert result.score == pytest.approx(-negated, abs=1e-9)

    for keyword in ("alpha", "beta", "gamma", "delta"):
        tagged = sorted(c.id for c in chunks if keyword in c.keywords)
        plan = QueryPlan((SubQuery(f"anything about {keyword}", keyword),))
        results = retrieve_planned(index, plan, 10).groups[0].results
        assert [r.chunk_id for r in results[: len(tagged)]] == tagged[:10]
        assert all(
            r.score == 1.0 and r.matched_by == MATCHED_BY_KEYWORD
            for r in results[: len(tagged)]
        )
    assert time.perf_counter() - start < 5.0


# ---------------------------------------------------------------------------
# 6. A single-sub-query plan degenerates to plain retrieval
# ---------------------------------------------------------------------------


def test_degenerate_plan_retrieval_equals_plain_retrieve(kb, tasks):
    index = build_index(kb.chunks)
    for task in tasks:
        flat = retrieve(index, task.request, 4)
        bundle = retrieve_planned(index, degenerate_plan(task.request), 4)
        assert len(bundle.groups) == 1
        group = bundle.groups[0]
        assert (group.sub_request_text, group.keyword) == (task.request, "")
        assert list(group.results) == flat


# ---------------------------------------------------------------------------
# 7. Autocorrect and round-trip properties over generated scripts
# ---------------------------------------------------------------------------

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def _random_option_value(rng, option):
    kind = option.value_kind
    if kind == "number":
        return Number(float(rng.randint(1, 500)))
    if kind == "boolean-flag":
        return Flag(rng.random() < 0.5)
    if kind == "numeric-vector":
        if rng.random() < 0.3:
            return Logspace(1.0, float(rng.randint(2, 4)), rng.randint(2, 5))
        return Vector(tuple(float(v) for v in sorted(rng.sample(range(1, 40), rng.randint(2, 4)))))
    # Strings and string cells have constrained vocabularies; the registry
    # default is always in-domain.
    return option.default_value


def _random_call(rng, kb, function, positional, assign_to=None):
    spec = kb.function_by_name[function]
    accepted = sorted(spec.accepted_options)
    names = rng.sample(accepted, min(rng.randint(0, 2), len(accepted)))
    options = tuple(
        (name, _random_option_value(rng, kb.option_by_name[name])) for name in names
    )
    return CallNode(function, tuple(positional), options, assign_to)


def _random_script(rng, kb):
    data_var = f"d{rng.randint(0, 9)}"
    calls = [_random_call(rng, kb, "generate_data", (Str(rng.choice(kb.cases)),), data_var)]
    for name in rng.sample(("pollute_data", "clean_data", "normalize_data"), rng.randint(0, 2)):
        calls.append(_random_call(rng, kb, name, (Ident(data_var),), data_var))
    model_var = None
    for _ in range(rng.randint(1, 2)):
        function = rng.choice(("train", "compare", "rank"))
        assign_to = None
        if function == "train":
            model_var = f"m{rng.randint(0, 9)}"
            assign_to = model_var
        methods = Cell(tuple(rng.sample(kb.methods, rng.randint(1, 3))))
        calls.append(_random_call(rng, kb, function, (Ident(data_var), methods), assign_to))
    if rng.random() < 0.5:
        target = model_var if model_var is not None and rng.random() < 0.5 else data_var
        methods = Cell(tuple(rng.sample(kb.methods, rng.randint(1, 2))))
        calls.append(_random_call(rng, kb, "visualize", (Ident(target), methods)))
    return ScriptAST(tuple(calls))


def _case_mangled(rng, name):
    variants = [name.upper(), name.lower(), name.swapcase(), name.capitalize()]
    rng.shuffle(variants)
    return next(v for v in variants if v != name)


def _distance_one_typo(rng, name, vocabulary, shape_ok):
    """A unique-match single-edit corruption of ``name``, or None."""
    lowered = {v.lower() for v in vocabulary}
    for _ in range(50):
        pos = rng.randrange(len(name))
        edit = rng.choice(("sub", "delete", "insert"))
        if edit == "sub":
            candidate = name[:pos] + rng.choice("qwxz") + name[pos + 1 :]
        elif edit == "delete":
            candidate = name[:pos] + name[pos + 1 :]
        else:
            candidate = name[:pos] + rng.choice("qwxz") + name[pos:]
        if candidate == name or not candidate or candidate.lower() in lowered:
            continue
        if not shape_ok(candidate):
            continue
        matches = [v for v in vocabulary if damerau_levenshtein(candidate, v) == 1]
        if matches == [name]:
            return candidate
    return None


def _mangle_name(rng, name, vocabulary, shape_ok):
    if rng.random() < 0.5:
        typo = _distance_one_typo(rng, name, vocabulary, shape_ok)
        if typo is not None:
            return typo
    return _case_mangled(rng, name)


def _mangle_script(rng, ast, kb):
    """Corrupt 1-3 distinct spots, each repairable by exactly one rule."""
    function_names = list(kb.function_by_name)
    option_names = list(kb.option_by_name)
    sites = []
    for ci, call in enumerate(ast.calls):
        sites.append(("func", ci, 0))
        for oi, (_, value) in enumerate(call.options):
            sites.append(("opt_name", ci, oi))
            if isinstance(value, Flag):
                sites.append(("flag", ci, oi))
            if isinstance(value, Cell) and len(value.items) == 1:
                sites.append(("cell_opt", ci, oi))
        for pi, arg in enumerate(call.positional_args):
            if isinstance(arg, Cell) and len(arg.items) == 1:
                sites.append(("cell_pos", ci, pi))
    chosen = rng.sample(sites, rng.randint(1, min(3, len(sites))))

    calls = [
        [call.function, list(call.positional_args), list(call.options), call.assign_to]
        for call in ast.calls
    ]
    ident_ok = lambda text: _IDENT_RE.fullmatch(text) is not None
    for kind, ci, idx in chosen:
        if kind == "func":
            calls[ci][0] = _mangle_name(rng, calls[ci][0], function_names, ident_ok)
        elif kind == "opt_name":
            name, value = calls[ci][2][idx]
            calls[ci][2][idx] = (_mangle_name(rng, name, option_names, is_option_name), value)
        elif kind == "flag":
            name, value = calls[ci][2][idx]
            calls[ci][2][idx] = (name, Number(1.0 if value.value else 0.0))
        elif kind == "cell_opt":
            name, value = calls[ci][2][idx]
            calls[ci][2][idx] = (name, Str(value.items[0]))
        else:
            calls[ci][1][idx] = Str(calls[ci][1][idx].items[0])
    return ScriptAST(
        tuple(
            CallNode(function, tuple(positional), tuple(options), assign_to)
            for function, positional, options, assign_to in calls
        )
    )


def test_autocorrect_properties_hold_over_generated_scripts(kb):
    rng = random.Random(431)
    start = time.perf_counter()
    for _ in range(500):
        pristine = _random_script(rng, kb)
        assert validate(pristine, kb) == []
        assert parse_script(pretty_print(pristine)) == pristine

        mangled = _mangle_script(rng, pristine, kb)
        assert parse_script(pretty_print(mangled)) == mangled

        corrected, fixes = autocorrect(mangled, kb)
        assert fixes, "every mangle must be visible to autocorrect"
        assert corrected == pristine
        assert validate(corrected, kb) == []

        again, more = autocorrect(corrected, kb)
        assert again == corrected
        assert more == []
    assert time.perf_counter() - start < 10.0


# ---------------------------------------------------------------------------
# 8. Reference requests: stored verbatim, valid, and full marks reachable
# ---------------------------------------------------------------------------

VERBATIM_REQUESTS = {
    "n16": (
        "Generate data for 'case39' with 500 training samples and 250 testing "
        "samples. Train a model using LS_CLS with 5 cross-validation folds and "
        "fix the cross-validation partition."
    ),
    "n20": (
        "Generate data for 'case14' with 400 training samples and 200 testing "
        "samples. Compare the accuracy of Decoupled Linearized Power Flow with "
        "Data-driven Correction and Power Transfer Distribution Factor for 'case14'."
    ),
    "n21": (
        "Generate data for 'case39' with 500 training samples and 250 testing "
        "samples. Visualize the linearization results for Ridge Regression with "
        "the 'academic' theme and disable the plotting."
    ),
    "c01": (
        "Generate data for 'case9' with 200 training samples and 150 testing "
        "samples. Compare and rank the accuracy of the following methods: "
        "PLS_RECW, TAY, the decoupled linearized power flow approach, RR_KPC, "
        "the ordinary least squares method, and the QR decomposition. Set the "
        "new data percentage for the method PLS_RECW to 20%, and its forgetting "
        "factor value as 0.7. Set point0 of the method TAY as 200. For the "
        "method RR_KPC, set the discrete range of tuning eta as logspace(2,5,5), "
        "and fix the random seed as 66 for RR_KPC. Set the response to {'Vm'} "
        "for all methods. Finally, use the light style for plotting the ranking, "
        "and set the type of plotting as 'probability'. Disable the plotting."
    ),
}

# Independently written solutions: renamed variables, reordered cells, a
# numeric flag spelling, and one restated registry default.
HAND_WRITTEN_SOLUTIONS = {
    "n16": (
        "gridData = generate_data('case39', 'num.trainSample', 500, 'num.testSample', 250);\n"
        "fitted = train(gridData, {'LS_CLS'}, 'LS_CLS.cvNumFolds', 5, 'LS_CLS.fixCV', on);"
    ),
    "n20": (
        "d = generate_data('case14', 'num.trainSample', 400, 'num.testSample', 200);\n"
        "compare(d, {'PTDF', 'DLPF_C'});"
    ),
    "n21": (
        "d = generate_data('case39', 'num.trainSample', 500, 'num.testSample', 250);\n"
        "visualize(d, {'RR'}, 'plot.theme', 'academic', 'plot.switch', 0);"
    ),
    "c01": (
        "d = generate_data('case9', 'num.trainSample', 200, 'num.testSample', 150);\n"
        "rank(d, {'QR', 'OLS', 'RR_KPC', 'DLPF', 'TAY', 'PLS_RECW'}, "
        "'PLS_RECW.newDataPercentage', 20, 'PLS_RECW.forgettingFactor', 0.7, "
        "'TAY.point0', 200, 'RR_KPC.etaRange', logspace(2, 5, 5), "
        "'RR_KPC.seed', 66, 'variable.response', {'Vm'}, 'plot.style', 'light', "
        "'plot.type', 'probability', 'plot.switch', off, 'rank.metric', 'accuracy');"
    ),
}


def test_reference_requests_validate_and_score_full_marks(kb, task_by_id):
    for task_id, request in VERBATIM_REQUESTS.items():
        task = task_by_id[task_id]
        assert task.request == request
        assert validate(task.expected, kb) == []

        solution = HAND_WRITTEN_SOLUTIONS[task_id]
        execution = execute(parse_script(solution), kb)
        assert execution.status == "success"
        attempt = AttemptRecord(1, solution, (), OUTCOME_SUCCESS, None, (), "", execution)
        assert score_attempt(attempt, task.expected, kb) == 1.0, task_id
