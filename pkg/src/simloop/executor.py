"""Interface-faithful mock execution of validated toolbox scripts.

The emulator tracks which datasets exist, what was trained, ranked and
plotted, and enforces call-ordering rules (no training before data
generation, and so on).  It never computes power flows; results are
symbolic bookkeeping only, which is exactly what deterministic scoring
needs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace as dc_replace

from .knowledge_base import KnowledgeBase
from .parser import (
    Arg,
    CallNode,
    Cell,
    Flag,
    Ident,
    Number,
    ScriptAST,
    Str,
    Value,
    format_call,
    format_value,
    pretty_print,
)
from .validation import (
    KIND_SEMANTIC_ORDER,
    KIND_UNKNOWN_FUNCTION,
    STAGE_EXECUTE,
    ErrorReport,
    ValidationIssue,
)

STATUS_SUCCESS = "success"
STATUS_RUNTIME_ERROR = "runtime_error"

_ADAPTER_ERR_RE = re.compile(r"^DALINE-ERR (\S+) (.*)$", re.MULTILINE)


# ===========================================================================
# Simulation state
# ===========================================================================


@dataclass(frozen=True, slots=True)
class DatasetState:
    case_name: str
    train_n: float
    test_n: float
    polluted: bool = False
    cleaned: bool = False
    normalized: bool = False


@dataclass(frozen=True, slots=True)
class TrainedModel:
    method: str
    options: tuple[tuple[str, Value], ...]
    dataset_var: str


@dataclass(frozen=True, slots=True)
class RankingRecord:
    methods: tuple[str, ...]
    metric: str


@dataclass(frozen=True, slots=True)
class PlotRecord:
    style: str
    type: str
    enabled: bool


@dataclass(slots=True)
class SimState:
    datasets: dict[str, DatasetState] = field(default_factory=dict)
    trained: list[TrainedModel] = field(default_factory=list)
    rankings: list[RankingRecord] = field(default_factory=list)
    plots: list[PlotRecord] = field(default_factory=list)


@dataclass(frozen=True, slots=True)
class TraceEntry:
    """Structured record of one executed call, used by scoring."""

    function: str
    assign_to: str | None
    positional: tuple[Arg, ...]
    options: tuple[tuple[str, Value], ...]
    summary: str


@dataclass(slots=True)
class ExecutionOutcome:
    status: str
    trace: tuple[TraceEntry, ...]
    error: ErrorReport | None
    final_state: SimState


class _Halt(Exception):
    def __init__(self, issue: ValidationIssue) -> None:
        super().__init__(issue.message)
        self.issue = issue


# ===========================================================================
# Execution
# ===========================================================================


def execute(ast: ScriptAST, kb: KnowledgeBase) -> ExecutionOutcome:
    """Run a script against the emulator.

    Assumes the script has been validated; unvalidated scripts still run as
    long as references resolve and argument shapes fit, with unknown names
    recorded symbolically.  The first ordering violation halts execution
    with a ``runtime_error`` outcome.
    """
    state = SimState()
    var_kinds: dict[str, str] = {}
    trace: list[TraceEntry] = []
    for ci, call in enumerate(ast.calls):
        try:
            _execute_call(ci, call, kb, state, var_kinds, trace)
        except _Halt as halt:
            report = ErrorReport(pretty_print(ast), (halt.issue,), STAGE_EXECUTE)
            return ExecutionOutcome(STATUS_RUNTIME_ERROR, tuple(trace), report, state)
    return ExecutionOutcome(STATUS_SUCCESS, tuple(trace), None, state)


def _execute_call(
    ci: int,
    call: CallNode,
    kb: KnowledgeBase,
    state: SimState,
    var_kinds: dict[str, str],
    trace: list[TraceEntry],
) -> None:
    handlers = {
        "generate_data": _run_generate,
        "pollute_data": _run_pollute,
        "clean_data": _run_clean,
        "normalize_data": _run_normalize,
        "train": _run_train,
        "compare": _run_compare,
        "rank": _run_rank,
        "visualize": _run_visualize,
    }
    handler = handlers.get(call.function)
    if handler is None:
        raise _Halt(
            ValidationIssue(
                KIND_UNKNOWN_FUNCTION,
                ci,
                None,
                f"unknown function '{call.function}' cannot be executed",
                "only toolbox functions can run",
            )
        )
    handler(ci, call, kb, state, var_kinds)
    trace.append(
        TraceEntry(call.function, call.assign_to, call.positional_args, call.options, format_call(call))
    )


def _halt(ci: int, message: str, hint: str, kind: str = KIND_SEMANTIC_ORDER) -> _Halt:
    return _Halt(ValidationIssue(kind, ci, None, message, hint))


def _resolve_ref(
    ci: int, call: CallNode, index: int, wanted: tuple[str, ...], var_kinds: dict[str, str]
) -> str:
    label = " or ".join(wanted)
    if index >= len(call.positional_args):
        raise _halt(
            ci,
            f"'{call.function}' needs a {label} variable as argument {index + 1}",
            "assign a previous result to a variable and pass its name",
        )
    arg = call.positional_args[index]
    if not isinstance(arg, Ident):
        raise _halt(
            ci,
            f"'{call.function}' expected a {label} variable, found {format_value(arg)}",
            "pass the name of a previously assigned variable",
        )
    kind = var_kinds.get(arg.name)
    if kind is None:
        raise _halt(
            ci,
            f"no {label} named '{arg.name}' exists yet",
            "call generate_data first and assign its result to that name",
        )
    if kind not in wanted:
        raise _halt(
            ci,
            f"'{arg.name}' is a {kind}, but '{call.function}' needs a {label}",
            "pass a variable of the right kind",
        )
    return arg.name


def _option_value(call: CallNode, name: str) -> Value | None:
    found = None
    for opt_name, value in call.options:
        if opt_name == name:
            found = value
    return found


def _number_option(call: CallNode, kb: KnowledgeBase, name: str, fallback: float) -> float:
    value = _option_value(call, name)
    if isinstance(value, Number):
        return value.value
    opt = kb.option_by_name.get(name)
    if opt is not None and isinstance(opt.default_value, Number):
        return opt.default_value.value
    return fallback


def _methods_cell(ci: int, call: CallNode, index: int) -> tuple[str, ...]:
    if index >= len(call.positional_args):
        raise _halt(
            ci,
            f"'{call.function}' needs a method list as argument {index + 1}",
            "pass a cell of method names like {'OLS', 'QR'}",
        )
    arg = call.positional_args[index]
    if isinstance(arg, Cell):
        return arg.items
    if isinstance(arg, Str):
        return (arg.value,)
    raise _halt(
        ci,
        f"'{call.function}' expected a cell of method names, found {format_value(arg)}",
        "pass a cell of method names like {'OLS', 'QR'}",
    )


def _plot_record(call: CallNode, kb: KnowledgeBase, style_option: str) -> PlotRecord:
    style_value = _option_value(call, style_option)
    if not isinstance(style_value, Str):
        opt = kb.option_by_name.get(style_option)
        style = opt.default_value.value if opt and isinstance(opt.default_value, Str) else "default"
    else:
        style = style_value.value

    type_value = _option_value(call, "plot.type")
    if isinstance(type_value, Str):
        plot_type = type_value.value
    else:
        opt = kb.option_by_name.get("plot.type")
        plot_type = opt.default_value.value if opt and isinstance(opt.default_value, Str) else "default"

    switch = _option_value(call, "plot.switch")
    if isinstance(switch, Flag):
        enabled = switch.value
    elif isinstance(switch, Number):
        enabled = switch.value != 0.0
    else:
        opt = kb.option_by_name.get("plot.switch")
        enabled = opt.default_value.value if opt and isinstance(opt.default_value, Flag) else True
    return PlotRecord(style, plot_type, enabled)


def _run_generate(ci: int, call: CallNode, kb: KnowledgeBase, state: SimState, var_kinds) -> None:
    if not call.positional_args or not isinstance(call.positional_args[0], Str):
        raise _halt(
            ci,
            "'generate_data' needs a quoted case name as its first argument",
            "for example: data = generate_data('case39');",
        )
    dataset = DatasetState(
        case_name=call.positional_args[0].value,
        train_n=_number_option(call, kb, "num.trainSample", 300.0),
        test_n=_number_option(call, kb, "num.testSample", 150.0),
    )
    if call.assign_to:
        state.datasets[call.assign_to] = dataset
        var_kinds[call.assign_to] = "dataset"


def _toggle(flag_name: str):
    def runner(ci: int, call: CallNode, kb: KnowledgeBase, state: SimState, var_kinds) -> None:
        name = _resolve_ref(ci, call, 0, ("dataset",), var_kinds)
        updated = dc_replace(state.datasets[name], **{flag_name: True})
        target = call.assign_to or name
        state.datasets[target] = updated
        if call.assign_to:
            var_kinds[call.assign_to] = "dataset"

    return runner


_run_pollute = _toggle("polluted")
_run_clean = _toggle("cleaned")
_run_normalize = _toggle("normalized")


def _train_models(ci: int, call: CallNode, state: SimState, var_kinds) -> tuple[str, ...]:
    dataset_var = _resolve_ref(ci, call, 0, ("dataset",), var_kinds)
    methods = _methods_cell(ci, call, 1)
    for method in methods:
        state.trained.append(TrainedModel(method, call.options, dataset_var))
    return methods


def _run_train(ci: int, call: CallNode, kb: KnowledgeBase, state: SimState, var_kinds) -> None:
    _train_models(ci, call, state, var_kinds)
    if call.assign_to:
        var_kinds[call.assign_to] = "model"


def _ranking(ci: int, call: CallNode, kb: KnowledgeBase, state: SimState, var_kinds) -> None:
    methods = _train_models(ci, call, state, var_kinds)
    metric_value = _option_value(call, "rank.metric")
    if isinstance(metric_value, Str):
        metric = metric_value.value
    else:
        opt = kb.option_by_name.get("rank.metric")
        metric = opt.default_value.value if opt and isinstance(opt.default_value, Str) else "accuracy"
    state.rankings.append(RankingRecord(methods, metric))
    state.plots.append(_plot_record(call, kb, "plot.style"))
    if call.assign_to:
        var_kinds[call.assign_to] = "ranking"


_run_compare = _ranking
_run_rank = _ranking


def _run_visualize(ci: int, call: CallNode, kb: KnowledgeBase, state: SimState, var_kinds) -> None:
    _resolve_ref(ci, call, 0, ("dataset", "model"), var_kinds)
    _methods_cell(ci, call, 1)
    state.plots.append(_plot_record(call, kb, "plot.theme"))
    if call.assign_to:
        var_kinds[call.assign_to] = "plot"


# ===========================================================================
# Subprocess adapter contract (documentation plus result interpretation)
# ===========================================================================

ADAPTER_CONTRACT = """\
Adapter contract for running scripts against a real toolbox installation.

A replacement executor may hand scripts to an external MATLAB process
instead of this emulator.  The adapter receives the pretty-printed script
on standard input, one statement per line, and must behave as follows:

* exit status 0: the script ran to completion; the outcome is a success.
* exit status 1 with a line ``DALINE-ERR <kind> <message>`` on standard
  output or error: the outcome is a runtime_error carrying that kind and
  message.
* exit status 1 without such a line: the outcome is a runtime_error with
  a generic failure message.

Any other exit status is treated like a missing diagnostic line.  The
emulator in this module and a conforming adapter are interchangeable from
the orchestrator's point of view.
"""


def describe_adapter_contract() -> str:
    return ADAPTER_CONTRACT


def interpret_adapter_output(exit_status: int, output: str, script: str = "") -> ExecutionOutcome:
    """Map an adapter's exit status and output onto an outcome.

    This is the interpretation half of the adapter contract; no subprocess
    is spawned here.  The trace stays empty because only the external
    process knows what actually ran.
    """
    if exit_status == 0:
        return ExecutionOutcome(STATUS_SUCCESS, (), None, SimState())
    match = _ADAPTER_ERR_RE.search(output)
    if match:
        issue = ValidationIssue(
            match.group(1), 0, None, match.group(2), "see the toolbox log for details"
        )
    else:
        issue = ValidationIssue(
            KIND_SEMANTIC_ORDER,
            0,
            None,
            "execution failed without a diagnostic",
            "run the adapter manually to inspect the toolbox output",
        )
    report = ErrorReport(script or "(script unavailable)", (issue,), STAGE_EXECUTE)
    return ExecutionOutcome(STATUS_RUNTIME_ERROR, (), report, SimState())
