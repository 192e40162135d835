"""Static checking and auto-correction of parsed scripts.

``autocorrect`` applies exactly four repair rules (case-normalization,
unique distance-1 name replacement, number-to-flag coercion, string-to-cell
wrapping), records every fix, and is idempotent.  ``validate`` then reports
every remaining problem at once instead of stopping at the first.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .errors import ScriptParseError
from .knowledge_base import KnowledgeBase, OptionSpec, PositionalParam
from .parser import (
    Arg,
    CallNode,
    Cell,
    Flag,
    Ident,
    Logspace,
    Number,
    ScriptAST,
    Str,
    Value,
    Vector,
    format_value,
)

# Issue kinds. ``parse_error`` and ``no_code`` are report plumbing for
# attempts that fail before validation ever runs.
KIND_UNKNOWN_FUNCTION = "unknown_function"
KIND_UNKNOWN_OPTION = "unknown_option"
KIND_OPTION_FUNCTION_MISMATCH = "option_function_mismatch"
KIND_TYPE_MISMATCH = "type_mismatch"
KIND_MISSING_REQUIRED_ARG = "missing_required_arg"
KIND_DUPLICATE_OPTION = "duplicate_option"
KIND_UNKNOWN_CASE = "unknown_case"
KIND_SEMANTIC_ORDER = "semantic_order"
KIND_PARSE_ERROR = "parse_error"
KIND_NO_CODE = "no_code"

STAGE_PARSE = "parse"
STAGE_VALIDATE = "validate"
STAGE_EXECUTE = "execute"

GENERIC_FAILURE_MESSAGE = "execution failed"


@dataclass(frozen=True, slots=True)
class ValidationIssue:
    kind: str
    call_index: int
    option_name: str | None
    message: str
    hint: str
    suggestion: str | None = None


@dataclass(frozen=True, slots=True)
class ErrorReport:
    problematic_code: str
    issues: tuple[ValidationIssue, ...]
    stage: str

    def __post_init__(self) -> None:
        if not self.issues:
            raise ValueError("an error report needs at least one issue")
        if self.stage not in (STAGE_PARSE, STAGE_VALIDATE, STAGE_EXECUTE):
            raise ValueError(f"unknown stage {self.stage!r}")


def degrade_report(report: ErrorReport) -> ErrorReport:
    """Strip precise diagnostics, keeping only the issue kinds.

    Used when error reporting is ablated: the repair loop still learns that
    the attempt failed, but not why.
    """
    stripped = tuple(
        replace(issue, message=GENERIC_FAILURE_MESSAGE, hint="", suggestion=None)
        for issue in report.issues
    )
    return ErrorReport(report.problematic_code, stripped, report.stage)


def report_from_parse_error(code: str, error: ScriptParseError) -> ErrorReport:
    issue = ValidationIssue(
        kind=KIND_PARSE_ERROR,
        call_index=0,
        option_name=None,
        message=str(error),
        hint="fix the syntax at the reported position; statements look like name = func('arg', 'option.name', value);",
    )
    return ErrorReport(code, (issue,), STAGE_PARSE)


def report_no_code(response: str) -> ErrorReport:
    issue = ValidationIssue(
        kind=KIND_NO_CODE,
        call_index=0,
        option_name=None,
        message="the reply did not contain a runnable script",
        hint="reply with exactly one fenced code block holding the complete script",
    )
    excerpt = response.strip()
    if len(excerpt) > 400:
        excerpt = excerpt[:400] + " ..."
    return ErrorReport(excerpt, (issue,), STAGE_PARSE)


# ===========================================================================
# Edit distance
# ===========================================================================


def damerau_levenshtein(a: str, b: str) -> int:
    """Optimal string alignment distance (edits plus adjacent swaps)."""
    if a == b:
        return 0
    rows = len(a) + 1
    cols = len(b) + 1
    dist = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        dist[i][0] = i
    for j in range(cols):
        dist[0][j] = j
    for i in range(1, rows):
        for j in range(1, cols):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            dist[i][j] = min(
                dist[i - 1][j] + 1,
                dist[i][j - 1] + 1,
                dist[i - 1][j - 1] + cost,
            )
            if i > 1 and j > 1 and a[i - 1] == b[j - 2] and a[i - 2] == b[j - 1]:
                dist[i][j] = min(dist[i][j], dist[i - 2][j - 2] + 1)
    return dist[-1][-1]


def nearest_name(name: str, candidates: Iterable[str], max_distance: int = 2) -> str | None:
    best: tuple[int, str] | None = None
    for candidate in candidates:
        d = damerau_levenshtein(name, candidate)
        if d <= max_distance and (best is None or (d, candidate) < best):
            best = (d, candidate)
    return best[1] if best else None


def _unique_case_match(name: str, candidates: Iterable[str]) -> str | None:
    matches = [c for c in candidates if c.lower() == name.lower()]
    return matches[0] if len(matches) == 1 else None


def _unique_distance_one(name: str, candidates: Iterable[str]) -> str | None:
    matches = [c for c in candidates if damerau_levenshtein(name, c) == 1]
    return matches[0] if len(matches) == 1 else None


# ===========================================================================
# Auto-correction
# ===========================================================================


@dataclass(frozen=True, slots=True)
class CorrectionFix:
    rule: str  # case_normalize | edit_distance | flag_coercion | cell_wrap
    call_index: int
    place: str
    before: str
    after: str


def autocorrect(ast: ScriptAST, kb: KnowledgeBase) -> tuple[ScriptAST, list[CorrectionFix]]:
    """Apply the four repair rules and record every fix.

    Running the result through ``autocorrect`` again yields zero fixes.
    """
    fixes: list[CorrectionFix] = []
    new_calls: list[CallNode] = []
    function_names = list(kb.function_by_name)
    option_names = list(kb.option_by_name)

    for ci, call in enumerate(ast.calls):
        function = _fix_name(call.function, function_names, ci, "function name", fixes)
        spec = kb.function_by_name.get(function)

        options: list[tuple[str, Value]] = []
        for name, value in call.options:
            fixed_name = _fix_name(name, option_names, ci, f"option '{name}'", fixes)
            opt_spec = kb.option_by_name.get(fixed_name)
            if opt_spec is not None:
                value = _coerce_value(value, opt_spec.value_kind, ci, f"value of option '{fixed_name}'", fixes)
            options.append((fixed_name, value))

        positional = list(call.positional_args)
        if spec is not None:
            for i, param in enumerate(spec.positional_params):
                if i < len(positional):
                    positional[i] = _coerce_arg(
                        positional[i], param, ci, f"argument '{param.name}'", fixes
                    )

        new_calls.append(CallNode(function, tuple(positional), tuple(options), call.assign_to))
    return ScriptAST(tuple(new_calls)), fixes


def _fix_name(
    name: str, candidates: list[str], call_index: int, place: str, fixes: list[CorrectionFix]
) -> str:
    if name in candidates:
        return name
    case_match = _unique_case_match(name, candidates)
    if case_match is not None:
        fixes.append(CorrectionFix("case_normalize", call_index, place, name, case_match))
        return case_match
    fuzzy_match = _unique_distance_one(name, candidates)
    if fuzzy_match is not None:
        fixes.append(CorrectionFix("edit_distance", call_index, place, name, fuzzy_match))
        return fuzzy_match
    return name


def _coerce_value(
    value: Value, expected_kind: str, call_index: int, place: str, fixes: list[CorrectionFix]
) -> Value:
    if expected_kind == "boolean-flag" and isinstance(value, Number) and value.value in (0.0, 1.0):
        coerced = Flag(value.value == 1.0)
        fixes.append(
            CorrectionFix("flag_coercion", call_index, place, format_value(value), format_value(coerced))
        )
        return coerced
    if expected_kind == "cell-of-strings" and isinstance(value, Str):
        wrapped = Cell((value.value,))
        fixes.append(
            CorrectionFix("cell_wrap", call_index, place, format_value(value), format_value(wrapped))
        )
        return wrapped
    return value


def _coerce_arg(
    arg: Arg, param: PositionalParam, call_index: int, place: str, fixes: list[CorrectionFix]
) -> Arg:
    if isinstance(arg, Ident):
        return arg
    return _coerce_value(arg, param.kind, call_index, place, fixes)


# ===========================================================================
# Validation
# ===========================================================================

_KIND_LABELS = {
    "number": "a number",
    "string": "a quoted string",
    "cell-of-strings": "a cell of strings like {'A', 'B'}",
    "numeric-vector": "a numeric vector like [1, 2, 3]",
    "boolean-flag": "a flag (on/off)",
    "reference": "a variable name",
}


def _conforms(value: Arg, kind: str) -> bool:
    if kind == "reference":
        return isinstance(value, Ident)
    if isinstance(value, Ident):
        return False
    return {
        "number": isinstance(value, Number),
        "string": isinstance(value, Str),
        "cell-of-strings": isinstance(value, Cell),
        "numeric-vector": isinstance(value, (Vector, Logspace)),
        "boolean-flag": isinstance(value, Flag),
    }[kind]


def validate(ast: ScriptAST, kb: KnowledgeBase) -> list[ValidationIssue]:
    """Collect every static problem in the script.

    Checks, per call: the function exists, required positional arguments
    are present and well-typed, case and method names are known, options
    exist, belong to the called function, have conforming values, and are
    not duplicated.
    """
    issues: list[ValidationIssue] = []
    for ci, call in enumerate(ast.calls):
        spec = kb.function_by_name.get(call.function)
        if spec is None:
            suggestion = nearest_name(call.function, kb.function_by_name)
            hint = (
                f"did you mean '{suggestion}'?"
                if suggestion
                else f"available functions: {', '.join(kb.function_by_name)}"
            )
            issues.append(
                ValidationIssue(
                    KIND_UNKNOWN_FUNCTION,
                    ci,
                    None,
                    f"unknown function '{call.function}'",
                    hint,
                    suggestion,
                )
            )
            continue
        _check_positionals(ci, call, spec.positional_params, kb, issues)
        _check_options(ci, call, spec, kb, issues)
    return issues


def _check_positionals(
    ci: int,
    call: CallNode,
    params: tuple[PositionalParam, ...],
    kb: KnowledgeBase,
    issues: list[ValidationIssue],
) -> None:
    args = call.positional_args
    for i, param in enumerate(params):
        if i >= len(args):
            if param.required:
                issues.append(
                    ValidationIssue(
                        KIND_MISSING_REQUIRED_ARG,
                        ci,
                        None,
                        f"'{call.function}' is missing required argument '{param.name}'",
                        f"pass {_KIND_LABELS[param.kind]} as argument {i + 1}",
                    )
                )
            continue
        arg = args[i]
        if not _conforms(arg, param.kind):
            issues.append(
                ValidationIssue(
                    KIND_TYPE_MISMATCH,
                    ci,
                    None,
                    f"argument '{param.name}' of '{call.function}' should be {_KIND_LABELS[param.kind]}, "
                    f"found {format_value(arg)}",
                    f"pass {_KIND_LABELS[param.kind]} instead",
                )
            )
            continue
        _check_domain(ci, call, param, arg, kb, issues)
    if len(args) > len(params):
        extras = ", ".join(format_value(a) for a in args[len(params) :])
        issues.append(
            ValidationIssue(
                KIND_TYPE_MISMATCH,
                ci,
                None,
                f"'{call.function}' takes {len(params)} positional argument(s), "
                f"found {len(args)} (extra: {extras})",
                "remove the extra positional arguments or pass them as 'option.name', value pairs",
            )
        )


def _check_domain(
    ci: int,
    call: CallNode,
    param: PositionalParam,
    arg: Arg,
    kb: KnowledgeBase,
    issues: list[ValidationIssue],
) -> None:
    if param.domain == "case" and isinstance(arg, Str):
        if arg.value not in kb.cases:
            suggestion = nearest_name(arg.value, kb.cases)
            issues.append(
                ValidationIssue(
                    KIND_UNKNOWN_CASE,
                    ci,
                    None,
                    f"'{arg.value}' is not a known case",
                    f"known cases: {', '.join(kb.cases)}",
                    suggestion,
                )
            )
    elif param.domain == "method" and isinstance(arg, Cell):
        for item in arg.items:
            if item not in kb.methods:
                suggestion = nearest_name(item, kb.methods)
                hint = (
                    f"did you mean '{suggestion}'?"
                    if suggestion
                    else f"known methods: {', '.join(kb.methods)}"
                )
                issues.append(
                    ValidationIssue(
                        KIND_TYPE_MISMATCH,
                        ci,
                        None,
                        f"'{item}' is not a known method",
                        hint,
                        suggestion,
                    )
                )


def _check_options(
    ci: int,
    call: CallNode,
    spec,
    kb: KnowledgeBase,
    issues: list[ValidationIssue],
) -> None:
    seen: set[str] = set()
    for name, value in call.options:
        if name in seen:
            issues.append(
                ValidationIssue(
                    KIND_DUPLICATE_OPTION,
                    ci,
                    name,
                    f"option '{name}' is set more than once in this call",
                    "keep a single assignment per option",
                )
            )
        seen.add(name)

        opt: OptionSpec | None = kb.option_by_name.get(name)
        if opt is None:
            suggestion = nearest_name(name, kb.option_by_name)
            hint = (
                f"did you mean '{suggestion}'?"
                if suggestion
                else "check the option registry for valid names"
            )
            issues.append(
                ValidationIssue(
                    KIND_UNKNOWN_OPTION, ci, name, f"unknown option '{name}'", hint, suggestion
                )
            )
            continue
        if name not in spec.accepted_options:
            owners = ", ".join(opt.associated_functions)
            issues.append(
                ValidationIssue(
                    KIND_OPTION_FUNCTION_MISMATCH,
                    ci,
                    name,
                    f"option '{name}' does not apply to '{call.function}'",
                    f"'{name}' belongs to: {owners}",
                    opt.associated_functions[0],
                )
            )
        if not _conforms(value, opt.value_kind):
            issues.append(
                ValidationIssue(
                    KIND_TYPE_MISMATCH,
                    ci,
                    name,
                    f"option '{name}' expects {_KIND_LABELS[opt.value_kind]}, "
                    f"found {format_value(value)}",
                    f"for example: '{name}', {format_value(opt.default_value)}",
                )
            )


def build_validation_report(code: str, issues: Sequence[ValidationIssue]) -> ErrorReport:
    return ErrorReport(code, tuple(issues), STAGE_VALIDATE)
