import pytest

from simloop.executor import (
    STATUS_RUNTIME_ERROR,
    STATUS_SUCCESS,
    describe_adapter_contract,
    execute,
    interpret_adapter_output,
)
from simloop.parser import Flag, Number, parse_script
from simloop.validation import KIND_SEMANTIC_ORDER, KIND_UNKNOWN_FUNCTION

PIPELINE = """\
data = generate_data('case39', 'num.trainSample', 500, 'num.testSample', 250);
data = pollute_data(data);
data = clean_data(data);
data = normalize_data(data);
model = train(data, {'OLS', 'RR'});
compare(data, {'OLS', 'RR'}, 'plot.switch', off);
rank(data, {'OLS', 'RR'}, 'rank.metric', 'accuracy');
visualize(model, {'OLS'}, 'plot.theme', 'academic');
"""


def run(kb, source):
    return execute(parse_script(source), kb)


def test_full_pipeline_succeeds_and_traces_every_call(kb):
    outcome = run(kb, PIPELINE)
    assert outcome.status == STATUS_SUCCESS
    assert outcome.error is None
    assert [t.function for t in outcome.trace] == [
        "generate_data",
        "pollute_data",
        "clean_data",
        "normalize_data",
        "train",
        "compare",
        "rank",
        "visualize",
    ]
    dataset = outcome.final_state.datasets["data"]
    assert (dataset.train_n, dataset.test_n) == (500.0, 250.0)
    assert dataset.polluted and dataset.cleaned and dataset.normalized
    assert [m.method for m in outcome.final_state.trained] == ["OLS", "RR"] * 3
    assert outcome.final_state.rankings[-1].metric == "accuracy"


def test_trace_entries_carry_structured_arguments(kb):
    outcome = run(kb, "data = generate_data('case9', 'num.trainSample', 200);")
    (entry,) = outcome.trace
    assert entry.assign_to == "data"
    assert entry.options == (("num.trainSample", Number(200.0)),)
    assert entry.summary == "data = generate_data('case9', 'num.trainSample', 200);"


def test_dataset_defaults_come_from_the_registry(kb):
    outcome = run(kb, "data = generate_data('case9');")
    dataset = outcome.final_state.datasets["data"]
    assert (dataset.train_n, dataset.test_n) == (300.0, 150.0)


def test_toggle_can_write_to_a_new_variable(kb):
    outcome = run(
        kb,
        "data = generate_data('case9');\n"
        "cleaned = clean_data(data);\n"
        "model = train(cleaned, {'OLS'});\n",
    )
    assert outcome.status == STATUS_SUCCESS
    assert outcome.final_state.datasets["data"].cleaned is False
    assert outcome.final_state.datasets["cleaned"].cleaned is True


def test_plot_records_for_ranking_and_visualization(kb):
    outcome = run(
        kb,
        "data = generate_data('case9');\n"
        "rank(data, {'OLS'}, 'plot.style', 'light', 'plot.switch', off);\n"
        "visualize(data, {'OLS'}, 'plot.theme', 'academic');\n",
    )
    ranking_plot, visual_plot = outcome.final_state.plots
    assert (ranking_plot.style, ranking_plot.enabled) == ("light", False)
    assert visual_plot.style == "academic"
    assert visual_plot.enabled is True


def test_plot_switch_accepts_numeric_zero(kb):
    outcome = run(kb, "data = generate_data('case9');\nrank(data, {'OLS'}, 'plot.switch', 0);")
    assert outcome.final_state.plots[0].enabled is False


def test_repeated_options_let_the_last_value_win(kb):
    outcome = run(
        kb,
        "data = generate_data('case9');\n"
        "rank(data, {'OLS'}, 'plot.switch', on, 'plot.switch', off);\n",
    )
    assert outcome.final_state.plots[0].enabled is False


def test_unknown_methods_run_symbolically(kb):
    # static validation owns vocabulary checks; execution records what it saw
    outcome = run(kb, "data = generate_data('case9');\nmodel = train(data, {'XGB'});")
    assert outcome.status == STATUS_SUCCESS
    assert outcome.final_state.trained[0].method == "XGB"


def test_training_before_generating_is_a_runtime_error(kb):
    outcome = run(kb, "model = train(data, {'OLS'});")
    assert outcome.status == STATUS_RUNTIME_ERROR
    assert outcome.trace == ()
    assert outcome.error.stage == "execute"
    assert outcome.error.issues[0].kind == KIND_SEMANTIC_ORDER
    assert "no dataset named 'data'" in outcome.error.issues[0].message


def test_error_keeps_the_successful_prefix_in_the_trace(kb):
    outcome = run(kb, "data = generate_data('case9');\nvisualize(ghost, {'OLS'});")
    assert outcome.status == STATUS_RUNTIME_ERROR
    assert [t.function for t in outcome.trace] == ["generate_data"]


def test_variable_kinds_are_enforced(kb):
    outcome = run(
        kb,
        "data = generate_data('case9');\n"
        "model = train(data, {'OLS'});\n"
        "pollute_data(model);\n",
    )
    assert outcome.status == STATUS_RUNTIME_ERROR
    assert "'model' is a model" in outcome.error.issues[0].message


def test_visualize_accepts_models_and_datasets(kb):
    outcome = run(
        kb,
        "data = generate_data('case9');\n"
        "model = train(data, {'OLS'});\n"
        "visualize(model, {'OLS'});\n"
        "visualize(data, {'OLS'});\n",
    )
    assert outcome.status == STATUS_SUCCESS


def test_literal_dataset_argument_is_rejected(kb):
    outcome = run(kb, "train(3, {'OLS'});")
    assert outcome.status == STATUS_RUNTIME_ERROR
    assert "expected a dataset variable" in outcome.error.issues[0].message


def test_unknown_function_halts_execution(kb):
    outcome = run(kb, "data = generate_data('case9');\nfrobnicate(data);")
    assert outcome.status == STATUS_RUNTIME_ERROR
    assert outcome.error.issues[0].kind == KIND_UNKNOWN_FUNCTION


def test_bare_method_string_is_tolerated(kb):
    outcome = run(kb, "data = generate_data('case9');\nmodel = train(data, 'OLS');")
    assert outcome.status == STATUS_SUCCESS
    assert outcome.final_state.trained[0].method == "OLS"


# ---------------------------------------------------------------------------
# Adapter contract
# ---------------------------------------------------------------------------


def test_adapter_success():
    outcome = interpret_adapter_output(0, "any output")
    assert outcome.status == STATUS_SUCCESS
    assert outcome.error is None


def test_adapter_diagnostic_line_is_parsed():
    output = "noise\nDALINE-ERR bad_reference no dataset named 'd'\nmore noise"
    outcome = interpret_adapter_output(1, output, script="train(d, {'OLS'});")
    assert outcome.status == STATUS_RUNTIME_ERROR
    issue = outcome.error.issues[0]
    assert issue.kind == "bad_reference"
    assert issue.message == "no dataset named 'd'"
    assert outcome.error.problematic_code == "train(d, {'OLS'});"


@pytest.mark.parametrize("status", [1, 2, 137])
def test_adapter_failure_without_diagnostic_is_generic(status):
    outcome = interpret_adapter_output(status, "nothing useful")
    assert outcome.status == STATUS_RUNTIME_ERROR
    assert "without a diagnostic" in outcome.error.issues[0].message


def test_adapter_contract_is_documented():
    assert "DALINE-ERR" in describe_adapter_contract()
