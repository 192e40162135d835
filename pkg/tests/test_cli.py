import json

import pytest

from simloop.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main
from simloop.defaults import read_fixture
from simloop.evaluation import load_schemes, load_tasks
from simloop.fixturegen import imperfect_responder, perfect_responder, record_evaluation
from simloop.knowledge_base import kb_from_dict

DECK = """\
=== TASK t1 ===
KIND: normal
REQUEST: Generate data for case9 and train OLS.
EXPECTED:
data = generate_data('case9');
model = train(data, {'OLS'});

=== TASK t2 ===
KIND: complex
REQUEST: Rank OLS and QR on case14 data with plotting switched off.
EXPECTED:
data = generate_data('case14');
rank(data, {'OLS', 'QR'}, 'plot.switch', off);
"""

SHEET = """\
=== SCHEME Full ===
RAG: enhanced
OFF: none

=== SCHEME Standard ===
RAG: standard
OFF: query_planning
"""


@pytest.fixture(scope="module")
def cli_env(tmp_path_factory, kb):
    """Deck, sheet and replay files shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    deck_path = root / "deck.txt"
    deck_path.write_text(DECK, encoding="utf-8")
    sheet_path = root / "sheet.txt"
    sheet_path.write_text(SHEET, encoding="utf-8")

    tasks = load_tasks(DECK, kb)
    schemes = load_schemes(SHEET)
    replay_path = root / "replay.txt"
    replay_path.write_text(
        record_evaluation(tasks, schemes, kb, perfect_responder(tasks)), encoding="utf-8"
    )
    failing_path = root / "replay_failing.txt"
    failing_path.write_text(
        record_evaluation(
            tasks[:1], schemes[:1], kb, imperfect_responder(tasks[:1], {"t1"}, mode="wrong_method")
        ),
        encoding="utf-8",
    )
    return {
        "root": root,
        "deck": str(deck_path),
        "sheet": str(sheet_path),
        "replay": str(replay_path),
        "failing_replay": str(failing_path),
        "tasks": tasks,
    }


# ---------------------------------------------------------------------------
# kb-build
# ---------------------------------------------------------------------------


def test_kb_build_from_packaged_fixtures(tmp_path, capsys, kb):
    out = tmp_path / "kb.json"
    assert main(["kb-build", "--out", str(out)]) == EXIT_OK
    assert "options" in capsys.readouterr().out
    rebuilt = kb_from_dict(json.loads(out.read_text(encoding="utf-8")))
    assert rebuilt == kb


def test_kb_build_from_a_source_directory(tmp_path, capsys, kb):
    src = tmp_path / "src"
    src.mkdir()
    for name in ("registry.kbreg", "examples.kbex", "manual.txt"):
        (src / name).write_text(read_fixture(name), encoding="utf-8")
    out = tmp_path / "kb.json"
    assert main(["kb-build", "--kb-dir", str(src), "--out", str(out)]) == EXIT_OK
    rebuilt = kb_from_dict(json.loads(out.read_text(encoding="utf-8")))
    assert rebuilt == kb


# ---------------------------------------------------------------------------
# ask
# ---------------------------------------------------------------------------


def test_ask_answers_with_the_final_script(cli_env, capsys):
    code = main(
        [
            "ask",
            "Generate data for case9 and train OLS.",
            "--replay-file",
            cli_env["replay"],
        ]
    )
    captured = capsys.readouterr()
    assert code == EXIT_OK
    assert "attempt 1: success" in captured.out
    assert "data = generate_data('case9');" in captured.out
    assert "model = train(data, {'OLS'});" in captured.out


def test_ask_with_a_prebuilt_kb_file(cli_env, tmp_path, capsys):
    kb_path = tmp_path / "kb.json"
    assert main(["kb-build", "--out", str(kb_path)]) == EXIT_OK
    capsys.readouterr()
    code = main(
        [
            "ask",
            "Generate data for case9 and train OLS.",
            "--kb",
            str(kb_path),
            "--replay-file",
            cli_env["replay"],
        ]
    )
    assert code == EXIT_OK
    assert "attempt 1: success" in capsys.readouterr().out


def test_ask_writes_a_transcript(cli_env, tmp_path, capsys):
    transcript_path = tmp_path / "t.json"
    code = main(
        [
            "ask",
            "Generate data for case9 and train OLS.",
            "--replay-file",
            cli_env["replay"],
            "--transcript",
            str(transcript_path),
        ]
    )
    assert code == EXIT_OK
    data = json.loads(transcript_path.read_text(encoding="utf-8"))
    assert data["final_status"] == "success"
    assert data["llm_calls"] == 2


def test_ask_reports_exhaustion_on_stderr(cli_env, capsys):
    code = main(
        [
            "ask",
            "Generate data for case9 and train OLS.",
            "--replay-file",
            cli_env["failing_replay"],
        ]
    )
    captured = capsys.readouterr()
    assert code == EXIT_FAILURE
    assert captured.out.count("validate_fail") == 3
    assert "is not a known method" in captured.err
    assert "session exhausted" in captured.err


def test_ask_requires_a_replay_file():
    with pytest.raises(SystemExit):
        main(["ask", "anything"])


def test_ask_http_requires_a_base_url():
    with pytest.raises(SystemExit):
        main(["ask", "anything", "--provider", "http"])


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def eval_args(cli_env, out_dir, *extra):
    return [
        "eval",
        "--tasks",
        cli_env["deck"],
        "--schemes",
        cli_env["sheet"],
        "--replay-file",
        cli_env["replay"],
        "--out",
        str(out_dir),
        *extra,
    ]


def test_eval_writes_reports_and_prints_the_summary(cli_env, tmp_path, capsys):
    out_dir = tmp_path / "reports"
    assert main(eval_args(cli_env, out_dir)) == EXIT_OK
    captured = capsys.readouterr()
    assert "scheme,tasks,points,max_points,overall,normal,complex" in captured.out
    assert "Full,2,6,6,100.00,100.00,100.00" in captured.out
    assert "Standard,2,6,6,100.00,100.00,100.00" in captured.out
    assert (out_dir / "results.csv").exists()
    assert (out_dir / "results_summary.txt").exists()
    assert (out_dir / "results.json").exists()
    csv_lines = (out_dir / "results.csv").read_text(encoding="utf-8").splitlines()
    assert len(csv_lines) == 1 + 2 * 2 * 3  # schemes x tasks x attempts


def test_eval_runs_are_byte_identical(cli_env, tmp_path, capsys):
    first = tmp_path / "run1"
    second = tmp_path / "run2"
    assert main(eval_args(cli_env, first)) == EXIT_OK
    assert main(eval_args(cli_env, second)) == EXIT_OK
    capsys.readouterr()
    for name in ("results.csv", "results_summary.txt", "results.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_eval_scheme_filter(cli_env, tmp_path, capsys):
    out_dir = tmp_path / "only-full"
    assert main(eval_args(cli_env, out_dir, "--scheme", "Full")) == EXIT_OK
    summary = (out_dir / "results_summary.txt").read_text(encoding="utf-8")
    assert "Full," in summary
    assert "Standard," not in summary
    capsys.readouterr()


def test_eval_rejects_unknown_schemes(cli_env, tmp_path):
    with pytest.raises(SystemExit):
        main(eval_args(cli_env, tmp_path / "x", "--scheme", "Imaginary"))


def test_eval_attempt_budget_override(cli_env, tmp_path, capsys):
    out_dir = tmp_path / "short"
    assert main(eval_args(cli_env, out_dir, "--n-max", "1")) == EXIT_OK
    assert "Full,2,2,2,100.00" in capsys.readouterr().out


def test_eval_parallel_jobs_match_serial_output(cli_env, tmp_path, capsys):
    serial = tmp_path / "serial"
    parallel = tmp_path / "parallel"
    assert main(eval_args(cli_env, serial)) == EXIT_OK
    assert main(eval_args(cli_env, parallel, "--jobs", "2")) == EXIT_OK
    capsys.readouterr()
    assert (serial / "results.csv").read_bytes() == (parallel / "results.csv").read_bytes()


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


@pytest.fixture()
def results_dir(cli_env, tmp_path, capsys):
    out_dir = tmp_path / "reports"
    assert main(eval_args(cli_env, out_dir)) == EXIT_OK
    capsys.readouterr()
    return out_dir


def test_report_rerenders_the_summary(results_dir, capsys):
    code = main(["report", "--results", str(results_dir / "results.json")])
    assert code == EXIT_OK
    printed = capsys.readouterr().out.strip()
    stored = (results_dir / "results_summary.txt").read_text(encoding="utf-8").strip()
    assert printed == stored


def test_report_rerenders_the_csv(results_dir, capsys):
    code = main(
        ["report", "--results", str(results_dir / "results.json"), "--format", "csv"]
    )
    assert code == EXIT_OK
    printed = capsys.readouterr().out.strip()
    stored = (results_dir / "results.csv").read_text(encoding="utf-8").strip()
    assert printed == stored


# ---------------------------------------------------------------------------
# Error mapping
# ---------------------------------------------------------------------------


def test_missing_input_file_maps_to_usage_error(tmp_path, capsys):
    code = main(
        [
            "eval",
            "--tasks",
            str(tmp_path / "missing.txt"),
            "--replay-file",
            "unused",
            "--out",
            str(tmp_path / "out"),
        ]
    )
    assert code == EXIT_USAGE
    assert "error:" in capsys.readouterr().err


def test_broken_deck_maps_to_usage_error(cli_env, tmp_path, capsys):
    bad_deck = tmp_path / "bad.txt"
    bad_deck.write_text("=== TASK x ===\nKIND: nonsense\nREQUEST: r\nEXPECTED:\nf(1)\n")
    code = main(
        [
            "eval",
            "--tasks",
            str(bad_deck),
            "--schemes",
            cli_env["sheet"],
            "--replay-file",
            cli_env["replay"],
            "--out",
            str(tmp_path / "out"),
        ]
    )
    assert code == EXIT_USAGE
    assert "kind must be one of" in capsys.readouterr().err


def test_unreadable_replay_file_maps_to_provider_failure(cli_env, tmp_path, capsys):
    code = main(
        [
            "ask",
            "Generate data for case9 and train OLS.",
            "--replay-file",
            str(tmp_path / "nope.txt"),
        ]
    )
    assert code == EXIT_FAILURE
    assert "provider error" in capsys.readouterr().err
