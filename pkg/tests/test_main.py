"""Tests for the gem-trust command line."""

import json
from pathlib import Path
from tempfile import TemporaryDirectory

import pytest

from gem_trust.harness import parse_report_csv
from gem_trust.main import EXIT_ERROR, EXIT_FLOUNDERED, EXIT_OK, build_parser, main
from gem_trust.scenario import bundled, load_scenario


@pytest.fixture
def workdir():
    with TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


class TestRun:
    def test_bundled_scenario_by_name(self, capsys):
        assert main(["run", "appendix_b"]) == EXIT_OK
        out = capsys.readouterr().out.splitlines()
        assert out == ["memberOfAlpha(c1,alice)", "memberOfAlpha(c1,bob)"]

    def test_scenario_by_path(self, capsys):
        assert main(["run", str(bundled("section_6_negation"))]) == EXIT_OK
        assert "memberOfAlpha(c1,eric)" in capsys.readouterr().out

    def test_floundered_exit_code(self, capsys):
        assert main(["run", "section_6_negation_loop"]) == EXIT_FLOUNDERED
        assert capsys.readouterr().out.startswith("floundered:")

    def test_query_override(self, capsys):
        assert main(["run", "appendix_b", "--query", "memberOfAlpha(c3,X)"]) == EXIT_OK
        assert capsys.readouterr().out.splitlines() == ["memberOfAlpha(c3,bob)"]

    def test_bad_query(self):
        assert main(["run", "two_loops", "--query", "memberOfAlpha("]) == EXIT_ERROR

    def test_metrics_csv(self, capsys):
        assert main(["run", "appendix_b", "--metrics", "csv"]) == EXIT_OK
        out = capsys.readouterr().out
        csv_text = out[out.index("ID,"):]
        row = parse_report_csv(csv_text)[0]
        assert (row["Req"], row["Resp"], row["Resp&Ans"], row["Ans"]) == ("5", "9", "6", "9")

    def test_verify(self, capsys):
        assert main(["run", "two_loops", "--verify"]) == EXIT_OK
        assert "answer sets are equal" in capsys.readouterr().out

    def test_event_log(self, workdir):
        log = workdir / "calls.jsonl"
        assert main(["run", "appendix_b", "--log", str(log)]) == EXIT_OK
        lines = log.read_text().splitlines()
        assert len(lines) == 53
        assert json.loads(lines[-1])["procedure"] == "Process Response"

    def test_random_scheduler(self, capsys):
        assert main(["run", "two_loops", "--scheduler", "random", "--seed", "3"]) == EXIT_OK
        assert len(capsys.readouterr().out.splitlines()) == 2

    def test_missing_scenario(self):
        assert main(["run", "/nonexistent/file.gem"]) == EXIT_ERROR

    def test_usage_error(self):
        assert main(["run"]) == EXIT_ERROR
        assert main(["bogus"]) == EXIT_ERROR


class TestGenerate:
    def test_generate_writes_loadable_scenario(self, workdir):
        out = workdir / "v.gem"
        assert main(["generate", "--family", "2", "--index", "1", "--out", str(out)]) == EXIT_OK
        scenario = load_scenario(out)
        assert scenario.clause_count == 10

    def test_generate_to_stdout(self, capsys):
        assert main(["generate", "--family", "1", "--index", "0"]) == EXIT_OK
        assert "[principal mc]" in capsys.readouterr().out

    def test_unscaled_variant(self):
        args = ["generate", "--family", "2", "--index", "2", "--scale", "10"]
        assert main(args) == EXIT_ERROR

    def test_random(self, workdir):
        out = workdir / "r.gem"
        assert main(["random", "--seed", "5", "--out", str(out)]) == EXIT_OK
        assert load_scenario(out).requester == "h"


class TestTable:
    def test_family_table(self, capsys):
        assert main(["table", "--family", "1", "--format", "csv"]) == EXIT_OK
        rows = parse_report_csv(capsys.readouterr().out)
        assert [r["ID"] for r in rows] == [f"1.{i}" for i in range(6)]
        assert [int(r["Req"]) for r in rows] == [5, 9, 13, 17, 21, 25]

    def test_parser_defaults(self):
        args = build_parser().parse_args(["table"])
        assert args.scale == 1
        assert args.jobs == 1
        assert args.id_mode == "traceable"
        assert not args.verbose
        assert build_parser().parse_args(["-v", "table"]).verbose
