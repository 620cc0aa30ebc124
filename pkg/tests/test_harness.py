"""Tests for complete runs: counters, negation, schedulers and the oracle suite."""

import json
from pathlib import Path
from tempfile import TemporaryDirectory

import pytest

from gem_trust.config import Config
from gem_trust.errors import ConfigurationError
from gem_trust.generators import all_variants, generate_variant, random_scenario
from gem_trust.harness import (
    CSV_COLUMNS,
    Outcome,
    emit_report,
    event_log_lines,
    parse_report_csv,
    resolve_settings,
    run,
    run_batch,
    verify,
    write_event_log,
)
from gem_trust.identifiers import SegmentLength, Traceability
from gem_trust.metrics import RunMetrics
from gem_trust.scenario import bundled, load_scenario, parse_scenario
from gem_trust.transport import Scheduler

ALPHA = ["memberOfAlpha(c1,alice)", "memberOfAlpha(c1,bob)"]


def _answers(result) -> list[str]:
    return sorted(str(a) for a in result.answers)


def _assert_quiescent(result) -> None:
    for engine in result.engines.values():
        for table in engine.all_tables():
            assert table.disposed
            assert table.hr is None and not table.lr and not table.active_goals


# ---------------------------------------------------------------------------
# Bundled scenarios
# ---------------------------------------------------------------------------


class TestBundledScenarios:
    def test_project_alpha_delivers_fourteen_messages(self):
        result = run(load_scenario(bundled("appendix_b")))
        assert result.metrics.req + result.metrics.resp == 14
        assert _answers(result) == ALPHA

    def test_two_loops(self):
        result = run(load_scenario(bundled("two_loops")))
        assert result.outcome is Outcome.SUCCESS
        assert _answers(result) == ALPHA
        _assert_quiescent(result)

    def test_negation(self):
        result = run(load_scenario(bundled("section_6_negation")))
        assert _answers(result) == ["memberOfAlpha(c1,david)", "memberOfAlpha(c1,eric)"]
        _assert_quiescent(result)

    def test_loop_through_negation_flounders(self):
        result = run(load_scenario(bundled("section_6_negation_loop")))
        assert result.floundered
        assert result.answers == []
        assert "negation" in result.reason
        assert result.engines["c1"].floundered
        assert result.engines["c2"].floundered
        assert result.engines["c3"].stats.tables == 0

    @pytest.mark.parametrize("name", ["appendix_b", "two_loops", "section_6_negation"])
    def test_matches_oracle(self, name):
        scenario = load_scenario(bundled(name))
        assert verify(scenario, run(scenario)).equal

    def test_undefined_goal(self):
        scenario = parse_scenario(
            "[principal h]\n[principal c1]\n[request]\nrequester = h, goal = p(c1,X)\n"
        )
        result = run(scenario)
        assert result.answers == []
        assert (result.metrics.req, result.metrics.resp) == (1, 1)

    @pytest.mark.parametrize("name", ["appendix_b", "two_loops", "section_6_negation"])
    @pytest.mark.parametrize("seed", range(10))
    def test_random_schedules_agree(self, name, seed):
        scenario = load_scenario(bundled(name))
        fifo = run(scenario)
        shuffled = run(scenario, scheduler="random", seed=seed)
        assert _answers(shuffled) == _answers(fifo)
        m, expected = shuffled.metrics, fifo.metrics
        assert (m.tab, m.req, m.loops) == (expected.tab, expected.req, expected.loops)
        m.check()

    @pytest.mark.parametrize("mode", ["untraceable", "untraceable/fixed", "traceable/fixed"])
    def test_identifier_mode_does_not_change_counts(self, mode):
        scenario = load_scenario(bundled("appendix_b"))
        result = run(scenario, id_mode=mode)
        assert _answers(result) == ALPHA
        assert result.metrics == run(scenario, id_mode="traceable").metrics

    @pytest.mark.parametrize("mode", ["untraceable/fixed", "traceable/fixed"])
    @pytest.mark.parametrize("name", ["appendix_b", "two_loops"])
    def test_fixed_length_segments(self, mode, name, monkeypatch):
        monkeypatch.setattr(Config, "ID_BYTES", 8)
        result = run(load_scenario(bundled(name)), id_mode=mode)
        ids = [c.request_id for c in result.events if c.request_id is not None]
        assert ids
        assert {len(s) for i in ids for s in i.segments} == {8}


# ---------------------------------------------------------------------------
# Benchmark families
# ---------------------------------------------------------------------------


# (princ, tab, clauses, req, loops, resp, resp_with_answers, ans) per variant
FAMILY_1_COUNTS = {
    0: (4, 4, 6, 5, 1, 9, 6, 9),
    1: (7, 7, 12, 9, 2, 17, 11, 26),
    2: (10, 10, 18, 13, 3, 25, 17, 49),
    3: (13, 13, 24, 17, 4, 33, 22, 78),
    4: (16, 16, 30, 21, 5, 41, 27, 113),
    5: (19, 19, 36, 25, 6, 49, 33, 154),
}
# (princ, tab, clauses, req, loops, ans); message counts are asserted separately
STRUCTURE_COUNTS = {
    (2, 0): (4, 6, 8, 10, 4, 20),
    (2, 1): (5, 10, 10, 16, 6, 32),
    (2, 2): (6, 15, 12, 23, 8, 46),
    (2, 3): (7, 21, 14, 31, 10, 62),
    (2, 4): (8, 28, 16, 40, 12, 80),
    (2, 5): (9, 36, 18, 50, 14, 100),
    (3, 0): (4, 6, 8, 10, 4, 20),
    (3, 1): (7, 16, 16, 28, 12, 112),
    (3, 2): (10, 36, 24, 64, 28, 384),
    (3, 3): (13, 76, 32, 136, 60, 1088),
    (3, 4): (16, 156, 40, 280, 124, 2800),
    (3, 5): (19, 316, 48, 568, 252, 6816),
}


def _counts(m: RunMetrics) -> tuple[int, ...]:
    return (m.princ, m.tab, m.clauses, m.req, m.loops, m.resp, m.resp_with_answers, m.ans)


class TestFamilyCounts:
    @pytest.mark.parametrize("k", sorted(FAMILY_1_COUNTS))
    def test_family_1(self, k):
        assert _counts(run(generate_variant(1, k)).metrics) == FAMILY_1_COUNTS[k]

    def test_variant_1_0_is_appendix_b(self):
        generated = run(generate_variant(1, 0)).metrics
        bundled_run = run(load_scenario(bundled("appendix_b"))).metrics
        assert generated == bundled_run

    @pytest.mark.parametrize("family,index", sorted(STRUCTURE_COUNTS))
    def test_families_2_and_3(self, family, index):
        m = run(generate_variant(family, index)).metrics
        assert (m.princ, m.tab, m.clauses, m.req, m.loops, m.ans) == STRUCTURE_COUNTS[
            (family, index)
        ]
        assert m.resp >= m.req

    @pytest.mark.parametrize("family", [2, 3])
    def test_index_0_messages(self, family):
        m = run(generate_variant(family, 0)).metrics
        assert (m.req, m.resp, m.resp_with_answers) == (10, 31, 16)

    @pytest.mark.parametrize("family,index", all_variants())
    def test_every_variant_matches_oracle(self, family, index):
        scenario = generate_variant(family, index)
        result = run(scenario)
        assert result.outcome is Outcome.SUCCESS
        assert verify(scenario, result).equal
        _assert_quiescent(result)


# (scale, clauses, ans) per scaled variant; every other counter equals the unscaled run
SCALED_COUNTS = {
    (1, 0): ((10, 24, 72), (50, 104, 352), (100, 204, 702)),
    (1, 5): ((10, 144, 1432), (50, 624, 7112), (100, 1224, 14212)),
    (2, 0): ((10, 26, 200), (50, 106, 1000), (100, 206, 2000)),
    (2, 5): ((10, 36, 1000), (50, 116, 5000), (100, 216, 10000)),
    (3, 2): ((10, 78, 3840), (50, 318, 19200), (100, 618, 38400)),
}


class TestFactScaling:
    @pytest.mark.parametrize("family,index", sorted(SCALED_COUNTS))
    def test_scaled_clauses(self, family, index):
        for scale, clauses, _ in SCALED_COUNTS[(family, index)]:
            assert generate_variant(family, index, scale=scale).clause_count == clauses

    @pytest.mark.parametrize(
        "family,index,scale",
        [(f, i, 10) for f, i in sorted(SCALED_COUNTS)] + [(1, 0, 100), (2, 0, 100)],
    )
    def test_scaled_runs(self, family, index, scale):
        base = run(generate_variant(family, index)).metrics
        m = run(generate_variant(family, index, scale=scale)).metrics
        ans = {s: a for s, _, a in SCALED_COUNTS[(family, index)]}[scale]
        assert m.ans == ans
        assert (m.princ, m.tab, m.req, m.loops) == (base.princ, base.tab, base.req, base.loops)
        assert (m.resp, m.resp_with_answers) == (base.resp, base.resp_with_answers)

    def test_scaled_1_0_messages(self):
        m = run(generate_variant(1, 0, scale=100)).metrics
        assert (m.resp, m.resp_with_answers) == (9, 6)

    def test_scaled_2_0_messages(self):
        m = run(generate_variant(2, 0, scale=100)).metrics
        assert (m.resp, m.resp_with_answers) == (31, 16)


# ---------------------------------------------------------------------------
# Random positive policies against the bottom-up oracle
# ---------------------------------------------------------------------------


class TestRandomPolicies:
    @pytest.mark.parametrize("seed", range(200))
    def test_fifo_matches_oracle(self, seed):
        scenario = random_scenario(seed)
        result = run(scenario)
        assert result.outcome is Outcome.SUCCESS
        report = verify(scenario, result)
        assert report.equal, f"seed {seed}: {report}"
        _assert_quiescent(result)

    @pytest.mark.parametrize("seed", range(200))
    def test_random_schedules_match_oracle(self, seed):
        scenario = random_scenario(seed)
        fifo = run(scenario)
        for schedule_seed in (1, 2, 3):
            result = run(scenario, scheduler="random", seed=schedule_seed)
            assert result.outcome is Outcome.SUCCESS
            assert _answers(result) == _answers(fifo), f"seed {seed}/{schedule_seed}"
            assert verify(scenario, result).equal
            result.metrics.check()


# ---------------------------------------------------------------------------
# Settings, reports and event logs
# ---------------------------------------------------------------------------


class TestSettings:
    def test_arguments_override_scenario_config(self):
        scenario = load_scenario(bundled("appendix_b"))
        settings = resolve_settings(scenario, scheduler="random", seed=7, id_mode="untraceable")
        assert settings.scheduler is Scheduler.RANDOM
        assert settings.seed == 7
        assert settings.id_mode.traceability is Traceability.UNTRACEABLE

    def test_scenario_config_used_when_no_argument(self):
        settings = resolve_settings(load_scenario(bundled("appendix_b")))
        assert settings.id_mode.traceability is Traceability.TRACEABLE
        assert settings.id_mode.length is SegmentLength.VARIABLE
        assert settings.scheduler is Scheduler.FIFO

    def test_invalid_scheduler(self):
        with pytest.raises(ConfigurationError):
            resolve_settings(load_scenario(bundled("appendix_b")), scheduler="lifo")


class TestReports:
    def test_table_has_all_columns(self):
        metrics = RunMetrics(princ=4, tab=4, clauses=6, req=5, loops=1, resp=9,
                             resp_with_answers=6, ans=9)
        text = emit_report([("1.0", metrics)])
        header, row = text.splitlines()
        assert header.split() == ["ID", "Princ", "Tab", "Clauses", "Req", "Loops",
                                  "Resp(Resp&Ans)", "Ans"]
        assert "9 (6)" in row

    def test_csv_round_trip(self):
        metrics = run(generate_variant(1, 0)).metrics
        rows = parse_report_csv(emit_report([("1.0", metrics), ("=cmd", metrics)], "csv"))
        assert [r["ID"] for r in rows] == ["1.0", "=cmd"]
        assert list(rows[0]) == list(CSV_COLUMNS)
        assert int(rows[0]["Resp&Ans"]) == metrics.resp_with_answers

    def test_csv_guards_formula_cells(self):
        text = emit_report([("=cmd", RunMetrics())], "csv")
        assert "'=cmd" in text

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            emit_report([], "xml")

    def test_batch_rows_in_order(self):
        rows = run_batch([(1, 0), (1, 1)])
        assert [name for name, _ in rows] == ["1.0", "1.1"]
        assert rows[1][1].req == 9


class TestEventLog:
    def test_lines_are_numbered_json(self):
        result = run(load_scenario(bundled("appendix_b")))
        lines = event_log_lines(result.events)
        first = json.loads(lines[0])
        assert first["seq"] == 1
        assert first["principal"] == "c1"
        assert first["procedure"] == "Process Request"
        assert first["id"] == ["h_1"]

    def test_write_event_log(self):
        result = run(load_scenario(bundled("appendix_b")))
        with TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "calls.jsonl"
            write_event_log(path, result.events)
            assert len(path.read_text().splitlines()) == 53
