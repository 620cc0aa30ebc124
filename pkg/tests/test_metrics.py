"""Tests for run counters and the MetricsCollector."""

import os
from tempfile import TemporaryDirectory

import pytest

import gem_trust.metrics as metrics_module
from gem_trust.errors import InvariantViolation
from gem_trust.metrics import MessageCounts, MetricsCollector, RunMetrics, get_metrics, init_metrics

ALPHA = RunMetrics(princ=4, tab=4, clauses=6, req=5, loops=1, resp=9, resp_with_answers=6, ans=9)


@pytest.fixture
def metrics_dir():
    """Directory holding the TinyFlux file of one test."""
    with TemporaryDirectory() as tmpdir:
        yield tmpdir


@pytest.fixture
def collector(metrics_dir):
    """Enabled collector writing to its own CSV file."""
    db_path = os.path.join(metrics_dir, "runs.csv")
    c = MetricsCollector(db_path=db_path, enabled=True)
    yield c
    c.close()


@pytest.fixture
def reset_singleton():
    original = metrics_module._collector
    yield
    metrics_module._collector = original


# ---------------------------------------------------------------------------
# Counters
# ---------------------------------------------------------------------------


class TestRunMetrics:
    def test_consistent_counters_pass(self):
        ALPHA.check()

    def test_requests_must_match_tables_and_loops(self):
        with pytest.raises(InvariantViolation):
            RunMetrics(tab=4, req=6, loops=1, resp=9).check()

    def test_reused_tables_count_as_requests(self):
        RunMetrics(tab=4, req=6, loops=1, reused=1, resp=9).check()

    def test_every_request_gets_a_response(self):
        with pytest.raises(InvariantViolation):
            RunMetrics(tab=4, req=5, loops=1, resp=4).check()

    def test_floundered_runs_may_leave_requests_open(self):
        RunMetrics(tab=3, req=5, loops=1, resp=2).check(floundered=True)

    def test_answers_cover_non_empty_responses(self):
        with pytest.raises(InvariantViolation):
            RunMetrics(tab=1, req=1, resp=1, resp_with_answers=1, ans=0).check()

    def test_message_total(self):
        assert MessageCounts(req=5, resp=9, notices=2).total == 16

    def test_field_names(self):
        assert RunMetrics.field_names()[:3] == ["princ", "tab", "clauses"]
        assert ALPHA.as_dict()["resp_with_answers"] == 6


# ---------------------------------------------------------------------------
# Disabled mode: no DB opened
# ---------------------------------------------------------------------------


class TestDisabledMode:
    def test_nothing_is_opened(self):
        c = MetricsCollector(db_path="/nonexistent/path/metrics.csv", enabled=False)
        assert c._db is None
        assert not c.enabled

    def test_record_and_close_do_nothing(self):
        c = MetricsCollector(db_path="", enabled=False)
        c.record_run("1.0", ALPHA, "success")
        assert c.runs() == []
        c.close()


# ---------------------------------------------------------------------------
# Insert / query
# ---------------------------------------------------------------------------


class TestInsert:
    def test_record_run(self, collector):
        collector.record_run("1.0", ALPHA, "success", scheduler="fifo", transport="sim")
        results = collector._db.all()
        assert len(results) == 1
        pt = results[0]
        assert pt.measurement == "gem_run"
        assert pt.tags["scenario"] == "1.0"
        assert pt.tags["outcome"] == "success"
        assert pt.tags["transport"] == "sim"
        assert pt.fields["req"] == 5.0
        assert pt.fields["resp_with_answers"] == 6.0

    def test_runs_filter_by_scenario(self, collector):
        collector.record_run("1.0", ALPHA, "success")
        collector.record_run("2.0", ALPHA, "success")
        collector.record_run("1.0", ALPHA, "floundered")
        assert len(collector.runs()) == 3
        assert len(collector.runs("1.0")) == 2


# ---------------------------------------------------------------------------
# Module-level singleton
# ---------------------------------------------------------------------------


class TestSingleton:
    def test_init_metrics_returns_collector(self, metrics_dir, reset_singleton):
        db_path = os.path.join(metrics_dir, "singleton.csv")
        c = init_metrics(db_path=db_path, enabled=True)
        assert isinstance(c, MetricsCollector)
        assert get_metrics() is c
        c.close()

    def test_get_metrics_before_init_returns_disabled(self, reset_singleton):
        metrics_module._collector = None
        assert not get_metrics().enabled


# ---------------------------------------------------------------------------
# Close
# ---------------------------------------------------------------------------


class TestClose:
    def test_second_close_is_harmless(self, collector):
        collector.close()
        collector.close()
        assert collector._db is None

    def test_runs_after_close_are_dropped(self, collector):
        collector.close()
        collector.record_run("1.0", ALPHA, "success")
        assert collector.runs() == []
