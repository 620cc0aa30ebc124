"""Drives complete evaluations: builds engines, runs a transport, checks the outcome."""

import asyncio
import csv
import io
import json
import logging
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import StrEnum
from pathlib import Path
from typing import Any

from . import events
from .config import Config
from .engine import (
    PrincipalEngine,
    Procedure,
    ProcedureCall,
    QueryResult,
    Response,
    ResponseStatus,
)
from .errors import ConfigurationError, InvariantViolation
from .generators import generate_variant, variant_id
from .identifiers import (
    IdGenMode,
    IdentifierError,
    RequestId,
    SideOrder,
    check_side_order,
    is_lower,
)
from .metrics import RunMetrics, get_metrics
from .oracle import EquivalenceReport, bottom_up_answers, check_equivalence
from .scenario import Scenario
from .terms import Atom, variant_key
from .transport import Envelope, Scheduler, SimBus, TcpNetwork, run_until_quiescent

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ("ID", "Princ", "Tab", "Clauses", "Req", "Loops", "Resp(Resp&Ans)", "Ans")
CSV_COLUMNS = ("ID", "Princ", "Tab", "Clauses", "Req", "Loops", "Resp", "Resp&Ans", "Ans")


class Outcome(StrEnum):
    SUCCESS = "success"
    FLOUNDERED = "floundered"


@dataclass
class RunResult:
    """Answers, counters and event log of one evaluation."""

    scenario: str
    answers: list[Atom]
    metrics: RunMetrics
    outcome: Outcome
    events: list[ProcedureCall] = field(default_factory=list)
    reason: str | None = None
    engines: dict[str, PrincipalEngine] = field(default_factory=dict, repr=False)

    @property
    def floundered(self) -> bool:
        return self.outcome is Outcome.FLOUNDERED


@dataclass(frozen=True, slots=True)
class RunSettings:
    scheduler: Scheduler
    seed: int
    id_mode: IdGenMode
    step_budget: int


def resolve_settings(
    scenario: Scenario,
    scheduler: Scheduler | str | None = None,
    seed: int | None = None,
    id_mode: IdGenMode | str | None = None,
    step_budget: int | None = None,
) -> RunSettings:
    """Merge explicit arguments, the scenario's [config] section and Config, in that order."""
    config = scenario.config
    mode = id_mode if id_mode is not None else config.id_mode
    try:
        if isinstance(mode, str):
            mode = IdGenMode.parse(mode, size=Config.ID_BYTES)
        chosen = Scheduler(scheduler or config.scheduler or Config.SCHEDULER)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    return RunSettings(
        scheduler=chosen,
        seed=next(s for s in (seed, config.seed, Config.SEED) if s is not None),
        id_mode=mode or Config.id_mode(),
        step_budget=step_budget or config.step_budget or Config.STEP_BUDGET,
    )


def build_engines(scenario: Scenario, settings: RunSettings) -> dict[str, PrincipalEngine]:
    return {
        spec.name: PrincipalEngine(spec.policy, settings.id_mode, seed=settings.seed + i)
        for i, spec in enumerate(scenario.principals)
    }


class _Recorder:
    """Event listener collecting procedure calls and checking per-recipient answer uniqueness."""

    def __init__(self) -> None:
        self.calls: list[ProcedureCall] = []
        self.violations: list[str] = []
        self._sent: set[tuple[Any, Any]] = set()

    def __call__(self, event_type: str, payload: Any) -> None:
        if event_type == events.PROCEDURE_CALL:
            self.calls.append(payload)
        elif event_type == events.MESSAGE_SENT:
            self._check_sent(payload)

    def _check_sent(self, envelope: Envelope) -> None:
        message = envelope.payload
        if not isinstance(message, Response):
            return
        for answer in message.answers:
            key = (message.id, variant_key(answer))
            if key in self._sent:
                self.violations.append(f"answer {answer} sent twice to request {message.id}")
            self._sent.add(key)


def check_loop_propagation(result: RunResult) -> None:
    """Raise InvariantViolation unless every detected loop reached its coordinator.

    Each request between the coordinator's higher request and the lower
    request must have been answered at least once with the loop id among the
    response's loops.
    """
    tagged: dict[RequestId, set[RequestId]] = {}
    for call in result.events:
        if call.procedure is Procedure.SEND_RESPONSE and call.request_id is not None:
            tagged.setdefault(call.request_id, set()).update(call.loops)
    for engine in result.engines.values():
        for lower, loop_id in engine.stats.loop_detections:
            for size in range(len(loop_id) + 1, len(lower)):
                between = RequestId(lower.segments[:size])
                if loop_id not in tagged.get(between, ()):
                    raise InvariantViolation(
                        f"loop {loop_id} detected by {lower} never reached request {between}"
                    )


def check_invariants(result: RunResult) -> None:
    """Raise InvariantViolation if a finished run left inconsistent state behind."""
    result.metrics.check(result.floundered)
    for engine in result.engines.values():
        for table in engine.all_tables():
            for node in table.children:
                if not is_lower(node.id, table.root.id):
                    raise InvariantViolation(
                        f"{engine.principal}: node {node.id} is not lower than {table.root.id}"
                    )
            if table.floundered:
                continue
            if not result.floundered and (
                not table.disposed or table.hr is not None or table.lr or table.active_goals
            ):
                raise InvariantViolation(
                    f"{engine.principal}: table {table.goal} is not disposed at quiescence"
                )
    if not result.floundered:
        check_loop_propagation(result)
    requests = [c.request_id for c in result.events if c.procedure is Procedure.PROCESS_REQUEST]
    try:
        check_side_order(requests, SideOrder(e.ids for e in result.engines.values()))
    except IdentifierError as exc:
        raise InvariantViolation(str(exc)) from exc


def _finish(
    scenario: Scenario,
    engines: dict[str, PrincipalEngine],
    query: QueryResult,
    metrics: RunMetrics,
    recorder: _Recorder,
) -> RunResult:
    if recorder.violations:
        raise InvariantViolation("; ".join(recorder.violations))
    floundered = query.status is ResponseStatus.FLOUNDERED or any(
        e.floundered for e in engines.values()
    )
    if not floundered and not query.complete:
        raise InvariantViolation(f"run of {scenario.name} went quiescent without a final response")
    result = RunResult(
        scenario=scenario.name,
        answers=[] if floundered else list(query.answers),
        metrics=metrics,
        outcome=Outcome.FLOUNDERED if floundered else Outcome.SUCCESS,
        events=recorder.calls,
        reason=query.reason,
        engines=engines,
    )
    check_invariants(result)
    logger.info(
        "Run of %s finished (%s): %d answers, req=%d resp=%d",
        scenario.name, result.outcome, len(result.answers), metrics.req, metrics.resp,
    )
    return result


def run(
    scenario: Scenario,
    transport: str = "sim",
    scheduler: Scheduler | str | None = None,
    seed: int | None = None,
    id_mode: IdGenMode | str | None = None,
    step_budget: int | None = None,
    record: bool = True,
) -> RunResult:
    """Evaluate the scenario's initial request until the network is quiescent.

    A floundered evaluation is reported through ``RunResult.outcome``.

    Raises:
        StepBudgetExceeded: If the run does not reach quiescence within the budget.
        InvariantViolation: If a protocol invariant fails.
    """
    if transport == "tcp":
        return asyncio.run(
            run_tcp(scenario, seed=seed, id_mode=id_mode, step_budget=step_budget, record=record)
        )
    settings = resolve_settings(scenario, scheduler, seed, id_mode, step_budget)
    engines = build_engines(scenario, settings)
    bus = SimBus(settings.scheduler, settings.seed, settings.step_budget)
    bus.register_engines(engines.values())
    recorder = _Recorder()
    requester = engines[scenario.requester]
    with events.listening(recorder):
        outbound = requester.query(scenario.goal)
        bus.dispatch(requester.principal, outbound)
        metrics = run_until_quiescent(bus, engines.values())
    result = _finish(scenario, engines, requester.queries[outbound.message.id], metrics, recorder)
    if record:
        get_metrics().record_run(
            scenario.name, metrics, str(result.outcome), str(settings.scheduler), "sim"
        )
    return result


async def run_tcp(
    scenario: Scenario,
    seed: int | None = None,
    id_mode: IdGenMode | str | None = None,
    step_budget: int | None = None,
    record: bool = True,
) -> RunResult:
    """Like :func:`run`, with every principal behind its own TCP listener."""
    settings = resolve_settings(scenario, None, seed, id_mode, step_budget)
    engines = build_engines(scenario, settings)
    recorder = _Recorder()
    requester = engines[scenario.requester]
    with events.listening(recorder):
        async with TcpNetwork(
            engines.values(), scenario.addresses(), settings.step_budget
        ) as network:
            outbound = requester.query(scenario.goal)
            metrics = await network.run_until_quiescent(requester.principal, outbound)
    result = _finish(scenario, engines, requester.queries[outbound.message.id], metrics, recorder)
    if record:
        get_metrics().record_run(scenario.name, metrics, str(result.outcome), "fifo", "tcp")
    return result


def verify(scenario: Scenario, result: RunResult) -> EquivalenceReport:
    """Compare a successful run's answers with the bottom-up evaluation of the same goal."""
    oracle = bottom_up_answers(scenario.global_policy(), scenario.goal)
    report = check_equivalence(result.answers, oracle)
    if not report.equal:
        logger.warning("Run of %s disagrees with the bottom-up answers: %s", scenario.name, report)
    return report


# ---------------------------------------------------------------------------
# Event log and reports
# ---------------------------------------------------------------------------


def event_log_lines(calls: Iterable[ProcedureCall]) -> list[str]:
    """One JSON object per procedure call, numbered from 1."""
    return [json.dumps({"seq": i, **call.to_dict()}) for i, call in enumerate(calls, start=1)]


def write_event_log(path: str | Path, calls: Iterable[ProcedureCall]) -> None:
    Path(path).write_text("".join(line + "\n" for line in event_log_lines(calls)), encoding="utf-8")


def _spreadsheet_safe(value: str) -> str:
    return "'" + value if value[:1] in ("=", "+", "-", "@") else value


def emit_report(rows: Sequence[tuple[str, RunMetrics]], fmt: str = "table") -> str:
    """Render metrics rows as an aligned table or as CSV.

    Columns are always ID, Princ, Tab, Clauses, Req, Loops, Resp(Resp&Ans), Ans;
    CSV splits the response column in two.
    """
    if fmt == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for name, m in rows:
            writer.writerow([
                _spreadsheet_safe(name), m.princ, m.tab, m.clauses, m.req, m.loops,
                m.resp, m.resp_with_answers, m.ans,
            ])
        return buffer.getvalue()
    if fmt != "table":
        raise ValueError(f"unknown report format {fmt!r}")
    body = [
        [name, str(m.princ), str(m.tab), str(m.clauses), str(m.req), str(m.loops),
         f"{m.resp} ({m.resp_with_answers})", str(m.ans)]
        for name, m in rows
    ]
    table = [list(REPORT_COLUMNS), *body]
    widths = [max(len(row[i]) for row in table) for i in range(len(REPORT_COLUMNS))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in table]
    return "\n".join(lines) + "\n"


def parse_report_csv(text: str) -> list[dict[str, str]]:
    """Read back a CSV report produced by :func:`emit_report`."""
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        if row["ID"].startswith("'"):
            row["ID"] = row["ID"][1:]
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Batch runs
# ---------------------------------------------------------------------------


def _run_variant(args: tuple[int, int, int, str]) -> tuple[str, RunMetrics, str]:
    family, index, scale, id_mode = args
    scenario = generate_variant(family, index, scale)
    result = run(scenario, id_mode=id_mode, record=False)
    return variant_id(family, index, scale), result.metrics, str(result.outcome)


def run_batch(
    variants: Sequence[tuple[int, int]],
    scale: int = 1,
    jobs: int = 1,
    id_mode: str = "traceable",
) -> list[tuple[str, RunMetrics]]:
    """Run generated variants, in parallel worker processes when ``jobs > 1``."""
    work = [(family, index, scale, id_mode) for family, index in variants]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_variant, work))
    else:
        results = [_run_variant(item) for item in work]
    collector = get_metrics()
    for name, metrics, outcome in results:
        collector.record_run(name, metrics, outcome)
    return [(name, metrics) for name, metrics, _ in results]
