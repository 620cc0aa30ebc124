"""Run counters and their optional local persistence backed by TinyFlux.

Counters are stored in a local CSV file, nothing is sent externally.
Persistence is opt-in via the GEM_METRICS_ENABLED environment variable.
"""

import logging
from collections.abc import Iterable
from dataclasses import asdict, dataclass, fields
from datetime import UTC, datetime
from typing import TYPE_CHECKING

from .errors import InvariantViolation

if TYPE_CHECKING:
    from .engine import PrincipalEngine

logger = logging.getLogger(__name__)

# Module-level singleton, initialised by init_metrics()
_collector: "MetricsCollector | None" = None


@dataclass(slots=True)
class MessageCounts:
    """Messages put on the network during a run."""

    req: int = 0
    resp: int = 0
    resp_with_answers: int = 0
    ans: int = 0
    notices: int = 0

    @property
    def total(self) -> int:
        return self.req + self.resp + self.notices


@dataclass(frozen=True, slots=True)
class RunMetrics:
    """Counters of one evaluation.

    ``req`` includes the initial request and ``resp`` every response,
    including the one to the initial requester. ``reused`` counts requests
    answered from a completely evaluated table without creating a new one.
    """

    princ: int = 0
    tab: int = 0
    clauses: int = 0
    req: int = 0
    loops: int = 0
    resp: int = 0
    resp_with_answers: int = 0
    ans: int = 0
    reused: int = 0

    @classmethod
    def collect(
        cls, engines: Iterable["PrincipalEngine"], counts: MessageCounts
    ) -> "RunMetrics":
        engines = list(engines)
        return cls(
            princ=sum(1 for e in engines if e.stats.tables),
            tab=sum(e.stats.tables for e in engines),
            clauses=sum(len(e.stats.clauses_used) for e in engines),
            req=counts.req,
            loops=sum(e.stats.lower_requests for e in engines),
            resp=counts.resp,
            resp_with_answers=counts.resp_with_answers,
            ans=counts.ans,
            reused=sum(e.stats.reused for e in engines),
        )

    def check(self, floundered: bool = False) -> None:
        """Raise InvariantViolation if the counters are inconsistent."""
        problems = []
        if not floundered and self.req != self.tab + self.loops + self.reused:
            problems.append(
                f"req={self.req} but tab+loops+reused={self.tab + self.loops + self.reused}"
            )
        if not floundered and self.resp < self.req:
            problems.append(f"resp={self.resp} < req={self.req}")
        if self.resp_with_answers > self.resp:
            problems.append("more responses with answers than responses")
        if self.ans < self.resp_with_answers:
            problems.append("fewer answers than responses with answers")
        if problems:
            raise InvariantViolation("; ".join(problems))

    def as_dict(self) -> dict[str, int]:
        return asdict(self)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


class MetricsCollector:
    """Local store of run counters backed by TinyFlux.

    Storage failures are logged at DEBUG and never reach the run that
    produced the counters.
    """

    def __init__(self, db_path: str, enabled: bool = True) -> None:
        self.enabled = enabled
        self.db_path = db_path
        self._db = None
        if enabled:
            self._open()

    def _open(self) -> None:
        try:
            from tinyflux import TinyFlux

            self._db = TinyFlux(self.db_path)
            logger.info("Storing run counters in %s", self.db_path)
        except Exception as exc:
            logger.warning("Run counters will not be stored (%s): %s", self.db_path, exc)
            self._db = None

    def record_run(
        self,
        scenario: str,
        metrics: RunMetrics,
        outcome: str,
        scheduler: str = "fifo",
        transport: str = "sim",
    ) -> None:
        """Store the counters of one finished run as a ``gem_run`` point."""
        if not self.enabled or self._db is None:
            return
        try:
            from tinyflux import Point

            point = Point(
                time=datetime.now(UTC),
                measurement="gem_run",
                tags={
                    "scenario": scenario,
                    "outcome": outcome,
                    "scheduler": scheduler,
                    "transport": transport,
                },
                fields={name: float(value) for name, value in metrics.as_dict().items()},
            )
            self._db.insert(point)
        except Exception as exc:
            logger.debug("Could not store counters of %s: %s", scenario, exc)

    def runs(self, scenario: str | None = None) -> list:
        """Stored points, optionally for one scenario only."""
        if self._db is None:
            return []
        try:
            if scenario is None:
                return self._db.all()
            from tinyflux import TagQuery

            return self._db.search(TagQuery().scenario == scenario)
        except Exception as exc:
            logger.debug("Could not read stored runs: %s", exc)
            return []

    def close(self) -> None:
        if self._db is None:
            return
        db, self._db = self._db, None
        try:
            db.close()
        except Exception as exc:
            logger.debug("Could not close %s: %s", self.db_path, exc)


def init_metrics(db_path: str, enabled: bool = True) -> MetricsCollector:
    """Replace the process-wide collector used by the harness."""
    global _collector
    _collector = MetricsCollector(db_path=db_path, enabled=enabled)
    return _collector


def get_metrics() -> MetricsCollector:
    """The process-wide collector, or a disabled one before :func:`init_metrics`."""
    return _collector or MetricsCollector(db_path="", enabled=False)
