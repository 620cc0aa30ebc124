"""Message delivery between principal engines.

Two transports share the :class:`Envelope` type:

* :class:`SimBus`, a deterministic in-process network driven step by step,
  with strict FIFO (default) or seeded-random scheduling;
* :class:`TcpNetwork`, which puts every engine behind its own TCP listener
  and exchanges newline-delimited JSON frames.
"""

import asyncio
import json
import logging
import random
from collections import deque
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass
from enum import StrEnum
from typing import Annotated, Literal

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError

from . import events
from .config import Config
from .engine import FlounderNotice, Message, Outbound, PrincipalEngine, Request, Response
from .engine import ResponseStatus
from .errors import ConfigurationError, GemError
from .identifiers import RequestId
from .metrics import MessageCounts, RunMetrics
from .parser import parse_atom

logger = logging.getLogger(__name__)

ENCODING = "utf-8"


class ProtocolError(GemError):
    """Malformed or truncated wire frame."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset


class StepBudgetExceeded(GemError):
    """The run delivered more messages than its budget allows."""
    pass


@dataclass(frozen=True, slots=True)
class Envelope:
    sender: str
    to: str
    payload: Message
    seq: int


class Scheduler(StrEnum):
    FIFO = "fifo"
    RANDOM = "random"


def _count(counts: MessageCounts, message: Message) -> None:
    match message:
        case Request():
            counts.req += 1
        case Response():
            counts.resp += 1
            if message.answers:
                counts.resp_with_answers += 1
                counts.ans += len(message.answers)
        case FlounderNotice():
            counts.notices += 1


# ---------------------------------------------------------------------------
# Simulated network
# ---------------------------------------------------------------------------


class SimBus:
    """In-process network with exactly-once, per-pair in-order delivery.

    FIFO mode delivers in global emission order. Random mode picks a random
    non-empty channel (directed principal pair) and delivers its oldest
    envelope, so it is reproducible from the seed and keeps per-pair order.
    """

    def __init__(
        self,
        scheduler: Scheduler | str = Scheduler.FIFO,
        seed: int | None = None,
        step_budget: int | None = None,
    ) -> None:
        self.scheduler = Scheduler(scheduler)
        self.step_budget = step_budget or Config.STEP_BUDGET
        self.counts = MessageCounts()
        self.delivered = 0
        self._rng = random.Random(Config.SEED if seed is None else seed)
        self._handlers: dict[str, Callable[[Message], list[Outbound]]] = {}
        self._channels: dict[tuple[str, str], deque[Envelope]] = {}
        self._order: deque[tuple[str, str]] = deque()
        self._seq: dict[tuple[str, str], int] = {}

    def register(self, principal: str, handler: Callable[[Message], list[Outbound]]) -> None:
        self._handlers[principal] = handler

    def register_engines(self, engines: Iterable[PrincipalEngine]) -> None:
        for engine in engines:
            self.register(engine.principal, engine.handle)

    @property
    def pending(self) -> int:
        return sum(len(q) for q in self._channels.values())

    def dispatch(self, sender: str, outbound: Outbound) -> Envelope:
        """Enqueue one message for delivery.

        Raises:
            ConfigurationError: If the destination is not registered.
        """
        if outbound.to not in self._handlers:
            raise ConfigurationError(f"unknown destination principal {outbound.to!r}")
        pair = (sender, outbound.to)
        seq = self._seq.get(pair, 0) + 1
        self._seq[pair] = seq
        envelope = Envelope(sender, outbound.to, outbound.message, seq)
        self._channels.setdefault(pair, deque()).append(envelope)
        if self.scheduler is Scheduler.FIFO:
            self._order.append(pair)
        _count(self.counts, outbound.message)
        events.emit(events.MESSAGE_SENT, envelope)
        return envelope

    def _next(self) -> Envelope:
        if self.scheduler is Scheduler.FIFO:
            pair = self._order.popleft()
        else:
            pair = self._rng.choice([p for p, q in self._channels.items() if q])
        return self._channels[pair].popleft()

    def step(self) -> bool:
        """Deliver one envelope; False when nothing is pending."""
        if not self.pending:
            return False
        if self.delivered >= self.step_budget:
            raise StepBudgetExceeded(f"step budget of {self.step_budget} deliveries exhausted")
        envelope = self._next()
        self.delivered += 1
        logger.debug("deliver #%d %s -> %s: %s", self.delivered, envelope.sender,
                     envelope.to, envelope.payload)
        events.emit(events.MESSAGE_DELIVERED, envelope)
        for outbound in self._handlers[envelope.to](envelope.payload):
            self.dispatch(envelope.to, outbound)
        return True

    def run(self) -> int:
        """Deliver until quiescent; return the number of deliveries."""
        while self.step():
            pass
        return self.delivered


def run_until_quiescent(bus: SimBus, engines: Iterable[PrincipalEngine]) -> RunMetrics:
    """Drive ``bus`` until no message is in flight and collect the run's counters."""
    bus.run()
    return RunMetrics.collect(engines, bus.counts)


# ---------------------------------------------------------------------------
# Wire codec
# ---------------------------------------------------------------------------


class _Frame(BaseModel):
    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    sender: str = Field(alias="from", min_length=1)
    to: str = Field(min_length=1)
    seq: int = Field(ge=0)
    id: list[str] = Field(min_length=1)


class RequestFrame(_Frame):
    kind: Literal["request"] = "request"
    requester: str
    goal: str


class ResponseFrame(_Frame):
    kind: Literal["response"] = "response"
    answers: list[str] = Field(default_factory=list)
    status: ResponseStatus
    loop_id: list[str] | None = None
    loops: list[list[str]] = Field(default_factory=list)
    reason: str | None = None


class FlounderFrame(_Frame):
    kind: Literal["flounder"] = "flounder"
    reason: str


Frame = Annotated[RequestFrame | ResponseFrame | FlounderFrame, Field(discriminator="kind")]
_FRAMES: TypeAdapter[RequestFrame | ResponseFrame | FlounderFrame] = TypeAdapter(Frame)


def _to_frame(env: Envelope) -> RequestFrame | ResponseFrame | FlounderFrame:
    common = {"sender": env.sender, "to": env.to, "seq": env.seq}
    match env.payload:
        case Request(id=rid, requester=requester, goal=goal):
            return RequestFrame(**common, id=list(rid.segments), requester=requester,
                                goal=str(goal))
        case Response() as resp:
            return ResponseFrame(
                **common,
                id=list(resp.id.segments),
                answers=[str(a) for a in resp.answers],
                status=resp.status,
                loop_id=list(resp.loop_id.segments) if resp.loop_id else None,
                loops=[list(i.segments) for i in resp.loops],
                reason=resp.reason,
            )
        case FlounderNotice(id=rid, reason=reason):
            return FlounderFrame(**common, id=list(rid.segments), reason=reason)
    raise TypeError(f"cannot encode {env.payload!r}")


def _from_frame(frame: RequestFrame | ResponseFrame | FlounderFrame) -> Envelope:
    rid = RequestId(tuple(frame.id))
    payload: Message
    match frame:
        case RequestFrame():
            payload = Request(rid, frame.requester, parse_atom(frame.goal))
        case ResponseFrame():
            payload = Response(
                rid,
                tuple(parse_atom(a) for a in frame.answers),
                frame.status,
                RequestId(tuple(frame.loop_id)) if frame.loop_id else None,
                tuple(RequestId(tuple(i)) for i in frame.loops),
                frame.reason,
            )
        case FlounderFrame():
            payload = FlounderNotice(rid, frame.reason)
    return Envelope(frame.sender, frame.to, payload, frame.seq)


def encode(env: Envelope) -> bytes:
    """Serialize an envelope to one UTF-8 JSON line."""
    frame = _to_frame(env)
    return (frame.model_dump_json(by_alias=True, exclude_none=True) + "\n").encode(ENCODING)


def decode(line: bytes, offset: int = 0) -> Envelope:
    """Parse one newline-terminated frame.

    ``offset`` is the position of ``line`` in the enclosing byte stream and
    is added to the positions reported in :class:`ProtocolError`.
    """
    if not line.endswith(b"\n"):
        raise ProtocolError("truncated frame", offset + len(line))
    try:
        text = line[:-1].decode(ENCODING)
    except UnicodeDecodeError as exc:
        raise ProtocolError("invalid UTF-8", offset + exc.start) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        position = len(text[: exc.pos].encode(ENCODING))
        raise ProtocolError(f"malformed JSON ({exc.msg})", offset + position) from exc
    try:
        frame = _FRAMES.validate_python(raw)
        return _from_frame(frame)
    except ValidationError as exc:
        raise ProtocolError(f"invalid frame ({exc.error_count()} errors)", offset) from exc
    except (GemError, ValueError) as exc:
        raise ProtocolError(f"invalid frame content ({exc})", offset) from exc


def decode_stream(data: bytes) -> list[Envelope]:
    """Decode a buffer of consecutive frames."""
    envelopes = []
    offset = 0
    for line in data.splitlines(keepends=True):
        envelopes.append(decode(line, offset))
        offset += len(line)
    return envelopes


async def read_envelope(reader: asyncio.StreamReader, offset: int = 0) -> Envelope | None:
    """Read one frame; None on a clean end of stream."""
    line = await reader.readline()
    if not line:
        return None
    return decode(line, offset)


async def write_envelope(writer: asyncio.StreamWriter, env: Envelope) -> None:
    writer.write(encode(env))
    await writer.drain()


# ---------------------------------------------------------------------------
# TCP network
# ---------------------------------------------------------------------------


class TcpNetwork:
    """Runs each engine behind its own TCP listener inside one event loop.

    A per-engine inbox serializes delivery, so each engine still processes
    one message at a time. Quiescence is reached when every sent message has
    been processed.
    """

    def __init__(
        self,
        engines: Iterable[PrincipalEngine],
        addresses: Mapping[str, tuple[str, int]] | None = None,
        step_budget: int | None = None,
    ) -> None:
        self.engines = {engine.principal: engine for engine in engines}
        self.step_budget = step_budget or Config.STEP_BUDGET
        self.counts = MessageCounts()
        self.delivered = 0
        self.addresses: dict[str, tuple[str, int]] = {
            name: (addresses or {}).get(name, (Config.TCP_HOST, 0)) for name in self.engines
        }
        self._servers: list[asyncio.Server] = []
        self._inboxes: dict[str, asyncio.Queue[Envelope]] = {}
        self._workers: list[asyncio.Task] = []
        self._writers: dict[tuple[str, str], asyncio.StreamWriter] = {}
        self._seq: dict[tuple[str, str], int] = {}
        self._in_flight = 0
        self._idle = asyncio.Event()
        self._failure: BaseException | None = None

    async def start(self) -> None:
        for name in self.engines:
            host, port = self.addresses[name]
            self._inboxes[name] = asyncio.Queue()
            server = await asyncio.start_server(
                lambda r, w, name=name: self._serve(name, r, w), host, port
            )
            bound = server.sockets[0].getsockname()
            self.addresses[name] = (host, bound[1])
            self._servers.append(server)
            self._workers.append(asyncio.create_task(self._work(name), name=f"gem-{name}"))
            logger.info("Principal %s listening on %s:%d", name, host, bound[1])

    async def close(self) -> None:
        for task in self._workers:
            task.cancel()
        for writer in self._writers.values():
            writer.close()
        for server in self._servers:
            server.close()
            await server.wait_closed()
        await asyncio.gather(*self._workers, return_exceptions=True)
        self._workers.clear()
        self._writers.clear()
        self._servers.clear()

    async def __aenter__(self) -> "TcpNetwork":
        await self.start()
        return self

    async def __aexit__(self, *exc_info) -> None:
        await self.close()

    async def _serve(
        self, principal: str, reader: asyncio.StreamReader, writer: asyncio.StreamWriter
    ) -> None:
        offset = 0
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                envelope = decode(line, offset)
                offset += len(line)
                await self._inboxes[principal].put(envelope)
        except ProtocolError as exc:
            logger.error("Principal %s received a malformed frame: %s", principal, exc)
            self._fail(exc)
        finally:
            writer.close()

    async def _work(self, principal: str) -> None:
        engine = self.engines[principal]
        inbox = self._inboxes[principal]
        while True:
            envelope = await inbox.get()
            try:
                self.delivered += 1
                if self.delivered > self.step_budget:
                    raise StepBudgetExceeded(
                        f"step budget of {self.step_budget} deliveries exhausted"
                    )
                events.emit(events.MESSAGE_DELIVERED, envelope)
                for outbound in engine.handle(envelope.payload):
                    await self.send(principal, outbound)
            except Exception as exc:
                logger.error("Principal %s failed: %s", principal, exc)
                self._fail(exc)
            finally:
                self._in_flight -= 1
                if self._in_flight == 0:
                    self._idle.set()

    def _fail(self, exc: BaseException) -> None:
        if self._failure is None:
            self._failure = exc
        self._idle.set()

    async def _writer(self, sender: str, to: str) -> asyncio.StreamWriter:
        pair = (sender, to)
        writer = self._writers.get(pair)
        if writer is None:
            if to not in self.addresses:
                raise ConfigurationError(f"unknown destination principal {to!r}")
            host, port = self.addresses[to]
            _, writer = await asyncio.open_connection(host, port)
            self._writers[pair] = writer
        return writer

    async def send(self, sender: str, outbound: Outbound) -> None:
        """Frame ``outbound`` and write it on the ``sender`` to destination connection."""
        pair = (sender, outbound.to)
        writer = await self._writer(sender, outbound.to)
        seq = self._seq.get(pair, 0) + 1
        self._seq[pair] = seq
        envelope = Envelope(sender, outbound.to, outbound.message, seq)
        self._in_flight += 1
        self._idle.clear()
        _count(self.counts, outbound.message)
        events.emit(events.MESSAGE_SENT, envelope)
        await write_envelope(writer, envelope)

    async def run_until_quiescent(self, sender: str, outbound: Outbound) -> RunMetrics:
        """Inject the initial request and wait until every message is processed."""
        await self.send(sender, outbound)
        await self._idle.wait()
        if self._failure is not None:
            raise self._failure
        return RunMetrics.collect(self.engines.values(), self.counts)
