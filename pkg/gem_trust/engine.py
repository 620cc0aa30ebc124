"""Per-principal GEM protocol engine.

Each principal owns one :class:`PrincipalEngine`. The engine keeps one goal
table per evaluated goal and reacts to three kinds of inbound messages:
requests, responses and flounder notices. Every reaction runs to completion
and returns the outbound messages it produced; the transport decides when
they are delivered.

The procedures follow the distributed tabling protocol: process request,
create table, activate node, send response, process response, generate
response and terminate, plus negation as failure that flounders on any
loop through a negated literal.
"""

import logging
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any

from . import events
from .errors import InvariantViolation
from .identifiers import IdGenerator, IdGenMode, RequestId, is_lower
from .terms import (
    Atom,
    Clause,
    Constant,
    FreshVariables,
    Literal,
    Policy,
    subsumes,
    unify,
    variant_key,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Messages
# ---------------------------------------------------------------------------


class ResponseStatus(StrEnum):
    ACTIVE = "active"
    LOOP = "loop"
    DISPOSED = "disposed"
    FLOUNDERED = "floundered"


@dataclass(frozen=True, slots=True)
class Request:
    """``<id, requester, goal>``: evaluate ``goal`` on behalf of ``requester``."""

    id: RequestId
    requester: str
    goal: Atom

    def __str__(self) -> str:
        return f"({self.id},{self.requester},{self.goal})"


@dataclass(frozen=True, slots=True)
class Response:
    """``<id, answers, status, loops>`` sent back for the request with the same id."""

    id: RequestId
    answers: tuple[Atom, ...] = ()
    status: ResponseStatus = ResponseStatus.ACTIVE
    loop_id: RequestId | None = None
    loops: tuple[RequestId, ...] = ()
    reason: str | None = None

    def __post_init__(self) -> None:
        if (self.status is ResponseStatus.LOOP) != (self.loop_id is not None):
            raise ValueError("loop_id is required for, and only for, loop status")
        if self.status is ResponseStatus.FLOUNDERED and self.answers:
            raise ValueError("a floundered response carries no answers")

    @property
    def status_text(self) -> str:
        if self.status is ResponseStatus.LOOP:
            return f"loop({self.loop_id})"
        return str(self.status)

    def __str__(self) -> str:
        answers = ",".join(str(a) for a in self.answers)
        loops = ",".join(str(i) for i in self.loops)
        return f"({self.id},{{{answers}}},{self.status_text},{{{loops}}})"


@dataclass(frozen=True, slots=True)
class FlounderNotice:
    """Tells the callee that the request ``id`` belongs to a floundered computation."""

    id: RequestId
    reason: str


Message = Request | Response | FlounderNotice


@dataclass(frozen=True, slots=True)
class Outbound:
    """A message addressed to a principal."""

    to: str
    message: Message


# ---------------------------------------------------------------------------
# Evaluation tree and goal table
# ---------------------------------------------------------------------------


class NodeStatus(StrEnum):
    NEW = "new"
    ACTIVE = "active"
    LOOP = "loop"
    ANSWER = "answer"
    DISPOSED = "disposed"


@dataclass(slots=True)
class TreeNode:
    id: RequestId
    clause: Clause
    status: NodeStatus = NodeStatus.NEW
    loops: list[RequestId] = field(default_factory=list)
    # principal the selected atom was sent to, while waiting for its responses
    target: str | None = None
    # nodes built from this node's answers, in arrival order
    subnodes: list["TreeNode"] = field(default_factory=list)

    @property
    def selected(self) -> Literal | None:
        return self.clause.body[0] if self.clause.body else None

    def in_loop(self, loop_id: RequestId) -> bool:
        return self.status is NodeStatus.LOOP and loop_id in self.loops

    def __str__(self) -> str:
        status = self.status.value
        if self.status is NodeStatus.LOOP:
            status = f"loop({{{','.join(str(i) for i in self.loops)}}})"
        return f"({self.id}, {self.clause}, {status})"


def _walk(nodes: list[TreeNode]) -> Iterator[TreeNode]:
    for node in nodes:
        yield node
        yield from _walk(node.subnodes)


def _first_new(nodes: list[TreeNode], skip_loops: bool) -> TreeNode | None:
    for node in nodes:
        if node.status is NodeStatus.NEW:
            return node
        if skip_loops and node.status is NodeStatus.LOOP:
            continue
        found = _first_new(node.subnodes, skip_loops)
        if found is not None:
            return found
    return None


@dataclass(slots=True)
class AnswerEntry:
    atom: Atom
    recipients: set[RequestId] = field(default_factory=set)


class GoalTable:
    """Evaluation state of one goal: ``<HR, LR, ActiveGoals, AnsSet, Tree>``."""

    def __init__(self, request: Request) -> None:
        self.goal = request.goal
        self.hr: Request | None = request
        self.lr: list[Request] = []
        self.active_goals: dict[RequestId, int] = {}
        self.answers: list[AnswerEntry] = []
        self.root = TreeNode(request.id, Clause(request.goal, (Literal(request.goal),)))
        # clause nodes; answer sub-nodes hang below the node that received them
        self.branches: list[TreeNode] = []
        self.children: list[TreeNode] = []
        self.floundered = False
        self.flounder_reason: str | None = None

    @property
    def disposed(self) -> bool:
        return self.root.status is NodeStatus.DISPOSED

    @property
    def nodes(self) -> Iterator[TreeNode]:
        yield self.root
        yield from self.children

    @property
    def ans_set(self) -> dict[Atom, set[RequestId]]:
        return {entry.atom: entry.recipients for entry in self.answers}

    def leftmost_new(self) -> TreeNode | None:
        """First new node in tree order.

        Nodes below a loop node stay frozen while any other branch has a new node.
        """
        return _first_new(self.branches, skip_loops=True) or _first_new(
            self.branches, skip_loops=False
        )

    def loop_nodes(self) -> list[TreeNode]:
        return [n for n in self.children if n.status is NodeStatus.LOOP]

    def count_loop_nodes(self, loop_id: RequestId) -> int:
        return sum(1 for n in self.children if n.in_loop(loop_id))

    def has_answer_subsuming(self, atom: Atom) -> bool:
        return any(subsumes(entry.atom, atom) for entry in self.answers)

    def add_answer(self, atom: Atom) -> bool:
        """Add ``atom`` unless an existing answer subsumes it."""
        if self.has_answer_subsuming(atom):
            return False
        self.answers.append(AnswerEntry(atom))
        return True

    def has_unsent(self, request_id: RequestId) -> bool:
        return any(request_id not in entry.recipients for entry in self.answers)

    def take_unsent(self, request_id: RequestId) -> tuple[Atom, ...]:
        """Answers not yet sent to ``request_id``; marks them as sent."""
        unsent = []
        for entry in self.answers:
            if request_id not in entry.recipients:
                entry.recipients.add(request_id)
                unsent.append(entry.atom)
        return tuple(unsent)

    def __repr__(self) -> str:
        hr = self.hr.id if self.hr else None
        return f"GoalTable({self.goal}, hr={hr}, lr={len(self.lr)}, answers={len(self.answers)})"


# ---------------------------------------------------------------------------
# Procedure-call records
# ---------------------------------------------------------------------------


class Procedure(StrEnum):
    PROCESS_REQUEST = "Process Request"
    ACTIVATE_NODE = "Activate Node"
    SEND_RESPONSE = "Send Response"
    PROCESS_RESPONSE = "Process Response"
    GENERATE_RESPONSE = "Generate Response"
    TERMINATE = "Terminate"
    EVALUATE_NEGATION = "Evaluate Negation"
    FLOUNDER = "Flounder"


@dataclass(frozen=True, slots=True)
class ProcedureCall:
    """One procedure invocation, as recorded in the event log.

    ``goal`` is the argument goal: the request's goal for Process Request and
    Send Response, the table goal otherwise.
    """

    principal: str
    procedure: Procedure
    goal: Atom
    request_id: RequestId | None = None
    requester: str | None = None
    status: str | None = None
    loops: tuple[RequestId, ...] = ()
    answers: tuple[Atom, ...] = ()

    def __str__(self) -> str:
        loops = "{" + ",".join(str(i) for i in self.loops) + "}"
        match self.procedure:
            case Procedure.PROCESS_REQUEST:
                args = f"({self.request_id},{self.requester},{self.goal})"
            case Procedure.SEND_RESPONSE:
                args = f"({self.request_id},{self.requester},{self.goal}),{self.status},{loops}"
            case Procedure.PROCESS_RESPONSE:
                answers = "{" + ",".join(str(a) for a in self.answers) + "}"
                args = f"{self.request_id},{answers},{self.status},{loops}"
            case Procedure.FLOUNDER:
                args = f"{self.goal},{self.status}"
            case _:
                args = str(self.goal)
        return f"{self.principal}: {self.procedure}({args})"

    def to_dict(self) -> dict[str, Any]:
        return {
            "principal": self.principal,
            "procedure": str(self.procedure),
            "goal": str(self.goal),
            "id": list(self.request_id.segments) if self.request_id else None,
            "requester": self.requester,
            "status": self.status,
            "loops": [list(i.segments) for i in self.loops],
            "answers": [str(a) for a in self.answers],
        }


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class EngineStats:
    tables: int = 0
    lower_requests: int = 0
    reused: int = 0
    # (lower request, loop id) for every loop detected here
    loop_detections: list[tuple[RequestId, RequestId]] = field(default_factory=list)
    clauses_used: set[int] = field(default_factory=set)


@dataclass(slots=True)
class QueryResult:
    """Answers collected by the principal that issued an initial request."""

    goal: Atom
    answers: list[Atom] = field(default_factory=list)
    status: ResponseStatus | None = None
    reason: str | None = None

    @property
    def complete(self) -> bool:
        return self.status in (ResponseStatus.DISPOSED, ResponseStatus.FLOUNDERED)


class PrincipalEngine:
    """Protocol state machine of one principal.

    Processes exactly one inbound message at a time; every procedure queues
    its outbound messages, and :meth:`handle` returns them.
    """

    def __init__(
        self,
        policy: Policy,
        id_mode: IdGenMode | None = None,
        seed: int | None = None,
    ) -> None:
        self.principal = policy.owner
        self.policy = policy
        self.tables: dict[Any, list[GoalTable]] = {}
        self.ids = IdGenerator(self.principal, id_mode, seed=seed)
        self.stats = EngineStats()
        self.queries: dict[RequestId, QueryResult] = {}
        self.floundered = False
        self._fresh = FreshVariables()
        self._nodes: dict[RequestId, tuple[GoalTable, TreeNode]] = {}
        self._outbox: list[Outbound] = []

    # ------------------------------------------------------------------
    # Entry points
    # ------------------------------------------------------------------

    def handle(self, message: Message) -> list[Outbound]:
        """Process one inbound message to completion."""
        match message:
            case Request():
                return self.process_request(message)
            case Response():
                return self.process_response(message)
            case FlounderNotice():
                return self.process_flounder(message)
        raise TypeError(f"unsupported message {message!r}")

    def query(self, goal: Atom) -> Outbound:
        """Issue an initial request for ``goal`` from this principal."""
        if not isinstance(goal.location, Constant):
            raise ValueError(f"initial goal {goal} needs a ground location")
        request = Request(self.ids.new_root(), self.principal, goal)
        self.queries[request.id] = QueryResult(goal)
        logger.info("%s queries %s as %s", self.principal, goal, request.id)
        return Outbound(goal.location.name, request)

    def all_tables(self) -> Iterator[GoalTable]:
        for tables in self.tables.values():
            yield from tables

    def _drain(self) -> list[Outbound]:
        out, self._outbox = self._outbox, []
        return out

    def _send(self, to: str, message: Message) -> None:
        self._outbox.append(Outbound(to, message))

    def _record(self, procedure: Procedure, goal: Atom, **fields: Any) -> None:
        call = ProcedureCall(self.principal, procedure, goal, **fields)
        logger.debug("%s", call)
        events.emit(events.PROCEDURE_CALL, call)

    # ------------------------------------------------------------------
    # Requests
    # ------------------------------------------------------------------

    def process_request(self, request: Request) -> list[Outbound]:
        """Answer from a finished table, register a lower request, or create a table."""
        self._record(
            Procedure.PROCESS_REQUEST,
            request.goal,
            request_id=request.id,
            requester=request.requester,
        )
        tables = self.tables.get(variant_key(request.goal), [])

        floundered = next((t for t in tables if t.floundered), None)
        if floundered is not None:
            self._send(
                request.requester,
                Response(request.id, status=ResponseStatus.FLOUNDERED,
                         reason=floundered.flounder_reason),
            )
            return self._drain()

        finished = next((t for t in tables if t.disposed), None)
        if finished is not None:
            self.stats.reused += 1
            self.send_response(finished, request, ResponseStatus.DISPOSED)
            return self._drain()

        for table in tables:
            if table.hr is not None and is_lower(request.id, table.hr.id):
                table.lr.append(request)
                self.stats.lower_requests += 1
                self.stats.loop_detections.append((request.id, table.hr.id))
                logger.debug(
                    "%s: loop detected on %s by %s", self.principal, table.goal, request.id
                )
                self.send_response(table, request, ResponseStatus.ACTIVE, loops=(table.hr.id,))
                return self._drain()

        table = self.create_table(request)
        self.activate_node(table)
        return self._drain()

    def create_table(self, request: Request) -> GoalTable:
        """Initialise the table of ``request.goal`` with one child per applicable clause."""
        goal = request.goal
        table = GoalTable(request)
        avoid = set(goal.variables())
        for index, clause in enumerate(self.policy.clauses):
            if clause.head.predicate != goal.predicate or clause.head.arity != goal.arity:
                continue
            renamed = self._fresh.rename_apart(clause, avoid)
            theta = unify(goal, renamed.head)
            if theta is None:
                continue
            self.stats.clauses_used.add(index)
            self._add_child(table, renamed.substitute(theta))
        self.tables.setdefault(variant_key(goal), []).append(table)
        self.stats.tables += 1
        logger.debug(
            "%s: table for %s created with %d children", self.principal, goal, len(table.children)
        )
        return table

    def _add_child(
        self, table: GoalTable, clause: Clause, parent: TreeNode | None = None
    ) -> TreeNode:
        node = TreeNode(self.ids.extend(table.root.id), clause)
        (table.branches if parent is None else parent.subnodes).append(node)
        table.children.append(node)
        self._nodes[node.id] = (table, node)
        return node

    # ------------------------------------------------------------------
    # Evaluation
    # ------------------------------------------------------------------

    def activate_node(self, table: GoalTable) -> None:
        """Advance the leftmost new node until a request goes out or no new node remains."""
        while True:
            self._record(Procedure.ACTIVATE_NODE, table.goal)
            if table.root.status is NodeStatus.NEW:
                table.root.status = NodeStatus.ACTIVE
            node = table.leftmost_new()
            if node is None or table.has_answer_subsuming(table.goal):
                self.generate_response(table)
                return
            literal = node.selected
            if literal is None:
                node.status = NodeStatus.ANSWER
                table.add_answer(node.clause.head)
                continue
            if not isinstance(literal.atom.location, Constant):
                self.flounder(table, f"non-ground location in {literal}")
                return
            if literal.negated:
                self.evaluate_negation(table, node)
                return
            node.status = NodeStatus.ACTIVE
            self._request(node, literal.atom)
            return

    def _request(self, node: TreeNode, atom: Atom) -> None:
        location = atom.location
        assert isinstance(location, Constant)
        node.target = location.name
        self._send(location.name, Request(node.id, self.principal, atom))

    def evaluate_negation(self, table: GoalTable, node: TreeNode) -> None:
        """Request the negated atom; its responses decide the node (see ``_negation_response``)."""
        literal = node.selected
        assert literal is not None and literal.negated
        self._record(Procedure.EVALUATE_NEGATION, table.goal, request_id=node.id)
        if not literal.atom.is_ground():
            self.flounder(table, f"non-ground negated atom {literal.atom}")
            return
        node.status = NodeStatus.ACTIVE
        self._request(node, literal.atom)

    # ------------------------------------------------------------------
    # Responses
    # ------------------------------------------------------------------

    def process_response(self, response: Response) -> list[Outbound]:
        """Fold a subgoal's response into the tree and resume evaluation."""
        entry = self._nodes.get(response.id)
        if entry is None:
            self._collect_query_result(response)
            return self._drain()
        table, node = entry
        self._record(
            Procedure.PROCESS_RESPONSE,
            table.goal,
            request_id=response.id,
            status=response.status_text,
            loops=response.loops,
            answers=response.answers,
        )
        if table.disposed:
            logger.debug("%s: ignoring response %s for disposed %s",
                         self.principal, response.id, table.goal)
            return self._drain()
        if response.status is ResponseStatus.FLOUNDERED:
            self.flounder(table, response.reason or "floundered subgoal")
            return self._drain()

        selected = node.selected
        if selected is not None and selected.negated:
            self._negation_response(table, node, response)
        else:
            self._positive_response(table, node, response)
            self._resume(table)
        return self._drain()

    def _positive_response(self, table: GoalTable, node: TreeNode, response: Response) -> None:
        if response.status is ResponseStatus.DISPOSED:
            if node.status is NodeStatus.LOOP:
                for looping in table.loop_nodes():
                    looping.status = NodeStatus.DISPOSED
            node.status = NodeStatus.DISPOSED
            node.target = None
        else:
            if node.status is NodeStatus.LOOP:
                node.loops.extend(i for i in response.loops if i not in node.loops)
            elif response.loops:
                node.status = NodeStatus.LOOP
                node.loops = list(response.loops)
            for loop_id in response.loops:
                table.active_goals.setdefault(loop_id, 0)
            if response.status is ResponseStatus.LOOP:
                assert response.loop_id is not None
                counter = table.active_goals.get(response.loop_id, 0) - 1
                if counter < 0:
                    raise InvariantViolation(
                        f"{self.principal}: counter for {response.loop_id} in {table.goal} "
                        "went negative"
                    )
                table.active_goals[response.loop_id] = counter
                if table.root.status is NodeStatus.ACTIVE:
                    table.root.status = NodeStatus.LOOP
                    table.root.loops = [response.loop_id]

        assert node.selected is not None
        selected_atom = node.selected.atom
        tail = Clause(node.clause.head, node.clause.body[1:])
        for answer in response.answers:
            renamed = self._fresh.rename_atom(answer, node.clause.variables())
            theta = unify(selected_atom, renamed)
            if theta is None:
                logger.warning("%s: answer %s does not match %s", self.principal, answer,
                               selected_atom)
                continue
            self._add_child(table, tail.substitute(theta), parent=node)

    def _negation_response(self, table: GoalTable, node: TreeNode, response: Response) -> None:
        if node.status is NodeStatus.DISPOSED:
            return
        assert node.selected is not None
        atom = node.selected.atom
        if response.status is ResponseStatus.LOOP or response.loops:
            self.flounder(table, f"loop through negation on {atom}")
            return
        if response.answers:
            # not(B) fails
            node.status = NodeStatus.DISPOSED
            node.target = None
        elif response.status is ResponseStatus.DISPOSED:
            # B has no answers, so not(B) succeeds
            node.status = NodeStatus.DISPOSED
            node.target = None
            self._add_child(table, Clause(node.clause.head, node.clause.body[1:]), parent=node)
        self._resume(table)

    def _resume(self, table: GoalTable) -> None:
        root = table.root
        if root.status is NodeStatus.ACTIVE or (
            root.status is NodeStatus.LOOP
            and all(table.active_goals.get(i, 0) == 0 for i in root.loops)
        ):
            self.activate_node(table)

    def _collect_query_result(self, response: Response) -> None:
        result = self.queries.get(response.id)
        if result is None:
            logger.warning("%s: response %s matches no node", self.principal, response.id)
            return
        result.answers.extend(response.answers)
        result.status = response.status
        result.reason = response.reason
        logger.info(
            "%s received %s for %s (%d answers)",
            self.principal, response.status_text, response.id, len(response.answers),
        )

    # ------------------------------------------------------------------
    # Generate / send response, terminate
    # ------------------------------------------------------------------

    def generate_response(self, table: GoalTable) -> None:
        """Decide between a loop iteration, an upward response and termination."""
        self._record(Procedure.GENERATE_RESPONSE, table.goal)
        root = table.root
        if not table.loop_nodes():
            self.terminate(table)
            return
        assert table.hr is not None
        hr_id = table.hr.id

        if table.lr and any(table.has_unsent(r.id) for r in table.lr):
            # coordinator: start the next loop iteration
            table.active_goals[hr_id] = table.count_loop_nodes(hr_id)
            if root.status is NodeStatus.LOOP:
                if hr_id not in root.loops:
                    root.loops.append(hr_id)
            else:
                root.status = NodeStatus.LOOP
                root.loops = [hr_id]
            self._check_counters(table, (hr_id,))
            for lower in list(table.lr):
                self.send_response(table, lower, ResponseStatus.LOOP, loop_id=hr_id)
            return

        if list(table.active_goals) == [hr_id]:
            # leader of the SCC with no new answers
            self.terminate(table)
            return

        higher = [i for i in table.active_goals if is_lower(hr_id, i)]
        for loop_id in higher:
            table.active_goals[loop_id] = table.count_loop_nodes(loop_id)
        self._check_counters(table, higher)
        id4 = None
        if root.status is NodeStatus.LOOP:
            id4 = next((i for i in root.loops if is_lower(hr_id, i)), None)
        if id4 is not None:
            self.send_response(
                table, table.hr, ResponseStatus.LOOP, loop_id=id4, loops=tuple(higher)
            )
        else:
            self.send_response(table, table.hr, ResponseStatus.ACTIVE, loops=tuple(higher))
        root.status = NodeStatus.ACTIVE
        root.loops = []

    def _check_counters(self, table: GoalTable, loop_ids: Iterable[RequestId]) -> None:
        """Each counter must equal the number of loop nodes tagged with its loop id."""
        for loop_id in loop_ids:
            expected = sum(1 for n in _walk(table.branches) if n.in_loop(loop_id))
            if table.active_goals.get(loop_id) != expected:
                raise InvariantViolation(
                    f"{self.principal}: counter for {loop_id} in {table.goal} is "
                    f"{table.active_goals.get(loop_id)}, {expected} loop nodes"
                )

    def send_response(
        self,
        table: GoalTable,
        request: Request,
        status: ResponseStatus,
        loop_id: RequestId | None = None,
        loops: tuple[RequestId, ...] = (),
    ) -> None:
        """Send the answers ``request`` has not received yet, with the given status."""
        answers = table.take_unsent(request.id)
        response = Response(request.id, answers, status, loop_id, loops)
        self._record(
            Procedure.SEND_RESPONSE,
            request.goal,
            request_id=request.id,
            requester=request.requester,
            status=response.status_text,
            loops=loops,
            answers=answers,
        )
        self._send(request.requester, response)

    def terminate(self, table: GoalTable) -> None:
        """Dispose the table and send final responses to HR and every LR."""
        self._record(Procedure.TERMINATE, table.goal)
        for node in table.children:
            if node.status is not NodeStatus.ANSWER:
                node.status = NodeStatus.DISPOSED
            node.target = None
        table.root.status = NodeStatus.DISPOSED
        table.root.loops = []
        assert table.hr is not None
        for request in (table.hr, *table.lr):
            self.send_response(table, request, ResponseStatus.DISPOSED)
        table.hr = None
        table.lr.clear()
        table.active_goals.clear()

    # ------------------------------------------------------------------
    # Floundering
    # ------------------------------------------------------------------

    def flounder(self, table: GoalTable, reason: str) -> None:
        """Abort the table and propagate the flounder to callers and pending callees."""
        if table.floundered:
            return
        logger.warning("%s: evaluation of %s flounders: %s", self.principal, table.goal, reason)
        self._record(Procedure.FLOUNDER, table.goal, status=reason)
        self.floundered = True
        table.floundered = True
        table.flounder_reason = reason
        waiting = [(n.id, n.target) for n in table.children if n.target is not None]
        for node in table.nodes:
            node.status = NodeStatus.DISPOSED
            node.target = None
            node.loops = []
        table.answers.clear()
        callers = [r for r in (table.hr, *table.lr) if r is not None]
        table.hr = None
        table.lr.clear()
        table.active_goals.clear()
        for request in callers:
            self._send(
                request.requester,
                Response(request.id, status=ResponseStatus.FLOUNDERED, reason=reason),
            )
        for node_id, target in waiting:
            self._send(target, FlounderNotice(node_id, reason))

    def process_flounder(self, notice: FlounderNotice) -> list[Outbound]:
        """Flounder the table that a floundered caller was waiting on."""
        for table in list(self.all_tables()):
            if table.floundered or table.hr is None:
                continue
            if table.hr.id == notice.id or any(r.id == notice.id for r in table.lr):
                self.flounder(table, notice.reason)
        return self._drain()
