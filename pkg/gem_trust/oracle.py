"""Centralised bottom-up evaluator over a global policy.

Used as the reference answer set for distributed runs. Positive programs are
evaluated by a (semi-)naive least fixpoint; programs with negation are split
into strata along the strongly connected components of the dependency graph
and rejected when a negative edge lies inside a component.
"""

import logging
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from enum import StrEnum

from .errors import GemError
from .terms import Atom, Clause, Constant, FreshVariables, Policy, Substitution, canonical
from .terms import subsumes, unify

logger = logging.getLogger(__name__)


class NegationCycleError(GemError):
    """The program has a loop through negation reachable from the goal."""
    pass


class OracleError(GemError):
    """The oracle cannot evaluate the program (for example a non-ground negated atom)."""
    pass


class Method(StrEnum):
    NAIVE = "naive"
    SEMI_NAIVE = "semi-naive"


# Dependency-graph node: (predicate, arity, location). Clause heads always have
# a constant location; a body atom with a variable location depends on every
# location that defines the predicate.
Node = tuple[str, int, str]


@dataclass(frozen=True, slots=True)
class Edge:
    source: Node
    target: Node
    negative: bool


@dataclass
class GlobalPolicy:
    """The union of all local policies."""

    policies: list[Policy]
    edges: list[Edge] = field(init=False)

    def __post_init__(self) -> None:
        self.edges = list(self._build_edges())

    @property
    def clauses(self) -> list[Clause]:
        return [clause for policy in self.policies for clause in policy.clauses]

    def nodes_for(self, atom: Atom) -> list[Node]:
        """Graph nodes an atom may resolve against."""
        location = atom.location
        if isinstance(location, Constant):
            return [(atom.predicate, atom.arity, location.name)]
        return sorted(
            {_head_node(c) for c in self.clauses
             if c.head.predicate == atom.predicate and c.head.arity == atom.arity}
        )

    def _build_edges(self) -> Iterator[Edge]:
        for clause in self.clauses:
            source = _head_node(clause)
            for literal in clause.body:
                for target in self.nodes_for(literal.atom):
                    yield Edge(source, target, literal.negated)

    def successors(self, node: Node) -> list[Edge]:
        return [e for e in self.edges if e.source == node]

    def reachable(self, start: Iterable[Node]) -> set[Node]:
        seen: set[Node] = set()
        stack = list(start)
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            stack.extend(e.target for e in self.successors(node))
        return seen


def _head_node(clause: Clause) -> Node:
    location = clause.head.location
    assert isinstance(location, Constant)
    return clause.head.predicate, clause.head.arity, location.name


# ---------------------------------------------------------------------------
# Stratification
# ---------------------------------------------------------------------------


class _Tarjan:
    """Strongly connected components, emitted dependencies first."""

    def __init__(self, gp: GlobalPolicy, nodes: set[Node]) -> None:
        self.graph: dict[Node, list[Node]] = {n: [] for n in sorted(nodes)}
        for edge in gp.edges:
            if edge.source in nodes and edge.target in nodes:
                self.graph[edge.source].append(edge.target)
        self.index: dict[Node, int] = {}
        self.lowlink: dict[Node, int] = {}
        self.on_stack: set[Node] = set()
        self.stack: list[Node] = []
        self.counter = 0
        self.components: list[list[Node]] = []

    def run(self) -> list[list[Node]]:
        for node in self.graph:
            if node not in self.index:
                self._strongconnect(node)
        return self.components

    def _strongconnect(self, v: Node) -> None:
        self.index[v] = self.lowlink[v] = self.counter
        self.counter += 1
        self.stack.append(v)
        self.on_stack.add(v)
        for w in self.graph[v]:
            if w not in self.index:
                self._strongconnect(w)
                self.lowlink[v] = min(self.lowlink[v], self.lowlink[w])
            elif w in self.on_stack:
                self.lowlink[v] = min(self.lowlink[v], self.index[w])
        if self.lowlink[v] == self.index[v]:
            component = []
            while True:
                w = self.stack.pop()
                self.on_stack.discard(w)
                component.append(w)
                if w == v:
                    break
            self.components.append(component)


def stratify(gp: GlobalPolicy, goal: Atom | None = None) -> list[list[Node]]:
    """Return strata (components in evaluation order) reachable from ``goal``.

    Raises:
        NegationCycleError: If a negative edge connects two nodes of one component.
    """
    if goal is None:
        nodes = {_head_node(c) for c in gp.clauses} | {e.target for e in gp.edges}
    else:
        nodes = gp.reachable(gp.nodes_for(goal))
    components = _Tarjan(gp, nodes).run()
    member = {node: i for i, comp in enumerate(components) for node in comp}
    for edge in gp.edges:
        if (
            edge.negative
            and edge.source in member
            and member.get(edge.target) == member[edge.source]
        ):
            raise NegationCycleError(
                f"loop through negation between {_render(edge.source)} and {_render(edge.target)}"
            )
    return components


def _render(node: Node) -> str:
    return f"{node[0]}/{node[1]}@{node[2]}"


# ---------------------------------------------------------------------------
# Fixpoint
# ---------------------------------------------------------------------------


class _Model:
    """Derived atoms grouped by predicate, kept free of subsumed duplicates."""

    def __init__(self) -> None:
        self._atoms: dict[tuple[str, int], list[Atom]] = {}

    def atoms(self, predicate: str, arity: int) -> list[Atom]:
        return self._atoms.get((predicate, arity), [])

    def add(self, atom: Atom) -> bool:
        bucket = self._atoms.setdefault((atom.predicate, atom.arity), [])
        if any(subsumes(known, atom) for known in bucket):
            return False
        bucket.append(atom)
        return True

    def all(self) -> Iterator[Atom]:
        for bucket in self._atoms.values():
            yield from bucket


def _derive(
    clause: Clause,
    model: _Model,
    fresh: FreshVariables,
    delta: _Model | None = None,
) -> Iterator[Atom]:
    """Heads derivable from ``clause`` against ``model``.

    With ``delta``, at least one positive body literal must use a delta atom.
    """
    positives = [i for i, lit in enumerate(clause.body) if not lit.negated]
    if delta is None:
        yield from _join(clause, model, fresh, None, -1)
        return
    for pivot in positives:
        yield from _join(clause, model, fresh, delta, pivot)


def _join(
    clause: Clause, model: _Model, fresh: FreshVariables, delta: _Model | None, pivot: int
) -> Iterator[Atom]:
    def step(i: int, theta: Substitution) -> Iterator[Substitution]:
        if i == len(clause.body):
            yield theta
            return
        literal = clause.body[i]
        atom = literal.atom.substitute(theta)
        if literal.negated:
            if not atom.is_ground():
                raise OracleError(f"non-ground negated atom {atom} in {clause}")
            if not any(subsumes(fact, atom) for fact in model.atoms(atom.predicate, atom.arity)):
                yield from step(i + 1, theta)
            return
        source = delta if (delta is not None and i == pivot) else model
        for fact in list(source.atoms(atom.predicate, atom.arity)):
            renamed = fresh.rename_atom(fact, atom.variables())
            mgu = unify(atom, renamed)
            if mgu is not None:
                yield from step(i + 1, theta.compose(mgu))

    for theta in step(0, Substitution()):
        yield clause.head.substitute(theta)


def _evaluate_stratum(
    clauses: list[Clause], model: _Model, fresh: FreshVariables, method: Method
) -> None:
    delta = _Model()
    for clause in clauses:
        for head in _derive(clause, model, fresh):
            if model.add(head):
                delta.add(head)
    rounds = 1
    while any(True for _ in delta.all()):
        new = _Model()
        for clause in clauses:
            if method is Method.NAIVE:
                derived = _derive(clause, model, fresh)
            elif clause.body:
                derived = _derive(clause, model, fresh, delta)
            else:
                continue
            for head in list(derived):
                if model.add(head):
                    new.add(head)
        delta = new
        rounds += 1
    logger.debug("stratum of %d clauses reached its fixpoint in %d rounds", len(clauses), rounds)


def least_model(
    gp: GlobalPolicy, goal: Atom | None = None, method: Method = Method.SEMI_NAIVE
) -> list[Atom]:
    """All atoms derivable from ``gp`` (restricted to what ``goal`` depends on)."""
    model = _Model()
    fresh = FreshVariables(prefix="_O")
    for component in stratify(gp, goal):
        nodes = set(component)
        clauses = [c for c in gp.clauses if _head_node(c) in nodes]
        _evaluate_stratum(clauses, model, fresh, Method(method))
    return list(model.all())


def maximal(atoms: Iterable[Atom]) -> list[Atom]:
    """Canonical subsumption-maximal representatives, one per variant class."""
    result: list[Atom] = []
    for atom in (canonical(a) for a in atoms):
        if any(subsumes(kept, atom) for kept in result):
            continue
        result = [kept for kept in result if not subsumes(atom, kept)]
        result.append(atom)
    return sorted(result, key=str)


def bottom_up_answers(
    gp: GlobalPolicy, goal: Atom, method: Method = Method.SEMI_NAIVE
) -> list[Atom]:
    """Instances of ``goal`` entailed by the global policy.

    Raises:
        NegationCycleError: If ``goal`` depends on a loop through negation.
    """
    instances = []
    fresh = FreshVariables(prefix="_A")
    for fact in least_model(gp, goal, method):
        theta = unify(goal, fresh.rename_atom(fact, goal.variables()))
        if theta is not None:
            instances.append(goal.substitute(theta))
    return maximal(instances)


# ---------------------------------------------------------------------------
# Equivalence check
# ---------------------------------------------------------------------------


@dataclass
class EquivalenceReport:
    """Result of comparing distributed answers with oracle answers."""

    unsound: list[Atom] = field(default_factory=list)
    incomplete: list[Atom] = field(default_factory=list)

    @property
    def equal(self) -> bool:
        return not self.unsound and not self.incomplete

    def __str__(self) -> str:
        if self.equal:
            return "answer sets are equal"
        parts = []
        if self.unsound:
            parts.append("not entailed: " + ", ".join(str(a) for a in self.unsound))
        if self.incomplete:
            parts.append("missing: " + ", ".join(str(a) for a in self.incomplete))
        return "; ".join(parts)


def check_equivalence(
    gem_answers: Iterable[Atom], oracle_answers: Iterable[Atom]
) -> EquivalenceReport:
    """Compare two answer sets in both directions, up to renaming."""
    gem = maximal(gem_answers)
    oracle = maximal(oracle_answers)
    return EquivalenceReport(
        unsound=[a for a in gem if not any(subsumes(o, a) for o in oracle)],
        incomplete=[o for o in oracle if not any(subsumes(a, o) for a in gem)],
    )
