"""Terms, atoms, clauses and policies of the function-free policy language.

Also holds the unification kernel used by both the engine and the oracle:
Robinson unification over flat argument lists, one-sided matching for
subsumption checks, renaming apart and variant keys for table lookup.
"""

from __future__ import annotations

import logging
import re
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass

logger = logging.getLogger(__name__)

_PLAIN_CONSTANT = re.compile(r"[a-z][A-Za-z0-9_]*|[0-9]+")
_VARIABLE_NAME = re.compile(r"[A-Z_][A-Za-z0-9_]*")
_SYMBOL = re.compile(r"[a-z][A-Za-z0-9_]*")


@dataclass(frozen=True, slots=True)
class Variable:
    """A logic variable, identified by name."""

    name: str

    def __post_init__(self) -> None:
        if not _VARIABLE_NAME.fullmatch(self.name):
            raise ValueError(f"Invalid variable name: {self.name!r}")

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class Constant:
    """A constant symbol. Principal identifiers are constants too."""

    name: str

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("Constant name must be non-empty")

    def __str__(self) -> str:
        if _PLAIN_CONSTANT.fullmatch(self.name):
            return self.name
        escaped = self.name.replace("\\", "\\\\").replace("'", "\\'")
        return f"'{escaped}'"


Term = Variable | Constant


@dataclass(frozen=True, slots=True)
class Atom:
    """``predicate(location, t1, ..., tn)``; ``args[0]`` is the location term."""

    predicate: str
    args: tuple[Term, ...]

    def __post_init__(self) -> None:
        if not _SYMBOL.fullmatch(self.predicate):
            raise ValueError(f"Invalid predicate symbol: {self.predicate!r}")
        if not isinstance(self.args, tuple):
            object.__setattr__(self, "args", tuple(self.args))
        if not self.args:
            raise ValueError(f"Atom {self.predicate} needs a location argument")

    @property
    def location(self) -> Term:
        return self.args[0]

    @property
    def arity(self) -> int:
        return len(self.args)

    def is_ground(self) -> bool:
        return all(isinstance(arg, Constant) for arg in self.args)

    def variables(self) -> Iterator[Variable]:
        """Yield each variable once, in order of first occurrence."""
        seen: set[Variable] = set()
        for arg in self.args:
            if isinstance(arg, Variable) and arg not in seen:
                seen.add(arg)
                yield arg

    def substitute(self, theta: Substitution) -> Atom:
        if not theta:
            return self
        return Atom(self.predicate, tuple(theta.apply(arg) for arg in self.args))

    def __str__(self) -> str:
        return f"{self.predicate}({','.join(str(arg) for arg in self.args)})"


@dataclass(frozen=True, slots=True)
class Literal:
    """A body literal: an atom, possibly under negation as failure."""

    atom: Atom
    negated: bool = False

    def substitute(self, theta: Substitution) -> Literal:
        return Literal(self.atom.substitute(theta), self.negated)

    def __str__(self) -> str:
        return f"not({self.atom})" if self.negated else str(self.atom)


@dataclass(frozen=True, slots=True)
class Clause:
    """``head :- body``. An empty body makes the clause a fact."""

    head: Atom
    body: tuple[Literal, ...] = ()

    def __post_init__(self) -> None:
        if not isinstance(self.body, tuple):
            object.__setattr__(self, "body", tuple(self.body))

    @property
    def is_fact(self) -> bool:
        return not self.body

    def variables(self) -> Iterator[Variable]:
        seen: set[Variable] = set()
        for atom in (self.head, *(lit.atom for lit in self.body)):
            for var in atom.variables():
                if var not in seen:
                    seen.add(var)
                    yield var

    def substitute(self, theta: Substitution) -> Clause:
        if not theta:
            return self
        body = tuple(lit.substitute(theta) for lit in self.body)
        return Clause(self.head.substitute(theta), body)

    def __str__(self) -> str:
        if not self.body:
            return f"{self.head}."
        return f"{self.head} :- {', '.join(str(lit) for lit in self.body)}."


@dataclass(frozen=True, slots=True)
class Policy:
    """The local policy of one principal. Clause order is evaluation order."""

    owner: str
    clauses: tuple[Clause, ...] = ()

    def __post_init__(self) -> None:
        if not isinstance(self.clauses, tuple):
            object.__setattr__(self, "clauses", tuple(self.clauses))

    @property
    def facts(self) -> list[Clause]:
        return [c for c in self.clauses if c.is_fact]

    def __len__(self) -> int:
        return len(self.clauses)

    def __str__(self) -> str:
        return "".join(f"{clause}\n" for clause in self.clauses)


class Substitution(Mapping[Variable, Term]):
    """Finite, idempotent mapping from variables to terms.

    Identity bindings are dropped on construction; composition keeps the
    result idempotent, so applying it twice equals applying it once.
    """

    __slots__ = ("_bindings",)

    def __init__(self, bindings: Mapping[Variable, Term] | None = None) -> None:
        self._bindings: dict[Variable, Term] = {
            var: term for var, term in (bindings or {}).items() if var != term
        }

    def __getitem__(self, var: Variable) -> Term:
        return self._bindings[var]

    def __iter__(self) -> Iterator[Variable]:
        return iter(self._bindings)

    def __len__(self) -> int:
        return len(self._bindings)

    def __repr__(self) -> str:
        inner = ", ".join(f"{var}↦{term}" for var, term in self._bindings.items())
        return f"{{{inner}}}"

    def apply(self, term: Term) -> Term:
        if isinstance(term, Variable):
            return self._bindings.get(term, term)
        return term

    def compose(self, other: Mapping[Variable, Term]) -> Substitution:
        """Return ``self`` followed by ``other``."""
        after = other if isinstance(other, Substitution) else Substitution(other)
        combined = {var: after.apply(term) for var, term in self._bindings.items()}
        for var, term in after.items():
            combined.setdefault(var, term)
        return Substitution(combined)


EMPTY = Substitution()


# ---------------------------------------------------------------------------
# Unification and matching
# ---------------------------------------------------------------------------


def unify(a: Atom, b: Atom) -> Substitution | None:
    """Return the most general unifier of two atoms, or None."""
    if a.predicate != b.predicate or a.arity != b.arity:
        return None
    theta = EMPTY
    for left, right in zip(a.args, b.args, strict=True):
        left = theta.apply(left)
        right = theta.apply(right)
        if left == right:
            continue
        if isinstance(left, Variable):
            theta = theta.compose({left: right})
        elif isinstance(right, Variable):
            theta = theta.compose({right: left})
        else:
            return None
    return theta


def match(general: Atom, specific: Atom) -> Substitution | None:
    """One-sided unification: bind only ``general``'s variables.

    The variables of ``specific`` are treated as frozen constants.
    """
    if general.predicate != specific.predicate or general.arity != specific.arity:
        return None
    bindings: dict[Variable, Term] = {}
    for pattern, target in zip(general.args, specific.args, strict=True):
        if isinstance(pattern, Variable):
            bound = bindings.setdefault(pattern, target)
            if bound != target:
                return None
        elif pattern != target:
            return None
    return Substitution(bindings)


def subsumes(general: Atom, specific: Atom) -> bool:
    """True iff some substitution maps ``general`` onto ``specific``."""
    return match(general, specific) is not None


def is_variant(a: Atom, b: Atom) -> bool:
    """True iff the atoms are equal up to a renaming of variables."""
    return variant_key(a) == variant_key(b)


VariantKey = tuple[str, tuple[tuple[str, str | int], ...]]


def variant_key(atom: Atom) -> VariantKey:
    """Key identifying the variant class of an atom.

    Variables are numbered by first occurrence, so ``p(l,X,Y,X)`` and
    ``p(l,A,B,A)`` share a key.
    """
    numbering: dict[Variable, int] = {}
    args: list[tuple[str, str | int]] = []
    for arg in atom.args:
        if isinstance(arg, Variable):
            args.append(("v", numbering.setdefault(arg, len(numbering))))
        else:
            args.append(("c", arg.name))
    return atom.predicate, tuple(args)


def canonical(atom: Atom) -> Atom:
    """Rename an atom's variables to ``V0, V1, ...`` by first occurrence."""
    numbering = {var: Variable(f"V{i}") for i, var in enumerate(atom.variables())}
    return atom.substitute(Substitution(numbering))


# ---------------------------------------------------------------------------
# Renaming apart
# ---------------------------------------------------------------------------


class FreshVariables:
    """Monotone source of fresh variables named ``_G<n>``.

    Each engine owns one instance so runs are reproducible.
    """

    def __init__(self, prefix: str = "_G", start: int = 1) -> None:
        self._prefix = prefix
        self._next = start

    def fresh(self, avoid: Iterable[Variable] = ()) -> Variable:
        taken = set(avoid)
        while True:
            var = Variable(f"{self._prefix}{self._next}")
            self._next += 1
            if var not in taken:
                return var

    def _renaming(self, variables: Iterable[Variable], avoid: Iterable[Variable]) -> Substitution:
        variables = list(variables)
        taken = set(avoid) | set(variables)
        mapping: dict[Variable, Term] = {}
        for var in variables:
            new = self.fresh(taken)
            taken.add(new)
            mapping[var] = new
        return Substitution(mapping)

    def rename_apart(self, clause: Clause, avoid: Iterable[Variable] = ()) -> Clause:
        """Return a variant of ``clause`` sharing no variable with ``avoid``."""
        return clause.substitute(self._renaming(clause.variables(), avoid))

    def rename_atom(self, atom: Atom, avoid: Iterable[Variable] = ()) -> Atom:
        return atom.substitute(self._renaming(atom.variables(), avoid))


def rename_apart(
    clause: Clause, avoid: Iterable[Variable], fresh: FreshVariables | None = None
) -> Clause:
    """Module-level convenience over :meth:`FreshVariables.rename_apart`."""
    return (fresh or FreshVariables()).rename_apart(clause, avoid)
