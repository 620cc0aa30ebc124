"""Generated global policies: the three benchmark families and random positive policies.

Message counts depend on clause and fact order; answer sets do not. In family 1
a member's rule comes before its fact, and a partner lists the looping member
before the next entry except on the levels in ``NEXT_FIRST_LEVELS``.
In families 2 and 3 every member lists its fact before its rules, and a looping
member lists its forward rule before the rule that closes the loop. Scaled facts
stay where the single fact was.

Family 1, index k
    Level j = 0..k adds a partner principal (``mc`` for level 0, then
    ``mc2``..``mc6``) with two partner facts, and two members. The level's
    entry member ``c(2j+1)`` asks its partners for members, the first new
    member ``c(2j+2)`` loops back to the entry member and the second one
    ``c(2j+3)`` is the entry of the next level. Index 0 is the project
    membership example with ``c1``, ``c2``, ``c3`` and ``mc``.

Family 2, index k
    ``c1`` fans out to ``c2``, ``c3`` and ``c5``..``c(4+k)``; ``c2`` and ``c4``
    form a loop that goes back to ``c1`` through ``c2``; ``c3`` feeds ``c4``;
    every ``c(4+j)`` feeds its predecessor in the chain ``c3, c5, c6, ...``.

Family 3, index k
    ``k+1`` copies of the index-0 block of family 2, chained: block j has
    entry ``e = c(3j+1)`` with rules to ``e+1`` and ``e+2``; ``e+1`` continues
    to ``e+3`` and loops back to ``e``; ``e+2`` continues to ``e+3``;
    ``e+3`` loops back to ``e+1`` (its first rule) and is the entry of
    block ``j+1``.
"""

import logging
import random
from dataclasses import dataclass

from .errors import ConfigurationError
from .parser import parse_atom, parse_clause
from .scenario import PrincipalSpec, Scenario, ScenarioConfig
from .terms import Atom, Clause, Constant, Literal, Policy, Variable

logger = logging.getLogger(__name__)

FAMILIES = (1, 2, 3)
MAX_INDEX = 5
SCALES = {1: "", 10: "a", 50: "b", 100: "c"}
# Variants measured with enlarged extensional policies.
SCALED_VARIANTS = {(1, 0), (1, 5), (2, 0), (2, 5), (3, 2)}
# Family 1 levels whose partner lists the next entry before the looping member.
NEXT_FIRST_LEVELS = frozenset({2, 5})

PREDICATE = "memberOfAlpha"
PARTNER = "projectPartner"
REQUESTER = "h"
MEMBER_NAMES = (
    "alice", "bob", "carol", "dave", "erin", "frank", "grace",
    "heidi", "ivan", "judy", "mallory", "niaj", "olivia", "peggy",
)


def variant_id(family: int, index: int, scale: int = 1) -> str:
    return f"{family}.{index}{SCALES.get(scale, f'x{scale}')}"


def _check(family: int, index: int, scale: int) -> None:
    if family not in FAMILIES:
        raise ConfigurationError(f"unknown policy family {family}; expected one of {FAMILIES}")
    if not 0 <= index <= MAX_INDEX:
        raise ConfigurationError(f"variant index must be between 0 and {MAX_INDEX}, got {index}")
    if scale not in SCALES:
        raise ConfigurationError(f"fact scale must be one of {sorted(SCALES)}, got {scale}")
    if scale > 1 and (family, index) not in SCALED_VARIANTS:
        covered = ", ".join(f"{f}.{i}" for f, i in sorted(SCALED_VARIANTS))
        raise ConfigurationError(
            f"variant {family}.{index} has no scaled form; scaled variants are {covered}"
        )


class _Builder:
    """Collects clauses per principal, in the order they are added."""

    def __init__(self, scale: int) -> None:
        self.scale = scale
        self.clauses: dict[str, list[Clause]] = {REQUESTER: []}
        self._names = iter(MEMBER_NAMES)

    def _add(self, principal: str, clause: Clause) -> None:
        self.clauses.setdefault(principal, []).append(clause)

    def member(self, principal: str, target: str) -> None:
        """``principal`` takes every member of ``target``."""
        text = f"{PREDICATE}({principal},X) :- {PREDICATE}({target},X)."
        self._add(principal, parse_clause(text))

    def partner(self, principal: str, partner: str, members: tuple[str, ...]) -> None:
        text = f"{PREDICATE}({principal},X) :- {PARTNER}({partner},Y), {PREDICATE}(Y,X)."
        self._add(principal, parse_clause(text))
        for name in members:
            self._add(partner, parse_clause(f"{PARTNER}({partner},{name})."))

    def member_fact(self, principal: str) -> None:
        base = next(self._names)
        constants = [base] if self.scale == 1 else [f"{base}{i}" for i in range(1, self.scale + 1)]
        for constant in constants:
            self._add(principal, Clause(Atom(PREDICATE, (Constant(principal), Constant(constant)))))

    def build(self, name: str, config: ScenarioConfig) -> Scenario:
        principals = tuple(
            PrincipalSpec(p, Policy(p, tuple(clauses))) for p, clauses in self.clauses.items()
        )
        goal = Atom(PREDICATE, (Constant("c1"), Variable("X")))
        scenario = Scenario(principals, REQUESTER, goal, config, name)
        scenario.validate()
        return scenario


def _family_1(b: _Builder, index: int) -> None:
    for level in range(index + 1):
        entry = f"c{2 * level + 1}"
        looping, nxt = f"c{2 * level + 2}", f"c{2 * level + 3}"
        partners = (nxt, looping) if level in NEXT_FIRST_LEVELS else (looping, nxt)
        b.partner(entry, "mc" if level == 0 else f"mc{level + 1}", partners)
        if level > 0:
            b.member_fact(entry)
        b.member(looping, entry)
        b.member_fact(looping)
    b.member_fact(f"c{2 * index + 3}")


def _family_2(b: _Builder, index: int) -> None:
    chain = ["c3"] + [f"c{4 + j}" for j in range(1, index + 1)]
    for principal in ["c2", *chain]:
        b.member("c1", principal)
    b.member_fact("c2")
    b.member("c2", "c4")
    b.member("c2", "c1")
    b.member_fact("c3")
    b.member("c3", "c4")
    b.member("c4", "c2")
    for previous, principal in zip(chain, chain[1:]):
        b.member(principal, previous)


def _family_3(b: _Builder, index: int) -> None:
    for level in range(index + 1):
        e = 3 * level + 1
        entry, left, right, nxt = (f"c{e + i}" for i in range(4))
        if level > 0:
            b.member(entry, f"c{e - 2}")
        b.member(entry, left)
        b.member(entry, right)
        b.member_fact(left)
        b.member(left, nxt)
        b.member(left, entry)
        b.member_fact(right)
        b.member(right, nxt)
    last = 3 * (index + 1) + 1
    b.member(f"c{last}", f"c{last - 2}")


_FAMILIES = {1: _family_1, 2: _family_2, 3: _family_3}


def generate_variant(
    family: int, index: int, scale: int = 1, config: ScenarioConfig | None = None
) -> Scenario:
    """Build variant ``family.index`` with every member fact multiplied by ``scale``.

    Partner facts are never scaled.

    Raises:
        ConfigurationError: On a family, index or scale outside the generated range.
    """
    _check(family, index, scale)
    builder = _Builder(scale)
    _FAMILIES[family](builder, index)
    scenario = builder.build(variant_id(family, index, scale), config or ScenarioConfig())
    logger.debug(
        "Generated variant %s: %d principals, %d clauses",
        scenario.name, len(scenario.principals), scenario.clause_count,
    )
    return scenario


def all_variants(family: int | None = None, scale: int = 1) -> list[tuple[int, int]]:
    """(family, index) pairs available at ``scale``, in report order."""
    families = FAMILIES if family is None else (family,)
    pairs = [(f, i) for f in families for i in range(MAX_INDEX + 1)]
    if scale > 1:
        pairs = [p for p in pairs if p in SCALED_VARIANTS]
    return pairs


# ---------------------------------------------------------------------------
# Random positive policies
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class RandomPolicyLimits:
    principals: int = 6
    clauses: int = 15
    body: int = 3
    constants: int = 4
    partner_rate: float = 0.2
    fact_rate: float = 0.45


_RANDOM_PREDICATES = (("p", 2), ("q", 2), ("r", 3))
_RANDOM_PARTNER = "partner"
_RANDOM_VARIABLES = ("X", "Y", "Z")


def random_scenario(seed: int, limits: RandomPolicyLimits | None = None) -> Scenario:
    """A seeded random positive global policy with ground (or partner-bound) locations."""
    limits = limits or RandomPolicyLimits()
    rng = random.Random(seed)
    names = [f"c{i}" for i in range(1, rng.randint(2, limits.principals) + 1)]
    data = [f"d{i}" for i in range(rng.randint(1, limits.constants))]
    clauses: dict[str, list[Clause]] = {name: [] for name in names}

    def data_term() -> Constant:
        return Constant(rng.choice(data))

    def fact(owner: str) -> Clause:
        if rng.random() < limits.partner_rate:
            return Clause(Atom(_RANDOM_PARTNER, (Constant(owner), Constant(rng.choice(names)))))
        predicate, arity = rng.choice(_RANDOM_PREDICATES)
        args = (Constant(owner),) + tuple(data_term() for _ in range(arity - 1))
        return Clause(Atom(predicate, args))

    def rule(owner: str) -> Clause:
        body: list[Literal] = []
        length = rng.randint(1, limits.body)
        partner_used = 0
        while len(body) < length:
            predicate, arity = rng.choice(_RANDOM_PREDICATES)
            if len(body) + 1 < length and rng.random() < limits.partner_rate:
                partner_used += 1
                location = Variable(f"L{partner_used}")
                body.append(Literal(Atom(_RANDOM_PARTNER, (Constant(owner), location))))
            else:
                location = Constant(rng.choice(names))
            args = tuple(
                data_term() if rng.random() < 0.2 else Variable(rng.choice(_RANDOM_VARIABLES))
                for _ in range(arity - 1)
            )
            body.append(Literal(Atom(predicate, (location, *args))))
        bound = sorted(
            {v for lit in body for v in lit.atom.args[1:] if isinstance(v, Variable)},
            key=lambda v: v.name,
        )
        predicate, arity = rng.choice(_RANDOM_PREDICATES)
        head_args = tuple(
            rng.choice(bound) if bound and rng.random() < 0.8 else data_term()
            for _ in range(arity - 1)
        )
        return Clause(Atom(predicate, (Constant(owner), *head_args)), tuple(body))

    count = rng.randint(len(names), limits.clauses)
    for i in range(count):
        owner = rng.choice(names)
        make_fact = i == 0 or rng.random() < limits.fact_rate
        clauses[owner].append(fact(owner) if make_fact else rule(owner))

    principals = [PrincipalSpec(REQUESTER, Policy(REQUESTER))] + [
        PrincipalSpec(name, Policy(name, tuple(clauses[name]))) for name in names
    ]
    predicate, arity = rng.choice(_RANDOM_PREDICATES)
    goal_text = f"{predicate}({rng.choice(names)},{','.join(_RANDOM_VARIABLES[: arity - 1])})"
    scenario = Scenario(
        tuple(principals), REQUESTER, parse_atom(goal_text), ScenarioConfig(), f"random-{seed}"
    )
    scenario.validate()
    return scenario
