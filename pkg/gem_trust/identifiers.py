"""Request identifiers: segment sequences ordered by prefix (lower/higher) and side order.

A request for a subgoal extends the identifier of the request that created
the caller's table by one segment, so "lower" means "issued further down the
same call chain". Loop detection needs nothing else. The side order between
incomparable identifiers is kept for completeness; it is read from emission
records instead of the segment text, so untraceable segments leak nothing.
"""

import logging
import random
import string
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from enum import StrEnum
from typing import Protocol

from .errors import GemError

logger = logging.getLogger(__name__)

SEPARATOR = "·"
_NONCE_ALPHABET = string.ascii_lowercase + string.digits
_VARIABLE_LENGTHS = (4, 16)
_MAX_DRAWS = 10_000


class IdentifierError(GemError):
    """Identifiers are not in the relation an operation requires."""
    pass


class Traceability(StrEnum):
    TRACEABLE = "traceable"
    UNTRACEABLE = "untraceable"


class SegmentLength(StrEnum):
    FIXED = "fixed"
    VARIABLE = "variable"


@dataclass(frozen=True, slots=True)
class IdGenMode:
    """How an engine generates identifier segments."""

    traceability: Traceability = Traceability.UNTRACEABLE
    length: SegmentLength = SegmentLength.VARIABLE
    size: int = 8

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError("segment size must be at least 1")

    @classmethod
    def parse(cls, text: str, size: int = 8) -> "IdGenMode":
        """Parse ``traceable``, ``untraceable/fixed`` and similar spellings."""
        parts = [p.strip().lower() for p in text.replace(",", "/").split("/") if p.strip()]
        traceability = Traceability.UNTRACEABLE
        length = SegmentLength.VARIABLE
        for part in parts:
            if part in Traceability.__members__.values():
                traceability = Traceability(part)
            elif part in SegmentLength.__members__.values():
                length = SegmentLength(part)
            else:
                raise ValueError(f"unknown identifier mode {part!r}")
        return cls(traceability, length, size)

    def __str__(self) -> str:
        return f"{self.traceability}/{self.length}"


TRACEABLE = IdGenMode(Traceability.TRACEABLE, SegmentLength.VARIABLE)


@dataclass(frozen=True, slots=True)
class RequestId:
    """Identifier of a request: a non-empty sequence of opaque segments."""

    segments: tuple[str, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.segments, tuple):
            object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments or not all(self.segments):
            raise ValueError("a request id needs at least one non-empty segment")

    @classmethod
    def parse(cls, text: str) -> "RequestId":
        return cls(tuple(text.split(SEPARATOR)))

    @property
    def root(self) -> str:
        return self.segments[0]

    @property
    def parent(self) -> "RequestId | None":
        if len(self.segments) == 1:
            return None
        return RequestId(self.segments[:-1])

    def child(self, segment: str) -> "RequestId":
        return RequestId((*self.segments, segment))

    def is_lower(self, other: "RequestId") -> bool:
        """True iff ``other`` is a strict prefix of this id."""
        return is_lower(self, other)

    def __len__(self) -> int:
        return len(self.segments)

    def __str__(self) -> str:
        return SEPARATOR.join(self.segments)


def is_lower(a: RequestId, b: RequestId) -> bool:
    """True iff ``a`` is lower than ``b``: ``b``'s segments are a strict prefix of ``a``'s."""
    n = len(b.segments)
    return len(a.segments) > n and a.segments[:n] == b.segments


def comparable(a: RequestId, b: RequestId) -> bool:
    return a == b or is_lower(a, b) or is_lower(b, a)


class EmissionOrder(Protocol):
    def ordinal(self, parent: RequestId | None, segment: str) -> int | None: ...


def is_side(a: RequestId, b: RequestId, order: EmissionOrder) -> bool:
    """True iff ``a`` is side of ``b``.

    At the first index where the ids differ, ``a``'s segment was emitted
    before ``b``'s by the engine that extended their common prefix.

    Raises:
        IdentifierError: If the ids are comparable, have different roots,
            or a segment has no emission record.
    """
    if comparable(a, b):
        raise IdentifierError(f"{a} and {b} are comparable; side order is undefined")
    if a.root != b.root:
        raise IdentifierError(f"{a} and {b} descend from different initial requests")
    index = next(
        i for i, (x, y) in enumerate(zip(a.segments, b.segments, strict=False)) if x != y
    )
    parent = RequestId(a.segments[:index])
    first = order.ordinal(parent, a.segments[index])
    second = order.ordinal(parent, b.segments[index])
    if first is None or second is None:
        raise IdentifierError(f"no emission record under {parent} for {a} or {b}")
    return first < second


def check_side_order(ids: Iterable[RequestId], order: EmissionOrder) -> None:
    """Check that side order is total on incomparable ids and inherited by lower ids.

    If ``a`` is side of ``b``, every id lower than ``a`` must be side of every
    id lower than ``b``. Incomparable ancestors of two ids always split at the
    same index as the ids, so comparing the ids with their ancestors at that
    index covers every pair of ancestors.

    Raises:
        IdentifierError: On the first pair that breaks the order.
    """
    unique = sorted(set(ids), key=lambda i: i.segments)
    for position, a in enumerate(unique):
        for b in unique[position + 1 :]:
            if a.root != b.root or comparable(a, b):
                continue
            forward, backward = is_side(a, b, order), is_side(b, a, order)
            if forward == backward:
                raise IdentifierError(f"{a} and {b} are not ordered side by side")
            index = next(
                i for i, (x, y) in enumerate(zip(a.segments, b.segments, strict=False)) if x != y
            )
            upper_a = RequestId(a.segments[: index + 1])
            upper_b = RequestId(b.segments[: index + 1])
            if is_side(upper_a, upper_b, order) != forward:
                raise IdentifierError(
                    f"side order of {a} and {b} differs from {upper_a} and {upper_b}"
                )


class IdGenerator:
    """Per-engine identifier source.

    State (counter, nonce stream, emission records) belongs to one engine
    and is never shared.
    """

    def __init__(self, principal: str, mode: IdGenMode | None = None, seed: int | None = None):
        self.principal = principal
        self.mode = mode or IdGenMode()
        if self._traceable_fixed and self.mode.size < len(principal) + 2:
            raise IdentifierError(
                f"segments of {self.mode.size} characters cannot name principal {principal}"
            )
        self._counter = 0
        self._rng = random.Random(seed) if seed is not None else random.SystemRandom()
        self._emitted: dict[RequestId | None, dict[str, int]] = {}

    @property
    def _traceable_fixed(self) -> bool:
        return (
            self.mode.traceability is Traceability.TRACEABLE
            and self.mode.length is SegmentLength.FIXED
        )

    @property
    def emitted(self) -> Mapping[RequestId | None, Mapping[str, int]]:
        return self._emitted

    def ordinal(self, parent: RequestId | None, segment: str) -> int | None:
        return self._emitted.get(parent, {}).get(segment)

    def new_root(self) -> RequestId:
        """Identifier for an initial request issued by this principal."""
        return RequestId((self._emit(None),))

    def extend(self, parent: RequestId) -> RequestId:
        """Identifier for a subgoal request below ``parent``; the result is lower than it."""
        return parent.child(self._emit(parent))

    def _emit(self, parent: RequestId | None) -> str:
        siblings = self._emitted.setdefault(parent, {})
        if self._untraceable_fixed and len(siblings) >= len(_NONCE_ALPHABET) ** self.mode.size:
            raise IdentifierError(f"no unused segment of length {self.mode.size} under {parent}")
        for _ in range(_MAX_DRAWS):
            segment = self._segment()
            if segment not in siblings:
                siblings[segment] = len(siblings)
                return segment
        raise IdentifierError(f"no unused segment under {parent} after {_MAX_DRAWS} draws")

    @property
    def _untraceable_fixed(self) -> bool:
        return (
            self.mode.traceability is Traceability.UNTRACEABLE
            and self.mode.length is SegmentLength.FIXED
        )

    def _segment(self) -> str:
        self._counter += 1
        if self.mode.traceability is Traceability.TRACEABLE:
            if self.mode.length is SegmentLength.VARIABLE:
                return f"{self.principal}_{self._counter}"
            width = self.mode.size - len(self.principal) - 1
            if len(str(self._counter)) > width:
                raise IdentifierError(
                    f"counter {self._counter} of {self.principal} exceeds {width} digits"
                )
            return f"{self.principal}_{self._counter:0{width}d}"
        if self.mode.length is SegmentLength.FIXED:
            length = self.mode.size
        else:
            length = self._rng.randint(*_VARIABLE_LENGTHS)
        while True:
            nonce = "".join(self._rng.choice(_NONCE_ALPHABET) for _ in range(length))
            if self.principal not in nonce:
                return nonce


class SideOrder:
    """Emission order merged from the generators of all engines in a run."""

    def __init__(self, generators: Iterable[IdGenerator]) -> None:
        self._generators = list(generators)

    def ordinal(self, parent: RequestId | None, segment: str) -> int | None:
        for generator in self._generators:
            value = generator.ordinal(parent, segment)
            if value is not None:
                return value
        return None
