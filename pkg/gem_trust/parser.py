"""Parser for the textual policy format."""

import logging
import re
from dataclasses import dataclass

from .errors import GemError
from .terms import Atom, Clause, Constant, Literal, Policy, Term, Variable

logger = logging.getLogger(__name__)


class PolicySyntaxError(GemError):
    """Malformed policy text."""

    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class OwnershipError(GemError):
    """A clause head is not located at the principal that owns the policy."""

    def __init__(self, message: str, line: int | None = None) -> None:
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>%[^\n]*)
  | (?P<neck>:-)
  | (?P<var>[A-Z_][A-Za-z0-9_]*)
  | (?P<name>[a-z][A-Za-z0-9_]*|[0-9]+)
  | (?P<quoted>'(?:[^'\\\n]|\\.)*')
  | (?P<punct>[(),.])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True, slots=True)
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(text: str, first_line: int = 1) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    line = first_line
    line_start = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise PolicySyntaxError(
                f"unexpected character {text[pos]!r}", line, pos - line_start + 1
            )
        kind = m.lastgroup or ""
        value = m.group()
        if kind == "punct":
            kind = value
        if kind not in ("ws", "comment"):
            tokens.append(_Token(kind, value, line, pos - line_start + 1))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = pos + value.rindex("\n") + 1
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


def _unquote(text: str) -> str:
    return re.sub(r"\\(.)", r"\1", text[1:-1])


def strip_comment(line: str) -> str:
    """Cut ``line`` at the first ``%`` that is not inside a quoted constant."""
    pos = 0
    while pos < len(line):
        m = _TOKEN_RE.match(line, pos)
        if m is None:
            pos += 1
        elif m.lastgroup == "comment":
            return line[:pos]
        else:
            pos = m.end()
    return line


class _Parser:
    """Recursive-descent parser over a token list."""

    def __init__(self, tokens: list[_Token]) -> None:
        self._tokens = tokens
        self._pos = 0

    @property
    def current(self) -> _Token:
        return self._tokens[self._pos]

    def _peek(self, offset: int = 1) -> _Token:
        return self._tokens[min(self._pos + offset, len(self._tokens) - 1)]

    def _advance(self) -> _Token:
        token = self.current
        if token.kind != "eof":
            self._pos += 1
        return token

    def _expect(self, kind: str, what: str) -> _Token:
        token = self.current
        if token.kind != kind:
            found = "end of input" if token.kind == "eof" else repr(token.text)
            raise PolicySyntaxError(f"expected {what}, found {found}", token.line, token.column)
        return self._advance()

    def at_end(self) -> bool:
        return self.current.kind == "eof"

    def clause(self) -> tuple[Clause, int]:
        start = self.current
        head = self.atom()
        if head.predicate == "not":
            raise PolicySyntaxError(
                "negation is not allowed in a clause head", start.line, start.column
            )
        body: list[Literal] = []
        if self.current.kind == "neck":
            self._advance()
            body.append(self.literal())
            while self.current.kind == ",":
                self._advance()
                body.append(self.literal())
        self._expect(".", "'.' at end of clause")
        return Clause(head, tuple(body)), start.line

    def literal(self) -> Literal:
        token = self.current
        if token.kind == "name" and token.text == "not" and self._peek().kind == "(":
            self._advance()
            self._advance()
            atom = self.atom()
            self._expect(")", "')' closing not(...)")
            return Literal(atom, negated=True)
        return Literal(self.atom())

    def atom(self) -> Atom:
        symbol = self._expect("name", "predicate symbol")
        if not symbol.text[0].isalpha():
            raise PolicySyntaxError(
                f"invalid predicate symbol {symbol.text!r}", symbol.line, symbol.column
            )
        self._expect("(", "'(' after predicate symbol")
        args = [self.term()]
        while self.current.kind == ",":
            self._advance()
            args.append(self.term())
        self._expect(")", "')' closing argument list")
        return Atom(symbol.text, tuple(args))

    def term(self) -> Term:
        token = self.current
        if token.kind == "var":
            self._advance()
            return Variable(token.text)
        if token.kind == "name":
            self._advance()
            return Constant(token.text)
        if token.kind == "quoted":
            self._advance()
            value = _unquote(token.text)
            if not value:
                raise PolicySyntaxError("empty quoted constant", token.line, token.column)
            return Constant(value)
        found = "end of input" if token.kind == "eof" else repr(token.text)
        raise PolicySyntaxError(f"expected a term, found {found}", token.line, token.column)


def parse_clauses(text: str, first_line: int = 1) -> list[tuple[Clause, int]]:
    """Parse clauses in textual order, each paired with its starting line."""
    parser = _Parser(_tokenize(text, first_line))
    clauses: list[tuple[Clause, int]] = []
    while not parser.at_end():
        clauses.append(parser.clause())
    return clauses


def parse_policy(text: str, owner: str, first_line: int = 1) -> Policy:
    """Parse the policy of ``owner``.

    Raises:
        PolicySyntaxError: On malformed text, with line and column.
        OwnershipError: If a clause head is located anywhere but at ``owner``.
    """
    clauses: list[Clause] = []
    for clause, line in parse_clauses(text, first_line):
        location = clause.head.location
        if isinstance(location, Variable):
            raise OwnershipError(
                f"head location of {clause.head} is the variable {location}", line
            )
        if location.name != owner:
            raise OwnershipError(
                f"clause {clause} is located at {location.name}, not at {owner}", line
            )
        if clause.is_fact and not clause.head.is_ground():
            logger.warning("Non-ground fact at line %d in policy of %s: %s", line, owner, clause)
        clauses.append(clause)
    return Policy(owner, tuple(clauses))


def parse_atom(text: str) -> Atom:
    """Parse a single atom such as ``memberOfAlpha(c1,X)``."""
    parser = _Parser(_tokenize(text))
    atom = parser.atom()
    if not parser.at_end():
        token = parser.current
        raise PolicySyntaxError(f"unexpected {token.text!r} after atom", token.line, token.column)
    return atom


def parse_clause(text: str) -> Clause:
    """Parse exactly one clause."""
    clauses = parse_clauses(text)
    if len(clauses) != 1:
        raise PolicySyntaxError(f"expected one clause, found {len(clauses)}", 1, 1)
    return clauses[0][0]


def format_policy(policy: Policy) -> str:
    """Render a policy back to text that :func:`parse_policy` accepts."""
    return str(policy)
