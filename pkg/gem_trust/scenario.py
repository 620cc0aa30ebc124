"""Scenario files: principals with their policies, one initial request, run settings.

Text format::

    % comment
    [config]
    id_mode = traceable
    scheduler = fifo
    seed = 0

    [principal c1]
    address = 127.0.0.1:9001
    memberOfAlpha(c1,X) :- memberOfAlpha(c2,X).

    [request]
    requester = h, goal = memberOfAlpha(c1,X)

Files ending in ``.yaml``/``.yml`` carry the same content as a mapping with
``principals``, ``request`` and ``config`` keys.
"""

import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import GemError
from .identifiers import IdGenMode
from .oracle import GlobalPolicy
from .parser import OwnershipError, PolicySyntaxError, parse_atom, parse_policy, strip_comment
from .terms import Atom, Constant, Policy
from .transport import Scheduler

logger = logging.getLogger(__name__)

_SECTION = re.compile(
    r"^\s*\[(?P<kind>config|principal|request)(?:\s+(?P<name>[^\]\s]+))?\s*\]\s*$"
)
_SETTING = re.compile(r"^\s*(?P<key>[a-z_]+)\s*=\s*(?P<value>.*?)\s*$")
_REQUEST_KEYS = ("requester", "goal")


class ScenarioError(GemError):
    """Invalid scenario file."""

    def __init__(self, message: str, source: str | None = None, line: int | None = None):
        where = ""
        if source:
            where = f"{source}:{line}: " if line else f"{source}: "
        elif line:
            where = f"line {line}: "
        super().__init__(f"{where}{message}")
        self.source = source
        self.line = line


class ScenarioConfig(BaseModel):
    """Per-scenario run settings; unset fields fall back to Config."""

    model_config = ConfigDict(extra="forbid")

    id_mode: str | None = None
    scheduler: Scheduler | None = None
    seed: int | None = None
    step_budget: int | None = Field(default=None, gt=0)

    @field_validator("id_mode")
    @classmethod
    def _check_id_mode(cls, value: str | None) -> str | None:
        if value is not None:
            IdGenMode.parse(value)
        return value


class RequestSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    requester: str = Field(min_length=1)
    goal: str = Field(min_length=1)


@dataclass(frozen=True, slots=True)
class PrincipalSpec:
    name: str
    policy: Policy
    address: tuple[str, int] | None = None


@dataclass(frozen=True)
class Scenario:
    """A validated global policy plus the initial request."""

    principals: tuple[PrincipalSpec, ...]
    requester: str
    goal: Atom
    config: ScenarioConfig = field(default_factory=ScenarioConfig)
    name: str = "scenario"

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.principals]

    @property
    def policies(self) -> list[Policy]:
        return [p.policy for p in self.principals]

    @property
    def clause_count(self) -> int:
        return sum(len(p.policy) for p in self.principals)

    def policy(self, name: str) -> Policy:
        for spec in self.principals:
            if spec.name == name:
                return spec.policy
        raise KeyError(name)

    def global_policy(self) -> GlobalPolicy:
        return GlobalPolicy(self.policies)

    def addresses(self) -> dict[str, tuple[str, int]]:
        return {p.name: p.address for p in self.principals if p.address is not None}

    def with_goal(self, goal: Atom, requester: str | None = None) -> "Scenario":
        scenario = replace(self, goal=goal, requester=requester or self.requester)
        scenario.validate()
        return scenario

    def validate(self, source: str | None = None) -> None:
        """Check that names are unique and every ground location is declared."""
        names = self.names
        duplicates = {n for n in names if names.count(n) > 1}
        if duplicates:
            raise ScenarioError(f"duplicate principal(s): {', '.join(sorted(duplicates))}", source)
        declared = set(names)
        if self.requester not in declared:
            raise ScenarioError(f"requester {self.requester!r} is not a declared principal", source)
        if not isinstance(self.goal.location, Constant):
            raise ScenarioError(f"goal {self.goal} needs a ground location", source)
        if self.goal.location.name not in declared:
            raise ScenarioError(f"goal location {self.goal.location} is not declared", source)
        for spec in self.principals:
            for clause in spec.policy.clauses:
                for literal in clause.body:
                    location = literal.atom.location
                    if isinstance(location, Constant) and location.name not in declared:
                        raise ScenarioError(
                            f"{clause} refers to undeclared principal {location.name}", source
                        )


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def _parse_address(text: str, source: str | None, line: int | None) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ScenarioError(f"address must be host:port, got {text!r}", source, line)
    return host or "127.0.0.1", int(port)


def _split_settings(text: str) -> list[tuple[str, str]]:
    """Split ``a = 1, goal = p(x,Y)`` on commas that start a new known key."""
    starts = [m.start() for m in re.finditer(r"(?:^|,)\s*[a-z_]+\s*=", text)]
    pairs = []
    for i, start in enumerate(starts):
        chunk = text[start : starts[i + 1] if i + 1 < len(starts) else len(text)].lstrip(",")
        m = _SETTING.match(chunk)
        if m:
            pairs.append((m.group("key"), m.group("value")))
    return pairs


def _build(
    principals: list[tuple[str, str, int, tuple[str, int] | None]],
    request: dict[str, str],
    config: dict[str, object],
    source: str | None,
    name: str,
) -> Scenario:
    specs = []
    for principal, text, first_line, address in principals:
        try:
            policy = parse_policy(text, principal, first_line)
        except (PolicySyntaxError, OwnershipError) as exc:
            raise ScenarioError(f"policy of {principal}: {exc}", source) from exc
        specs.append(PrincipalSpec(principal, policy, address))
    try:
        spec = RequestSpec.model_validate(request)
    except ValidationError as exc:
        raise ScenarioError(f"invalid [request] section: {exc}", source) from exc
    try:
        goal = parse_atom(spec.goal)
    except PolicySyntaxError as exc:
        raise ScenarioError(f"invalid goal {spec.goal!r}: {exc}", source) from exc
    try:
        run_config = ScenarioConfig.model_validate(config)
    except ValidationError as exc:
        raise ScenarioError(f"invalid [config] section: {exc}", source) from exc
    scenario = Scenario(tuple(specs), spec.requester, goal, run_config, name)
    scenario.validate(source)
    return scenario


def parse_scenario(text: str, source: str | None = None, name: str = "scenario") -> Scenario:
    """Parse scenario text in the sectioned format."""
    principals: list[tuple[str, str, int, tuple[str, int] | None]] = []
    request: dict[str, str] = {}
    config: dict[str, object] = {}
    section: str | None = None
    body: list[str] = []
    body_start = 1
    current: str | None = None
    address: tuple[str, int] | None = None

    def flush() -> None:
        if section == "principal" and current is not None:
            principals.append((current, "\n".join(body), body_start, address))

    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = strip_comment(raw).strip() if section != "principal" else raw.strip()
        m = _SECTION.match(raw)
        if m:
            flush()
            section = m.group("kind")
            current = m.group("name")
            body = []
            body_start = lineno + 1
            address = None
            if section == "principal" and not current:
                raise ScenarioError("[principal] needs a name", source, lineno)
            if section == "principal" and current in {p[0] for p in principals}:
                raise ScenarioError(f"principal {current} declared twice", source, lineno)
            continue
        if section == "principal":
            setting = _SETTING.match(raw)
            if setting and setting.group("key") == "address":
                address = _parse_address(setting.group("value"), source, lineno)
                body.append("")
            else:
                body.append(raw)
            continue
        if not stripped:
            continue
        if section is None:
            raise ScenarioError(f"text outside of any section: {stripped!r}", source, lineno)
        pairs = _split_settings(stripped)
        if not pairs:
            raise ScenarioError(f"expected key = value, got {stripped!r}", source, lineno)
        for key, value in pairs:
            if section == "request":
                if key not in _REQUEST_KEYS:
                    raise ScenarioError(f"unknown request key {key!r}", source, lineno)
                request[key] = value
            else:
                config[key] = value
    flush()
    return _build(principals, request, config, source, name)


def parse_scenario_yaml(text: str, source: str | None = None, name: str = "scenario") -> Scenario:
    """Parse the YAML form of a scenario."""
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ScenarioError(f"invalid YAML: {exc}", source) from exc
    if not isinstance(data, dict):
        raise ScenarioError("top level must be a mapping", source)
    principals = []
    for principal, entry in (data.get("principals") or {}).items():
        if isinstance(entry, dict):
            text = entry.get("policy") or ""
            raw_address = entry.get("address")
            address = _parse_address(str(raw_address), source, None) if raw_address else None
        else:
            text, address = entry or "", None
        principals.append((str(principal), str(text), 1, address))
    return _build(principals, data.get("request") or {}, data.get("config") or {}, source, name)


def load_scenario(path: str | Path) -> Scenario:
    """Load and validate a scenario file.

    Raises:
        ScenarioError: On I/O, syntax or validation errors.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}", str(path)) from exc
    if path.suffix in (".yaml", ".yml"):
        scenario = parse_scenario_yaml(text, str(path), path.stem)
    else:
        scenario = parse_scenario(text, str(path), path.stem)
    logger.info(
        "Loaded scenario %s: %d principals, %d clauses",
        scenario.name, len(scenario.principals), scenario.clause_count,
    )
    return scenario


def dump_scenario(scenario: Scenario) -> str:
    """Render a scenario in the sectioned text format."""
    lines = []
    settings = scenario.config.model_dump(exclude_none=True)
    if settings:
        lines.append("[config]")
        lines.extend(f"{key} = {value}" for key, value in settings.items())
        lines.append("")
    for spec in scenario.principals:
        lines.append(f"[principal {spec.name}]")
        if spec.address:
            lines.append(f"address = {spec.address[0]}:{spec.address[1]}")
        lines.extend(str(clause) for clause in spec.policy.clauses)
        lines.append("")
    lines.append("[request]")
    lines.append(f"requester = {scenario.requester}")
    lines.append(f"goal = {scenario.goal}")
    return "\n".join(lines) + "\n"


BUNDLED_DIR = Path(__file__).parent / "scenarios"


def bundled(name: str) -> Path:
    """Path of a scenario shipped with the package, e.g. ``bundled("appendix_b")``."""
    path = BUNDLED_DIR / (name if name.endswith(".gem") else f"{name}.gem")
    if not path.exists():
        raise ScenarioError(f"no bundled scenario named {name!r}")
    return path
