"""Tests for scenario files."""

from pathlib import Path
from tempfile import TemporaryDirectory

import pytest

from gem_trust.parser import parse_atom
from gem_trust.scenario import (
    BUNDLED_DIR,
    Scenario,
    ScenarioError,
    bundled,
    dump_scenario,
    load_scenario,
    parse_scenario,
    parse_scenario_yaml,
)
from gem_trust.terms import Constant
from gem_trust.transport import Scheduler

SIMPLE = """\
% two principals
[config]
id_mode = untraceable/fixed
scheduler = random
seed = 4

[principal h]

[principal c1]
address = 127.0.0.1:9101
p(c1,a).
p(c1,X) :- q(c1,X).

[request]
requester = h, goal = p(c1,X)
"""

YAML = """\
config:
  scheduler: fifo
principals:
  h: ""
  c1:
    policy: |
      p(c1,a).
    address: "localhost:9200"
request:
  requester: h
  goal: p(c1,X)
"""


class TestParseScenario:
    def test_sections(self):
        scenario = parse_scenario(SIMPLE, name="simple")
        assert scenario.names == ["h", "c1"]
        assert scenario.requester == "h"
        assert scenario.goal == parse_atom("p(c1,X)")
        assert scenario.clause_count == 2
        assert scenario.name == "simple"

    def test_config(self):
        config = parse_scenario(SIMPLE).config
        assert config.id_mode == "untraceable/fixed"
        assert config.scheduler is Scheduler.RANDOM
        assert config.seed == 4

    def test_address(self):
        scenario = parse_scenario(SIMPLE)
        assert scenario.addresses() == {"c1": ("127.0.0.1", 9101)}

    def test_request_on_two_lines(self):
        text = SIMPLE.replace("requester = h, goal = p(c1,X)", "requester = h\ngoal = p(c1,X)")
        assert parse_scenario(text).goal == parse_atom("p(c1,X)")

    def test_percent_inside_quoted_goal(self):
        text = SIMPLE.replace(
            "requester = h, goal = p(c1,X)", "requester = h, goal = p(c1,'50% off') % sale"
        )
        assert parse_scenario(text).goal.args[1] == Constant("50% off")

    def test_global_policy_covers_every_principal(self):
        gp = parse_scenario(SIMPLE).global_policy()
        assert [p.owner for p in gp.policies] == ["h", "c1"]

    def test_with_goal(self):
        scenario = parse_scenario(SIMPLE).with_goal(parse_atom("p(c1,a)"))
        assert scenario.goal == parse_atom("p(c1,a)")
        assert scenario.requester == "h"


class TestScenarioErrors:
    def test_policy_error_names_line(self):
        text = SIMPLE.replace("p(c1,a).", "p(c1,a)")
        with pytest.raises(ScenarioError) as exc_info:
            parse_scenario(text, source="simple.gem")
        assert "simple.gem" in str(exc_info.value)
        assert "line 12" in str(exc_info.value)

    def test_foreign_clause(self):
        with pytest.raises(ScenarioError):
            parse_scenario(SIMPLE.replace("p(c1,a).", "p(c2,a)."))

    def test_duplicate_principal(self):
        with pytest.raises(ScenarioError) as exc_info:
            parse_scenario(SIMPLE.replace("[principal h]", "[principal c1]"))
        assert exc_info.value.line is not None

    def test_undeclared_requester(self):
        with pytest.raises(ScenarioError):
            parse_scenario(SIMPLE.replace("requester = h,", "requester = z,"))

    def test_undeclared_goal_location(self):
        with pytest.raises(ScenarioError):
            parse_scenario(SIMPLE.replace("goal = p(c1,X)", "goal = p(c9,X)"))

    def test_variable_goal_location(self):
        with pytest.raises(ScenarioError):
            parse_scenario(SIMPLE.replace("goal = p(c1,X)", "goal = p(L,X)"))

    def test_undeclared_body_location(self):
        with pytest.raises(ScenarioError):
            parse_scenario(SIMPLE.replace("q(c1,X)", "q(c7,X)"))

    def test_unknown_config_key(self):
        with pytest.raises(ScenarioError):
            parse_scenario(SIMPLE.replace("seed = 4", "speed = 4"))

    def test_bad_id_mode(self):
        with pytest.raises(ScenarioError):
            parse_scenario(SIMPLE.replace("untraceable/fixed", "opaque"))

    def test_bad_address(self):
        with pytest.raises(ScenarioError):
            parse_scenario(SIMPLE.replace("127.0.0.1:9101", "nowhere"))

    def test_text_outside_sections(self):
        with pytest.raises(ScenarioError):
            parse_scenario("p(c1,a).\n" + SIMPLE)

    def test_missing_request(self):
        with pytest.raises(ScenarioError):
            parse_scenario(SIMPLE.split("[request]")[0])

    def test_with_goal_validates(self):
        with pytest.raises(ScenarioError):
            parse_scenario(SIMPLE).with_goal(parse_atom("p(c1,a)"), requester="nobody")


class TestYaml:
    def test_yaml_form(self):
        scenario = parse_scenario_yaml(YAML)
        assert scenario.names == ["h", "c1"]
        assert scenario.addresses() == {"c1": ("localhost", 9200)}
        assert scenario.config.scheduler is Scheduler.FIFO

    def test_invalid_yaml(self):
        with pytest.raises(ScenarioError):
            parse_scenario_yaml("principals: [unclosed")

    def test_top_level_must_be_mapping(self):
        with pytest.raises(ScenarioError):
            parse_scenario_yaml("- a\n- b\n")


class TestFiles:
    def test_load_by_suffix(self):
        with TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "tiny.yaml"
            path.write_text(YAML)
            scenario = load_scenario(path)
            assert scenario.name == "tiny"

    def test_missing_file(self):
        with pytest.raises(ScenarioError):
            load_scenario("/nonexistent/scenario.gem")

    def test_dump_round_trip(self):
        scenario = parse_scenario(SIMPLE, name="simple")
        again = parse_scenario(dump_scenario(scenario), name="simple")
        assert again == scenario

    @pytest.mark.parametrize("path", sorted(BUNDLED_DIR.glob("*.gem")), ids=lambda p: p.stem)
    def test_bundled_scenarios_load(self, path):
        assert isinstance(load_scenario(path), Scenario)

    def test_bundled_lookup(self):
        assert bundled("section_6_negation") == bundled("section_6_negation.gem")
        with pytest.raises(ScenarioError):
            bundled("no_such_scenario")
