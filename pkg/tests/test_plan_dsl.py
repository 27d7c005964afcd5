from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hierplan.plan import (
    Action,
    ArityMismatchError,
    EmptyInputError,
    InvalidPlanError,
    Plan,
    PlanSyntaxError,
    UnknownSkillError,
    action,
    normalize_arg,
    parse_plan,
    render_plan,
    validate_plan,
)

PILLOW_OUTPUT = (
    "1. move_to('pillow', 'floor'), 2. pick_up('pillow', 'floor'), "
    "3. move_to('couch'), 4. put('pillow', 'couch'), 5. done()"
)

PILLOW_PLAN = Plan(
    (
        Action("move_to", ("pillow", "floor")),
        Action("pick_up", ("pillow", "floor")),
        Action("move_to", ("couch", "unspecified")),
        Action("put", ("pillow", "couch")),
    ),
    terminated=True,
)


class TestParse:
    def test_pillow_one_liner(self, registry):
        assert parse_plan(PILLOW_OUTPUT, registry) == PILLOW_PLAN

    def test_single_arg_move_to_autofills_location(self, registry):
        plan = parse_plan("1. move_to('couch')", registry)
        assert plan.actions == (Action("move_to", ("couch", "unspecified")),)

    def test_empty_input(self, registry):
        with pytest.raises(EmptyInputError):
            parse_plan("   \n ", registry)

    def test_case_quotes_and_spacing(self, registry):
        plan = parse_plan("1. MOVE_TO( \"Red Cup\" , 'table' )\n2. done( )", registry)
        assert plan == Plan((Action("move_to", ("red cup", "table")),), terminated=True)

    def test_double_quoted_robot_demo_plan(self, registry):
        text = (
            '1. move_to("toy cube", "unspecified"), 2. pick_up("toy cube", "unspecified"), '
            '3. move_to("toy cube", "white box"), 4. put("toy cube", "white box")'
        )
        plan = parse_plan(text, registry)
        assert [a.skill for a in plan.actions] == ["move_to", "pick_up", "move_to", "put"]
        assert plan.actions[2].args == ("toy cube", "white box")
        assert not plan.terminated

    def test_numbering_is_semantically_ignored(self, registry):
        base = "1. pick_up('apple', 'table')\n2. move_to('couch')"
        permuted = "7) pick_up('apple', 'table')\n3. move_to('couch')"
        bare = "pick_up('apple', 'table'), move_to('couch')"
        assert parse_plan(base, registry) == parse_plan(permuted, registry) == parse_plan(bare, registry)

    def test_newline_and_comma_separators_equivalent(self, registry):
        commas = "move_to('a', 'floor'), pick_up('a', 'floor')"
        lines = "move_to('a', 'floor')\npick_up('a', 'floor')"
        assert parse_plan(commas, registry) == parse_plan(lines, registry)

    def test_bare_arguments(self, registry):
        plan = parse_plan("move_to(green apple, floor)", registry)
        assert plan.actions[0].args == ("green apple", "floor")

    def test_unknown_skill_reports_line(self, registry):
        with pytest.raises(UnknownSkillError) as err:
            parse_plan("1. move_to('a', 'b')\n2. slice('a')", registry)
        assert err.value.skill == "slice"
        assert err.value.line == 2

    def test_arity_mismatch_reports_details(self, registry):
        with pytest.raises(ArityMismatchError) as err:
            parse_plan("put('pillow')", registry)
        assert (err.value.skill, err.value.expected, err.value.got) == ("put", 2, 1)

    def test_syntax_error_has_location(self, registry):
        with pytest.raises(PlanSyntaxError) as err:
            parse_plan("hello there", registry)
        assert (err.value.line, err.value.column) == (1, 1)

    def test_unclosed_quote(self, registry):
        with pytest.raises(PlanSyntaxError):
            parse_plan("move_to('a, 'b')" + "\n", registry)

    def test_unterminated_arg_list(self, registry):
        with pytest.raises(PlanSyntaxError):
            parse_plan("move_to('a', 'b'", registry)

    def test_junk_between_actions_is_an_error(self, registry):
        with pytest.raises(PlanSyntaxError):
            parse_plan("move_to('a', 'b') because reasons pick_up('a', 'b')", registry)

    def test_trailing_prose_is_warned_not_fatal(self, registry):
        warnings: list[str] = []
        plan = parse_plan("1. move_to('a', 'b')\nHope this helps!", registry, warnings=warnings)
        assert len(plan.actions) == 1
        assert warnings and "trailing" in warnings[0]

    def test_content_after_done_is_warned_and_dropped(self, registry):
        warnings: list[str] = []
        plan = parse_plan("1. done()\n2. pick_up('a', 'b')", registry, warnings=warnings)
        assert plan == Plan((), terminated=True)
        assert warnings

    def test_done_with_arguments_is_arity_error(self, registry):
        with pytest.raises(ArityMismatchError):
            parse_plan("done('now')", registry)


class TestNormalizeArg:
    @pytest.mark.parametrize(
        "raw,expected",
        [
            (" 'Green Apple' ", "green apple"),
            ("unspecified", "unspecified"),
            ("TOY cube", "toy cube"),
            ('"  double  spaced "', "double spaced"),
            ("''nested''", "nested"),
            ("", ""),
        ],
    )
    def test_examples(self, raw, expected):
        assert normalize_arg(raw) == expected

    @given(st.text(max_size=30))
    def test_idempotent(self, raw):
        once = normalize_arg(raw)
        assert normalize_arg(once) == once


class TestRender:
    def test_single_action(self):
        assert render_plan(Plan((Action("pick_up", ("apple", "table")),))) == "1. pick_up('apple', 'table')"

    def test_terminator_only(self):
        assert render_plan(Plan((), terminated=True)) == "1. done()"

    def test_pillow_round_trip_is_five_lines(self, registry):
        text = render_plan(PILLOW_PLAN, registry)
        lines = text.splitlines()
        assert len(lines) == 5
        assert lines[-1] == "5. done()"
        assert parse_plan(text, registry) == PILLOW_PLAN

    def test_render_validates_against_registry(self, registry):
        bad = Plan((Action("slice", ("apple",)),))
        with pytest.raises(InvalidPlanError):
            render_plan(bad, registry)

    def test_apostrophe_argument_falls_back_to_double_quotes(self, registry):
        plan = Plan((Action("put", ("teacher's mug", "table")),))
        text = render_plan(plan)
        assert '"teacher\'s mug"' in text
        assert parse_plan(text, registry) == plan

    def test_unrenderable_argument(self):
        with pytest.raises(InvalidPlanError):
            render_plan(Plan((Action("put", ("both'\"quotes", "table")),)))
        with pytest.raises(InvalidPlanError):
            render_plan(Plan((Action("put", ("line\nbreak", "table")),)))


class TestValidate:
    def test_pillow_plan_is_valid(self, registry):
        assert validate_plan(PILLOW_PLAN, registry) == []

    def test_unknown_skill_in_default_registry(self, registry):
        report = validate_plan(Plan((Action("slice", ("apple",)),)), registry)
        assert [v.kind for v in report] == ["unknown_skill"]

    def test_slice_is_valid_in_extended_registry(self, alfred):
        assert validate_plan(Plan((Action("slice", ("apple",)),)), alfred) == []

    def test_arity_and_empty_arg_violations(self, registry):
        plan = Plan((Action("move_to", ("a",)), Action("put", ("", "table"))))
        kinds = sorted(v.kind for v in validate_plan(plan, registry))
        assert kinds == ["arity_mismatch", "empty_argument"]

    def test_embedded_done_flagged(self, registry):
        plan = Plan((Action("done", ()),), terminated=True)
        assert [v.kind for v in validate_plan(plan, registry)] == ["embedded_done"]


SAFE_ARG = st.text(alphabet="abcdefghijklmnopqrstuvwxyz0123456789_ ", min_size=1, max_size=12).map(
    lambda s: " ".join(s.split())
).filter(bool)


@st.composite
def plans(draw, registry):
    skills = [s for s in registry if s.name != "done"]
    n = draw(st.integers(min_value=0, max_value=8))
    actions = []
    for _ in range(n):
        schema = draw(st.sampled_from(skills))
        args = tuple(draw(SAFE_ARG) for _ in range(schema.arity))
        actions.append(Action(schema.name, args))
    terminated = draw(st.booleans())
    if not actions and not terminated:
        terminated = True  # an empty, unterminated plan renders to nothing
    return Plan(tuple(actions), terminated)


class TestRoundTrip:
    @settings(max_examples=300, deadline=None)
    @given(data=st.data())
    def test_parse_render_round_trip(self, data, registry):
        plan = data.draw(plans(registry))
        assert parse_plan(render_plan(plan), registry) == plan

    def test_action_factory_normalizes(self):
        assert action("Move_To", " 'Couch' ", "UNSPECIFIED") == Action("move_to", ("couch", "unspecified"))
