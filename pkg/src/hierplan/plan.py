"""Plan pseudocode: parse, validate, normalize, and render skill call sequences.

The textual form is a numbered list of Python-like calls, e.g.::

    1. move_to('pillow', 'floor')
    2. pick_up('pillow', 'floor')
    3. done()

Parsing tolerates missing numbering, single or double quotes, arbitrary
whitespace, and comma or newline separators.  A trailing ``done()`` is folded
into ``Plan.terminated`` rather than stored as an action, so ``len(plan)``
counts real steps only.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from .skills import DONE, UNSPECIFIED, SkillRegistry

log = logging.getLogger(__name__)

# Only move_to may drop its location argument: the common single-argument
# call move_to('couch') means move_to('couch', 'unspecified').
_AUTOFILL_LOCATION_SKILL = "move_to"


class PlanError(ValueError):
    """Base class for plan parsing and rendering failures."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        super().__init__(message)
        self.line = line
        self.column = column


class EmptyInputError(PlanError):
    pass


class PlanSyntaxError(PlanError):
    pass


class UnknownSkillError(PlanError):
    def __init__(self, name: str, line: int):
        super().__init__(f"unknown skill {name!r} (line {line})", line=line)
        self.skill = name


class ArityMismatchError(PlanError):
    def __init__(self, skill: str, expected: int, got: int, line: int):
        super().__init__(
            f"{skill} takes {expected} argument(s), got {got} (line {line})", line=line
        )
        self.skill = skill
        self.expected = expected
        self.got = got


class InvalidPlanError(PlanError):
    pass


@dataclass(frozen=True)
class Action:
    """One grounded skill invocation with normalized arguments."""

    skill: str
    args: tuple[str, ...] = ()


@dataclass(frozen=True)
class Plan:
    """An ordered action sequence; ``terminated`` records a trailing done()."""

    actions: tuple[Action, ...] = ()
    terminated: bool = False

    def __len__(self) -> int:
        return len(self.actions)


def action(skill: str, *args: str) -> Action:
    """Build an Action with the same normalization the parser applies."""
    return Action(skill.strip().lower(), tuple(normalize_arg(a) for a in args))


def normalize_arg(raw: str) -> str:
    """Lowercase, trim, unquote, and collapse whitespace; idempotent."""
    s = raw.strip()
    while len(s) >= 2 and s[0] == s[-1] and s[0] in "'\"":
        s = s[1:-1].strip()
    return " ".join(s.lower().split())


@dataclass(frozen=True)
class PlanViolation:
    """One schema violation found by validate_plan."""

    kind: str
    message: str
    index: int


def validate_plan(plan: Plan, registry: SkillRegistry) -> list[PlanViolation]:
    """List every schema violation; an empty list means the plan is valid."""
    violations = []
    for i, act in enumerate(plan.actions):
        if act.skill == DONE:
            violations.append(
                PlanViolation("embedded_done", "done() belongs in the terminated flag, not in actions", i)
            )
            continue
        schema = registry.get(act.skill)
        if schema is None:
            violations.append(PlanViolation("unknown_skill", f"unknown skill {act.skill!r}", i))
            continue
        if len(act.args) != schema.arity:
            violations.append(
                PlanViolation(
                    "arity_mismatch",
                    f"{act.skill} takes {schema.arity} argument(s), got {len(act.args)}",
                    i,
                )
            )
        for arg in act.args:
            if not arg:
                violations.append(PlanViolation("empty_argument", f"{act.skill}: empty argument", i))
    return violations


_NUMBER_PREFIX = re.compile(r"\d+\s*[.)]\s*")
_CALL_HEAD = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_SEPARATORS = re.compile(r"[\s,]*")
_ANY_CALL = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\s*\(")


def _location(text: str, pos: int) -> tuple[int, int]:
    line = text.count("\n", 0, pos) + 1
    column = pos - text.rfind("\n", 0, pos)
    return line, column


def parse_plan(
    text: str,
    registry: SkillRegistry,
    warnings: list[str] | None = None,
) -> Plan:
    """Parse plan pseudocode into a Plan validated against ``registry``.

    Raises EmptyInputError, PlanSyntaxError, UnknownSkillError, or
    ArityMismatchError; every error carries its source location.  Trailing
    prose after the last action, or anything after done(), is skipped with a
    warning rather than rejected.
    """
    if not text.strip():
        raise EmptyInputError("empty plan text")

    def warn(message: str) -> None:
        log.warning("parse_plan: %s", message)
        if warnings is not None:
            warnings.append(message)

    actions: list[Action] = []
    terminated = False
    pos = _SEPARATORS.match(text).end()

    while pos < len(text):
        step_start = pos
        num = _NUMBER_PREFIX.match(text, pos)
        if num:
            pos = num.end()
        head = _CALL_HEAD.match(text, pos)
        open_paren = None
        if head:
            after = re.compile(r"\s*\(").match(text, head.end())
            if after:
                open_paren = after.end()
        if head is None or open_paren is None:
            line, column = _location(text, step_start)
            if actions and not _ANY_CALL.search(text, step_start):
                warn(f"ignored trailing text at line {line}: {text[step_start:].strip()[:60]!r}")
                break
            raise PlanSyntaxError(f"expected a skill call at {line}:{column}", line, column)

        skill_name = head.group(0).lower()
        args, pos = _parse_args(text, open_paren)
        line, _ = _location(text, step_start)

        if skill_name not in registry:
            raise UnknownSkillError(skill_name, line)
        schema = registry.get(skill_name)
        if skill_name == _AUTOFILL_LOCATION_SKILL and len(args) == schema.arity - 1:
            args = args + [UNSPECIFIED]
        if len(args) != schema.arity:
            raise ArityMismatchError(skill_name, schema.arity, len(args), line)

        if skill_name == DONE:
            terminated = True
            rest = text[_SEPARATORS.match(text, pos).end():]
            if rest.strip():
                warn(f"ignored content after done(): {rest.strip()[:60]!r}")
            break

        actions.append(Action(skill_name, tuple(args)))
        pos = _SEPARATORS.match(text, pos).end()

    return Plan(tuple(actions), terminated)


def _parse_args(text: str, pos: int) -> tuple[list[str], int]:
    """Parse a parenthesized argument list starting just after '('."""
    args: list[str] = []
    while True:
        ws = re.compile(r"\s*").match(text, pos)
        pos = ws.end()
        if pos >= len(text):
            line, column = _location(text, pos)
            raise PlanSyntaxError(f"unterminated argument list at {line}:{column}", line, column)
        ch = text[pos]
        if ch == ")":
            return args, pos + 1
        if args:
            if ch != ",":
                line, column = _location(text, pos)
                raise PlanSyntaxError(f"expected ',' or ')' at {line}:{column}", line, column)
            pos = re.compile(r"\s*").match(text, pos + 1).end()
            if pos < len(text) and text[pos] == ")":  # tolerate a trailing comma
                return args, pos + 1
            ch = text[pos] if pos < len(text) else ""
        if ch in "'\"":
            end = text.find(ch, pos + 1)
            if end < 0:
                line, column = _location(text, pos)
                raise PlanSyntaxError(f"unclosed quote at {line}:{column}", line, column)
            args.append(normalize_arg(text[pos + 1 : end]))
            pos = end + 1
        else:
            bare = re.compile(r"[^,()'\"\n]+").match(text, pos)
            if bare is None:
                line, column = _location(text, pos)
                raise PlanSyntaxError(f"expected an argument at {line}:{column}", line, column)
            args.append(normalize_arg(bare.group(0)))
            pos = bare.end()


def render_plan(plan: Plan, registry: SkillRegistry | None = None) -> str:
    """Render the canonical one-action-per-line form; parse(render(p)) == p."""
    if registry is not None:
        violations = validate_plan(plan, registry)
        if violations:
            raise InvalidPlanError("; ".join(v.message for v in violations))
    lines = []
    for i, act in enumerate(plan.actions, start=1):
        rendered_args = ", ".join(_quote(arg) for arg in act.args)
        lines.append(f"{i}. {act.skill}({rendered_args})")
    if plan.terminated:
        lines.append(f"{len(plan.actions) + 1}. done()")
    return "\n".join(lines)


def _quote(arg: str) -> str:
    # canonical form is single-quoted; fall back to double quotes for args
    # that themselves contain an apostrophe (parseable either way)
    if "\n" in arg:
        raise InvalidPlanError(f"argument not renderable: {arg!r}")
    if "'" not in arg:
        return f"'{arg}'"
    if '"' not in arg:
        return f'"{arg}"'
    raise InvalidPlanError(f"argument not renderable: {arg!r}")
