"""Deterministic household world: object store, skill execution, goal checking.

There is no geometry here; navigation succeeds by name resolution, and the
object store doubles as the long-term memory that feedback queries consult.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field, replace

from .plan import Action, Plan
from .skills import DONE, UNSPECIFIED, SkillRegistry, default_registry
from .taskgen import TaskInstance, VocabBank, base_name, load_bank

START = "start"


class VocabMismatch(ValueError):
    pass


class ActionError(Exception):
    """A violated skill precondition; ``code`` names the violation."""

    code = "ActionError"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message

    @property
    def reason(self) -> str:
        return f"{self.code}: {self.message}"


class HandFull(ActionError):
    code = "HandFull"


class HandEmpty(ActionError):
    code = "HandEmpty"


class ObjectNotHere(ActionError):
    code = "ObjectNotHere"


class NoSuchObject(ActionError):
    code = "NoSuchObject"


class NoSuchLocation(ActionError):
    code = "NoSuchLocation"


@dataclass(frozen=True)
class ObjectInstance:
    name: str                      # unique, e.g. "green apple_1"
    attributed: str                # full referenced name, e.g. "green apple"
    base: str                      # base type, e.g. "apple"
    attributes: tuple[str, ...]
    location: str | None           # None while held


@dataclass(frozen=True)
class WorldState:
    locations: tuple[str, ...]
    objects: tuple[ObjectInstance, ...]
    robot_at: str = START
    holding: str | None = None     # instance name
    collectives: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExecOutcome:
    success: bool
    steps_executed: int
    failure: tuple[int, str] | None
    final_state: WorldState

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "steps_executed": self.steps_executed,
            "failure": None if self.failure is None else {"step": self.failure[0], "reason": self.failure[1]},
        }


@dataclass(frozen=True)
class FailureInjection:
    """Optional stochastic gripper drop after a successful pick."""

    drop_prob: float
    seed: int = 0


def make_instance(attributed: str, index: int, location: str | None) -> ObjectInstance:
    words = attributed.split()
    return ObjectInstance(
        name=f"{attributed}_{index}",
        attributed=attributed,
        base=words[-1] if words else attributed,
        attributes=tuple(words[:-1]),
        location=location,
    )


def init_world(task: TaskInstance, bank: VocabBank | None = None) -> WorldState:
    """Instantiate the world a task's metadata describes; deterministic.

    Objects whose placement is unstated (location null) land at a location
    drawn from the task's world_seed, so reruns agree byte-for-byte.
    """
    bank = bank or load_bank()
    placements = task.metadata.get("objects", [])
    known_objects = set(bank.objects)
    rng = random.Random(task.world_seed)
    counts: dict[str, int] = {}
    instances = []
    for entry in placements:
        name, location = entry["name"], entry.get("location")
        if name not in known_objects:
            raise VocabMismatch(f"task {task.id}: unknown object {name!r}")
        if location is None:
            location = rng.choice(bank.locations)
        elif location not in bank.locations:
            raise VocabMismatch(f"task {task.id}: unknown location {location!r}")
        counts[name] = counts.get(name, 0) + 1
        instances.append(make_instance(name, counts[name], location))
    return WorldState(
        locations=tuple(bank.locations),
        objects=tuple(instances),
        collectives={k: tuple(v) for k, v in bank.collectives.items()},
    )


def _matches(instance: ObjectInstance, query: str, collectives: dict) -> bool:
    if query in (instance.name, instance.attributed, instance.base):
        return True
    members = collectives.get(query)
    if members and (instance.attributed in members or instance.base in {base_name(m) for m in members}):
        return True
    return False


def list_objects(state: WorldState, query: str | None = None) -> list[ObjectInstance]:
    """Inventory lookup in deterministic (insertion) order."""
    if query is None:
        return list(state.objects)
    q = query.strip().lower()
    return [o for o in state.objects if _matches(o, q, state.collectives)]


def _resolve(state: WorldState, name: str, at: str | None = None) -> ObjectInstance | None:
    """First matching instance, preferring exact over attributed over base matches."""
    pool = [o for o in state.objects if at is None or o.location == at]
    for tier in (
        lambda o: o.name == name,
        lambda o: o.attributed == name,
        lambda o: o.base == name,
        lambda o: _matches(o, name, state.collectives),
    ):
        for instance in pool:
            if tier(instance):
                return instance
    return None


def _require_location(state: WorldState, name: str) -> str:
    if name not in state.locations:
        raise NoSuchLocation(f"no location named {name!r}")
    return name


def execute_action(state: WorldState, act: Action, registry: SkillRegistry | None = None) -> WorldState:
    """Apply one action, returning the new state; raises ActionError on a
    violated precondition."""
    registry = registry or default_registry()
    schema = registry.get(act.skill)
    if schema is None or len(act.args) != schema.arity:
        raise ValueError(f"action {act.skill}/{len(act.args)} does not validate against the registry")

    if act.skill == DONE:
        return state
    if act.skill == "move_to":
        return _move_to(state, *act.args)
    if act.skill == "pick_up":
        return _pick_up(state, *act.args)
    if act.skill == "put":
        return _put(state, *act.args)
    raise ValueError(f"skill {act.skill!r} has no execution semantics")


def _move_to(state: WorldState, obj: str, loc: str) -> WorldState:
    if obj in state.locations:
        return replace(state, robot_at=obj)
    instance = _resolve(state, obj)
    if instance is not None:
        if instance.location is None:  # held: navigate to the stated destination
            if loc == UNSPECIFIED:
                return state
            return replace(state, robot_at=_require_location(state, loc))
        if loc == UNSPECIFIED:
            return replace(state, robot_at=instance.location)
        return replace(state, robot_at=_require_location(state, loc))
    if loc != UNSPECIFIED and loc in state.locations:
        return replace(state, robot_at=loc)
    raise NoSuchObject(f"no object named {obj!r}")


def _pick_up(state: WorldState, obj: str, loc: str) -> WorldState:
    if loc != UNSPECIFIED:
        _require_location(state, loc)
    if state.holding is not None:
        raise HandFull(f"already holding {state.holding!r}")
    instance = _resolve(state, obj, at=state.robot_at)
    if instance is None:
        if _resolve(state, obj) is None:
            raise NoSuchObject(f"no object named {obj!r}")
        raise ObjectNotHere(f"{obj!r} is not at {state.robot_at!r}")
    objects = tuple(
        replace(o, location=None) if o.name == instance.name else o for o in state.objects
    )
    return replace(state, objects=objects, holding=instance.name)


def _put(state: WorldState, obj: str, loc: str) -> WorldState:
    if state.holding is None:
        raise HandEmpty("nothing is held")
    held = next(o for o in state.objects if o.name == state.holding)
    if obj not in (held.name, held.attributed, held.base):
        raise ObjectNotHere(f"holding {held.attributed!r}, not {obj!r}")
    if loc == UNSPECIFIED:
        dest = state.robot_at
        if dest not in state.locations:
            raise NoSuchLocation(f"robot is at {dest!r}, which is not a place to put things")
    else:
        dest = _require_location(state, loc)
    if state.robot_at != dest:
        raise ObjectNotHere(f"robot is at {state.robot_at!r}, not at {dest!r}")
    objects = tuple(
        replace(o, location=dest) if o.name == held.name else o for o in state.objects
    )
    return replace(state, objects=objects, holding=None)


def execute_plan(
    state: WorldState,
    plan: Plan,
    registry: SkillRegistry | None = None,
    trace: list | None = None,
    failure_injection: FailureInjection | None = None,
) -> ExecOutcome:
    """Run a plan to completion or to its first failure; no recovery."""
    registry = registry or default_registry()
    rng = random.Random(failure_injection.seed) if failure_injection else None
    current = state
    for i, act in enumerate(plan.actions, start=1):  # steps are 1-based, like rendered lines
        pre_hash = state_hash(current)
        try:
            nxt = execute_action(current, act, registry)
            if (
                failure_injection is not None
                and act.skill == "pick_up"
                and rng.random() < failure_injection.drop_prob
            ):
                # The grasped object slips back to where the robot stands.
                dropped = nxt.holding
                objects = tuple(
                    replace(o, location=nxt.robot_at) if o.name == dropped else o for o in nxt.objects
                )
                current = replace(nxt, objects=objects, holding=None)
                reason = f"DropFailure: {dropped!r} slipped from the gripper"
                _trace_step(trace, i, act, pre_hash, reason)
                return ExecOutcome(False, i - 1, (i, reason), current)
            current = nxt
            _trace_step(trace, i, act, pre_hash, "ok")
        except ActionError as exc:
            _trace_step(trace, i, act, pre_hash, exc.reason)
            return ExecOutcome(False, i - 1, (i, exc.reason), current)
    return ExecOutcome(True, len(plan.actions), None, current)


def _trace_step(trace: list | None, step: int, act: Action, pre_hash: str, result: str) -> None:
    if trace is not None:
        args = ", ".join(f"'{a}'" for a in act.args)
        trace.append({"step": step, "action": f"{act.skill}({args})", "pre_state": pre_hash, "result": result})


def goal_satisfied(state: WorldState, task: TaskInstance) -> bool:
    """True iff every designated object rests at (or is held per) its goal."""
    goal = task.metadata.get("goal")
    if not goal:
        return False
    for name, dest in goal.get("placements", []):
        placed = [o for o in state.objects if o.location == dest]
        if not any(name in (o.name, o.attributed, o.base) for o in placed):
            return False
    want_held = goal.get("holding")
    if want_held is not None:
        if state.holding is None:
            return False
        held = next(o for o in state.objects if o.name == state.holding)
        if want_held not in (held.name, held.attributed, held.base):
            return False
    return True


def snapshot(state: WorldState) -> dict:
    return {
        "locations": list(state.locations),
        "objects": [
            {
                "name": o.name,
                "attributed": o.attributed,
                "base": o.base,
                "attributes": list(o.attributes),
                "location": o.location,
            }
            for o in state.objects
        ],
        "robot_at": state.robot_at,
        "holding": state.holding,
    }


def state_hash(state: WorldState) -> str:
    text = json.dumps(snapshot(state), sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
