"""The four planning agents (decomposer, step planner, feedback, feasibility)
and the pipeline that chains them over a simulated world."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable

from .gateway import ChatRequest, GatewayError, Message
from .grounding import DEFAULT_THRESHOLD, GroundingDecision, ground_plan
from .plan import Plan, PlanError, parse_plan, render_plan
from .similarity import ngram_cosine
from .skills import SkillRegistry, default_registry
from .taskgen import TaskInstance
from .world import WorldState, execute_plan, goal_satisfied, list_objects

HLP = "hlp"
LLP = "llp"
FEEDBACK = "feedback"
FEASIBILITY = "feasibility"

LLP_EXEMPLAR_COUNT = 5
NO_FEEDBACK = "none"


class PoolTooSmall(ValueError):
    pass


class EmptyDecomposition(RuntimeError):
    pass


@dataclass(frozen=True)
class Exemplar:
    id: int
    input: str
    output: str
    tags: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AgentProfile:
    """An agent's system description, in-context exemplar pool, and templates."""

    name: str
    profile_text: str
    exemplar_template: str
    query_template: str
    exemplars: tuple[Exemplar, ...]
    query_template_with_objects: str | None = None
    tools: tuple[str, ...] = ()


def _profile_from_dict(doc: dict) -> AgentProfile:
    exemplars = tuple(
        Exemplar(id=e["id"], input=e["input"], output=e["output"], tags=e.get("tags", {}))
        for e in doc["exemplars"]
    )
    return AgentProfile(
        name=doc["agent"],
        profile_text=doc["profile"],
        exemplar_template=doc["exemplar_template"],
        query_template=doc["query_template"],
        exemplars=exemplars,
        query_template_with_objects=doc.get("query_template_with_objects"),
        tools=tuple(doc.get("tools", ())),
    )


@lru_cache(maxsize=None)
def _packaged_profile(name: str) -> AgentProfile:
    text = resources.files("hierplan.data.prompts").joinpath(f"{name}.json").read_text("utf-8")
    return _profile_from_dict(json.loads(text))


def load_profile(name: str, path: str | Path | None = None) -> AgentProfile:
    """Load an agent profile; None loads the packaged default for ``name``."""
    if path is None:
        return _packaged_profile(name)
    return _profile_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def select_exemplars(query: str, pool, k: int, scorer=None) -> list[Exemplar]:
    """Top-k pool entries by scorer, descending; ties break to the lower id.

    With scorer=None the first k pool entries are returned unchanged (the
    fixed, manually ordered prompt mode).
    """
    pool = list(pool)
    if k > len(pool):
        raise PoolTooSmall(f"need {k} exemplars, pool has {len(pool)}")
    if scorer is None:
        return pool[:k]
    return sorted(pool, key=lambda e: (-scorer(query, e.input), e.id))[:k]


def _query_block(profile: AgentProfile, instruction: str, objects: list[str] | None = None) -> str:
    if objects:
        if profile.query_template_with_objects is None:
            raise ValueError(f"profile {profile.name!r} has no objects-aware query template")
        return profile.query_template_with_objects.format(
            instruction=instruction, objects=", ".join(objects)
        )
    return profile.query_template.format(instruction=instruction)


def build_messages(
    profile: AgentProfile,
    instruction: str,
    exemplars,
    objects: list[str] | None = None,
) -> tuple[Message, ...]:
    """Assemble the deterministic two-message prompt for one agent call."""
    blocks = [profile.exemplar_template.format(input=e.input, output=e.output) for e in exemplars]
    blocks.append(_query_block(profile, instruction, objects))
    return (Message("system", profile.profile_text), Message("user", "\n\n".join(blocks)))


def hlp_query_block(instruction: str, objects: list[str] | None = None, profile: AgentProfile | None = None) -> str:
    return _query_block(profile or load_profile(HLP), instruction, objects)


def llp_query_block(subtask: str, profile: AgentProfile | None = None) -> str:
    return _query_block(profile or load_profile(LLP), subtask)


def feedback_query_block(instruction: str, profile: AgentProfile | None = None) -> str:
    return _query_block(profile or load_profile(FEEDBACK), instruction)


def feasibility_query_block(instruction: str, profile: AgentProfile | None = None) -> str:
    return _query_block(profile or load_profile(FEASIBILITY), instruction)


def _ask(
    backend,
    agent: str,
    messages: tuple[Message, ...],
    calls: list | None,
    decoding: dict | None = None,
) -> str:
    request = ChatRequest(messages=messages, **(decoding or {}))
    response = backend.complete(request)
    if calls is not None:
        calls.append({"agent": agent, "prompt": request.prompt_text(), "completion": response.content})
    return response.content


_ITEM_PREFIX = re.compile(r"^\s*(?:\d+\s*[.)]\s*|[-*]\s+)")


def _numbered_items(text: str) -> list[str]:
    items = []
    for line in text.splitlines():
        stripped = _ITEM_PREFIX.sub("", line).strip()
        if stripped:
            items.append(stripped)
    return items


def hlp_decompose(
    instruction: str,
    backend,
    feedback_objects: list[str] | None = None,
    profile: AgentProfile | None = None,
    calls: list | None = None,
    decoding: dict | None = None,
) -> list[str]:
    """Split an instruction into unambiguous sub-task sentences."""
    if not instruction.strip():
        raise ValueError("instruction must be non-empty")
    profile = profile or load_profile(HLP)
    messages = build_messages(profile, instruction, profile.exemplars, objects=feedback_objects)
    completion = _ask(backend, HLP, messages, calls, decoding)
    subtasks = _numbered_items(completion)
    if not subtasks:
        raise EmptyDecomposition(f"no sub-tasks parsed from {completion!r}")
    return subtasks


def feedback_query(
    instruction: str,
    backend,
    profile: AgentProfile | None = None,
    calls: list | None = None,
    decoding: dict | None = None,
) -> str | None:
    """The noun phrase to look up in the environment memory, or None."""
    profile = profile or load_profile(FEEDBACK)
    messages = build_messages(profile, instruction, profile.exemplars)
    completion = _ask(backend, FEEDBACK, messages, calls, decoding).strip()
    query = completion.splitlines()[0].strip().strip(".") if completion else ""
    if not query or query.lower() == NO_FEEDBACK:
        return None
    return query


def check_feasibility(
    instruction: str,
    backend,
    profile: AgentProfile | None = None,
    calls: list | None = None,
    decoding: dict | None = None,
) -> bool:
    """True for a Feasible verdict; unparseable verdicts fail safe to False."""
    profile = profile or load_profile(FEASIBILITY)
    messages = build_messages(profile, instruction, profile.exemplars)
    completion = _ask(backend, FEASIBILITY, messages, calls, decoding).strip().lower()
    if "not feasible" in completion or "infeasible" in completion:
        return False
    if "feasible" in completion:
        return True
    return False


@dataclass(frozen=True)
class GroundingVocab:
    objects: tuple[str, ...]
    locations: tuple[str, ...]


def world_vocab(state: WorldState) -> GroundingVocab:
    names: list[str] = []
    for obj in state.objects:
        if obj.attributed not in names:
            names.append(obj.attributed)
    names.extend(obj.name for obj in state.objects)
    return GroundingVocab(objects=tuple(names), locations=tuple(state.locations))


@dataclass
class LlpResult:
    subtask: str
    plan: Plan
    raw: str
    parse_ok: bool
    error: str | None = None
    decisions: list[GroundingDecision] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "subtask": self.subtask,
            "plan": render_plan(self.plan),
            "raw": self.raw,
            "parse_ok": self.parse_ok,
            "error": self.error,
            "grounding": [
                {"original": d.original, "chosen": d.chosen, "score": d.score, "accepted": d.accepted}
                for d in self.decisions
            ],
            "warnings": self.warnings,
        }


def llp_plan(
    subtask: str,
    backend,
    registry: SkillRegistry | None = None,
    vocab: GroundingVocab | None = None,
    profile: AgentProfile | None = None,
    scorer=ngram_cosine,
    k: int = LLP_EXEMPLAR_COUNT,
    threshold: float = DEFAULT_THRESHOLD,
    embedder=None,
    calls: list | None = None,
    decoding: dict | None = None,
) -> LlpResult:
    """Plan one sub-task: prompt with the k most similar exemplars, parse the
    completion, and ground arguments against the world vocabulary if given.

    Parse failures yield an empty plan with parse_ok=False rather than an
    exception; the raw completion is always preserved.
    """
    if not subtask.strip():
        raise ValueError("subtask must be non-empty")
    profile = profile or load_profile(LLP)
    registry = registry or default_registry()
    exemplars = select_exemplars(subtask, profile.exemplars, k, scorer)
    messages = build_messages(profile, subtask, exemplars)
    completion = _ask(backend, LLP, messages, calls, decoding)

    warnings: list[str] = []
    try:
        plan = parse_plan(completion, registry, warnings=warnings)
        parse_ok, error = True, None
    except PlanError as exc:
        return LlpResult(subtask, Plan(), completion, False, error=str(exc), warnings=warnings)

    decisions: list[GroundingDecision] = []
    if vocab is not None:
        plan, decisions = ground_plan(
            plan, vocab.objects, vocab.locations,
            embedder=embedder, threshold=threshold, registry=registry,
        )
    return LlpResult(subtask, plan, completion, parse_ok, error=error, decisions=decisions, warnings=warnings)


MODE_HELP = "help"
MODE_LLP_ONLY = "llp_only"


@dataclass
class PipelineConfig:
    mode: str = MODE_HELP
    selection: str = "similarity"          # or "fixed"
    grounding: bool = True
    threshold: float = DEFAULT_THRESHOLD
    feasibility_check: bool = True
    execute: bool = True
    registry: SkillRegistry | None = None
    scorer: Callable[[str, str], float] | None = None   # None -> ngram_cosine
    embedder: Callable | None = None
    decoding: dict = field(default_factory=dict)        # ChatRequest overrides

    def __post_init__(self) -> None:
        if self.mode not in (MODE_HELP, MODE_LLP_ONLY):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.selection not in ("similarity", "fixed"):
            raise ValueError(f"unknown selection {self.selection!r}")


@dataclass
class PipelineTrace:
    """Everything one pipeline run saw and decided, in order."""

    instruction: str
    mode: str
    task_id: str | None = None
    feasible: bool | None = None
    feedback_query: str | None = None
    feedback_objects: list[str] | None = None
    subtasks: list[str] = field(default_factory=list)
    llp: list[dict] = field(default_factory=list)
    final_plan: str | None = None
    parse_ok: bool = False
    calls: list[dict] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    execution: dict | None = None
    backend: str = ""

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "instruction": self.instruction,
            "mode": self.mode,
            "feasible": self.feasible,
            "feedback_query": self.feedback_query,
            "feedback_objects": self.feedback_objects,
            "subtasks": self.subtasks,
            "llp": self.llp,
            "final_plan": self.final_plan,
            "parse_ok": self.parse_ok,
            "calls": self.calls,
            "errors": self.errors,
            "execution": self.execution,
            "backend": self.backend,
        }


def run_pipeline(
    instruction: str,
    world: WorldState,
    backend,
    config: PipelineConfig | None = None,
    task: TaskInstance | None = None,
    profiles: dict[str, AgentProfile] | None = None,
) -> PipelineTrace:
    """Feasibility -> feedback -> decompose -> per-sub-task planning ->
    concatenation, with optional execution against the world.

    Stage errors are recorded in the trace and yield a partial trace instead
    of an exception.
    """
    config = config or PipelineConfig()
    profiles = profiles or {}
    registry = config.registry or default_registry()
    identity = getattr(backend, "identity", backend.__class__.__name__)
    trace = PipelineTrace(
        instruction=instruction,
        mode=config.mode,
        task_id=task.id if task is not None else None,
        backend=identity,
    )
    scorer = (config.scorer or ngram_cosine) if config.selection == "similarity" else None

    if config.mode == MODE_LLP_ONLY:
        trace.subtasks = [instruction]
    else:
        if config.feasibility_check:
            try:
                trace.feasible = check_feasibility(
                    instruction, backend, profile=profiles.get(FEASIBILITY),
                    calls=trace.calls, decoding=config.decoding,
                )
            except GatewayError as exc:
                trace.errors.append(f"feasibility: {exc}")
                return trace
            if not trace.feasible:
                return trace

        try:
            trace.feedback_query = feedback_query(
                instruction, backend, profile=profiles.get(FEEDBACK),
                calls=trace.calls, decoding=config.decoding,
            )
        except GatewayError as exc:
            trace.errors.append(f"feedback: {exc}")
        if trace.feedback_query:
            trace.feedback_objects = [o.name for o in list_objects(world, trace.feedback_query)]

        try:
            trace.subtasks = hlp_decompose(
                instruction,
                backend,
                feedback_objects=trace.feedback_objects or None,
                profile=profiles.get(HLP),
                calls=trace.calls,
                decoding=config.decoding,
            )
        except (GatewayError, EmptyDecomposition) as exc:
            trace.errors.append(f"hlp: {exc}")
            return trace

    vocab = world_vocab(world) if config.grounding else None
    actions: list = []
    parse_ok = bool(trace.subtasks)
    for subtask in trace.subtasks:
        try:
            result = llp_plan(
                subtask,
                backend,
                registry=registry,
                vocab=vocab,
                profile=profiles.get(LLP),
                scorer=scorer,
                threshold=config.threshold,
                embedder=config.embedder,
                calls=trace.calls,
                decoding=config.decoding,
            )
        except GatewayError as exc:
            trace.errors.append(f"llp[{subtask!r}]: {exc}")
            result = LlpResult(subtask, Plan(), "", False, error=str(exc))
        trace.llp.append(result.to_dict())
        parse_ok = parse_ok and result.parse_ok
        actions.extend(result.plan.actions)

    # One terminator for the whole concatenated plan; per-sub-task done()
    # markers were already folded away by the parser.
    final = Plan(tuple(actions), terminated=True)
    trace.final_plan = render_plan(final)
    trace.parse_ok = parse_ok

    if config.execute and task is not None:
        outcome = execute_plan(world, final, registry)
        execution = outcome.to_dict()
        execution["goal_satisfied"] = goal_satisfied(outcome.final_state, task)
        trace.execution = execution
    return trace
