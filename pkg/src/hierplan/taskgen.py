"""Seeded template-based generation of instruction datasets with ground-truth plans."""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .plan import Plan, action, parse_plan, render_plan
from .seeding import derive_seed, rng_for
from .skills import UNSPECIFIED, default_registry

PICK = "Pick"
PICK_PLACE = "PickPlace"
PICK_PLACE2 = "PickPlace2"
COMPOSITE = "Composite"
AMBIGUOUS = "Ambiguous"
FEASIBLE = "FeasibilityPositive"
INFEASIBLE = "FeasibilityNegative"

CORE_CLASSES = (PICK, PICK_PLACE, PICK_PLACE2)
LONG_HORIZON_LENGTHS = (2, 4, 6, 8, 10, 12, 14, 16)

# Locations you put things *in* rather than *on*; used for surface phrasing only.
_IN_LOCATIONS = {"drawer", "closet", "white box"}


class BankInvalid(ValueError):
    pass


class UnreachableLength(ValueError):
    pass


@dataclass(frozen=True)
class Template:
    id: str
    task_class: str
    text: str
    has_src: bool = True
    has_src2: bool = True
    shared_dst: bool = False


@dataclass(frozen=True)
class VocabBank:
    """Instruction templates plus the object/location vocabulary they draw from."""

    templates: tuple[Template, ...]
    objects: tuple[str, ...]
    locations: tuple[str, ...]
    collectives: dict[str, tuple[str, ...]]
    declared_counts: dict[str, int]
    source_text: str = ""

    def validate(self) -> None:
        declared = self.declared_counts
        actual = {
            "templates": len(self.templates),
            "objects": len(self.objects),
            "locations": len(self.locations),
        }
        for key, want in declared.items():
            if actual.get(key) != want:
                raise BankInvalid(f"bank declares {want} {key}, found {actual.get(key)}")
        if len(set(self.objects)) != len(self.objects):
            raise BankInvalid("duplicate object names")
        if len(set(self.locations)) != len(self.locations):
            raise BankInvalid("duplicate location names")
        if set(self.objects) & set(self.locations):
            raise BankInvalid("objects and locations must not overlap")
        for noun, members in self.collectives.items():
            missing = [m for m in members if m not in self.objects]
            if missing:
                raise BankInvalid(f"collective {noun!r} has unknown members {missing}")
        for template in self.templates:
            if "{collective}" in template.text and not self.collectives:
                raise BankInvalid("collective template with no collectives declared")

    def templates_for(self, task_class: str) -> list[Template]:
        return [t for t in self.templates if t.task_class == task_class]

    def sha256(self) -> str:
        return hashlib.sha256(self.source_text.encode("utf-8")).hexdigest()


def bank_from_dict(doc: dict, source_text: str = "") -> VocabBank:
    try:
        templates = tuple(
            Template(
                id=entry["id"],
                task_class=entry["task_class"],
                text=entry["text"],
                has_src=entry.get("has_src", True),
                has_src2=entry.get("has_src2", True),
                shared_dst=entry.get("shared_dst", False),
            )
            for entry in doc["templates"]
        )
        bank = VocabBank(
            templates=templates,
            objects=tuple(doc["objects"]),
            locations=tuple(doc["locations"]),
            collectives={k: tuple(v) for k, v in doc["collectives"].items()},
            declared_counts=dict(doc.get("declared_counts", {})),
            source_text=source_text or json.dumps(doc, sort_keys=True),
        )
    except (KeyError, TypeError) as exc:
        raise BankInvalid(f"malformed bank document: {exc}") from exc
    bank.validate()
    return bank


def load_bank(path: str | Path | None = None) -> VocabBank:
    """Load a vocabulary bank; None loads the packaged default."""
    if path is None:
        text = resources.files("hierplan.data.vocab").joinpath("bank.json").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return bank_from_dict(json.loads(text), source_text=text)


@dataclass(frozen=True)
class TaskInstance:
    id: str
    instruction: str
    task_class: str
    gt_plan: Plan | None
    world_seed: int
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "instruction": self.instruction,
            "task_class": self.task_class,
            "gt_plan": render_plan(self.gt_plan) if self.gt_plan is not None else None,
            "world_seed": self.world_seed,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TaskInstance":
        gt_text = doc.get("gt_plan")
        gt = parse_plan(gt_text, default_registry()) if gt_text else None
        return cls(
            id=doc["id"],
            instruction=doc["instruction"],
            task_class=doc["task_class"],
            gt_plan=gt,
            world_seed=doc["world_seed"],
            metadata=doc.get("metadata", {}),
        )


def base_name(name: str) -> str:
    """Base type of an attributed object name ('green apple' -> 'apple')."""
    return name.split()[-1] if name.split() else name


def place_preposition(location: str) -> str:
    return "in" if location in _IN_LOCATIONS else "on"


def _capitalize(text: str) -> str:
    return text[0].upper() + text[1:] if text else text


def _unit_clause(kind: str, obj: str, src: str | None, dst: str | None) -> str:
    if kind == "pick":
        return f"pick up the {obj} from the {src}" if src else f"pick up the {obj}"
    head = f"pick up the {obj} from the {src}" if src else f"pick up the {obj}"
    return f"{head} and put it {place_preposition(dst)} the {dst}"


def _unit_actions(kind: str, obj: str, src: str | None, dst: str | None) -> list:
    src_arg = src if src else UNSPECIFIED
    acts = [action("move_to", obj, src_arg), action("pick_up", obj, src_arg)]
    if kind == "pickplace":
        acts += [action("move_to", dst, UNSPECIFIED), action("put", obj, dst)]
    return acts


def _unit_record(kind: str, obj: str, src: str | None, dst: str | None) -> dict:
    return {
        "kind": kind,
        "obj": obj,
        "src": src,
        "dst": dst,
        "clause": _unit_clause(kind, obj, src, dst),
        "length": 2 if kind == "pick" else 4,
    }


def unit_plan(unit: dict, terminated: bool = True) -> Plan:
    """The ground-truth block for one metadata unit record."""
    return Plan(
        tuple(_unit_actions(unit["kind"], unit["obj"], unit["src"], unit["dst"])),
        terminated=terminated,
    )


def _task_from_units(
    task_id: str,
    instruction: str,
    task_class: str,
    units: list[dict],
    placements: list[tuple[str, str]],
    world_seed: int,
    extra_metadata: dict | None = None,
) -> TaskInstance:
    actions = []
    goal_placements = []
    holding = None
    for unit in units:
        actions.extend(_unit_actions(unit["kind"], unit["obj"], unit["src"], unit["dst"]))
        if unit["kind"] == "pickplace":
            goal_placements.append([unit["obj"], unit["dst"]])
        else:
            holding = unit["obj"]
    metadata = {
        "objects": [{"name": name, "location": loc} for name, loc in placements],
        "units": units,
        "goal": {"placements": goal_placements, "holding": holding},
        "target_length": len(actions),
    }
    metadata.update(extra_metadata or {})
    return TaskInstance(
        id=task_id,
        instruction=instruction,
        task_class=task_class,
        gt_plan=Plan(tuple(actions), terminated=True),
        world_seed=world_seed,
        metadata=metadata,
    )


def _distractors(rng: random.Random, bank: VocabBank, forbidden_bases: set[str]) -> list[str]:
    candidates = [o for o in bank.objects if base_name(o) not in forbidden_bases]
    count = rng.randint(0, 2)
    return rng.sample(candidates, min(count, len(candidates)))


def _with_distractors(
    rng: random.Random,
    bank: VocabBank,
    placements: list[tuple[str, str]],
    forbidden_bases: set[str],
) -> list[tuple[str, str]]:
    extended = list(placements)
    for name in _distractors(rng, bank, forbidden_bases):
        extended.append((name, rng.choice(bank.locations)))
    return extended


def generate_core(bank: VocabBank, n_per_class: int, seed: int) -> list[TaskInstance]:
    """n_per_class tasks for each of Pick, PickPlace, and PickPlace2."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    bank.validate()
    tasks = []
    for task_class in CORE_CLASSES:
        rng = rng_for(seed, "core", task_class)
        templates = bank.templates_for(task_class)
        for i in range(n_per_class):
            task_id = f"core-{task_class.lower()}-{i:04d}"
            template = rng.choice(templates)
            tasks.append(_core_task(rng, bank, task_id, task_class, template, seed))
    return tasks


def _core_task(
    rng: random.Random,
    bank: VocabBank,
    task_id: str,
    task_class: str,
    template: Template,
    seed: int,
) -> TaskInstance:
    obj = rng.choice(bank.objects)
    fills: dict[str, str] = {"obj": obj}
    units: list[dict] = []
    placements: list[tuple[str, str]] = []

    if task_class == PICK:
        src = rng.choice(bank.locations)
        fills["src"] = src
        units.append(_unit_record("pick", obj, src if template.has_src else None, None))
        placements.append((obj, src))
    else:
        src, dst = rng.sample(bank.locations, 2)
        fills.update(src=src, dst=dst)
        units.append(_unit_record("pickplace", obj, src if template.has_src else None, dst))
        placements.append((obj, src))
        if task_class == PICK_PLACE2:
            obj2 = rng.choice([o for o in bank.objects if o != obj])
            src2 = rng.choice([loc for loc in bank.locations if loc != dst])
            dst2 = dst if template.shared_dst else rng.choice([loc for loc in bank.locations if loc != src2])
            fills.update(obj2=obj2, src2=src2, dst2=dst2)
            units.append(_unit_record("pickplace", obj2, src2 if template.has_src2 else None, dst2))
            placements.append((obj2, src2))

    instruction = _capitalize(template.text.format(**fills))
    forbidden = {base_name(name) for name, _ in placements}
    placements = _with_distractors(rng, bank, placements, forbidden)
    return _task_from_units(
        task_id,
        instruction,
        task_class,
        units,
        placements,
        derive_seed(seed, "world", task_id),
        {"template_id": template.id},
    )


_CONNECTIVES = (", and then ", ", then ", " and then ")


def compose_long_horizon(
    bank: VocabBank,
    lengths: list[int] | tuple[int, ...],
    n_per_length: int,
    seed: int,
) -> list[TaskInstance]:
    """Chain pick-and-place units (plus at most one trailing pick) to exact lengths."""
    bank.validate()
    for length in lengths:
        if length % 2 or not 2 <= length <= 16:
            raise UnreachableLength(f"length {length} is not an even number in [2, 16]")
    tasks = []
    for length in lengths:
        rng = rng_for(seed, "lengths", length)
        for i in range(n_per_length):
            task_id = f"len{length:02d}-{i:04d}"
            tasks.append(_composite_task(rng, bank, task_id, length, seed))
    return tasks


def _composite_task(
    rng: random.Random, bank: VocabBank, task_id: str, length: int, seed: int
) -> TaskInstance:
    n_place = length // 4
    trailing_pick = length % 4 == 2
    n_units = n_place + (1 if trailing_pick else 0)
    objs = rng.sample(bank.objects, n_units)

    units = []
    placements = []
    for k in range(n_place):
        src, dst = rng.sample(bank.locations, 2)
        stated = rng.random() < 0.7
        units.append(_unit_record("pickplace", objs[k], src if stated else None, dst))
        placements.append((objs[k], src))
    if trailing_pick:
        src = rng.choice(bank.locations)
        stated = rng.random() < 0.7
        units.append(_unit_record("pick", objs[-1], src if stated else None, None))
        placements.append((objs[-1], src))

    clauses = [unit["clause"] for unit in units]
    instruction = _capitalize(clauses[0])
    for clause in clauses[1:]:
        instruction += rng.choice(_CONNECTIVES) + clause

    forbidden = {base_name(name) for name, _ in placements}
    placements = _with_distractors(rng, bank, placements, forbidden)
    return _task_from_units(
        task_id,
        instruction,
        COMPOSITE,
        units,
        placements,
        derive_seed(seed, "world", task_id),
    )


def generate_ambiguous(bank: VocabBank, n: int, seed: int) -> list[TaskInstance]:
    """Tasks phrased with a collective noun; the GT covers every member."""
    bank.validate()
    if not bank.collectives:
        raise BankInvalid("bank has no collectives")
    rng = rng_for(seed, "ambiguous")
    templates = bank.templates_for(AMBIGUOUS)
    nouns = sorted(bank.collectives)
    tasks = []
    for i in range(n):
        task_id = f"amb-{i:04d}"
        template = rng.choice(templates)
        noun = rng.choice(nouns)
        members = list(bank.collectives[noun])
        if rng.random() < 0.3:  # occasional duplicate instance of one member
            members.insert(members.index(rng.choice(members)), rng.choice(members))
        tasks.append(_ambiguous_task(rng, bank, task_id, template, noun, members, seed))
    return tasks


def _ambiguous_task(
    rng: random.Random,
    bank: VocabBank,
    task_id: str,
    template: Template,
    noun: str,
    members: list[str],
    seed: int,
) -> TaskInstance:
    dst = rng.choice(bank.locations)
    src = rng.choice([loc for loc in bank.locations if loc != dst])
    fills = {"collective": noun, "src": src, "dst": dst}
    instruction = _capitalize(template.text.format(**fills))

    # Instances with a duplicated base name are referred to by their _k index.
    counts: dict[str, int] = {}
    for member in members:
        counts[member] = counts.get(member, 0) + 1
    seen: dict[str, int] = {}
    refs = []
    for member in members:
        seen[member] = seen.get(member, 0) + 1
        refs.append(f"{member}_{seen[member]}" if counts[member] > 1 else member)

    units = []
    placements = []
    for member, ref in zip(members, refs):
        if template.has_src:
            member_src: str | None = src
            placed_at = src
        else:
            member_src = None
            placed_at = rng.choice([loc for loc in bank.locations if loc != dst])
        units.append(_unit_record("pickplace", ref, member_src, dst))
        placements.append((member, placed_at))

    # Distractors must not answer the collective query, or the feedback list
    # would no longer match the ground-truth decomposition.
    member_bases = {base_name(m) for m in bank.collectives[noun]}
    placements = _with_distractors(rng, bank, placements, member_bases)
    return _task_from_units(
        task_id,
        instruction,
        AMBIGUOUS,
        units,
        placements,
        derive_seed(seed, "world", task_id),
        {"template_id": template.id, "collective": noun, "members": refs},
    )


# Commands a pick-and-place manipulator cannot carry out; the feasibility
# checker should reject these.
_INFEASIBLE_TOPICS = (
    "the weather", "your day", "the ocean", "a robot", "the kitchen", "autumn",
    "breakfast", "a lost sock", "the moon", "a busy morning", "gardening", "winter",
)
INFEASIBLE_COMMANDS: tuple[str, ...] = tuple(
    [
        "write a Python script",
        "water the plants",
        "write Python code",
        "plan a day trip to a nearby city",
        "assemble a jigsaw puzzle",
        "fold and put away the laundry",
        "cook dinner for four people",
        "bake a chocolate cake",
        "paint the bedroom wall blue",
        "fix the leaking faucet",
        "iron the shirts",
        "sew a button onto the jacket",
        "knit a wool scarf",
        "braid my hair",
        "tie my shoelaces",
        "peel the potatoes",
        "chop the onions finely",
        "whisk the eggs",
        "open the wine bottle with a corkscrew",
        "sharpen all the kitchen knives",
        "screw the shelf to the wall",
        "hammer a nail into the door frame",
        "change the light bulb in the ceiling lamp",
        "rewire the broken lamp",
        "install a new operating system on the laptop",
        "debug the web server",
        "answer my emails",
        "file my tax return",
        "book a flight to Paris",
        "order a pizza online",
        "negotiate a discount with the landlord",
        "call the doctor and make an appointment",
        "teach the parrot to speak",
        "walk the dog around the block",
        "give the cat a bath",
        "babysit the toddler",
        "do a backflip",
        "climb out the window",
        "drive the car to the garage",
        "ride the bicycle to the store",
        "mow the lawn",
        "shovel the snow off the driveway",
        "wash the windows on the second floor",
        "unclog the bathroom drain",
        "vacuum the stairs",
        "mop and polish the ceiling",
        "inflate the air mattress by blowing into it",
        "play the piano sonata",
        "solve this crossword puzzle",
        "beat me at chess",
        "do my math homework",
        "proofread my novel manuscript",
        "summarize today's news",
        "translate this letter into French",
        "compose a birthday card message",
        "draw a portrait of my grandmother",
        "take a photo of the sunset",
        "juggle three oranges",
        "perform a card trick",
        "whistle a tune",
        "recite a poem from memory",
        "hold a conversation about philosophy",
        "guess what number I am thinking of",
        "predict tomorrow's lottery numbers",
    ]
    + [f"sing a song about {topic}" for topic in _INFEASIBLE_TOPICS]
    + [f"write a short story about {topic}" for topic in _INFEASIBLE_TOPICS]
    + [f"tell me a joke about {topic}" for topic in _INFEASIBLE_TOPICS]
    + [f"give a short speech about {topic}" for topic in _INFEASIBLE_TOPICS]
)


def generate_feasibility_set(seed: int, bank: VocabBank | None = None) -> list[TaskInstance]:
    """Exactly 200 tasks: 100 feasible samples and 100 infeasible commands."""
    bank = bank or load_bank()
    pool = generate_core(bank, 25, derive_seed(seed, "feas", "core-pool"))
    pool += compose_long_horizon(bank, LONG_HORIZON_LENGTHS, 10, derive_seed(seed, "feas", "len-pool"))
    rng = rng_for(seed, "feas", "pos")
    positives = []
    for i, source in enumerate(sorted(rng.sample(pool, 100), key=lambda t: t.id)):
        metadata = dict(source.metadata)
        metadata["source_id"] = source.id
        metadata["source_class"] = source.task_class
        positives.append(
            TaskInstance(
                id=f"feas-pos-{i:04d}",
                instruction=source.instruction,
                task_class=FEASIBLE,
                gt_plan=source.gt_plan,
                world_seed=source.world_seed,
                metadata=metadata,
            )
        )

    rng = rng_for(seed, "feas", "neg")
    verbatim = ["write a Python script", "water the plants"]
    remaining = [c for c in INFEASIBLE_COMMANDS if c not in verbatim]
    chosen = verbatim + rng.sample(remaining, 98)
    rng.shuffle(chosen)
    negatives = [
        TaskInstance(
            id=f"feas-neg-{i:04d}",
            instruction=_capitalize(command),
            task_class=INFEASIBLE,
            gt_plan=None,
            world_seed=derive_seed(seed, "world", f"feas-neg-{i:04d}"),
            metadata={"objects": [], "goal": None},
        )
        for i, command in enumerate(chosen)
    ]
    return positives + negatives


def write_dataset(tasks: list[TaskInstance], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for task in tasks:
            fh.write(json.dumps(task.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")


def read_dataset(path: str | Path) -> list[TaskInstance]:
    tasks = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                tasks.append(TaskInstance.from_dict(json.loads(line)))
    return tasks


def write_manifest(
    path: str | Path,
    suite: str,
    seed: int,
    bank: VocabBank,
    tasks: list[TaskInstance],
    params: dict | None = None,
) -> dict:
    counts: dict[str, int] = {}
    for task in tasks:
        counts[task.task_class] = counts.get(task.task_class, 0) + 1
    manifest = {
        "suite": suite,
        "seed": seed,
        "bank_sha256": bank.sha256(),
        "n_tasks": len(tasks),
        "counts_by_class": dict(sorted(counts.items())),
        "params": params or {},
        "notes": {"pick_unit_position": "tail-only"},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
