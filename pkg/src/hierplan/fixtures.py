"""Shipped offline fixtures: the 20-task smoke suite and the golden scripted
backend that replays it with perfect answers.

Run ``python -m hierplan.fixtures`` to regenerate the packaged fixture files.
"""

from __future__ import annotations

import json
from pathlib import Path

from .agents import (
    feasibility_query_block,
    feedback_query_block,
    hlp_query_block,
    llp_query_block,
)
from .gateway import ScriptRule, write_script
from .plan import Plan, render_plan
from .seeding import derive_seed
from .taskgen import (
    AMBIGUOUS,
    LONG_HORIZON_LENGTHS,
    TaskInstance,
    VocabBank,
    compose_long_horizon,
    generate_ambiguous,
    generate_core,
    load_bank,
    unit_plan,
    write_dataset,
    write_manifest,
)
from .world import init_world, list_objects

SMOKE_SEED = 1109
SMOKE_SUITE_SIZE = 20

# The ambiguity showcase: a collective noun that must be expanded via feedback.
CLOTHES_INSTRUCTION = "Put all the clothes from the floor into the drawer"


def _clothes_task(bank: VocabBank) -> TaskInstance:
    members = list(bank.collectives["clothes"])
    units = [
        {
            "kind": "pickplace",
            "obj": member,
            "src": "floor",
            "dst": "drawer",
            "clause": f"pick up the {member} from the floor and put it in the drawer",
            "length": 4,
        }
        for member in members
    ]
    actions = []
    for unit in units:
        actions.extend(unit_plan(unit, terminated=False).actions)
    metadata = {
        "objects": [{"name": member, "location": "floor"} for member in members],
        "units": units,
        "goal": {"placements": [[member, "drawer"] for member in members], "holding": None},
        "target_length": len(actions),
        "template_id": "amb-01",
        "collective": "clothes",
        "members": members,
    }
    return TaskInstance(
        id="smoke-clothes",
        instruction=CLOTHES_INSTRUCTION,
        task_class=AMBIGUOUS,
        gt_plan=Plan(tuple(actions), terminated=True),
        world_seed=derive_seed(SMOKE_SEED, "world", "smoke-clothes"),
        metadata=metadata,
    )


def build_smoke_tasks(bank: VocabBank | None = None) -> list[TaskInstance]:
    """6 core + 8 long-horizon + 6 ambiguous tasks, re-identified smoke-NNNN."""
    bank = bank or load_bank()
    tasks: list[TaskInstance] = []
    tasks += generate_core(bank, 2, derive_seed(SMOKE_SEED, "core"))
    tasks += compose_long_horizon(bank, LONG_HORIZON_LENGTHS, 1, derive_seed(SMOKE_SEED, "lengths"))
    tasks.append(_clothes_task(bank))
    tasks += generate_ambiguous(bank, 5, derive_seed(SMOKE_SEED, "ambiguous"))

    instructions = [t.instruction for t in tasks]
    if len(set(instructions)) != len(instructions):
        raise RuntimeError("smoke suite instructions must be pairwise distinct")

    renamed = []
    for i, task in enumerate(tasks):
        metadata = dict(task.metadata)
        metadata["source_id"] = task.id
        renamed.append(
            TaskInstance(
                id=f"smoke-{i:04d}",
                instruction=task.instruction,
                task_class=task.task_class,
                gt_plan=task.gt_plan,
                world_seed=task.world_seed,
                metadata=metadata,
            )
        )
    assert len(renamed) == SMOKE_SUITE_SIZE
    return renamed


def build_golden_rules(tasks: list[TaskInstance], bank: VocabBank | None = None) -> list[ScriptRule]:
    """One scripted rule per agent call the pipeline will make on these tasks.

    Matchers are the final query block of each prompt: the block embeds both
    the agent's role marker and the full instruction text, so it is unique
    within the rule set (role markers differ by case from any other text the
    prompts contain).
    """
    bank = bank or load_bank()
    by_matcher: dict[str, str] = {}

    def add(substring: str, response: str) -> None:
        if by_matcher.get(substring, response) != response:
            raise RuntimeError(f"conflicting golden rules for matcher {substring!r}")
        by_matcher[substring] = response

    for task in tasks:
        add(feasibility_query_block(task.instruction), "Feasible")
        collective = task.metadata.get("collective")
        add(feedback_query_block(task.instruction), collective or "none")

        units = task.metadata["units"]
        if collective:
            world = init_world(task, bank)
            visible = [o.name for o in list_objects(world, collective)]
            hlp_matcher = hlp_query_block(task.instruction, visible)
        else:
            hlp_matcher = hlp_query_block(task.instruction)
        add(hlp_matcher, "\n".join(f"{i}. {u['clause']}" for i, u in enumerate(units, start=1)))

        for unit in units:
            add(llp_query_block(unit["clause"]), render_plan(unit_plan(unit)))

    return [ScriptRule(response=response, substring=matcher) for matcher, response in by_matcher.items()]


def fixtures_dir() -> Path:
    return Path(__file__).resolve().parent / "data" / "fixtures"


def write_fixtures(out_dir: str | Path | None = None) -> dict[str, Path]:
    """Write smoke_tasks.jsonl, smoke_manifest.json, and golden_script.json."""
    out = Path(out_dir) if out_dir is not None else fixtures_dir()
    out.mkdir(parents=True, exist_ok=True)
    bank = load_bank()
    tasks = build_smoke_tasks(bank)
    paths = {
        "tasks": out / "smoke_tasks.jsonl",
        "manifest": out / "smoke_manifest.json",
        "script": out / "golden_script.json",
    }
    write_dataset(tasks, paths["tasks"])
    write_manifest(paths["manifest"], "smoke", SMOKE_SEED, bank, tasks)
    write_script(build_golden_rules(tasks, bank), paths["script"])
    return paths


def smoke_tasks_path() -> Path:
    return fixtures_dir() / "smoke_tasks.jsonl"


def golden_script_path() -> Path:
    return fixtures_dir() / "golden_script.json"


if __name__ == "__main__":
    written = write_fixtures()
    for name, path in written.items():
        print(f"{name}: {path}")
