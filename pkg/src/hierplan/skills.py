"""Skill registry: the typed primitives a plan may call."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

OBJECT = "object"
LOCATION = "location"
PARAM_ROLES = (OBJECT, LOCATION)

DONE = "done"
UNSPECIFIED = "unspecified"


class RegistryError(ValueError):
    """Raised for malformed registry documents or duplicate skills."""


@dataclass(frozen=True)
class SkillSchema:
    """One named skill: its arity and what role each parameter plays."""

    name: str
    params: tuple[str, ...]
    description: str = ""

    def __post_init__(self) -> None:
        for role in self.params:
            if role not in PARAM_ROLES:
                raise RegistryError(f"skill {self.name!r}: unknown param role {role!r}")
        if self.name == DONE and self.params:
            raise RegistryError("'done' takes no parameters")

    @property
    def arity(self) -> int:
        return len(self.params)


class SkillRegistry:
    """Lookup table of skill schemas; names are unique and lowercase."""

    def __init__(self, schemas: list[SkillSchema] | tuple[SkillSchema, ...]):
        self._schemas: dict[str, SkillSchema] = {}
        for schema in schemas:
            key = schema.name.lower()
            if key != schema.name:
                raise RegistryError(f"skill name must be lowercase: {schema.name!r}")
            if key in self._schemas:
                raise RegistryError(f"duplicate skill {key!r}")
            self._schemas[key] = schema

    def __contains__(self, name: str) -> bool:
        return name in self._schemas

    def __iter__(self):
        return iter(self._schemas.values())

    def __len__(self) -> int:
        return len(self._schemas)

    def get(self, name: str) -> SkillSchema | None:
        return self._schemas.get(name)

    def names(self) -> list[str]:
        return list(self._schemas)


def registry_from_dict(doc: dict) -> SkillRegistry:
    """Build a registry from the JSON document shape ``{"skills": [...]}``."""
    skills = doc.get("skills")
    if not isinstance(skills, list) or not skills:
        raise RegistryError("registry document needs a non-empty 'skills' list")
    schemas = []
    for entry in skills:
        try:
            schemas.append(
                SkillSchema(
                    name=entry["name"],
                    params=tuple(entry.get("params", [])),
                    description=entry.get("description", ""),
                )
            )
        except (KeyError, TypeError) as exc:
            raise RegistryError(f"bad skill entry {entry!r}") from exc
    return SkillRegistry(schemas)


def load_registry(path: str | Path) -> SkillRegistry:
    with open(path, encoding="utf-8") as fh:
        return registry_from_dict(json.load(fh))


def _packaged_registry(name: str) -> SkillRegistry:
    text = resources.files("hierplan.data.registries").joinpath(name).read_text("utf-8")
    return registry_from_dict(json.loads(text))


def default_registry() -> SkillRegistry:
    """The four household skills: move_to, pick_up, put, done."""
    return _packaged_registry("default.json")


def alfred_registry() -> SkillRegistry:
    """The extended eight-skill household registry (plus done)."""
    return _packaged_registry("alfred.json")
