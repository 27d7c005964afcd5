"""Hierarchical LLM task planning for household robots, with a plan DSL,
deterministic simulator, and evaluation harness."""

from .plan import Action, Plan, normalize_arg, parse_plan, render_plan, validate_plan
from .skills import SkillRegistry, SkillSchema, alfred_registry, default_registry, load_registry

__version__ = "0.1.0"

__all__ = [
    "Action",
    "Plan",
    "SkillRegistry",
    "SkillSchema",
    "alfred_registry",
    "default_registry",
    "load_registry",
    "normalize_arg",
    "parse_plan",
    "render_plan",
    "validate_plan",
    "__version__",
]
