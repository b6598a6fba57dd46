"""Prompt assembly: the system prompt from ontology and worked examples, plus
the per-source prompts for each stage of the chain."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

from .errors import EmptyExamplesError, FormatError, Step1ParseError, TemplateError
from .ingest import SerializedTable
from .semantic_model import parse_labels

PLACEHOLDER_RE = re.compile(r"\{\$([A-Za-z0-9_]+)\}")

_TEMPLATE_FILES = {
    "system": "system.txt",
    "example": "example.txt",
    "chain1": "chain1.txt",
    "chain2": "chain2.txt",
    "combined": "combined.txt",
}
_REQUIRED_PLACEHOLDERS = {
    "system": {"ONTOLOGY", "EXAMPLES"},
    "example": {"TABLE", "STEP1", "STEP2", "RULE_STEP1", "RULE_STEP2"},
    "chain1": {"TABLE"},
    "chain2": {"STEP1"},
    "combined": {"TABLE"},
}
_RULE_FILES = ("rules_step1.txt", "rules_step2.txt")


@dataclass(frozen=True)
class PromptTemplate:
    """The five editable template texts; placeholders use the {$NAME} form."""

    system: str
    example: str
    chain1: str
    chain2: str
    combined: str

    def __post_init__(self) -> None:
        for part, required in _REQUIRED_PLACEHOLDERS.items():
            _check_placeholders(getattr(self, part), required, part)

    @classmethod
    def load(cls, directory: str | Path | None = None) -> "PromptTemplate":
        texts = {part: _read_template(name, directory) for part, name in _TEMPLATE_FILES.items()}
        return cls(**texts)


@dataclass(frozen=True)
class PromptBundle:
    """The assembled prompts for one new source."""

    system_prompt: str
    chain1_prompt: str
    chain2_prompt_builder: Callable[[str], str]


def load_rules(directory: str | Path | None = None) -> tuple[str, str]:
    """Rule texts for the Step1/Step2 blocks; expert-authored data, not code."""
    return tuple(_read_template(name, directory) for name in _RULE_FILES)  # type: ignore[return-value]


def build_system_prompt(
    onto_json: str,
    examples: Sequence[tuple[SerializedTable, str, str]],
    rules: tuple[str, str],
    template: PromptTemplate | None = None,
) -> str:
    """Render the system prompt: the ontology section followed by one worked
    example block per known source, in the order given."""
    template = template or PromptTemplate.load()
    if not examples:
        raise EmptyExamplesError("a system prompt needs at least one worked example")
    _require_json(onto_json, "ontology")
    rule_step1, rule_step2 = rules
    blocks = []
    for table, step1_json, step2_json in examples:
        _require_json(step1_json, "step1 example")
        _require_json(step2_json, "step2 example")
        blocks.append(
            _substitute(
                template.example,
                {
                    "TABLE": table.text,
                    "STEP1": step1_json,
                    "STEP2": step2_json,
                    "RULE_STEP1": rule_step1,
                    "RULE_STEP2": rule_step2,
                },
            )
        )
    return _substitute(
        template.system,
        {"ONTOLOGY": onto_json, "EXAMPLES": "\n".join(blocks)},
    )


def build_chain1_prompt(new_table: SerializedTable, template: PromptTemplate | None = None) -> str:
    template = template or PromptTemplate.load()
    if not new_table.text.strip():
        raise FormatError("serialized table is empty")
    return _substitute(template.chain1, {"TABLE": new_table.text})


def build_chain2_prompt(step1_answer: str, template: PromptTemplate | None = None) -> str:
    """Render the graph-building prompt around the Step1 labels.

    The table is deliberately not repeated; the conversation already holds it.
    """
    template = template or PromptTemplate.load()
    try:
        parse_labels(step1_answer)
    except Exception as exc:
        raise Step1ParseError(f"step1 answer is not a semantic_triples object: {exc}") from exc
    return _substitute(template.chain2, {"STEP1": step1_answer})


def build_combined_prompt(new_table: SerializedTable, template: PromptTemplate | None = None) -> str:
    """Single prompt asking for both steps at once (chaining disabled)."""
    template = template or PromptTemplate.load()
    if not new_table.text.strip():
        raise FormatError("serialized table is empty")
    return _substitute(template.combined, {"TABLE": new_table.text})


def build_bundle(
    onto_json: str,
    examples: Sequence[tuple[SerializedTable, str, str]],
    rules: tuple[str, str],
    new_table: SerializedTable,
    template: PromptTemplate | None = None,
) -> PromptBundle:
    template = template or PromptTemplate.load()
    return PromptBundle(
        system_prompt=build_system_prompt(onto_json, examples, rules, template),
        chain1_prompt=build_chain1_prompt(new_table, template),
        chain2_prompt_builder=lambda answer: build_chain2_prompt(answer, template),
    )


# --- internals ---------------------------------------------------------------

def _read_template(name: str, directory: str | Path | None) -> str:
    try:
        if directory is None:
            return (resources.files(__package__) / "templates" / name).read_text(encoding="utf-8")
        return (Path(directory) / name).read_text(encoding="utf-8")
    except (FileNotFoundError, NotADirectoryError) as exc:
        raise TemplateError(f"template {name!r} not found: {exc}") from None


def _check_placeholders(text: str, required: set[str], part: str) -> None:
    found = set(PLACEHOLDER_RE.findall(text))
    missing = required - found
    unknown = found - required
    if missing:
        raise TemplateError(f"{part} template misses placeholder(s) {sorted(missing)}")
    if unknown:
        raise TemplateError(f"{part} template has unknown placeholder(s) {sorted(unknown)}")


def _substitute(template: str, values: dict[str, str]) -> str:
    # One pass over the template only, so substituted payloads are never rescanned.
    def repl(match: re.Match) -> str:
        key = match.group(1)
        if key not in values:
            raise TemplateError(f"no value for placeholder {{${key}}}")
        return values[key]

    return PLACEHOLDER_RE.sub(repl, template)


def _require_json(text: str, what: str) -> None:
    try:
        json.loads(text)
    except ValueError as exc:
        raise FormatError(f"{what} is not valid JSON: {exc}") from None
