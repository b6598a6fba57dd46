"""The two-stage modeling pipeline: label attributes, build the graph, prune."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from typing import Mapping

from . import ontology as onto_mod
from . import prompting
from . import semantic_model as sm
from .errors import DanglingNameError, NoAnswerError, SchemaError, Step1ParseError
from .ingest import DEFAULT_RECORD_CAP, SerializedTable, Table, serialize_table
from .llm import (
    STAGE_CHAIN1,
    STAGE_CHAIN2,
    STAGE_COMBINED,
    ChatExchange,
    Message,
    Provider,
    extract_tagged_json,
)


@dataclass(frozen=True)
class ChainConfig:
    chaining_enabled: bool = True
    pruning_enabled: bool = True
    strict_ontology_validation: bool = False


@dataclass(frozen=True)
class ChainResult:
    """Everything one source produced: labels, raw and final models, transcripts."""

    labels: sm.SemanticModel
    raw_model: sm.SemanticModel
    final_model: sm.SemanticModel
    transcripts: Mapping[str, ChatExchange]
    timings_ms: Mapping[str, float]
    notes: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "transcripts", dict(self.transcripts))
        object.__setattr__(self, "timings_ms", dict(self.timings_ms))

    def total_tokens(self) -> int:
        return sum(ex.usage.total for ex in self.transcripts.values())


def run_chain(
    system_prompt: str,
    table: Table,
    config: ChainConfig,
    provider: Provider,
    *,
    templates: prompting.PromptTemplate | None = None,
    ontology: onto_mod.Ontology | None = None,
    record_cap: int = DEFAULT_RECORD_CAP,
) -> ChainResult:
    """Model one source: two chained calls, or a single combined call.

    With chaining on, the graph-building turn continues the labeling
    conversation, so the table is sent only once. Pruning and the optional
    strict ontology validation shape the final model; the raw model is kept
    for inspection.
    """
    if config.strict_ontology_validation and ontology is None:
        raise ValueError("strict_ontology_validation needs an ontology")
    templates = templates or prompting.PromptTemplate.load()
    serialized = serialize_table(table, record_cap)
    notes: list[str] = []
    transcripts: dict[str, ChatExchange] = {}
    timings: dict[str, float] = {}

    if config.chaining_enabled:
        labels, step1_json = _stage_chain1(
            system_prompt, table, serialized, provider, templates, transcripts, timings, notes
        )
        raw_model = _stage_chain2(
            system_prompt, table, step1_json, labels, provider, templates, transcripts, timings, notes
        )
    else:
        labels, raw_model = _stage_combined(
            system_prompt, table, serialized, provider, templates, transcripts, timings, notes
        )

    model = raw_model
    if config.strict_ontology_validation:
        model, dropped = _drop_illegal_links(model, ontology)
        if dropped:
            notes.append(f"strict validation dropped {dropped} internal link(s)")
    attributes = set(table.attributes)
    if config.pruning_enabled:
        final_model = sm.prune(model, attributes)
        labels = sm.prune(labels, attributes)
    else:
        final_model = model
    return ChainResult(labels, raw_model, final_model, transcripts, timings, tuple(notes))


def combined_prompt(table: SerializedTable, templates: prompting.PromptTemplate | None = None) -> str:
    """Single prompt requesting both steps in one response (ablation mode)."""
    return prompting.build_combined_prompt(table, templates)


# --- stages -------------------------------------------------------------------

def _stage_chain1(system_prompt, table, serialized, provider, templates, transcripts, timings, notes):
    prompt = prompting.build_chain1_prompt(serialized, templates)
    reply, exchange, elapsed = _call(
        provider, system_prompt, (Message("user", prompt),), table.source_id, STAGE_CHAIN1
    )
    transcripts[STAGE_CHAIN1] = exchange
    timings[STAGE_CHAIN1] = elapsed
    step1_json = _extract(reply, "Step1", STAGE_CHAIN1)
    labels = _parse_labels(step1_json, STAGE_CHAIN1)
    if not labels.semantic_triples:
        notes.append("chain1 produced zero labels; continuing to chain2 anyway")
    return labels, step1_json


def _stage_chain2(system_prompt, table, step1_json, labels, provider, templates, transcripts, timings, notes):
    prompt2 = prompting.build_chain2_prompt(step1_json, templates)
    chain1_exchange = transcripts[STAGE_CHAIN1]
    turns = chain1_exchange.turns + (Message("user", prompt2),)
    reply, exchange, elapsed = _call(provider, system_prompt, turns, table.source_id, STAGE_CHAIN2)
    transcripts[STAGE_CHAIN2] = exchange
    timings[STAGE_CHAIN2] = elapsed
    step2_json = _extract(reply, "Step2", STAGE_CHAIN2)
    return _parse_step2(step2_json, labels, notes)


def _stage_combined(system_prompt, table, serialized, provider, templates, transcripts, timings, notes):
    prompt = combined_prompt(serialized, templates)
    reply, exchange, elapsed = _call(
        provider, system_prompt, (Message("user", prompt),), table.source_id, STAGE_COMBINED
    )
    transcripts[STAGE_COMBINED] = exchange
    timings[STAGE_COMBINED] = elapsed
    step1_json = _extract(reply, "Step1", STAGE_COMBINED)
    labels = _parse_labels(step1_json, STAGE_COMBINED)
    step2_json = _extract(reply, "Step2", STAGE_COMBINED)
    raw_model = _parse_step2(step2_json, labels, notes)
    return labels, raw_model


def _call(provider, system_prompt, turns, source_id, stage):
    started = time.perf_counter()
    completion = provider.complete(
        system_prompt, list(turns), tags={"source_id": source_id, "stage": stage}
    )
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    exchange = ChatExchange(
        system=system_prompt,
        turns=tuple(turns) + (Message("assistant", completion.text),),
        usage=completion.usage,
        latency_ms=elapsed_ms,
    )
    return completion.text, exchange, elapsed_ms


def _extract(reply: str, tag: str, stage: str) -> str:
    try:
        return extract_tagged_json(reply, tag)
    except NoAnswerError as exc:
        raise NoAnswerError(f"{stage}: {exc}") from exc


def _parse_labels(step1_json: str, stage: str) -> sm.SemanticModel:
    try:
        return sm.parse_labels(step1_json)
    except Exception as exc:
        raise Step1ParseError(f"{stage}: {exc}") from exc


def _parse_step2(step2_json: str, labels: sm.SemanticModel, notes: list[str]) -> sm.SemanticModel:
    doc = json.loads(step2_json)
    if not isinstance(doc, dict):
        raise SchemaError("Step2 answer is not a JSON object")
    if sm.SEMANTIC_TRIPLES_KEY not in doc:
        # The graph answer is authoritative, but labeling evaluation needs the
        # label triples present, so fall back to the chain1 labels.
        doc = dict(doc)
        doc[sm.SEMANTIC_TRIPLES_KEY] = [t.as_list() for t in sorted(labels.semantic_triples)]
        notes.append("chain2 omitted semantic_triples; merged chain1 labels")
    return sm.parse_model(json.dumps(doc))


def _drop_illegal_links(model: sm.SemanticModel, ontology: onto_mod.Ontology):
    kept = []
    dropped = 0
    for link in model.internal_link_triples:
        try:
            legal = onto_mod.triple_is_legal(
                ontology, link.subject.class_name, link.property, link.object.class_name
            )
        except DanglingNameError:
            legal = False
        if legal:
            kept.append(link)
        else:
            dropped += 1
    return sm.SemanticModel(model.semantic_triples, frozenset(kept)), dropped
