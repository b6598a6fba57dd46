"""Semantic models as graphs: triples, pruning, depth, serialization, gold-model lints."""

from __future__ import annotations

import json
import re
from collections import deque
from dataclasses import dataclass
from typing import Iterable

from .errors import CyclicModelError, FormatError, InstanceParseError, SchemaError
from .ingest import Table

SEMANTIC_TRIPLES_KEY = "semantic_triples"
INTERNAL_LINK_TRIPLES_KEY = "internal_link_triples"

# Node names the gold-model lints key on.
BIRTH_CLASS = "crm:E67_Birth"
DEATH_CLASS = "crm:E69_Death"
TIME_SPAN_CLASS = "crm:E52_Time-Span"
HAS_TIME_SPAN_PROPERTY = "crm:P4_has_time-span"

_TRAILING_INDEX_RE = re.compile(r"^(.*?)(\d+)$")


@dataclass(frozen=True, order=True)
class ClassInstance:
    """A numbered occurrence of an ontology class, e.g. Time-Span2."""

    class_name: str
    index: int = 1

    def __post_init__(self) -> None:
        if not self.class_name:
            raise InstanceParseError("class instance has an empty class name")
        if self.class_name[-1].isdigit():
            raise InstanceParseError(
                f"class name {self.class_name!r} must not end in a digit; "
                "trailing digits are the instance index"
            )
        if self.index < 1:
            raise InstanceParseError(f"instance index must be >= 1, got {self.index}")

    def render(self) -> str:
        return f"{self.class_name}{self.index}"

    @classmethod
    def parse(cls, text: str) -> "ClassInstance":
        match = _TRAILING_INDEX_RE.match(text)
        if match:
            name, index = match.group(1), int(match.group(2))
        else:
            name, index = text, 1
        return cls(name, index)


@dataclass(frozen=True, order=True)
class SemanticTriple:
    """An attribute annotation: class instance, data property, table attribute."""

    subject: ClassInstance
    property: str
    attribute: str

    def as_list(self) -> list[str]:
        return [self.subject.render(), self.property, self.attribute]


@dataclass(frozen=True, order=True)
class InternalLinkTriple:
    """A link between two class instances via an object property."""

    subject: ClassInstance
    property: str
    object: ClassInstance

    def __post_init__(self) -> None:
        if self.subject == self.object:
            raise SchemaError(f"self-loop on {self.subject.render()!r} is not a valid link")

    def as_list(self) -> list[str]:
        return [self.subject.render(), self.property, self.object.render()]


@dataclass(frozen=True)
class SemanticModel:
    """A set of attribute annotations plus the links connecting their instances."""

    semantic_triples: frozenset[SemanticTriple]
    internal_link_triples: frozenset[InternalLinkTriple]

    def __post_init__(self) -> None:
        object.__setattr__(self, "semantic_triples", frozenset(self.semantic_triples))
        object.__setattr__(self, "internal_link_triples", frozenset(self.internal_link_triples))

    def instances(self) -> frozenset[ClassInstance]:
        found = {t.subject for t in self.semantic_triples}
        for link in self.internal_link_triples:
            found.add(link.subject)
            found.add(link.object)
        return frozenset(found)

    def attributes(self) -> frozenset[str]:
        return frozenset(t.attribute for t in self.semantic_triples)

    def size(self) -> int:
        return len(self.semantic_triples) + len(self.internal_link_triples)


@dataclass(frozen=True)
class LintDiagnostic:
    rule: str
    severity: str
    message: str
    offender: str


@dataclass(frozen=True)
class LintReport:
    diagnostics: tuple[LintDiagnostic, ...]

    def ok(self) -> bool:
        return not self.diagnostics


def parse_model(text: str) -> SemanticModel:
    """Read a model from the two-array JSON form; both fields are required."""
    doc = _load_object(text)
    for key in (SEMANTIC_TRIPLES_KEY, INTERNAL_LINK_TRIPLES_KEY):
        if key not in doc:
            raise SchemaError(f"model JSON misses the field {key!r}")
    sems = frozenset(
        SemanticTriple(ClassInstance.parse(s), p, a)
        for s, p, a in _string_triples(doc[SEMANTIC_TRIPLES_KEY], SEMANTIC_TRIPLES_KEY)
    )
    links = frozenset(
        InternalLinkTriple(ClassInstance.parse(s), p, ClassInstance.parse(o))
        for s, p, o in _string_triples(doc[INTERNAL_LINK_TRIPLES_KEY], INTERNAL_LINK_TRIPLES_KEY)
    )
    return SemanticModel(sems, links)


def parse_labels(text: str) -> SemanticModel:
    """Read a labeling answer: `semantic_triples` required, links ignored."""
    doc = _load_object(text)
    if SEMANTIC_TRIPLES_KEY not in doc:
        raise SchemaError(f"labels JSON misses the field {SEMANTIC_TRIPLES_KEY!r}")
    sems = frozenset(
        SemanticTriple(ClassInstance.parse(s), p, a)
        for s, p, a in _string_triples(doc[SEMANTIC_TRIPLES_KEY], SEMANTIC_TRIPLES_KEY)
    )
    return SemanticModel(sems, frozenset())


def serialize_model(model: SemanticModel) -> str:
    """Deterministic model JSON with both arrays canonically sorted."""
    doc = {
        SEMANTIC_TRIPLES_KEY: [t.as_list() for t in sorted(model.semantic_triples)],
        INTERNAL_LINK_TRIPLES_KEY: [t.as_list() for t in sorted(model.internal_link_triples)],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False)


def serialize_labels(model: SemanticModel) -> str:
    doc = {SEMANTIC_TRIPLES_KEY: [t.as_list() for t in sorted(model.semantic_triples)]}
    return json.dumps(doc, indent=2, ensure_ascii=False)


def prune(model: SemanticModel, attributes: Iterable[str]) -> SemanticModel:
    """Drop triples on unknown attributes and instances with no path to any attribute.

    Connectivity is undirected over internal links and attribute annotations,
    so a node survives as long as anything ties it to a surviving attribute.
    Tolerates cycles and arbitrary hallucinated input; idempotent.
    """
    known = set(attributes)
    kept_sems = frozenset(t for t in model.semantic_triples if t.attribute in known)
    neighbors: dict[tuple, set[tuple]] = {}

    def connect(a: tuple, b: tuple) -> None:
        neighbors.setdefault(a, set()).add(b)
        neighbors.setdefault(b, set()).add(a)

    for t in kept_sems:
        connect(("i", t.subject), ("a", t.attribute))
    for link in model.internal_link_triples:
        connect(("i", link.subject), ("i", link.object))

    reached: set[tuple] = set()
    queue = deque(node for node in neighbors if node[0] == "a")
    reached.update(queue)
    while queue:
        node = queue.popleft()
        for neighbor in neighbors.get(node, ()):
            if neighbor not in reached:
                reached.add(neighbor)
                queue.append(neighbor)

    kept_links = frozenset(
        link for link in model.internal_link_triples if ("i", link.subject) in reached
    )
    return SemanticModel(kept_sems, kept_links)


def depth(model: SemanticModel) -> int:
    """Longest directed path, in edges, that ends at an attribute.

    Internal links run subject -> object and annotations instance -> attribute.
    An empty model, or one with no attribute-ending path, has depth 0.
    """
    instances = sorted(model.instances())
    successors: dict[ClassInstance, set[ClassInstance]] = {i: set() for i in instances}
    indegree: dict[ClassInstance, int] = {i: 0 for i in instances}
    for link in model.internal_link_triples:
        if link.object not in successors[link.subject]:
            successors[link.subject].add(link.object)
            indegree[link.object] += 1
    annotated = {t.subject for t in model.semantic_triples}

    order = []
    queue = deque(i for i in instances if indegree[i] == 0)
    while queue:
        node = queue.popleft()
        order.append(node)
        for succ in sorted(successors[node]):
            indegree[succ] -= 1
            if indegree[succ] == 0:
                queue.append(succ)
    if len(order) != len(instances):
        raise CyclicModelError("internal links contain a directed cycle")

    longest: dict[ClassInstance, int | None] = {}
    for node in reversed(order):
        candidates = [1] if node in annotated else []
        for succ in successors[node]:
            if longest[succ] is not None:
                candidates.append(1 + longest[succ])
        longest[node] = max(candidates) if candidates else None
    finite = [value for value in longest.values() if value is not None]
    return max(finite) if finite else 0


def lint_gold(model: SemanticModel, table: Table) -> LintReport:
    """Check a gold model against its table: leaf relevance (L1) and the
    Birth/Death time-span numbering convention (L2)."""
    diagnostics: list[LintDiagnostic] = []
    headers = set(table.attributes)
    for t in sorted(model.semantic_triples):
        if t.attribute not in headers:
            diagnostics.append(
                LintDiagnostic(
                    rule="L1",
                    severity="error",
                    message=(
                        f"semantic triple annotates {t.attribute!r}, "
                        f"which is not a header of {table.source_id}"
                    ),
                    offender=str(t.as_list()),
                )
            )
    l2 = _lint_birth_death_numbering(model)
    if l2 is not None:
        diagnostics.append(l2)
    return LintReport(tuple(diagnostics))


def _lint_birth_death_numbering(model: SemanticModel) -> LintDiagnostic | None:
    instances = model.instances()
    births = {i for i in instances if i.class_name == BIRTH_CLASS}
    deaths = {i for i in instances if i.class_name == DEATH_CLASS}
    if not births or not deaths:
        return None

    def span_links(class_name: str) -> list[InternalLinkTriple]:
        return [
            link
            for link in sorted(model.internal_link_triples)
            if link.subject.class_name == class_name
            and link.property == HAS_TIME_SPAN_PROPERTY
            and link.object.class_name == TIME_SPAN_CLASS
        ]

    birth_links = span_links(BIRTH_CLASS)
    death_links = span_links(DEATH_CLASS)
    problems = []
    offenders = [l for l in birth_links if l.object.index != 1]
    offenders += [l for l in death_links if l.object.index != 2]
    if offenders:
        problems.append("mis-numbered time-span links: " + ", ".join(str(l.as_list()) for l in offenders))
    if not any(l.object.index == 1 for l in birth_links):
        problems.append(f"{BIRTH_CLASS} does not link to {TIME_SPAN_CLASS}1")
    if not any(l.object.index == 2 for l in death_links):
        problems.append(f"{DEATH_CLASS} does not link to {TIME_SPAN_CLASS}2")
    if not problems:
        return None
    return LintDiagnostic(
        rule="L2",
        severity="warning",
        message="; ".join(problems),
        offender=str(offenders[0].as_list()) if offenders else "",
    )


# --- internals ---------------------------------------------------------------

def _load_object(text: str) -> dict:
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise FormatError(f"model is not JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("model JSON must be an object")
    return doc


def _string_triples(entries, field: str) -> list[tuple[str, str, str]]:
    if not isinstance(entries, list):
        raise SchemaError(f"{field!r} must be an array")
    triples = []
    for entry in entries:
        if (
            not isinstance(entry, list)
            or len(entry) != 3
            or not all(isinstance(part, str) for part in entry)
        ):
            raise SchemaError(f"{field!r} entry {entry!r} is not a 3-element string array")
        triples.append((entry[0], entry[1], entry[2]))
    return triples
