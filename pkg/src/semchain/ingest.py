"""Parse CSV/XML/JSON sources into one unified table form and serialize it as JSON."""

from __future__ import annotations

import csv
import io
import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

from .errors import EmptySourceError, FormatError

EMPTY = "<Empty>"
DEFAULT_RECORD_CAP = 3


class SourceFormat(str, Enum):
    """Raw formats a structured source can arrive in."""

    CSV = "csv"
    XML = "xml"
    JSON = "json"

    @classmethod
    def from_suffix(cls, suffix: str) -> "SourceFormat":
        try:
            return cls(suffix.lower().lstrip("."))
        except ValueError:
            raise FormatError(f"no parser for file suffix {suffix!r}") from None


@dataclass(frozen=True)
class Table:
    """One structured source: ordered attributes plus records keyed by them."""

    source_id: str
    format: SourceFormat
    attributes: tuple[str, ...]
    records: tuple[Mapping[str, str], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "attributes", tuple(self.attributes))
        object.__setattr__(self, "records", tuple(dict(r) for r in self.records))
        if len(set(self.attributes)) != len(self.attributes):
            raise FormatError(f"{self.source_id}: duplicate attribute names")
        expected = set(self.attributes)
        for i, record in enumerate(self.records):
            if set(record) != expected:
                raise FormatError(
                    f"{self.source_id}: record {i} keys do not match the attributes"
                )


@dataclass(frozen=True)
class SerializedTable:
    """Canonical JSON text holding a table's first `record_cap` records."""

    text: str
    record_cap: int


def parse_source(raw_bytes: bytes, format: SourceFormat, source_id: str) -> Table:
    """Parse raw bytes in the declared format into a Table.

    Absent values become the `<Empty>` sentinel, nested XML/JSON fields are
    flattened to dotted attribute names, and every cell is kept as a string.
    """
    try:
        text = raw_bytes.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{source_id}: not UTF-8: {exc}") from None
    fmt = SourceFormat(format)
    if fmt is SourceFormat.CSV:
        return _parse_csv(text, source_id)
    if fmt is SourceFormat.XML:
        return _parse_xml(text, source_id)
    return _parse_json(text, source_id)


def serialize_table(table: Table, record_cap: int = DEFAULT_RECORD_CAP) -> SerializedTable:
    """Emit a JSON array of the first min(record_cap, len(records)) records."""
    if record_cap < 1:
        raise ValueError("record_cap must be >= 1")
    rows = [{a: record[a] for a in table.attributes} for record in table.records[:record_cap]]
    return SerializedTable(json.dumps(rows, indent=2, ensure_ascii=False), record_cap)


def canonicalize(text: str) -> str:
    """Reformat JSON text: 2-space indent, insertion-ordered keys, no trailing blanks."""
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise FormatError(f"not JSON: {exc}") from None
    return json.dumps(doc, indent=2, ensure_ascii=False)


# --- CSV --------------------------------------------------------------------

def _parse_csv(text: str, source_id: str) -> Table:
    rows = [row for row in csv.reader(io.StringIO(text)) if row]
    if not rows:
        raise EmptySourceError(f"{source_id}: CSV has no header row")
    header = rows[0]
    if any(name == "" for name in header):
        raise FormatError(f"{source_id}: empty attribute name in CSV header")
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) > len(header):
            raise FormatError(f"{source_id}: line {lineno} has more cells than the header")
        records.append(
            {a: (row[i] if i < len(row) and row[i] != "" else EMPTY) for i, a in enumerate(header)}
        )
    return Table(source_id, SourceFormat.CSV, tuple(header), tuple(records))


# --- XML --------------------------------------------------------------------

def _parse_xml(text: str, source_id: str) -> Table:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise FormatError(f"{source_id}: bad XML: {exc}") from None
    counts: dict[str, int] = {}
    for child in root:
        counts[child.tag] = counts.get(child.tag, 0) + 1
    if not counts:
        raise EmptySourceError(f"{source_id}: XML root has no child elements")
    # The repeated-record element is the most frequent child tag of the root;
    # ties go to the tag encountered first.
    record_tag = max(counts, key=counts.get)  # type: ignore[arg-type]
    records = []
    for elem in root:
        if elem.tag != record_tag:
            continue
        cells: dict[str, str] = {}
        _flatten_xml(elem, "", cells, source_id)
        records.append(cells)
    return _assemble(source_id, SourceFormat.XML, records)


def _flatten_xml(elem: ET.Element, prefix: str, out: dict[str, str], source_id: str) -> None:
    for child in elem:
        name = f"{prefix}.{child.tag}" if prefix else child.tag
        if len(child):
            _flatten_xml(child, name, out, source_id)
            continue
        if name in out:
            raise FormatError(f"{source_id}: repeated element <{name}> within one record")
        value = (child.text or "").strip()
        out[name] = value if value else EMPTY


# --- JSON -------------------------------------------------------------------

def _parse_json(text: str, source_id: str) -> Table:
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise FormatError(f"{source_id}: bad JSON: {exc}") from None
    records = []
    for item in _locate_records(doc, source_id):
        cells: dict[str, str] = {}
        _flatten_json(item, "", cells, source_id)
        records.append(cells)
    return _assemble(source_id, SourceFormat.JSON, records)


def _locate_records(doc, source_id: str) -> list[dict]:
    if isinstance(doc, list):
        if not all(isinstance(item, dict) for item in doc):
            raise FormatError(f"{source_id}: top-level JSON array holds non-object entries")
        return doc
    if isinstance(doc, dict):
        candidates = [
            value
            for value in doc.values()
            if isinstance(value, list) and all(isinstance(item, dict) for item in value)
        ]
        if len(candidates) != 1:
            raise FormatError(
                f"{source_id}: expected exactly one array-of-records field, found {len(candidates)}"
            )
        return candidates[0]
    raise FormatError(f"{source_id}: JSON document is neither an array nor an object")


def _flatten_json(value: dict, prefix: str, out: dict[str, str], source_id: str) -> None:
    for key, item in value.items():
        name = f"{prefix}.{key}" if prefix else str(key)
        if isinstance(item, dict):
            _flatten_json(item, name, out, source_id)
            continue
        if name in out:
            raise FormatError(f"{source_id}: flattened name {name!r} collides")
        out[name] = _cell(item)


def _cell(value) -> str:
    if value is None:
        return EMPTY
    if isinstance(value, str):
        return value if value else EMPTY
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, (int, float)):
        return json.dumps(value)
    return json.dumps(value, ensure_ascii=False)


# --- shared -----------------------------------------------------------------

def _assemble(source_id: str, fmt: SourceFormat, records: Iterable[dict[str, str]]) -> Table:
    records = list(records)
    attributes: dict[str, None] = {}
    for record in records:
        for key in record:
            attributes.setdefault(key)
    if not attributes:
        raise EmptySourceError(f"{source_id}: no attributes discovered")
    filled = [{a: record.get(a, EMPTY) for a in attributes} for record in records]
    return Table(source_id, fmt, tuple(attributes), tuple(filled))
