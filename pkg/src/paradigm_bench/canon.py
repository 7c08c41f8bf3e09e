"""Canonical result model.

Every execution result -- a SQL cursor, a shim payload, or raw printed
stdout -- is parsed into a CanonicalTable of CanonicalValues before any
comparison happens. Normalization is total: unrecognized inputs fall
through to Text, never an exception.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from datetime import date, datetime
from enum import Enum
from typing import Any, Iterable, Optional, Sequence


class Kind(str, Enum):
    NULL = "null"
    BOOLEAN = "bool"
    INTEGER = "int"
    REAL = "real"
    TEXT = "text"
    DATE = "date"
    TIMESTAMP = "ts"


class ShapeClass(str, Enum):
    SCALAR = "scalar"
    VECTOR = "vector"
    TABLE = "table"


class RaggedRows(ValueError):
    """Rows from a driver arrived with differing arities."""


class MalformedPayload(ValueError):
    """A shim wire payload violated the payload schema."""


@dataclass(frozen=True)
class CanonicalValue:
    kind: Kind
    payload: Any = None
    percent_marked: bool = False

    def __post_init__(self):
        if self.percent_marked and self.kind not in (Kind.INTEGER, Kind.REAL):
            raise ValueError("percent_marked is only valid on numeric kinds")


NULL = CanonicalValue(Kind.NULL)

# Case-insensitive lexemes that render a missing value in either paradigm.
_NULL_LEXEMES = {"none", "null", "nan", "<na>", "nat"}
_TRUE_LEXEMES = {"true", "yes"}
_FALSE_LEXEMES = {"false", "no"}

_INT_RE = re.compile(r"[+-]?\d+")
_REAL_RE = re.compile(r"[+-]?(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?")
_DATE_RE = re.compile(r"(\d{4})[-/](\d{1,2})[-/](\d{1,2})")
_TIME_RE = re.compile(r"[T ](\d{1,2}):(\d{2})(?::(\d{2})(?:\.(\d{1,6}))?)?")


def _leading_zero(text: str) -> bool:
    body = text.lstrip("+-")
    return len(body) > 1 and body[0] == "0" and body[1].isdigit()


def _parse_date_text(s: str) -> Optional[CanonicalValue]:
    m = _DATE_RE.match(s)
    if m is None:
        return None
    rest = s[m.end():]
    try:
        d = date(int(m.group(1)), int(m.group(2)), int(m.group(3)))
    except ValueError:
        return None
    if not rest:
        return CanonicalValue(Kind.DATE, d)
    t = _TIME_RE.fullmatch(rest)
    if t is None:
        return None
    try:
        micro = int((t.group(4) or "0").ljust(6, "0"))
        ts = datetime(d.year, d.month, d.day, int(t.group(1)),
                      int(t.group(2)), int(t.group(3) or 0), micro)
    except ValueError:
        return None
    return CanonicalValue(Kind.TIMESTAMP, ts)


def _from_number(x) -> CanonicalValue:
    if isinstance(x, bool):
        return CanonicalValue(Kind.BOOLEAN, x)
    if isinstance(x, int):
        return CanonicalValue(Kind.INTEGER, x)
    if not math.isfinite(x):
        return NULL
    return CanonicalValue(Kind.REAL, float(x))


def normalize_value(raw: Any) -> CanonicalValue:
    """Normalize one cell from any executor output. Total: never raises."""
    if raw is None:
        return NULL
    if isinstance(raw, CanonicalValue):
        return raw
    if isinstance(raw, bool):
        return CanonicalValue(Kind.BOOLEAN, raw)
    if isinstance(raw, int):
        return CanonicalValue(Kind.INTEGER, raw)
    if isinstance(raw, float):
        return _from_number(raw)
    if isinstance(raw, datetime):
        return CanonicalValue(Kind.TIMESTAMP, raw)
    if isinstance(raw, date):
        return CanonicalValue(Kind.DATE, raw)
    if isinstance(raw, (bytes, bytearray)):
        return CanonicalValue(Kind.TEXT, bytes(raw).decode("utf-8", "replace"))
    if not isinstance(raw, str):
        return CanonicalValue(Kind.TEXT, str(raw))

    text = raw.strip()
    if not text or text.lower() in _NULL_LEXEMES:
        return NULL
    low = text.lower()
    if low in _TRUE_LEXEMES:
        return CanonicalValue(Kind.BOOLEAN, True)
    if low in _FALSE_LEXEMES:
        return CanonicalValue(Kind.BOOLEAN, False)

    if text.endswith("%"):
        body = text[:-1].strip()
        if _REAL_RE.fullmatch(body) and not _leading_zero(body):
            return CanonicalValue(Kind.REAL, float(body) / 100.0,
                                  percent_marked=True)

    if _INT_RE.fullmatch(text):
        # Leading zeros carry information (postal codes etc.): keep as Text.
        if _leading_zero(text):
            return CanonicalValue(Kind.TEXT, text)
        return CanonicalValue(Kind.INTEGER, int(text))
    if _REAL_RE.fullmatch(text):
        val = float(text)
        if not math.isfinite(val):
            return NULL
        return CanonicalValue(Kind.REAL, val)

    d = _parse_date_text(text)
    if d is not None:
        return d
    return CanonicalValue(Kind.TEXT, text)


def render_value(v: CanonicalValue) -> str:
    """Render a canonical value back to text. normalize_value(render_value(v))
    round-trips to an equal value."""
    if v.kind is Kind.NULL:
        return ""
    if v.kind is Kind.BOOLEAN:
        return "True" if v.payload else "False"
    if v.kind in (Kind.INTEGER, Kind.REAL):
        if v.percent_marked:
            return f"{_shortest(v.payload * 100.0)}%"
        if v.kind is Kind.INTEGER:
            return str(v.payload)
        return _shortest(v.payload)
    if v.kind is Kind.DATE:
        return v.payload.isoformat()
    if v.kind is Kind.TIMESTAMP:
        return v.payload.isoformat(sep=" ")
    return str(v.payload)


def _shortest(x: float) -> str:
    s = repr(float(x))
    return s


@dataclass(frozen=True)
class CanonicalTable:
    rows: tuple  # tuple of tuples of CanonicalValue
    columns: Optional[tuple] = None
    shape_class: ShapeClass = ShapeClass.TABLE
    provenance: str = "constructed"

    def __post_init__(self):
        if self.rows:
            arity = len(self.rows[0])
            if any(len(r) != arity for r in self.rows):
                raise RaggedRows("rows have differing arities")
            if arity < 1:
                raise ValueError("rows must have arity >= 1")
            if self.columns is not None and len(self.columns) != arity:
                raise ValueError("column count does not match row arity")

    @property
    def arity(self) -> int:
        return len(self.rows[0]) if self.rows else (
            len(self.columns) if self.columns else 0)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def cells(self) -> list:
        return [c for row in self.rows for c in row]


def make_table(rows: Iterable[Sequence[Any]],
               columns: Optional[Sequence[str]] = None,
               provenance: str = "constructed") -> CanonicalTable:
    """Build a CanonicalTable, normalizing every cell, then flatten."""
    norm = tuple(tuple(normalize_value(c) for c in row) for row in rows)
    cols = tuple(columns) if columns is not None else None
    return flatten(CanonicalTable(norm, cols, ShapeClass.TABLE, provenance))


def scalar_table(value: Any, provenance: str = "constructed") -> CanonicalTable:
    return make_table([[value]], provenance=provenance)


def flatten(t: CanonicalTable) -> CanonicalTable:
    """Assign the smallest shape class the geometry allows. Idempotent and
    cell-preserving: only shape_class changes."""
    if t.n_rows == 1 and t.arity == 1:
        shape = ShapeClass.SCALAR
    elif t.rows and (t.arity == 1 or t.n_rows == 1):
        shape = ShapeClass.VECTOR
    else:
        shape = t.shape_class if not t.rows else ShapeClass.TABLE
    if shape == t.shape_class:
        return t
    return replace(t, shape_class=shape)


def parse_sql_result(column_names: Sequence[str],
                     raw_rows: Sequence[Sequence[Any]]) -> CanonicalTable:
    """Canonicalize one statement's cursor output."""
    if raw_rows:
        arity = len(raw_rows[0])
        if any(len(r) != arity for r in raw_rows):
            raise RaggedRows("cursor returned ragged rows")
    return make_table(raw_rows, columns=list(column_names) or None,
                      provenance="sql")


# ---------------------------------------------------------------------------
# Shim wire payloads (see the paradigm-shim package for the producer side).

def parse_shim_payload(payload: Any) -> CanonicalTable:
    """Parse the shim's structured result payload into a canonical table."""
    if isinstance(payload, (str, bytes)):
        try:
            payload = json.loads(payload)
        except json.JSONDecodeError as exc:
            raise MalformedPayload(f"payload is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or "kind" not in payload:
        raise MalformedPayload("payload must be an object with a 'kind' field")
    kind = payload["kind"]
    if kind == "scalar":
        if "value" not in payload:
            raise MalformedPayload("scalar payload lacks 'value'")
        return make_table([[payload["value"]]], provenance="shim")
    if kind == "list":
        values = payload.get("values")
        if not isinstance(values, list):
            raise MalformedPayload("list payload lacks 'values' array")
        return make_table([[v] for v in values], provenance="shim")
    if kind == "table":
        rows = payload.get("rows")
        columns = payload.get("columns")
        if not isinstance(rows, list) or not isinstance(columns, list):
            raise MalformedPayload("table payload needs 'columns' and 'rows'")
        if any(not isinstance(r, list) or len(r) != len(columns) for r in rows):
            raise MalformedPayload("table payload rows are not rectangular")
        return make_table(rows, columns=columns, provenance="shim")
    if kind == "error":
        raise MalformedPayload("error payload reached the result parser")
    raise MalformedPayload(f"unknown payload kind {kind!r}")


# ---------------------------------------------------------------------------
# Printed-stdout fallback parsing.

_DTYPE_LINE = re.compile(r"^(Name|dtype|Length|Freq)\b.*:", re.IGNORECASE)
_LIST_RE = re.compile(r"^[\[\(](.*)[\]\)]$", re.DOTALL)


def _split_columns(line: str) -> list:
    parts = re.split(r"\s{2,}|\t", line.strip())
    return [p for p in parts if p != ""]


def _strip_index_column(rows: list) -> list:
    """Drop a leading positional-index column (pandas rendering metadata)."""
    if not rows or any(len(r) < 2 for r in rows):
        return rows
    first = [r[0] for r in rows]
    try:
        nums = [int(x) for x in first]
    except (ValueError, TypeError):
        return rows
    if all(b > a for a, b in zip(nums, nums[1:])):
        return [r[1:] for r in rows]
    return rows


def parse_printed_output(text: str) -> CanonicalTable:
    """Best-effort parse of captured stdout. Total: falls back to a single
    Text scalar; provenance is always "printed-fallback"."""
    prov = "printed-fallback"
    stripped = text.strip("\n").strip()
    if not stripped:
        return CanonicalTable((), None, ShapeClass.TABLE, prov)

    lines = [ln for ln in stripped.splitlines() if ln.strip()]
    lines = [ln for ln in lines if not _DTYPE_LINE.match(ln.strip())]
    lines = [ln for ln in lines if ln.strip() != "Empty DataFrame"
             and not ln.strip().startswith("Columns: ")
             and not ln.strip().startswith("Index: ")]
    if not lines:
        return CanonicalTable((), None, ShapeClass.TABLE, prov)

    if len(lines) == 1:
        line = lines[0].strip()
        m = _LIST_RE.fullmatch(line)
        if m:
            items = [it.strip().strip("'\"") for it in m.group(1).split(",")]
            items = [it for it in items if it != ""]
            return make_table([[it] for it in items], provenance=prov)
        if "," in line:
            items = [it.strip() for it in line.split(",")]
            return make_table([items], provenance=prov)
        return make_table([[line]], provenance=prov)

    grid = [_split_columns(ln) for ln in lines]
    widths = {len(r) for r in grid}
    if len(widths) == 1:
        body = grid
        columns = None
        data = _strip_index_column(body)
        if data is not body:
            body = data
        return make_table(body, columns=columns, provenance=prov)
    # Header narrower by one: pandas prints the index column unnamed.
    if len(widths) == 2:
        w_head, w_body = len(grid[0]), len(grid[1])
        if all(len(r) == w_body for r in grid[1:]) and w_head == w_body - 1:
            body = _strip_index_column(grid[1:])
            if all(len(r) == w_head for r in body):
                return make_table(body, columns=grid[0], provenance=prov)
        if all(len(r) == w_body for r in grid[1:]) and w_head == w_body:
            return make_table(grid[1:], columns=grid[0], provenance=prov)
    return make_table([[stripped]], provenance=prov)


# ---------------------------------------------------------------------------
# Canonical serialization: the document stored by reports and fixtures.

def value_to_doc(v: CanonicalValue) -> dict:
    doc: dict = {"t": v.kind.value}
    if v.kind is Kind.NULL:
        doc["v"] = None
    elif v.kind is Kind.DATE:
        doc["v"] = v.payload.isoformat()
    elif v.kind is Kind.TIMESTAMP:
        doc["v"] = v.payload.isoformat(sep=" ")
    else:
        doc["v"] = v.payload
    if v.percent_marked:
        doc["pct"] = True
    return doc


def value_from_doc(doc: dict) -> CanonicalValue:
    kind = Kind(doc["t"])
    pct = bool(doc.get("pct", False))
    v = doc.get("v")
    if kind is Kind.NULL:
        return NULL
    if kind is Kind.DATE:
        return CanonicalValue(kind, date.fromisoformat(v))
    if kind is Kind.TIMESTAMP:
        return CanonicalValue(kind, datetime.fromisoformat(v))
    if kind is Kind.INTEGER:
        return CanonicalValue(kind, int(v), percent_marked=pct)
    if kind is Kind.REAL:
        return CanonicalValue(kind, float(v), percent_marked=pct)
    if kind is Kind.BOOLEAN:
        return CanonicalValue(kind, bool(v))
    return CanonicalValue(kind, str(v))


def table_to_doc(t: CanonicalTable) -> dict:
    doc: dict = {
        "rows": [[value_to_doc(c) for c in row] for row in t.rows],
        "shape_class": t.shape_class.value,
        "provenance": t.provenance,
    }
    if t.columns is not None:
        doc["columns"] = list(t.columns)
    return doc


def table_from_doc(doc: dict) -> CanonicalTable:
    rows = tuple(tuple(value_from_doc(c) for c in row)
                 for row in doc["rows"])
    columns = tuple(doc["columns"]) if "columns" in doc else None
    return CanonicalTable(rows, columns,
                          ShapeClass(doc.get("shape_class", "table")),
                          doc.get("provenance", "constructed"))


def dump_table(t: CanonicalTable) -> str:
    return json.dumps(table_to_doc(t), sort_keys=True)


def load_table(text: str) -> CanonicalTable:
    return table_from_doc(json.loads(text))
