"""Benchmark items, CSV export of relational databases, schema rendering,
and the generation prompt templates for both paradigms."""

from __future__ import annotations

import csv
import json
import random
import re
import sqlite3
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple


class Paradigm(str, Enum):
    SQL = "sql"
    CODE = "code"


class Difficulty(str, Enum):
    SIMPLE = "Simple"
    MODERATE = "Moderate"
    HARD = "Hard"


_DIFFICULTY_ALIASES = {
    "simple": Difficulty.SIMPLE,
    "moderate": Difficulty.MODERATE,
    "hard": Difficulty.HARD,
    "challenging": Difficulty.HARD,
}

SQLGOLD_LABELS = ("StructureSchema", "DataValuesFormats",
                  "LogicBusinessRules", "FormattingConstraints")
CODE_CONVERSION_LABELS = ("DataTypesFormats", "StructureRedundancy",
                          "LogicConstraints", "Sorting")


@dataclass(frozen=True)
class CorrectionCategory:
    side: str   # "SqlGold" | "CodeConversion"
    label: str

    def __post_init__(self):
        allowed = {"SqlGold": SQLGOLD_LABELS,
                   "CodeConversion": CODE_CONVERSION_LABELS}.get(self.side)
        if allowed is None:
            raise ValueError(f"unknown correction side {self.side!r}")
        if self.label not in allowed:
            raise ValueError(
                f"label {self.label!r} is not valid for side {self.side}")


@dataclass(frozen=True)
class BenchmarkItem:
    item_id: str
    db_id: str
    question: str
    knowledge: str
    gold_sql: str
    gold_code: Optional[str] = None
    difficulty: Difficulty = Difficulty.SIMPLE
    order_sensitive: bool = False
    verification_status: Optional[str] = None

    def __post_init__(self):
        if not self.question:
            raise ValueError("question must be non-empty")
        if not self.gold_sql:
            raise ValueError("gold_sql must be non-empty")


@dataclass(frozen=True)
class SchemaRendering:
    db_id: str
    ddl_text: str
    table_names: Tuple[str, ...]


@dataclass(frozen=True)
class CsvExportManifest:
    db_id: str
    files: Tuple[Tuple[str, str, int], ...]  # (table, path, row count)
    null_rendering: str = ""
    shuffle_seed: Optional[int] = None


class ItemLoadError(ValueError):
    """Per-line problems found while loading an item file."""

    def __init__(self, problems: List[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


class NameCollision(ValueError):
    """Two tables sanitize to the same CSV filename."""


_ORDER_BY_RE = re.compile(r"\border\s+by\b", re.IGNORECASE)

_REQUIRED_FIELDS = ("question", "gold_sql", "db_id")

_FIELD_ALIASES = {
    "gold_sql": ("gold_sql", "SQL", "sql", "query"),
    "knowledge": ("knowledge", "evidence"),
    "item_id": ("item_id", "question_id", "id"),
}


def _pick(record: dict, canonical: str):
    for alias in _FIELD_ALIASES.get(canonical, (canonical,)):
        if alias in record and record[alias] is not None:
            return record[alias]
    return None


def detect_order_sensitive(gold_sql: str) -> bool:
    """An explicit ordering directive in the gold program is the only
    machine-readable order signal."""
    return bool(_ORDER_BY_RE.search(gold_sql))


def load_items(path) -> List[BenchmarkItem]:
    """Load line-delimited item records; collects all per-line errors."""
    problems: List[str] = []
    items: List[BenchmarkItem] = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                problems.append(f"line {lineno}: invalid record ({exc.msg})")
                continue
            missing = [f for f in _REQUIRED_FIELDS
                       if (_pick(record, f) if f != "db_id"
                           else record.get("db_id")) in (None, "")]
            if missing:
                problems.append(
                    f"line {lineno}: MissingField {', '.join(missing)}")
                continue
            item_id = _pick(record, "item_id")
            item_id = str(item_id) if item_id is not None else str(lineno)
            if item_id in seen:
                problems.append(f"line {lineno}: DuplicateId {item_id}")
                continue
            seen.add(item_id)
            gold_sql = str(_pick(record, "gold_sql"))
            difficulty = _DIFFICULTY_ALIASES.get(
                str(record.get("difficulty", "simple")).lower())
            if difficulty is None:
                problems.append(
                    f"line {lineno}: unknown difficulty "
                    f"{record.get('difficulty')!r}")
                continue
            order_sensitive = record.get("order_sensitive")
            if order_sensitive is None:
                order_sensitive = detect_order_sensitive(gold_sql)
            items.append(BenchmarkItem(
                item_id=item_id,
                db_id=str(record["db_id"]),
                question=str(_pick(record, "question") or record["question"]),
                knowledge=str(_pick(record, "knowledge") or ""),
                gold_sql=gold_sql,
                gold_code=record.get("gold_code"),
                difficulty=difficulty,
                order_sensitive=bool(order_sensitive),
                verification_status=record.get("verification_status"),
            ))
    if problems:
        raise ItemLoadError(problems)
    return items


def _connect_ro(db_ref) -> sqlite3.Connection:
    return sqlite3.connect(f"file:{Path(db_ref).as_posix()}?mode=ro",
                           uri=True)


def list_tables(db_ref) -> List[str]:
    with _connect_ro(db_ref) as conn:
        rows = conn.execute(
            "SELECT name FROM sqlite_master WHERE type='table' "
            "AND name NOT LIKE 'sqlite_%' ORDER BY name").fetchall()
    return [r[0] for r in rows]


_SANITIZE_RE = re.compile(r"[^A-Za-z0-9._-]")


def sanitize_filename(table: str) -> str:
    return _SANITIZE_RE.sub("_", table)


def export_csvs(db_ref, outdir, shuffle_seed: Optional[int] = None
                ) -> CsvExportManifest:
    """Export every table to '<table>.csv' (RFC-4180, UTF-8, LF), NULLs as
    empty fields. Row order is the engine's natural order unless a shuffle
    seed is given; the seed is recorded in the manifest either way."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    db_id = Path(db_ref).stem
    tables = list_tables(db_ref)
    name_map = {}
    for t in tables:
        fname = sanitize_filename(t) + ".csv"
        if fname in name_map.values():
            raise NameCollision(f"table {t!r} collides on filename {fname}")
        name_map[t] = fname

    files = []
    rng = random.Random(shuffle_seed) if shuffle_seed is not None else None
    with _connect_ro(db_ref) as conn:
        for t in tables:
            cur = conn.execute(f'SELECT * FROM "{t}"')
            header = [d[0] for d in cur.description]
            rows = cur.fetchall()
            if rng is not None:
                rows = list(rows)
                rng.shuffle(rows)
            path = outdir / name_map[t]
            with open(path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(header)
                writer.writerows(rows)
            files.append((t, str(path), len(rows)))

    manifest = CsvExportManifest(db_id=db_id, files=tuple(files),
                                 null_rendering="",
                                 shuffle_seed=shuffle_seed)
    manifest_doc = {
        "db_id": manifest.db_id,
        "null_rendering": manifest.null_rendering,
        "shuffle_seed": manifest.shuffle_seed,
        "files": [{"table": t, "path": p, "rows": n} for t, p, n in files],
    }
    (outdir / "manifest.json").write_text(
        json.dumps(manifest_doc, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    return manifest


def render_schema(db_ref) -> SchemaRendering:
    """DDL creation statements for every table, in stable name order."""
    db_id = Path(db_ref).stem
    with _connect_ro(db_ref) as conn:
        rows = conn.execute(
            "SELECT name, sql FROM sqlite_master WHERE type='table' "
            "AND name NOT LIKE 'sqlite_%' ORDER BY name").fetchall()
    names = tuple(r[0] for r in rows)
    ddl = "\n\n".join((r[1].rstrip().rstrip(";") + ";") for r in rows if r[1])
    return SchemaRendering(db_id=db_id, ddl_text=ddl, table_names=names)


# ---------------------------------------------------------------------------
# Prompt templates. These are the byte-exact Standard generation prompts;
# the golden files under tests/golden pin them.

SQL_SYSTEM = ("You are a SQL assistant. Only return the SQL query without "
              "any explanation.")

SQL_USER_TEMPLATE = """/* [Schema Info: DDL] */
{ddl}

-- External Knowledge: {knowledge}
-- Using valid SQLite and understanding External Knowledge,
-- answer the following questions for the tables provided above.
-- {question}
SELECT"""

CODE_SYSTEM = """You are an expert Python code generator specializing in pandas data analysis.
Return runnable Python code only. No explanations or markdown.
Strictly use 'import pandas as pd' and pd.read_csv('<table>.csv').
Do NOT use or mention SQL/SELECT/JOIN/CREATE/WHERE/etc.
Do NOT define functions or classes (no 'def', 'lambda', 'class')."""

CODE_USER_TEMPLATE = """/* [Schema Info: Same as Text-to-SQL] */
{ddl}

# Task Description:
# Generate runnable pandas code only. No explanations,
# no markdown, no JSON.
# Requirements:
# 1) Use: import pandas as pd
# 2) Read tables strictly via pd.read_csv('<table>.csv')
# 3) Do NOT use or mention SQL/ SELECT/ JOIN/ CREATE/ WHERE/ etc.
# 4) Do NOT define functions or classes (no 'def', 'lambda', 'class')
# 5) Prefer clear variable names; keep code executable end-to-end
# 6) Use result to record the final result, and finally
#    print(result) to print the final result.

# External Knowledge: {knowledge}
# Question: {question}
CODE"""

_SQL_QUESTION_LINE = "-- {question}"
_CODE_QUESTION_LINE = "# Question: {question}"


def build_prompt(item: BenchmarkItem, schema: SchemaRendering,
                 paradigm: Paradigm,
                 constraints: Optional[str] = None) -> Tuple[str, str]:
    """Instantiate the Standard prompt; with `constraints` present, a single
    clarified-constraints block is inserted immediately before the question
    line (the augmented third-phase prompt)."""
    if schema.db_id != item.db_id:
        raise ValueError(
            f"schema {schema.db_id!r} does not match item db {item.db_id!r}")
    if paradigm is Paradigm.SQL:
        system = SQL_SYSTEM
        user = SQL_USER_TEMPLATE.format(ddl=schema.ddl_text,
                                        knowledge=item.knowledge,
                                        question=item.question)
        marker = _SQL_QUESTION_LINE.format(question=item.question)
        block = f"-- Clarified Constraints: {constraints}\n"
    else:
        system = CODE_SYSTEM
        user = CODE_USER_TEMPLATE.format(ddl=schema.ddl_text,
                                         knowledge=item.knowledge,
                                         question=item.question)
        marker = _CODE_QUESTION_LINE.format(question=item.question)
        block = f"# Clarified Constraints: {constraints}\n"
    if constraints is not None:
        idx = user.index(marker)
        user = user[:idx] + block + user[idx:]
    return system, user
