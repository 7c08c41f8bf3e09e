"""Program execution for both paradigms.

SQL runs read-only against the SQLite file with statement interruption on
timeout. Candidate pandas programs run through the sandbox shim in a
private copy of the CSV working directory; the serialized `result` payload
is the canonical capture, with printed-stdout parsing as fallback.
"""

from __future__ import annotations

import json
import keyword
import os
import re
import resource
import shutil
import sqlite3
import subprocess
import sys
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from .canon import (CanonicalTable, MalformedPayload, parse_printed_output,
                    parse_shim_payload, parse_sql_result)
from .dataset import BenchmarkItem, Paradigm, export_csvs, list_tables
from .equivalence import DEFAULT_OPTIONS, EquivalenceOptions, compare

RUNNER_ENV_VAR = "PARADIGM_BENCH_RUNNER"
PAYLOAD_FILENAME = "shim_result.json"

STATUS_OK = "Ok"
STATUS_RUNTIME_ERROR = "RuntimeError"
STATUS_TIMEOUT = "Timeout"
STATUS_PROTOCOL_ERROR = "ProtocolError"


@dataclass(frozen=True)
class ExecutionLimits:
    wall_time: float = 60.0
    memory_cap: int = 2 * 1024 ** 3
    stdout_cap: int = 8 * 1024 ** 2

    def __post_init__(self):
        if self.wall_time <= 0 or self.memory_cap <= 0 or self.stdout_cap <= 0:
            raise ValueError("all execution limits must be positive")


@dataclass(frozen=True)
class ExecutionOutcome:
    status: str
    table: Optional[CanonicalTable] = None
    message: str = ""
    duration: float = 0.0
    stderr_excerpt: str = ""

    def __post_init__(self):
        if self.status == STATUS_OK and self.table is None:
            raise ValueError("Ok outcomes carry a table")

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK


@dataclass(frozen=True)
class StabilityReport:
    verdict: str  # "Stable" | "Unstable"
    trials: int
    diverging_pair: Optional[Tuple[int, int]] = None
    witness: str = ""

    def __post_init__(self):
        if self.verdict == "Unstable" and self.diverging_pair is None:
            raise ValueError("Unstable reports name a diverging pair")


@dataclass(frozen=True)
class LintViolation:
    rule_id: str  # ForbiddenSqlToken | FunctionDefinition |
                  # MissingCsvRead | MissingResultPrint
    location: int
    excerpt: str


# ---------------------------------------------------------------------------
# SQL paradigm.

def run_sql(db_ref, sql: str,
            limits: ExecutionLimits = ExecutionLimits()) -> ExecutionOutcome:
    """Execute one read-only statement with wall-time interruption."""
    start = time.monotonic()
    try:
        conn = sqlite3.connect(f"file:{Path(db_ref).as_posix()}?mode=ro",
                               uri=True)
    except sqlite3.Error as exc:
        return ExecutionOutcome(STATUS_RUNTIME_ERROR, message=str(exc))
    timer = threading.Timer(limits.wall_time, conn.interrupt)
    timer.start()
    try:
        cur = conn.execute(sql)
        raw_rows = cur.fetchall()
        columns = [d[0] for d in cur.description] if cur.description else []
    except sqlite3.OperationalError as exc:
        duration = time.monotonic() - start
        if "interrupt" in str(exc).lower() or duration >= limits.wall_time:
            return ExecutionOutcome(STATUS_TIMEOUT, duration=duration,
                                    message=str(exc))
        return ExecutionOutcome(STATUS_RUNTIME_ERROR, duration=duration,
                                message=str(exc))
    except sqlite3.Error as exc:
        return ExecutionOutcome(STATUS_RUNTIME_ERROR,
                                duration=time.monotonic() - start,
                                message=str(exc))
    finally:
        timer.cancel()
        conn.close()
    return ExecutionOutcome(
        STATUS_OK, table=parse_sql_result(columns, raw_rows),
        duration=time.monotonic() - start)


# ---------------------------------------------------------------------------
# Code paradigm via the sandbox shim.

def resolve_runner() -> List[str]:
    """Shim command, overridable via PARADIGM_BENCH_RUNNER."""
    override = os.environ.get(RUNNER_ENV_VAR)
    if override:
        return override.split()
    found = shutil.which("paradigm-shim")
    if found:
        return [found]
    raise FileNotFoundError(
        "no shim runner found: install paradigm-shim or set "
        f"{RUNNER_ENV_VAR}")


def _limit_memory(cap: int):
    def apply():
        try:
            resource.setrlimit(resource.RLIMIT_AS, (cap, cap))
        except (ValueError, OSError):
            pass
    return apply


def run_code(workdir, program: str,
             limits: ExecutionLimits = ExecutionLimits()) -> ExecutionOutcome:
    """Run a candidate program in an isolated copy of `workdir`."""
    runner = resolve_runner()
    start = time.monotonic()
    with tempfile.TemporaryDirectory(prefix="pbench-run-") as tmp:
        tmp_path = Path(tmp)
        for entry in Path(workdir).iterdir():
            if entry.is_file():
                shutil.copy2(entry, tmp_path / entry.name)
        program_path = tmp_path / "_candidate.py"
        program_path.write_text(program, encoding="utf-8")
        payload_path = tmp_path / PAYLOAD_FILENAME
        cmd = runner + [str(program_path), "--out", str(payload_path)]
        try:
            proc = subprocess.run(
                cmd, cwd=tmp, capture_output=True,
                timeout=limits.wall_time,
                preexec_fn=_limit_memory(limits.memory_cap))
        except subprocess.TimeoutExpired:
            return ExecutionOutcome(
                STATUS_TIMEOUT, duration=time.monotonic() - start,
                message=f"wall time {limits.wall_time}s exceeded")
        duration = time.monotonic() - start
        stdout = proc.stdout[:limits.stdout_cap].decode("utf-8", "replace")
        stderr = proc.stderr[-2000:].decode("utf-8", "replace")

        payload = None
        if payload_path.exists():
            try:
                payload = json.loads(payload_path.read_text(encoding="utf-8"))
            except (json.JSONDecodeError, OSError) as exc:
                return ExecutionOutcome(
                    STATUS_PROTOCOL_ERROR, duration=duration,
                    message=f"unreadable payload: {exc}",
                    stderr_excerpt=stderr)

        if proc.returncode == 0 and payload is not None:
            try:
                table = parse_shim_payload(payload)
            except MalformedPayload as exc:
                return ExecutionOutcome(
                    STATUS_PROTOCOL_ERROR, duration=duration,
                    message=str(exc), stderr_excerpt=stderr)
            return ExecutionOutcome(STATUS_OK, table=table,
                                    duration=duration,
                                    stderr_excerpt=stderr)
        if payload is not None and payload.get("kind") == "error":
            err = payload.get("error") or {}
            return ExecutionOutcome(
                STATUS_RUNTIME_ERROR, duration=duration,
                message=f"{err.get('type', 'Error')}: "
                        f"{err.get('message', '')}",
                stderr_excerpt=stderr)
        if payload is None and stdout.strip():
            # Shim payload unavailable: degrade to printed-output capture.
            return ExecutionOutcome(
                STATUS_OK, table=parse_printed_output(stdout),
                duration=duration, stderr_excerpt=stderr)
        if proc.returncode != 0:
            return ExecutionOutcome(
                STATUS_RUNTIME_ERROR, duration=duration,
                message=f"runner exited {proc.returncode}",
                stderr_excerpt=stderr)
        return ExecutionOutcome(
            STATUS_PROTOCOL_ERROR, duration=duration,
            message="no payload and empty stdout", stderr_excerpt=stderr)


# ---------------------------------------------------------------------------
# Template-contract linting.

# The generation template enumerates SQL/SELECT/JOIN/CREATE/WHERE "etc.";
# the closure adds distinctive SQL reserved words, excluding Python
# keywords and idiomatic pandas argument names (by, on, inner, outer, ...)
# to keep compliant programs clean.
FORBIDDEN_SQL_TOKENS = frozenset({
    "sql", "sqlite", "select", "join", "create", "where", "insert",
    "update", "delete", "drop", "alter", "having", "union", "intersect",
    "exists", "limit", "offset", "vacuum", "pragma", "trigger",
    "varchar", "groupwise", "reindex", "savepoint", "tablesample",
})

_SQL_TOKEN_RE = re.compile(
    r"\b(" + "|".join(sorted(FORBIDDEN_SQL_TOKENS)) + r")\b", re.IGNORECASE)
_DEF_RE = re.compile(r"\b(def|lambda|class)\b")
_READ_CSV_RE = re.compile(r"\bread_csv\s*\(")
_PRINT_RESULT_RE = re.compile(r"\bprint\s*\(\s*result\b")


def lint_code(program: str) -> List[LintViolation]:
    """Token-level scan of a candidate program against the template
    contract. Matches inside comments and string literals count: the
    contract forbids mentioning SQL, not just using it."""
    violations: List[LintViolation] = []
    lines = program.splitlines()
    for lineno, line in enumerate(lines, start=1):
        for m in _SQL_TOKEN_RE.finditer(line):
            violations.append(LintViolation(
                "ForbiddenSqlToken", lineno, m.group(0)))
        for m in _DEF_RE.finditer(line):
            violations.append(LintViolation(
                "FunctionDefinition", lineno, m.group(0)))
    if not _READ_CSV_RE.search(program):
        violations.append(LintViolation("MissingCsvRead", 1, ""))
    if not _PRINT_RESULT_RE.search(program):
        violations.append(LintViolation("MissingResultPrint", 1, ""))
    return violations


# ---------------------------------------------------------------------------
# Determinism probing under input reordering.

def _shuffled_db_copy(db_ref, dest: Path, seed: int) -> None:
    shutil.copy2(db_ref, dest)
    import random as _random
    rng = _random.Random(seed)
    conn = sqlite3.connect(dest)
    try:
        for table in list_tables(dest):
            cur = conn.execute(f'SELECT * FROM "{table}"')
            rows = cur.fetchall()
            rng.shuffle(rows)
            conn.execute(f'DELETE FROM "{table}"')
            if rows:
                placeholders = ",".join("?" * len(rows[0]))
                conn.executemany(
                    f'INSERT INTO "{table}" VALUES ({placeholders})', rows)
        conn.commit()
    finally:
        conn.close()


def probe_determinism(item: BenchmarkItem, program: str, paradigm: Paradigm,
                      trials: int, db_ref,
                      limits: ExecutionLimits = ExecutionLimits(),
                      base_seed: int = 0,
                      opts: EquivalenceOptions = DEFAULT_OPTIONS
                      ) -> StabilityReport:
    """Re-execute against copies of the data whose base-table row order is
    shuffled with recorded seeds; Stable iff all outcomes are pairwise
    equivalent with order sensitivity off."""
    if trials < 2:
        raise ValueError("trials must be >= 2")
    insensitive = EquivalenceOptions(
        numeric_abs_tol=opts.numeric_abs_tol,
        rounding_tolerance_enabled=opts.rounding_tolerance_enabled,
        order_sensitive=False,
        superset_enabled=opts.superset_enabled,
        dedup_enabled=opts.dedup_enabled,
        max_projection_width=opts.max_projection_width)

    outcomes: List[ExecutionOutcome] = []
    with tempfile.TemporaryDirectory(prefix="pbench-probe-") as tmp:
        tmp_path = Path(tmp)
        for i in range(trials):
            seed = base_seed + i
            if paradigm is Paradigm.SQL:
                db_copy = tmp_path / f"trial{i}.sqlite"
                _shuffled_db_copy(db_ref, db_copy, seed)
                outcome = run_sql(db_copy, program, limits)
            else:
                workdir = tmp_path / f"trial{i}"
                export_csvs(db_ref, workdir, shuffle_seed=seed)
                outcome = run_code(workdir, program, limits)
            if not outcome.ok:
                return StabilityReport(
                    "Unstable", trials=trials, diverging_pair=(i, i),
                    witness=f"trial {i} failed: {outcome.status} "
                            f"{outcome.message}")
            for j, earlier in enumerate(outcomes):
                verdict = compare(earlier.table, outcome.table, insensitive)
                if not verdict.equivalent:
                    return StabilityReport(
                        "Unstable", trials=trials, diverging_pair=(j, i),
                        witness=verdict.witness or "")
            outcomes.append(outcome)
    return StabilityReport("Stable", trials=trials)
