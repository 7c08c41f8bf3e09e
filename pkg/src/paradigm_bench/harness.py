"""Top-level evaluation loop: per-item evaluation, the EX metric, and the
optional model-judge fallback for renderings the deterministic engine
cannot canonicalize."""

from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .canon import CanonicalTable, ShapeClass, render_value
from .clients import ModelClient
from .dataset import (BenchmarkItem, Difficulty, Paradigm, SchemaRendering,
                      build_prompt, detect_order_sensitive)
from .equivalence import (EquivalenceOptions, EquivalenceVerdict, compare)
from .execution import (STATUS_OK, STATUS_PROTOCOL_ERROR, ExecutionLimits,
                        ExecutionOutcome, run_code, run_sql)
from .lcf import run_lcf

SETTING_STANDARD = "Standard"
SETTING_LCF = "LCF"

ERROR_LABELS = ("FilterCondition", "RowSelection", "ColumnSelection",
                "LogicError", "Other")

# Table 1 layout: tier display labels in column order.
TIER_COLUMNS = (("Simple", Difficulty.SIMPLE),
                ("Mod.", Difficulty.MODERATE),
                ("Hard", Difficulty.HARD))


class MixedRun(Exception):
    """compute_ex received results from more than one paradigm/setting."""


class UnparseableJudgeReply(Exception):
    """The judge never produced the required one-word reply."""


class MissingGold(Exception):
    """The item lacks a gold program for the requested paradigm."""


@dataclass(frozen=True)
class ItemResult:
    item_id: str
    paradigm: Paradigm
    setting: str
    difficulty: Difficulty
    program: str
    pred_outcome: ExecutionOutcome
    gold_outcome: ExecutionOutcome
    verdict: Optional[EquivalenceVerdict] = None
    error_label: Optional[str] = None
    judge_verdict: Optional[str] = None  # "Correct" | "Incorrect"
    transcript_ref: Optional[str] = None

    def __post_init__(self):
        both_ok = self.pred_outcome.ok and self.gold_outcome.ok
        if both_ok != (self.verdict is not None):
            raise ValueError("verdict present iff both outcomes are Ok")
        if self.error_label is not None and self.error_label not in \
                ERROR_LABELS:
            raise ValueError(f"unknown error label {self.error_label!r}")
        if self.setting not in (SETTING_STANDARD, SETTING_LCF):
            raise ValueError(f"unknown setting {self.setting!r}")
        if self.judge_verdict is not None and self.verdict is not None \
                and self.verdict.equivalent:
            raise ValueError("deterministic Equivalent verdicts are final")

    @property
    def correct(self) -> bool:
        if self.verdict is not None and self.verdict.equivalent:
            return True
        return self.judge_verdict == "Correct"


@dataclass(frozen=True)
class TierStats:
    count: int
    correct: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.count if self.count else 0.0


@dataclass(frozen=True)
class ExReport:
    paradigm: Paradigm
    setting: str
    tiers: Mapping[str, TierStats]  # keyed by the Table 1 column labels
    total: TierStats
    excluded_count: int = 0

    def __post_init__(self):
        if sum(t.count for t in self.tiers.values()) != self.total.count:
            raise ValueError("tier counts must sum to the total")


def _strip_fences(text: str) -> str:
    text = text.strip()
    if text.startswith("```"):
        lines = text.splitlines()
        body = []
        for line in lines[1:]:
            if line.strip().startswith("```"):
                break
            body.append(line)
        return "\n".join(body).strip()
    return text


def extract_program(reply: str, paradigm: Paradigm) -> str:
    """Recover the runnable program from a model reply.

    The SQL prompt ends with a dangling SELECT, so a reply that continues
    the statement gets the keyword restored.
    """
    program = _strip_fences(reply)
    if paradigm is Paradigm.SQL and not program.lower().startswith(
            ("select", "with")):
        program = "SELECT " + program
    return program


def gold_program(item: BenchmarkItem, paradigm: Paradigm) -> Tuple[str, Paradigm]:
    """The gold to execute for this paradigm.

    Code items without a gold program fall back to the gold SQL run on the
    database — the equivalence engine absorbs the cross-paradigm shape
    differences.
    """
    if paradigm is Paradigm.CODE and item.gold_code:
        return item.gold_code, Paradigm.CODE
    if not item.gold_sql:
        raise MissingGold(f"{item.item_id} has no gold for {paradigm.value}")
    return item.gold_sql, Paradigm.SQL


def item_options(item: BenchmarkItem) -> EquivalenceOptions:
    return EquivalenceOptions(
        order_sensitive=detect_order_sensitive(item.gold_sql or ""))


def evaluate_item(item: BenchmarkItem, schema: SchemaRendering,
                  paradigm: Paradigm, setting: str, subject: ModelClient,
                  oracle: Optional[ModelClient] = None, *,
                  db_ref=None, csv_dir=None,
                  limits: ExecutionLimits = ExecutionLimits(),
                  run_dir=None) -> ItemResult:
    """Obtain a program from the subject, execute it alongside the gold,
    and compare with item-appropriate options.

    SQL predictions run against ``db_ref``; code predictions run against
    the CSV export in ``csv_dir``. The gold always runs in its own
    paradigm (gold SQL on the database, gold code on the CSVs).
    """
    if setting == SETTING_LCF and oracle is None:
        raise ValueError("the LCF setting requires an oracle client")

    transcript_ref = None
    if setting == SETTING_LCF:
        transcript = run_lcf(subject, oracle, item, schema, paradigm)
        if run_dir is not None:
            from .lcf import save_transcript
            transcript_ref = str(save_transcript(transcript, run_dir))
        if not transcript.complete:
            failure = transcript.failure or "dialogue failed"
            program = transcript.phase3_program or ""
            pred = ExecutionOutcome(status=STATUS_PROTOCOL_ERROR,
                                    message=f"LCF: {failure}")
            gold_out = _run_gold(item, paradigm, db_ref, csv_dir, limits)
            return ItemResult(item_id=item.item_id, paradigm=paradigm,
                              setting=setting, difficulty=item.difficulty,
                              program=program, pred_outcome=pred,
                              gold_outcome=gold_out,
                              transcript_ref=transcript_ref)
        program = extract_program(transcript.phase3_program, paradigm)
    else:
        system, user = build_prompt(item, schema, paradigm)
        program = extract_program(subject.send(system, user), paradigm)

    if paradigm is Paradigm.SQL:
        pred = run_sql(db_ref, program, limits)
    else:
        pred = run_code(csv_dir, program, limits)
    gold_out = _run_gold(item, paradigm, db_ref, csv_dir, limits)

    verdict = None
    if pred.ok and gold_out.ok:
        verdict = compare(pred.table, gold_out.table, item_options(item))
    return ItemResult(item_id=item.item_id, paradigm=paradigm,
                      setting=setting, difficulty=item.difficulty,
                      program=program, pred_outcome=pred,
                      gold_outcome=gold_out, verdict=verdict,
                      transcript_ref=transcript_ref)


def _run_gold(item: BenchmarkItem, paradigm: Paradigm, db_ref, csv_dir,
              limits: ExecutionLimits) -> ExecutionOutcome:
    gold, gold_paradigm = gold_program(item, paradigm)
    if gold_paradigm is Paradigm.SQL:
        return run_sql(db_ref, gold, limits)
    return run_code(csv_dir, gold, limits)


def compute_ex(results: Sequence[ItemResult],
               excluded_count: int = 0) -> ExReport:
    """Execution accuracy per difficulty tier plus the total row."""
    if not results:
        tiers = {label: TierStats(0, 0) for label, _ in TIER_COLUMNS}
        return ExReport(paradigm=Paradigm.SQL, setting=SETTING_STANDARD,
                        tiers=tiers, total=TierStats(0, 0),
                        excluded_count=excluded_count)
    paradigms = {r.paradigm for r in results}
    settings = {r.setting for r in results}
    if len(paradigms) > 1 or len(settings) > 1:
        raise MixedRun(f"paradigms={sorted(p.value for p in paradigms)} "
                       f"settings={sorted(settings)}")
    tiers = {}
    for label, difficulty in TIER_COLUMNS:
        bucket = [r for r in results if r.difficulty is difficulty]
        tiers[label] = TierStats(count=len(bucket),
                                 correct=sum(r.correct for r in bucket))
    total = TierStats(count=len(results),
                      correct=sum(r.correct for r in results))
    return ExReport(paradigm=next(iter(paradigms)),
                    setting=next(iter(settings)), tiers=tiers, total=total,
                    excluded_count=excluded_count)


JUDGE_SYSTEM = """\
You are a professional output-equivalence validator. Decide whether Output 1 and Output 2 are semantically and materially equivalent. Follow these rules strictly:

Core Equivalence Rules:
1. Content Over Format: Ignore data presentation (e.g., CSV vs. JSON, whitespace) and metadata (e.g., Pandas Index). Focus solely on the actual content.
2. Structural Invariance: Flatten nested structures. A scalar, a single-element list, and a 1xN array are equivalent if they contain the same value (e.g., ['apple'] == 'apple').
3. Order Insensitivity: Unless explicit sorting is required, treat lists and table rows as multisets. Order does not matter.
4. Type Normalization: Normalize numeric types (1.0 == 1), booleans (True/yes/1), and date formats before comparison.
5. Superset Validity: If one output contains extra descriptive columns (labels) and the other is value-only, they are equivalent if the value projection matches exactly.
6. Numeric Tolerance: Percentages and fractions are equivalent (e.g., 0.227 == 22.7%) within standard rounding tolerance.
7. De-duplication: If one output contains duplicates and the other is unique, compare the sets of unique values."""

JUDGE_USER_TEMPLATE = """\
Evaluation Task:
Output 1: {predicted_output}
Output 2: {ground_truth}
Respond with exactly one word: "Correct" if equivalent, "Incorrect" otherwise."""


def render_for_judge(table: CanonicalTable) -> str:
    """A compact, unambiguous rendering for the judge prompt slots."""
    if table.shape_class is ShapeClass.SCALAR:
        return render_value(table.rows[0][0])
    if table.arity == 1:
        return "[" + ", ".join(render_value(r[0]) for r in table.rows) + "]"
    return "[" + ", ".join(
        "(" + ", ".join(render_value(c) for c in row) + ")"
        for row in table.rows) + "]"


def adjudicate(pred: CanonicalTable, gold: CanonicalTable,
               judge: ModelClient, max_attempts: int = 3) -> str:
    """Ask the judge for a one-word equivalence call; returns "Correct" or
    "Incorrect"."""
    user = JUDGE_USER_TEMPLATE.format(predicted_output=render_for_judge(pred),
                                      ground_truth=render_for_judge(gold))
    replies = []
    for _ in range(max_attempts):
        reply = judge.send(JUDGE_SYSTEM, user).strip().strip('."\'')
        if reply.lower() == "correct":
            return "Correct"
        if reply.lower() == "incorrect":
            return "Incorrect"
        replies.append(reply)
    raise UnparseableJudgeReply(f"after {max_attempts} attempts: {replies}")


def judge_eligible(result: ItemResult) -> bool:
    """Judge fallback policy: only deterministic NotEquivalent verdicts
    whose inputs the engine could not fully canonicalize."""
    if result.verdict is None or result.verdict.equivalent:
        return False
    printed = "printed-fallback" in (result.pred_outcome.table.provenance,
                                     result.gold_outcome.table.provenance)
    capped = "projection width cap" in (result.verdict.witness or "")
    return printed or capped


def apply_judge_fallback(results: Sequence[ItemResult],
                         judge: ModelClient) -> List[ItemResult]:
    """Consult the judge for eligible results only; never overrides an
    Equivalent verdict."""
    updated = []
    for result in results:
        if judge_eligible(result):
            word = adjudicate(result.pred_outcome.table,
                              result.gold_outcome.table, judge)
            result = replace(result, judge_verdict=word)
        updated.append(result)
    return updated


def _verdict_doc(verdict: Optional[EquivalenceVerdict]) -> Optional[dict]:
    if verdict is None:
        return None
    return {"decision": verdict.decision,
            "rule_trace": list(verdict.rule_trace),
            "witness": verdict.witness}


def _result_doc(result: ItemResult) -> dict:
    return OrderedDict([
        ("item_id", result.item_id),
        ("paradigm", result.paradigm.value),
        ("setting", result.setting),
        ("difficulty", result.difficulty.value),
        ("program", result.program),
        ("pred_status", result.pred_outcome.status),
        ("gold_status", result.gold_outcome.status),
        ("verdict", _verdict_doc(result.verdict)),
        ("judge_verdict", result.judge_verdict),
        ("error_label", result.error_label),
        ("correct", result.correct),
        ("transcript", result.transcript_ref),
    ])


def emit_report(results: Sequence[ItemResult], ex: ExReport, run_dir,
                sampling: Optional[dict] = None) -> Tuple[Path, Path]:
    """Write the machine-readable run document and the human table.

    Output is deterministic: results sorted by item id, keys sorted, so
    two identical runs diff clean.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    ordered = sorted(results, key=lambda r: r.item_id)
    doc = {
        "paradigm": ex.paradigm.value,
        "setting": ex.setting,
        "sampling": sampling or {"temperature": 0.7, "top_p": 0.95},
        "ex": {label: {"count": t.count, "correct": t.correct,
                       "accuracy": round(t.accuracy, 4)}
               for label, t in ex.tiers.items()},
        "total": {"count": ex.total.count, "correct": ex.total.correct,
                  "accuracy": round(ex.total.accuracy, 4)},
        "excluded_count": ex.excluded_count,
        "results": [_result_doc(r) for r in ordered],
    }
    machine = run_dir / "run.json"
    machine.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                       encoding="utf-8")

    human = run_dir / "report.txt"
    human.write_text(render_ex_table(ex, ordered), encoding="utf-8")
    return machine, human


def render_ex_table(ex: ExReport, results: Sequence[ItemResult] = ()) -> str:
    labels = [label for label, _ in TIER_COLUMNS] + ["Total"]
    stats = [ex.tiers[label] for label, _ in TIER_COLUMNS] + [ex.total]
    lines = [f"EX — paradigm={ex.paradigm.value} setting={ex.setting}", ""]
    header = "  ".join(f"{label:>8}" for label in labels)
    accs = "  ".join(f"{t.accuracy * 100:>7.2f}%" for t in stats)
    counts = "  ".join(f"{t.correct:>3}/{t.count:<4}" for t in stats)
    lines += [header, accs, counts]
    if ex.excluded_count:
        lines.append(f"(excluded: {ex.excluded_count} items without gold)")
    if results:
        lines.append("")
        for r in results:
            mark = "ok " if r.correct else "ERR"
            lines.append(f"  {mark}  {r.item_id:<16} "
                         f"{r.difficulty.value:<9} "
                         f"pred={r.pred_outcome.status} "
                         f"gold={r.gold_outcome.status}")
    return "\n".join(lines) + "\n"
