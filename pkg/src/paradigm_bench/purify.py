"""Dataset purification: multi-model consensus verification followed by a
double-blind review queue.

Stage one executes candidate programs from several independent models and
classifies each item by how the candidates agree with each other and with
the gold annotation. Stage two routes everything that was not auto-verified
into a file-based review queue where two reviewers submit verdicts blind to
each other, with a third adjudicator breaking disagreements.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from .clients import ModelClient
from .dataset import (BenchmarkItem, CorrectionCategory, Paradigm,
                      SchemaRendering, build_prompt)
from .equivalence import EquivalenceOptions, EquivalenceVerdict, compare
from .execution import STATUS_PROTOCOL_ERROR, ExecutionOutcome

# Consensus statuses (one per item after stage one).
AUTO_VERIFIED = "AutoVerified"
SUSPECT_GOLD = "SuspectGold"
DIVERGENT = "Divergent"
EXECUTION_FAILURE = "ExecutionFailure"

# Final partition labels after review.
CORRECTED = "Corrected"
CONFIRMED_VALID = "ConfirmedValid"
PENDING = "Pending"

GOLD_KEY = "gold"


def _category_doc(category: CorrectionCategory) -> dict:
    return {"side": category.side, "label": category.label}


def _category_from_doc(doc) -> Optional[CorrectionCategory]:
    if not doc:
        return None
    return CorrectionCategory(side=doc["side"], label=doc["label"])


class SelfReview(Exception):
    """The same reviewer identity tried to fill both review slots."""


class PrematureFinalize(Exception):
    """Finalization attempted before the review state allows it."""


class QueueStateError(Exception):
    """A queue operation that the item's current state forbids."""


@dataclass(frozen=True)
class CandidateRecord:
    """One model's program for an item, together with its execution outcome."""

    model_name: str
    program: str
    outcome: ExecutionOutcome

    def __post_init__(self):
        if not self.program and self.outcome.ok:
            raise ValueError("a successful candidate must carry its program")


@dataclass(frozen=True)
class ConsensusOutcome:
    status: str
    # Pairwise verdicts among Ok candidates and vs gold, keyed by the two
    # participant names with "gold" reserved for the annotation.
    agreement_matrix: Mapping[Tuple[str, str], EquivalenceVerdict]

    def __post_init__(self):
        if self.status not in (AUTO_VERIFIED, SUSPECT_GOLD, DIVERGENT,
                               EXECUTION_FAILURE):
            raise ValueError(f"unknown consensus status {self.status!r}")


@dataclass(frozen=True)
class Verdict:
    """A reviewer's decision: the gold stands, or here is its replacement."""

    kind: str  # "GoldValid" | "GoldCorrected"
    corrected_gold: str = ""

    def __post_init__(self):
        if self.kind not in ("GoldValid", "GoldCorrected"):
            raise ValueError(f"unknown verdict kind {self.kind!r}")
        if self.kind == "GoldCorrected" and not self.corrected_gold.strip():
            raise ValueError("a correction needs replacement gold text")
        if self.kind == "GoldValid" and self.corrected_gold:
            raise ValueError("GoldValid carries no replacement text")

    def to_doc(self) -> dict:
        return {"kind": self.kind, "corrected_gold": self.corrected_gold}

    @classmethod
    def from_doc(cls, doc: dict) -> "Verdict":
        return cls(doc["kind"], doc.get("corrected_gold", ""))


@dataclass(frozen=True)
class ReviewRecord:
    """The completed review of one flagged item."""

    item_id: str
    reviewer_a: str
    reviewer_b: str
    verdict_a: Verdict
    verdict_b: Verdict
    category: Optional[CorrectionCategory]
    adjudicated: bool
    final: Verdict

    def __post_init__(self):
        if self.reviewer_a == self.reviewer_b:
            raise SelfReview(self.reviewer_a)
        if not self.adjudicated and self.verdict_a != self.verdict_b:
            raise ValueError("disagreeing verdicts require adjudication")
        if self.final.kind == "GoldCorrected" and self.category is None:
            raise ValueError("corrections carry a category")


def generate_candidates(models: Sequence[ModelClient], item: BenchmarkItem,
                        schema: SchemaRendering, paradigm: Paradigm,
                        executor: Callable[[str], ExecutionOutcome],
                        ) -> List[CandidateRecord]:
    """Ask each model for a program via the Standard prompt and execute it.

    A model transport failure becomes an ExecutionFailure-style candidate
    record rather than aborting the run.
    """
    if len(models) < 2:
        raise ValueError("consensus needs at least two models")
    system, user = build_prompt(item, schema, paradigm)
    records = []
    for model in models:
        try:
            program = model.send(system, user)
        except Exception as exc:
            records.append(CandidateRecord(
                model_name=model.identity, program="",
                outcome=ExecutionOutcome(status=STATUS_PROTOCOL_ERROR,
                                         message=f"transport: {exc}")))
            continue
        records.append(CandidateRecord(model_name=model.identity,
                                       program=program,
                                       outcome=executor(program)))
    return records


def consensus_verify(item: BenchmarkItem,
                     candidates: Sequence[CandidateRecord],
                     gold_outcome: ExecutionOutcome,
                     options: Optional[EquivalenceOptions] = None,
                     ) -> ConsensusOutcome:
    """Classify an item from the pairwise agreement of its candidates.

    Candidates whose execution failed are excluded from the matrix; if
    every candidate failed the item is an ExecutionFailure outright.
    """
    options = options or EquivalenceOptions()
    usable = [c for c in candidates if c.outcome.ok]
    if not usable:
        return ConsensusOutcome(status=EXECUTION_FAILURE, agreement_matrix={})

    matrix: Dict[Tuple[str, str], EquivalenceVerdict] = {}
    for i, a in enumerate(usable):
        for b in usable[i + 1:]:
            matrix[(a.model_name, b.model_name)] = compare(
                a.outcome.table, b.outcome.table, options)
        if gold_outcome.ok:
            matrix[(a.model_name, GOLD_KEY)] = compare(
                a.outcome.table, gold_outcome.table, options)

    mutual = all(v.equivalent for (x, y), v in matrix.items()
                 if y != GOLD_KEY)
    agrees_gold = gold_outcome.ok and all(
        v.equivalent for (x, y), v in matrix.items() if y == GOLD_KEY)

    if mutual and agrees_gold:
        status = AUTO_VERIFIED
    elif mutual:
        status = SUSPECT_GOLD
    else:
        status = DIVERGENT
    return ConsensusOutcome(status=status, agreement_matrix=matrix)


class ReviewQueue:
    """File-based double-blind review queue for one purification run.

    Layout: ``<run_dir>/queue/<item_id>.review`` — one JSON document per
    item holding the state machine. Pending verdicts are never revealed
    through the queue interface until both reviewers have submitted.
    """

    def __init__(self, run_dir):
        self.root = Path(run_dir) / "queue"
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, item_id: str) -> Path:
        return self.root / f"{item_id}.review"

    def _load(self, item_id: str) -> dict:
        path = self._path(item_id)
        if not path.exists():
            raise QueueStateError(f"{item_id} is not in the queue")
        return json.loads(path.read_text(encoding="utf-8"))

    def _store(self, item_id: str, doc: dict) -> None:
        # Single-writer discipline per item: guard with an advisory lock
        # file so concurrent mutation attempts fail loudly.
        lock = self._path(item_id).with_suffix(".lock")
        try:
            fd = lock.open("x")
        except FileExistsError:
            raise QueueStateError(f"{item_id} is locked by another writer")
        try:
            fd.close()
            self._path(item_id).write_text(
                json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")
        finally:
            lock.unlink()

    def enqueue(self, item: BenchmarkItem, outcome: ConsensusOutcome) -> None:
        if outcome.status == AUTO_VERIFIED:
            raise QueueStateError("auto-verified items are not reviewed")
        if self._path(item.item_id).exists():
            raise QueueStateError(f"{item.item_id} already enqueued")
        doc = {
            "item_id": item.item_id,
            "question": item.question,
            "gold": item.gold_code or item.gold_sql,
            "reason": outcome.status,
            "status": "pending",
            "verdicts": {},       # reviewer identity -> verdict doc
            "categories": {},     # reviewer identity -> category label
            "adjudication": None,
        }
        self._store(item.item_id, doc)

    def pending_items(self) -> List[str]:
        return sorted(p.stem for p in self.root.glob("*.review")
                      if json.loads(p.read_text())["status"] != "final")

    def view(self, item_id: str, reviewer: str) -> dict:
        """What a reviewer may see: the item, plus only their own verdict
        while the review is still blind."""
        doc = self._load(item_id)
        visible = {k: doc[k] for k in
                   ("item_id", "question", "gold", "reason", "status")}
        if len(doc["verdicts"]) >= 2 or doc["status"] == "final":
            visible["verdicts"] = doc["verdicts"]
        elif reviewer in doc["verdicts"]:
            visible["verdicts"] = {reviewer: doc["verdicts"][reviewer]}
        else:
            visible["verdicts"] = {}
        return visible

    def submit(self, item_id: str, reviewer: str, verdict: Verdict,
               category: Optional[CorrectionCategory] = None) -> None:
        doc = self._load(item_id)
        if doc["status"] == "final":
            raise QueueStateError(f"{item_id} is already finalized")
        if reviewer in doc["verdicts"]:
            raise SelfReview(reviewer)
        if len(doc["verdicts"]) >= 2:
            raise QueueStateError("both review slots are filled")
        if verdict.kind == "GoldCorrected" and category is None:
            raise ValueError("a correction verdict needs a category")
        doc["verdicts"][reviewer] = verdict.to_doc()
        if category is not None:
            doc["categories"][reviewer] = _category_doc(category)
        self._store(item_id, doc)

    def adjudicate(self, item_id: str, adjudicator: str, verdict: Verdict,
                   category: Optional[CorrectionCategory] = None) -> None:
        doc = self._load(item_id)
        if len(doc["verdicts"]) < 2:
            raise QueueStateError("adjudication waits for both reviewers")
        if adjudicator in doc["verdicts"]:
            raise SelfReview(adjudicator)
        a, b = (Verdict.from_doc(v) for v in doc["verdicts"].values())
        if a == b:
            raise QueueStateError("reviewers agree; nothing to adjudicate")
        if verdict.kind == "GoldCorrected" and category is None:
            raise ValueError("a correction verdict needs a category")
        doc["adjudication"] = {"by": adjudicator, "verdict": verdict.to_doc(),
                               "category": _category_doc(category) if category else None}
        self._store(item_id, doc)

    def finalize(self, item_id: str) -> ReviewRecord:
        doc = self._load(item_id)
        if doc["status"] == "final":
            raise QueueStateError(f"{item_id} is already finalized")
        if len(doc["verdicts"]) < 2:
            raise PrematureFinalize(f"{item_id} has "
                                    f"{len(doc['verdicts'])} of 2 verdicts")
        (name_a, raw_a), (name_b, raw_b) = sorted(doc["verdicts"].items())
        verdict_a, verdict_b = Verdict.from_doc(raw_a), Verdict.from_doc(raw_b)
        if verdict_a == verdict_b:
            final, adjudicated = verdict_a, False
            category_label = doc["categories"].get(name_a) \
                or doc["categories"].get(name_b)
        elif doc["adjudication"]:
            final = Verdict.from_doc(doc["adjudication"]["verdict"])
            adjudicated = True
            category_label = doc["adjudication"]["category"]
        else:
            raise PrematureFinalize(f"{item_id} verdicts disagree and no "
                                    "adjudication is on file")
        category = _category_from_doc(category_label)
        record = ReviewRecord(item_id=item_id, reviewer_a=name_a,
                              reviewer_b=name_b, verdict_a=verdict_a,
                              verdict_b=verdict_b, category=category,
                              adjudicated=adjudicated, final=final)
        doc["status"] = "final"
        doc["final"] = final.to_doc()
        doc["final_category"] = _category_doc(category) if category else None
        doc["adjudicated"] = adjudicated
        self._store(item_id, doc)
        return record

    def final_records(self) -> Dict[str, ReviewRecord]:
        records = {}
        for path in sorted(self.root.glob("*.review")):
            doc = json.loads(path.read_text(encoding="utf-8"))
            if doc["status"] != "final":
                continue
            (name_a, raw_a), (name_b, raw_b) = sorted(doc["verdicts"].items())
            category = _category_from_doc(doc.get("final_category"))
            records[doc["item_id"]] = ReviewRecord(
                item_id=doc["item_id"], reviewer_a=name_a, reviewer_b=name_b,
                verdict_a=Verdict.from_doc(raw_a),
                verdict_b=Verdict.from_doc(raw_b), category=category,
                adjudicated=bool(doc.get("adjudicated")),
                final=Verdict.from_doc(doc["final"]))
        return records


@dataclass(frozen=True)
class PurificationReport:
    total: int
    counts: Mapping[str, int]          # partition label -> count
    category_histogram: Mapping[str, int]
    consensus_counts: Mapping[str, int]

    def __post_init__(self):
        if sum(self.counts.values()) != self.total:
            raise ValueError("partition counts must sum to the total")


def purification_report(outcomes: Mapping[str, ConsensusOutcome],
                        reviews: Mapping[str, ReviewRecord],
                        ) -> PurificationReport:
    """Summarize a run: every item lands in exactly one partition bucket."""
    counts = Counter({AUTO_VERIFIED: 0, CORRECTED: 0,
                      CONFIRMED_VALID: 0, PENDING: 0})
    categories: Counter = Counter()
    consensus: Counter = Counter()
    for item_id, outcome in outcomes.items():
        consensus[outcome.status] += 1
        if outcome.status == AUTO_VERIFIED:
            counts[AUTO_VERIFIED] += 1
        elif item_id in reviews:
            record = reviews[item_id]
            if record.final.kind == "GoldCorrected":
                counts[CORRECTED] += 1
                if record.category is not None:
                    categories[record.category.label] += 1
            else:
                counts[CONFIRMED_VALID] += 1
        else:
            counts[PENDING] += 1
    return PurificationReport(total=len(outcomes), counts=dict(counts),
                              category_histogram=dict(categories),
                              consensus_counts=dict(consensus))


def render_report(report: PurificationReport) -> str:
    lines = [f"Purification run over {report.total} items", ""]
    width = max([len(k) for k in report.counts] + [5])
    for label in (AUTO_VERIFIED, CORRECTED, CONFIRMED_VALID, PENDING):
        lines.append(f"  {label:<{width}}  {report.counts.get(label, 0):>5}")
    lines.append(f"  {'Total':<{width}}  {report.total:>5}")
    if report.category_histogram:
        lines.append("")
        lines.append("Correction categories:")
        for label, n in sorted(report.category_histogram.items()):
            lines.append(f"  {label:<32}  {n:>5}")
    return "\n".join(lines) + "\n"
