"""Logic Completion Framework: the three-phase Subject/Oracle dialogue.

Phase 1 (logic probing): the Subject sees schema, knowledge, and question
-- never the gold program -- and returns one clarifying question.
Phase 2 (ground-truth injection): the Oracle answers from the gold program
in implementation-agnostic natural language; answers are screened for
code/SQL leakage. Phase 3: the Subject generates the final program from
the Standard prompt augmented with the clarified constraints.
"""

from __future__ import annotations

import json
import re
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .clients import ModelClient
from .dataset import BenchmarkItem, Paradigm, SchemaRendering, build_prompt

DEFAULT_RETRIES = 3

CATEGORY_LABELS = ("ConstraintBoundarySpecification",
                   "OutputStructureRequirements",
                   "SchemaSemantics",
                   "BusinessLogic",
                   "Other")


class ProtocolViolation(RuntimeError):
    """Subject reply broke the phase contract (code where none is allowed)."""


class MalformedResponse(RuntimeError):
    """Oracle reply could not be parsed after retries."""


class LeakageDetected(RuntimeError):
    """Oracle answer leaked implementation syntax."""


# Leakage/code screen: code fences, uppercase SQL keywords (the syntactic
# token form -- lowercase English "where" in prose is fine), or a
# statement-shaped select...from regardless of case.
_FENCE_RE = re.compile(r"```")
_UPPER_SQL_RE = re.compile(
    r"\b(SELECT|WHERE|JOIN|FROM|GROUP BY|ORDER BY|HAVING|INSERT|UPDATE|"
    r"DELETE|CREATE|DISTINCT|UNION|LIMIT)\b")
_STATEMENT_RE = re.compile(r"\bselect\b[\s\S]{0,400}?\bfrom\b", re.IGNORECASE)
_IMPORT_RE = re.compile(r"^\s*(import|from)\s+\w+", re.MULTILINE)


def screen_for_leakage(text: str) -> Optional[str]:
    """Returns a description of the first leakage hit, or None if clean."""
    if _FENCE_RE.search(text):
        return "code fence"
    m = _UPPER_SQL_RE.search(text)
    if m:
        return f"SQL token {m.group(0)!r}"
    if _STATEMENT_RE.search(text):
        return "select...from statement shape"
    if _IMPORT_RE.search(text):
        return "python import statement"
    return None


@dataclass(frozen=True)
class Inquiry:
    text: str
    raw_response: str
    retries: int = 0

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("inquiry text must be non-empty")
        hit = screen_for_leakage(self.text)
        if hit:
            raise ValueError(f"inquiry contains code: {hit}")


@dataclass(frozen=True)
class InquiryCategory:
    label: str
    detail: str = ""

    def __post_init__(self):
        if self.label not in CATEGORY_LABELS:
            raise ValueError(f"unknown category label {self.label!r}")
        if self.label != "Other" and self.detail:
            raise ValueError("only Other carries free text")


@dataclass(frozen=True)
class Constraint:
    classification: InquiryCategory
    answer: str
    raw_response: str
    retries: int = 0

    def __post_init__(self):
        if not self.answer.strip():
            raise ValueError("constraint answer must be non-empty")
        hit = screen_for_leakage(self.answer)
        if hit:
            raise ValueError(f"constraint answer leaks: {hit}")


@dataclass
class LcfTranscript:
    item_id: str
    paradigm: Paradigm
    phase1: Optional[Inquiry] = None
    phase2: Optional[Constraint] = None
    phase3_program: Optional[str] = None
    prompts: Dict[str, Tuple[str, str]] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    failed_phase: Optional[int] = None
    failure: Optional[str] = None

    @property
    def complete(self) -> bool:
        return self.failed_phase is None and self.phase3_program is not None


PHASE1_SYSTEM = """\
-- As an expert Data Analyst, identify ambiguity in the following question regarding the data schema or business logic.
-- Task: You are a logical analyst. Identify any ambiguity in the question regarding the database schema, business logic, or output structure requirements (e.g., exact columns to return, handling of NULLs). Return ONLY a clarifying question that addresses the ambiguity. Do not generate SQL or Code."""

PHASE1_USER_TEMPLATE = """/* [Schema Info: DDL] */
{ddl}

-- External Knowledge: {knowledge}
-- Question: {question}"""

PHASE2_SYSTEM_TEMPLATE = """\
-- Task: You are a Data Analyst Proxy. Based strictly on the Ground Truth provided below, answer the Model's Inquiry by explaining the business constraints or logic used in the Gold implementation.
-- Ground Truth: {GOLD_QUERY}
-- Model's Inquiry: {PHASE1_INQUIRY}
Return your response in JSON format with "classification" and "answer".
-- Constraints:
1. Do NOT output code.
2. Extract the business logic into implementation-agnostic natural language hints (e.g., "Filter by status 'Active'" instead of "WHERE status = 'Active'"). Do not leak implementation details or syntactic tokens.
3. Answer ONLY what is explicitly asked in the Inquiry.
4. Explicitly mention specific Column Names and Values required."""


def phase1_prompt(item: BenchmarkItem,
                  schema: SchemaRendering) -> Tuple[str, str]:
    return PHASE1_SYSTEM, PHASE1_USER_TEMPLATE.format(
        ddl=schema.ddl_text, knowledge=item.knowledge,
        question=item.question)


def phase2_prompt(item: BenchmarkItem, inquiry: Inquiry) -> Tuple[str, str]:
    gold = item.gold_code if item.gold_code else item.gold_sql
    return PHASE2_SYSTEM_TEMPLATE.format(
        GOLD_QUERY=gold, PHASE1_INQUIRY=inquiry.text), ""


def probe_logic(subject: ModelClient, item: BenchmarkItem,
                schema: SchemaRendering,
                retries: int = DEFAULT_RETRIES) -> Inquiry:
    """Phase 1: elicit one clarifying question from the Subject."""
    system, user = phase1_prompt(item, schema)
    last_hit = ""
    for attempt in range(retries):
        response = subject.send(system, user)
        text = response.strip()
        hit = screen_for_leakage(text) if text else "empty response"
        if hit is None:
            return Inquiry(text=text, raw_response=response, retries=attempt)
        last_hit = hit
    raise ProtocolViolation(
        f"subject kept violating phase 1 after {retries} attempts "
        f"({last_hit})")


_NORMALIZE_RE = re.compile(r"[^a-z]")

_CLASSIFICATION_MAP = {
    "constraintboundaryspecification": "ConstraintBoundarySpecification",
    "outputstructurerequirements": "OutputStructureRequirements",
    "schemasemantics": "SchemaSemantics",
    "databaseschema": "SchemaSemantics",
    "businesslogic": "BusinessLogic",
}


def map_classification(raw: str) -> InquiryCategory:
    key = _NORMALIZE_RE.sub("", raw.lower())
    label = _CLASSIFICATION_MAP.get(key)
    if label:
        return InquiryCategory(label)
    return InquiryCategory("Other", detail=raw)


_JSON_RE = re.compile(r"\{[\s\S]*\}")


def _parse_oracle_json(response: str) -> Optional[dict]:
    candidates = [response.strip()]
    m = _JSON_RE.search(response)
    if m:
        candidates.append(m.group(0))
    for cand in candidates:
        try:
            doc = json.loads(cand)
        except json.JSONDecodeError:
            continue
        if isinstance(doc, dict) and "classification" in doc \
                and "answer" in doc:
            return doc
    return None


def inject_ground_truth(oracle: ModelClient, item: BenchmarkItem,
                        inquiry: Inquiry,
                        retries: int = DEFAULT_RETRIES) -> Constraint:
    """Phase 2: obtain {classification, answer} from the gold-informed
    Oracle, screened against leakage."""
    system, user = phase2_prompt(item, inquiry)
    leak = None
    malformed = 0
    for attempt in range(retries):
        response = oracle.send(system, user)
        doc = _parse_oracle_json(response)
        if doc is None:
            malformed += 1
            continue
        answer = str(doc["answer"]).strip()
        hit = screen_for_leakage(answer) if answer else "empty answer"
        if hit is not None:
            leak = hit
            continue
        return Constraint(
            classification=map_classification(str(doc["classification"])),
            answer=answer, raw_response=response, retries=attempt)
    if leak is not None:
        raise LeakageDetected(f"oracle answer leaks: {leak}")
    raise MalformedResponse(
        f"oracle reply unparseable after {retries} attempts")


def run_lcf(subject: ModelClient, oracle: ModelClient, item: BenchmarkItem,
            schema: SchemaRendering, paradigm: Paradigm,
            retries: int = DEFAULT_RETRIES) -> LcfTranscript:
    """Execute phases 1-3; on a phase failure the transcript is returned
    partial with the failing phase recorded."""
    transcript = LcfTranscript(item_id=item.item_id, paradigm=paradigm)

    start = time.monotonic()
    transcript.prompts["phase1"] = phase1_prompt(item, schema)
    try:
        transcript.phase1 = probe_logic(subject, item, schema, retries)
    except Exception as exc:
        transcript.failed_phase = 1
        transcript.failure = str(exc)
        return transcript
    finally:
        transcript.timings["phase1"] = time.monotonic() - start

    start = time.monotonic()
    transcript.prompts["phase2"] = phase2_prompt(item, transcript.phase1)
    try:
        transcript.phase2 = inject_ground_truth(oracle, item,
                                                transcript.phase1, retries)
    except Exception as exc:
        transcript.failed_phase = 2
        transcript.failure = str(exc)
        return transcript
    finally:
        transcript.timings["phase2"] = time.monotonic() - start

    start = time.monotonic()
    system, user = build_prompt(item, schema, paradigm,
                                constraints=transcript.phase2.answer)
    transcript.prompts["phase3"] = (system, user)
    try:
        transcript.phase3_program = subject.send(system, user).strip()
    except Exception as exc:
        transcript.failed_phase = 3
        transcript.failure = str(exc)
        return transcript
    finally:
        transcript.timings["phase3"] = time.monotonic() - start
    return transcript


def validate_transcript(transcript: LcfTranscript,
                        item: BenchmarkItem) -> List[str]:
    """Invariant scan; returns violation descriptions (empty when clean)."""
    problems = []
    if transcript.phase2 is not None and transcript.phase1 is None:
        problems.append("phase 2 present without phase 1")
    if transcript.phase3_program is not None and transcript.phase2 is None:
        problems.append("phase 3 present without phase 2")
    for phase in ("phase1", "phase3"):
        pair = transcript.prompts.get(phase)
        if pair is None:
            continue
        for text in pair:
            if item.gold_sql and item.gold_sql in text:
                problems.append(f"gold SQL leaked into {phase} prompt")
            if item.gold_code and item.gold_code in text:
                problems.append(f"gold code leaked into {phase} prompt")
    if transcript.phase2 is not None and "phase3" in transcript.prompts:
        if transcript.phase2.answer not in transcript.prompts["phase3"][1]:
            problems.append("phase 3 prompt lacks the clarified constraints")
    return problems


def categorize_transcripts(transcripts) -> Dict[InquiryCategory, int]:
    """Tally of phase-2 classifications across complete transcripts."""
    counts: Counter = Counter()
    for t in transcripts:
        if t.phase2 is not None:
            counts[t.phase2.classification] += 1
    return dict(counts)


# ---------------------------------------------------------------------------
# Transcript store: one document per item under the run directory.

def _inquiry_doc(q: Optional[Inquiry]):
    if q is None:
        return None
    return {"text": q.text, "raw_response": q.raw_response,
            "retries": q.retries}


def _constraint_doc(c: Optional[Constraint]):
    if c is None:
        return None
    return {"classification": {"label": c.classification.label,
                               "detail": c.classification.detail},
            "answer": c.answer, "raw_response": c.raw_response,
            "retries": c.retries}


def save_transcript(transcript: LcfTranscript, run_dir) -> Path:
    out_dir = Path(run_dir) / "transcripts"
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "item_id": transcript.item_id,
        "paradigm": transcript.paradigm.value,
        "phase1": _inquiry_doc(transcript.phase1),
        "phase2": _constraint_doc(transcript.phase2),
        "phase3_program": transcript.phase3_program,
        "prompts": {k: list(v) for k, v in transcript.prompts.items()},
        "timings": transcript.timings,
        "failed_phase": transcript.failed_phase,
        "failure": transcript.failure,
    }
    path = out_dir / f"{transcript.item_id}.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


def load_transcript(path) -> LcfTranscript:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    phase1 = None
    if doc.get("phase1"):
        phase1 = Inquiry(**doc["phase1"])
    phase2 = None
    if doc.get("phase2"):
        c = doc["phase2"]
        phase2 = Constraint(
            classification=InquiryCategory(**c["classification"]),
            answer=c["answer"], raw_response=c["raw_response"],
            retries=c.get("retries", 0))
    return LcfTranscript(
        item_id=doc["item_id"], paradigm=Paradigm(doc["paradigm"]),
        phase1=phase1, phase2=phase2,
        phase3_program=doc.get("phase3_program"),
        prompts={k: tuple(v) for k, v in doc.get("prompts", {}).items()},
        timings=doc.get("timings", {}),
        failed_phase=doc.get("failed_phase"),
        failure=doc.get("failure"))
