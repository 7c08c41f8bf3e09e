"""Three-phase clarification dialogue with fully scripted clients."""

import json

import pytest

from paradigm_bench.clients import ScriptedClient
from paradigm_bench.dataset import (BenchmarkItem, Paradigm, SchemaRendering,
                                    build_prompt)
from paradigm_bench.lcf import (Constraint, Inquiry, InquiryCategory,
                                LeakageDetected, MalformedResponse,
                                ProtocolViolation, categorize_transcripts,
                                inject_ground_truth, load_transcript,
                                map_classification, probe_logic, run_lcf,
                                save_transcript, screen_for_leakage,
                                validate_transcript)

ITEM = BenchmarkItem(
    item_id="lcf1", db_id="mini",
    question="Please list the lowest three eligible free rates.",
    knowledge="rate = free meals / enrollment",
    gold_sql="SELECT rate FROM frpm ORDER BY rate LIMIT 3")

SCHEMA = SchemaRendering("mini", "CREATE TABLE frpm (rate REAL);", ("frpm",))

GOOD_INQUIRY = ("How should division by zero or NULL values be handled "
                "when calculating the eligible free rate?")

GOOD_ORACLE_REPLY = json.dumps({
    "classification": "Constraint & Boundary Specification",
    "answer": "Only include records with a non-null free meal count and "
              "an enrollment greater than zero.",
})


class TestLeakageScreen:
    def test_uppercase_sql_tokens_flagged(self):
        assert screen_for_leakage("WHERE status = 'Active'")

    def test_prose_where_clean(self):
        assert screen_for_leakage(
            "only records where the free meal count is not missing "
            "are included") is None

    def test_code_fence_flagged(self):
        assert screen_for_leakage("```sql\nfoo\n```")

    def test_statement_shape_flagged_any_case(self):
        assert screen_for_leakage("select rate from frpm")


class TestProbeLogic:
    def test_question_recorded_verbatim(self):
        subject = ScriptedClient([GOOD_INQUIRY])
        inquiry = probe_logic(subject, ITEM, SCHEMA)
        assert inquiry.text == GOOD_INQUIRY
        assert inquiry.retries == 0
        # Subject never saw the gold program.
        for system, user in subject.calls:
            assert ITEM.gold_sql not in system + user

    def test_sql_reply_is_protocol_violation(self):
        subject = ScriptedClient(["SELECT rate FROM frpm"])
        with pytest.raises(ProtocolViolation):
            probe_logic(subject, ITEM, SCHEMA)
        assert len(subject.calls) == 3  # retry budget exhausted

    def test_recovers_within_retry_budget(self):
        subject = ScriptedClient(["```python\nx```", GOOD_INQUIRY])
        inquiry = probe_logic(subject, ITEM, SCHEMA)
        assert inquiry.retries == 1


class TestInjectGroundTruth:
    def _inquiry(self):
        return Inquiry(text=GOOD_INQUIRY, raw_response=GOOD_INQUIRY)

    def test_classification_mapped(self):
        oracle = ScriptedClient([GOOD_ORACLE_REPLY])
        constraint = inject_ground_truth(oracle, ITEM, self._inquiry())
        assert constraint.classification == InquiryCategory(
            "ConstraintBoundarySpecification")
        # Oracle did see the gold program.
        assert ITEM.gold_sql in oracle.calls[0][0]

    def test_where_bearing_answer_rejected(self):
        leaky = json.dumps({"classification": "Business Logic",
                            "answer": "Use WHERE status = 'Active'"})
        oracle = ScriptedClient([leaky])
        with pytest.raises(LeakageDetected):
            inject_ground_truth(oracle, ITEM, self._inquiry())

    def test_malformed_twice_then_valid(self):
        oracle = ScriptedClient(["not json", "{broken", GOOD_ORACLE_REPLY])
        constraint = inject_ground_truth(oracle, ITEM, self._inquiry())
        assert constraint.retries == 2

    def test_malformed_exhausts_retries(self):
        oracle = ScriptedClient(["nope"])
        with pytest.raises(MalformedResponse):
            inject_ground_truth(oracle, ITEM, self._inquiry())

    def test_unknown_label_maps_to_other(self):
        category = map_classification("Metric Definition")
        assert category.label == "Other"
        assert category.detail == "Metric Definition"


def _full_subject():
    def reply(system, user):
        if "clarifying question" in system:
            return GOOD_INQUIRY
        return "import pandas as pd\nframe = pd.read_csv('frpm.csv')\n" \
               "result = frame['rate'].nsmallest(3).tolist()\nprint(result)\n"
    return ScriptedClient(reply, identity="subject")


class TestRunLcf:
    def test_complete_transcript(self):
        subject = _full_subject()
        oracle = ScriptedClient([GOOD_ORACLE_REPLY], identity="oracle")
        transcript = run_lcf(subject, oracle, ITEM, SCHEMA, Paradigm.CODE)
        assert transcript.complete
        assert set(transcript.prompts) == {"phase1", "phase2", "phase3"}
        assert set(transcript.timings) == {"phase1", "phase2", "phase3"}
        assert validate_transcript(transcript, ITEM) == []

    def test_phase3_prompt_is_standard_plus_constraints_block(self):
        subject = _full_subject()
        oracle = ScriptedClient([GOOD_ORACLE_REPLY])
        transcript = run_lcf(subject, oracle, ITEM, SCHEMA, Paradigm.CODE)
        _, standard = build_prompt(ITEM, SCHEMA, Paradigm.CODE)
        answer = transcript.phase2.answer
        block = f"# Clarified Constraints: {answer}\n"
        assert transcript.prompts["phase3"][1].replace(block, "", 1) \
            == standard

    def test_gold_isolation_by_substring_scan(self):
        subject = _full_subject()
        oracle = ScriptedClient([GOOD_ORACLE_REPLY])
        transcript = run_lcf(subject, oracle, ITEM, SCHEMA, Paradigm.CODE)
        for phase in ("phase1", "phase3"):
            for text in transcript.prompts[phase]:
                assert ITEM.gold_sql not in text

    def test_oracle_failure_yields_partial_transcript(self):
        subject = _full_subject()
        oracle = ScriptedClient(["garbage"])
        transcript = run_lcf(subject, oracle, ITEM, SCHEMA, Paradigm.CODE)
        assert not transcript.complete
        assert transcript.failed_phase == 2
        assert transcript.phase1 is not None
        assert transcript.phase2 is None

    def test_replay_is_byte_identical(self):
        runs = []
        for _ in range(2):
            transcript = run_lcf(_full_subject(),
                                 ScriptedClient([GOOD_ORACLE_REPLY]),
                                 ITEM, SCHEMA, Paradigm.CODE)
            runs.append((transcript.prompts, transcript.phase3_program))
        assert runs[0] == runs[1]

    def test_round_trips_through_store(self, tmp_path):
        transcript = run_lcf(_full_subject(),
                             ScriptedClient([GOOD_ORACLE_REPLY]),
                             ITEM, SCHEMA, Paradigm.CODE)
        path = save_transcript(transcript, tmp_path)
        loaded = load_transcript(path)
        assert loaded.prompts == transcript.prompts
        assert loaded.phase2.answer == transcript.phase2.answer
        assert loaded.phase3_program == transcript.phase3_program


class TestCategorize:
    def _transcript(self, label, detail=""):
        t = run_lcf(_full_subject(), ScriptedClient([json.dumps(
            {"classification": label, "answer": "keep all rows"})]),
            ITEM, SCHEMA, Paradigm.CODE)
        assert t.phase2 is not None
        return t

    def test_tally(self):
        ts = [self._transcript("Constraint & Boundary Specification"),
              self._transcript("Constraint & Boundary Specification"),
              self._transcript("Output Structure Requirements")]
        counts = categorize_transcripts(ts)
        assert counts[InquiryCategory("ConstraintBoundarySpecification")] == 2
        assert counts[InquiryCategory("OutputStructureRequirements")] == 1

    def test_empty_list(self):
        assert categorize_transcripts([]) == {}

    def test_unknown_label_counted_under_other(self):
        ts = [self._transcript("Metric Definition")]
        counts = categorize_transcripts(ts)
        assert counts[InquiryCategory("Other", "Metric Definition")] == 1


def test_constraint_invariants():
    with pytest.raises(ValueError):
        Constraint(classification=InquiryCategory("BusinessLogic"),
                   answer="", raw_response="")
    with pytest.raises(ValueError):
        Constraint(classification=InquiryCategory("BusinessLogic"),
                   answer="use WHERE x=1", raw_response="")
