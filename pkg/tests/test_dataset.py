"""Item loading, CSV export, schema rendering, and prompt construction."""

import csv
import json
import sqlite3
from pathlib import Path

import pytest

from paradigm_bench.dataset import (BenchmarkItem, CorrectionCategory,
                                    Difficulty, ItemLoadError, NameCollision,
                                    Paradigm, SchemaRendering, build_prompt,
                                    detect_order_sensitive, export_csvs,
                                    load_items, render_schema)


def _write_items(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")


GOOD = [
    {"item_id": "1", "db_id": "d", "question": "q1", "evidence": "k1",
     "SQL": "SELECT 1", "difficulty": "simple"},
    {"item_id": "2", "db_id": "d", "question": "q2", "evidence": "",
     "SQL": "SELECT 2 ORDER BY x", "difficulty": "moderate"},
    {"item_id": "3", "db_id": "d", "question": "q3", "evidence": "k3",
     "SQL": "SELECT 3", "difficulty": "challenging"},
]


class TestLoadItems:
    def test_three_record_fixture(self, tmp_path):
        path = tmp_path / "items.jsonl"
        _write_items(path, GOOD)
        items = load_items(path)
        assert [i.difficulty for i in items] == [
            Difficulty.SIMPLE, Difficulty.MODERATE, Difficulty.HARD]
        assert items[0].knowledge == "k1"
        assert items[1].order_sensitive  # derived from ORDER BY
        assert not items[0].order_sensitive

    def test_missing_question_reports_line(self, tmp_path):
        path = tmp_path / "items.jsonl"
        recs = [GOOD[0], {"item_id": "2", "db_id": "d", "SQL": "SELECT 1"}]
        _write_items(path, recs)
        with pytest.raises(ItemLoadError) as err:
            load_items(path)
        assert "line 2" in str(err.value)
        assert "question" in str(err.value)

    def test_duplicate_ids_rejected(self, tmp_path):
        path = tmp_path / "items.jsonl"
        _write_items(path, [GOOD[0], GOOD[0]])
        with pytest.raises(ItemLoadError) as err:
            load_items(path)
        assert "DuplicateId" in str(err.value)

    def test_explicit_order_flag_overrides_detection(self, tmp_path):
        path = tmp_path / "items.jsonl"
        rec = dict(GOOD[1], order_sensitive=False)
        _write_items(path, [rec])
        assert load_items(path)[0].order_sensitive is False

    def test_detect_order_sensitive(self):
        assert detect_order_sensitive("SELECT a FROM t ORDER BY a")
        assert detect_order_sensitive("select a from t order\n  by a")
        assert not detect_order_sensitive("SELECT orderings FROM t")


class TestExportCsvs:
    def test_manifest_and_files(self, mini_db, tmp_path):
        manifest = export_csvs(mini_db, tmp_path / "out")
        names = sorted(t for t, _, _ in manifest.files)
        assert names == ["city", "schools"]
        for table, path, count in manifest.files:
            assert Path(path).name == f"{table}.csv"
            with open(path, encoding="utf-8") as fh:
                lines = fh.read().splitlines()
            assert len(lines) == count + 1

    def test_null_rendered_as_empty_field(self, mini_db, tmp_path):
        export_csvs(mini_db, tmp_path / "out")
        text = (tmp_path / "out" / "schools.csv").read_text()
        assert "2,Beta,\n" in text

    def test_comma_in_value_quoted(self, mini_db, tmp_path):
        export_csvs(mini_db, tmp_path / "out")
        text = (tmp_path / "out" / "city.csv").read_text()
        assert '"Y, Z"' in text

    def test_round_trip_is_byte_identical(self, mini_db, tmp_path):
        export_csvs(mini_db, tmp_path / "a")
        first = (tmp_path / "a" / "schools.csv").read_bytes()
        # Re-import into a fresh db and re-export.
        db2 = tmp_path / "re.sqlite"
        conn = sqlite3.connect(db2)
        conn.execute('CREATE TABLE schools (id INTEGER, name TEXT, '
                     '"Free Meal Count (Ages 5-17)" REAL)')
        with open(tmp_path / "a" / "schools.csv", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                vals = [None if v == "" else v for v in row]
                conn.execute("INSERT INTO schools VALUES (?, ?, ?)", vals)
        conn.commit()
        conn.close()
        export_csvs(db2, tmp_path / "b")
        assert (tmp_path / "b" / "schools.csv").read_bytes() == first

    def test_row_counts_match_engine(self, mini_db, tmp_path):
        manifest = export_csvs(mini_db, tmp_path / "out")
        conn = sqlite3.connect(mini_db)
        for table, _, count in manifest.files:
            assert conn.execute(
                f'SELECT COUNT(*) FROM "{table}"').fetchone()[0] == count
        conn.close()

    def test_name_collision(self, tmp_path):
        db = tmp_path / "bad.sqlite"
        conn = sqlite3.connect(db)
        conn.execute('CREATE TABLE "a b" (x)')
        conn.execute('CREATE TABLE "a:b" (x)')
        conn.commit()
        conn.close()
        with pytest.raises(NameCollision):
            export_csvs(db, tmp_path / "out")

    def test_shuffle_seed_recorded(self, mini_db, tmp_path):
        export_csvs(mini_db, tmp_path / "out", shuffle_seed=7)
        doc = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert doc["shuffle_seed"] == 7
        assert doc["null_rendering"] == ""


class TestRenderSchema:
    def test_tables_in_stable_order(self, mini_db):
        schema = render_schema(mini_db)
        assert schema.table_names == ("city", "schools")
        assert schema.ddl_text.count("CREATE TABLE") == 2

    def test_quoted_column_preserved_verbatim(self, mini_db):
        schema = render_schema(mini_db)
        assert '"Free Meal Count (Ages 5-17)"' in schema.ddl_text

    def test_empty_database(self, tmp_path):
        db = tmp_path / "empty.sqlite"
        sqlite3.connect(db).close()
        schema = render_schema(db)
        assert schema.ddl_text == ""
        assert schema.table_names == ()


def _item(**kw):
    base = dict(item_id="i1", db_id="mini", question="How many schools?",
                knowledge="a school is a row", gold_sql="SELECT COUNT(*)")
    base.update(kw)
    return BenchmarkItem(**base)


class TestBuildPrompt:
    def _schema(self):
        return SchemaRendering("mini", "CREATE TABLE t (x);", ("t",))

    def test_sql_prompt_contains_knowledge_line(self):
        system, user = build_prompt(_item(), self._schema(), Paradigm.SQL)
        assert system.startswith("You are a SQL assistant.")
        assert "-- External Knowledge: a school is a row\n" in user
        assert user.endswith("SELECT")

    def test_code_prompt_contains_requirement_six(self):
        _, user = build_prompt(_item(), self._schema(), Paradigm.CODE)
        assert ("# 6) Use result to record the final result, and finally\n"
                "#    print(result) to print the final result.") in user
        assert user.endswith("CODE")

    def test_constraints_block_inserted_once_before_question(self):
        item = _item()
        _, standard = build_prompt(item, self._schema(), Paradigm.CODE)
        _, augmented = build_prompt(item, self._schema(), Paradigm.CODE,
                                    constraints="only active rows")
        assert augmented.count("Clarified Constraints") == 1
        assert (augmented.index("only active rows")
                < augmented.index("# Question:"))
        # Augmentation exactness: removing the block restores the standard.
        line = "# Clarified Constraints: only active rows\n"
        assert augmented.replace(line, "", 1) == standard

    def test_prompt_is_deterministic(self):
        args = (_item(), self._schema(), Paradigm.SQL)
        assert build_prompt(*args) == build_prompt(*args)

    def test_db_mismatch_rejected(self):
        with pytest.raises(ValueError):
            build_prompt(_item(db_id="other"), self._schema(), Paradigm.SQL)


class TestCorrectionCategory:
    def test_valid_labels(self):
        CorrectionCategory("SqlGold", "StructureSchema")
        CorrectionCategory("CodeConversion", "DataTypesFormats")

    def test_cross_side_label_rejected(self):
        with pytest.raises(ValueError):
            CorrectionCategory("SqlGold", "Sorting")
        with pytest.raises(ValueError):
            CorrectionCategory("CodeConversion", "StructureSchema")
