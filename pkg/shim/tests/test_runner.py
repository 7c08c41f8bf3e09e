"""Runner unit tests: serialization, execution contract, wire schema."""

import datetime
import json
import math
import subprocess
import sys

import jsonschema
import pandas as pd
import pytest

from paradigm_shim import (NESTED_MARKER, error_payload, load_wire_schema,
                           run_program, serialize_cell, serialize_result)

SCHEMA = load_wire_schema()


class TestSerializeCell:
    def test_plain_scalars_pass_through(self):
        for v in (1, 1.5, "x", True, False, None):
            assert serialize_cell(v) == v

    def test_non_finite_becomes_null(self):
        assert serialize_cell(float("nan")) is None
        assert serialize_cell(float("inf")) is None
        assert serialize_cell(float("-inf")) is None

    def test_numpy_scalar_unwraps(self):
        import numpy as np
        assert serialize_cell(np.int64(7)) == 7
        assert isinstance(serialize_cell(np.int64(7)), int)
        assert serialize_cell(np.float64(2.5)) == 2.5

    def test_dates_render_iso(self):
        assert serialize_cell(datetime.date(2024, 1, 5)) == "2024-01-05"
        assert serialize_cell(
            datetime.datetime(2024, 1, 5, 6, 30)) == "2024-01-05 06:30:00"

    def test_nested_container_marked(self):
        cell = serialize_cell([1, 2])
        assert cell.startswith(NESTED_MARKER)

    def test_pandas_na_becomes_null(self):
        assert serialize_cell(pd.NA) is None
        assert serialize_cell(pd.NaT) is None


class TestSerializeResult:
    def _valid(self, payload):
        jsonschema.validate(payload, SCHEMA)
        return payload

    def test_scalar(self):
        assert self._valid(serialize_result(42)) \
            == {"kind": "scalar", "value": 42}

    def test_list(self):
        assert self._valid(serialize_result([3, 1, 2]))["values"] == [3, 1, 2]

    def test_series(self):
        payload = self._valid(serialize_result(pd.Series([1, 2])))
        assert payload == {"kind": "list", "values": [1, 2]}

    def test_dataframe(self):
        frame = pd.DataFrame({"a": [1, 2], "b": ["x", "y"]})
        payload = self._valid(serialize_result(frame))
        assert payload["kind"] == "table"
        assert payload["columns"] == ["a", "b"]
        assert payload["rows"] == [[1, "x"], [2, "y"]]
        assert set(payload["dtypes"]) == {"a", "b"}

    def test_dict_is_single_row_table(self):
        payload = self._valid(serialize_result({"a": 1, "b": 2}))
        assert payload["rows"] == [[1, 2]]

    def test_ndarray_2d_is_table(self):
        import numpy as np
        payload = self._valid(serialize_result(np.array([[1, 2], [3, 4]])))
        assert payload["kind"] == "table"
        assert payload["rows"] == [[1, 2], [3, 4]]

    def test_rows_rectangular(self):
        frame = pd.DataFrame({"a": [1.0, float("nan")]})
        payload = self._valid(serialize_result(frame))
        assert payload["rows"] == [[1.0], [None]]

    def test_error_payload_validates(self):
        jsonschema.validate(error_payload("ValueError", "bad"), SCHEMA)


def _run(tmp_path, program, timeout=None, name="prog"):
    source = tmp_path / f"{name}.py"
    out = tmp_path / f"{name}.json"
    source.write_text(program, encoding="utf-8")
    code = run_program(str(source), str(out), timeout)
    payload = json.loads(out.read_text(encoding="utf-8"))
    jsonschema.validate(payload, SCHEMA)
    return code, payload


class TestRunProgram:
    def test_success(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code, payload = _run(tmp_path, "result = 42\n")
        assert code == 0
        assert payload == {"kind": "scalar", "value": 42}

    def test_runtime_error(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code, payload = _run(tmp_path, "result = 1 / 0\n")
        assert code == 2
        assert payload["error"]["type"] == "ZeroDivisionError"
        assert payload["error"]["traceback_excerpt"]

    def test_undefined_result(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code, payload = _run(tmp_path, "x = 5\n")
        assert code == 2
        assert "result" in payload["error"]["message"]

    def test_timeout(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code, payload = _run(tmp_path, "while True:\n    pass\n", timeout=1)
        assert code == 2
        assert payload["error"]["type"] == "TimeoutError"

    def test_reads_csv_from_cwd(self, tmp_path, monkeypatch):
        (tmp_path / "towns.csv").write_text("city,n\na,1\nb,2\n")
        monkeypatch.chdir(tmp_path)
        program = ("import pandas as pd\n"
                   "result = pd.read_csv('towns.csv')['n'].sum()\n")
        code, payload = _run(tmp_path, program)
        assert code == 0
        assert payload["value"] == 3

    def test_no_stray_files(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        _run(tmp_path, "result = 1\n")
        assert {p.name for p in tmp_path.iterdir()} \
            == {"prog.py", "prog.json"}


class TestCli:
    def test_entry_point(self, tmp_path):
        source = tmp_path / "p.py"
        out = tmp_path / "p.json"
        source.write_text("result = 'ok'\n")
        proc = subprocess.run(
            [sys.executable, "-m", "paradigm_shim.runner", str(source),
             "--out", str(out)],
            cwd=tmp_path, capture_output=True, timeout=30)
        assert proc.returncode == 0
        payload = json.loads(out.read_text())
        assert payload == {"kind": "scalar", "value": "ok"}
