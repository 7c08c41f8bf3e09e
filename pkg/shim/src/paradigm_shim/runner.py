"""Single-program sandbox runner.

Executes one candidate data-analysis program in the current working
directory (which holds the exported ``<table>.csv`` files), then
introspects the top-level ``result`` binding and serializes it to the
JSON wire payload read by the evaluation harness.

Exit codes: 0 on success, 2 on runtime error (an error payload is still
written). Hard resource kills are the parent's responsibility.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import signal
import sys
import traceback

NESTED_MARKER = "[[nested]] "

PAYLOAD_FILENAME = "shim_result.json"


def _is_na(v) -> bool:
    try:
        import pandas as pd
        res = pd.isna(v)
        return bool(res) if isinstance(res, bool) else False
    except Exception:
        return False


def serialize_cell(v):
    """One scalar cell of the payload; non-finite numerics become null,
    nested containers are stringified with a marker."""
    if v is None or _is_na(v):
        return None
    # numpy scalar types unwrap to plain Python values.
    item = getattr(v, "item", None)
    if item is not None and not isinstance(v, (bool, int, float, str)):
        try:
            v = v.item()
        except Exception:
            pass
    if isinstance(v, bool):
        return v
    if isinstance(v, int):
        return v
    if isinstance(v, float):
        return v if math.isfinite(v) else None
    if isinstance(v, str):
        return v
    if isinstance(v, _dt.datetime):
        return v.isoformat(sep=" ")
    if isinstance(v, _dt.date):
        return v.isoformat()
    if isinstance(v, (list, tuple, set, frozenset, dict, bytes)):
        return NESTED_MARKER + repr(v)
    if type(v).__name__ == "ndarray":
        return NESTED_MARKER + repr(v.tolist())
    return str(v)


def serialize_result(result) -> dict:
    """Classify ``result`` into the scalar/list/table payload kinds."""
    try:
        import pandas as pd
    except ImportError:  # pragma: no cover - pandas is always present here
        pd = None

    if pd is not None and isinstance(result, pd.DataFrame):
        columns = [str(c) for c in result.columns]
        rows = [[serialize_cell(c) for c in row]
                for row in result.itertuples(index=False, name=None)]
        dtypes = {str(c): str(t) for c, t in result.dtypes.items()}
        return {"kind": "table", "columns": columns, "rows": rows,
                "dtypes": dtypes}
    if pd is not None and isinstance(result, (pd.Series, pd.Index)):
        return {"kind": "list",
                "values": [serialize_cell(v) for v in list(result)]}
    if type(result).__name__ == "ndarray":
        if result.ndim == 2:
            return {"kind": "table",
                    "columns": [f"c{i}" for i in range(result.shape[1])],
                    "rows": [[serialize_cell(c) for c in row]
                             for row in result.tolist()]}
        return {"kind": "list",
                "values": [serialize_cell(v) for v in result.tolist()]}
    if isinstance(result, (list, tuple, set, frozenset)):
        return {"kind": "list",
                "values": [serialize_cell(v) for v in result]}
    if isinstance(result, dict):
        return {"kind": "table",
                "columns": [str(k) for k in result.keys()],
                "rows": [[serialize_cell(v) for v in result.values()]]}
    return {"kind": "scalar", "value": serialize_cell(result)}


def error_payload(exc_type: str, message: str, tb: str = "") -> dict:
    return {"kind": "error",
            "error": {"type": exc_type, "message": message,
                      "traceback_excerpt": tb[-2000:]}}


def run_program(program_path: str, out_path: str,
                timeout: float | None = None) -> int:
    def _write(payload: dict) -> None:
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, allow_nan=False)

    if timeout:
        def _alarm(signum, frame):
            raise TimeoutError(f"shim timeout after {timeout}s")
        signal.signal(signal.SIGALRM, _alarm)
        signal.setitimer(signal.ITIMER_REAL, timeout)

    try:
        with open(program_path, "r", encoding="utf-8") as fh:
            source = fh.read()
    except OSError as exc:
        _write(error_payload("OSError", str(exc)))
        return 2

    namespace: dict = {"__name__": "__main__"}
    try:
        code = compile(source, program_path, "exec")
        exec(code, namespace)
    except BaseException as exc:  # candidate code can raise anything
        _write(error_payload(type(exc).__name__, str(exc),
                             traceback.format_exc()))
        return 2
    finally:
        if timeout:
            signal.setitimer(signal.ITIMER_REAL, 0)

    if "result" not in namespace:
        _write(error_payload("MissingResult", "result undefined"))
        return 2

    try:
        payload = serialize_result(namespace["result"])
    except Exception as exc:
        _write(error_payload(type(exc).__name__,
                             f"result not serializable: {exc}",
                             traceback.format_exc()))
        return 2
    _write(payload)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="paradigm-shim",
        description="Run one analysis program and serialize its `result`.")
    parser.add_argument("program", help="path to the program source file")
    parser.add_argument("--out", default=PAYLOAD_FILENAME,
                        help="payload output path")
    parser.add_argument("--timeout", type=float, default=None,
                        help="soft wall-clock limit in seconds")
    args = parser.parse_args(argv)
    return run_program(args.program, args.out, args.timeout)


if __name__ == "__main__":
    sys.exit(main())
