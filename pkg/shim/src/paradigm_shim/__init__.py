import importlib.resources
import json

from .runner import (NESTED_MARKER, PAYLOAD_FILENAME, error_payload, main,
                     run_program, serialize_cell, serialize_result)


def load_wire_schema() -> dict:
    """The JSON schema every emitted payload must validate against."""
    text = importlib.resources.files(__name__).joinpath(
        "wire_schema.json").read_text(encoding="utf-8")
    return json.loads(text)


__all__ = [
    "NESTED_MARKER",
    "PAYLOAD_FILENAME",
    "error_payload",
    "load_wire_schema",
    "main",
    "run_program",
    "serialize_cell",
    "serialize_result",
]
