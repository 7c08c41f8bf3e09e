"""Cross-paradigm execution-accuracy evaluation harness.

Executes natural-language-derived SQL and pandas programs against the same
data and judges correctness with a deterministic structure-agnostic
equivalence engine.
"""

from .canon import (CanonicalTable, CanonicalValue, make_table,
                    normalize_value, scalar_table)
from .equivalence import EquivalenceOptions, EquivalenceVerdict, compare
from .harness import ExReport, ItemResult, compute_ex, evaluate_item

__version__ = "0.1.0"

__all__ = [
    "CanonicalTable", "CanonicalValue", "make_table", "normalize_value",
    "scalar_table", "EquivalenceOptions", "EquivalenceVerdict", "compare",
    "ExReport", "ItemResult", "compute_ex", "evaluate_item", "__version__",
]
