"""Deterministic structure-agnostic equivalence engine.

Decides whether two canonical tables are semantically equivalent under the
seven content-over-format rules (type normalization, order insensitivity,
superset projection, numeric/percent tolerance, de-duplication), producing
an auditable rule trace. Numeric tolerance makes cell equality
non-transitive, so multiset row comparison uses exact bipartite matching
rather than sort-and-zip.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from .canon import CanonicalTable, CanonicalValue, Kind, flatten, render_value

RULE_CONTENT = "ContentOverFormat"
RULE_STRUCTURE = "StructuralInvariance"
RULE_ORDER = "OrderInsensitivity"
RULE_TYPES = "TypeNormalization"
RULE_SUPERSET = "SupersetValidity"
RULE_TOLERANCE = "NumericTolerance"
RULE_DEDUP = "DeDuplication"


class WidthExceeded(ValueError):
    """Wide-side arity exceeds the projection search cap."""


@dataclass(frozen=True)
class EquivalenceOptions:
    numeric_abs_tol: float = 1e-6
    rounding_tolerance_enabled: bool = True
    order_sensitive: bool = False
    superset_enabled: bool = True
    dedup_enabled: bool = True
    max_projection_width: int = 16

    def __post_init__(self):
        if self.numeric_abs_tol < 0:
            raise ValueError("numeric_abs_tol must be nonnegative")
        if self.max_projection_width < 1:
            raise ValueError("max_projection_width must be >= 1")


DEFAULT_OPTIONS = EquivalenceOptions()


@dataclass(frozen=True)
class EquivalenceVerdict:
    decision: str  # "Equivalent" | "NotEquivalent"
    rule_trace: Tuple[str, ...]
    witness: Optional[str] = None

    def __post_init__(self):
        if self.decision == "Equivalent" and not self.rule_trace:
            raise ValueError("Equivalent verdicts need a non-empty rule trace")
        if self.decision == "NotEquivalent" and self.witness is None:
            raise ValueError("NotEquivalent verdicts need a witness")

    @property
    def equivalent(self) -> bool:
        return self.decision == "Equivalent"


class _Recorder:
    """Collects which rule families fired on one comparison attempt."""

    __slots__ = ("type_norm", "tolerance", "order", "structure",
                 "superset", "dedup")

    def __init__(self):
        self.type_norm = False
        self.tolerance = False
        self.order = False
        self.structure = False
        self.superset = False
        self.dedup = False

    def trace(self) -> Tuple[str, ...]:
        t = [RULE_CONTENT]
        if self.structure:
            t.append(RULE_STRUCTURE)
        if self.order:
            t.append(RULE_ORDER)
        if self.superset:
            t.append(RULE_SUPERSET)
        if self.dedup:
            t.append(RULE_DEDUP)
        if self.type_norm:
            t.append(RULE_TYPES)
        if self.tolerance:
            t.append(RULE_TOLERANCE)
        return tuple(t)


def _decimals(x) -> int:
    """Decimal places displayed by the shortest rendering of x."""
    if isinstance(x, int):
        return 0
    s = repr(float(x))
    if "e" in s or "E" in s or "inf" in s or "nan" in s:
        return 17
    if "." not in s:
        return 0
    frac = s.split(".", 1)[1]
    return len(frac)


def _num_eq(x: float, y: float, opts: EquivalenceOptions,
            rec: _Recorder) -> bool:
    if x == y:
        return True
    if abs(x - y) <= opts.numeric_abs_tol:
        rec.tolerance = True
        return True
    if opts.rounding_tolerance_enabled:
        dx, dy = _decimals(x), _decimals(y)
        d = min(dx, dy)
        # Rounding the more precise operand to the displayed places of the
        # less precise one; disabled at 0 places to avoid 1 ~ 1.4.
        if d >= 1 and dx != dy and abs(round(x, d) - round(y, d)) < 1e-12:
            rec.tolerance = True
            return True
    return False


_NUMERIC = (Kind.INTEGER, Kind.REAL)


def _values_eq(a: CanonicalValue, b: CanonicalValue,
               opts: EquivalenceOptions, rec: _Recorder) -> bool:
    ka, kb = a.kind, b.kind
    if ka is Kind.NULL or kb is Kind.NULL:
        return ka is kb
    if ka in _NUMERIC and kb in _NUMERIC:
        if ka is not kb:
            rec.type_norm = True
        if a.percent_marked == b.percent_marked:
            return _num_eq(float(a.payload), float(b.payload), opts, rec)
        marked, plain = (a, b) if a.percent_marked else (b, a)
        pm, pu = float(marked.payload), float(plain.payload)
        # Either both already on the [0,1] scale, or the unmarked side is
        # the marked payload scaled back to percent points.
        if _num_eq(pm, pu, opts, rec) or _num_eq(pm * 100.0, pu, opts, rec):
            rec.tolerance = True
            return True
        return False
    if ka is Kind.BOOLEAN and kb is Kind.BOOLEAN:
        return a.payload is b.payload or a.payload == b.payload
    if ka is Kind.BOOLEAN and kb in _NUMERIC:
        if _num_eq(1.0 if a.payload else 0.0, float(b.payload), opts, rec):
            rec.type_norm = True
            return True
        return False
    if kb is Kind.BOOLEAN and ka in _NUMERIC:
        return _values_eq(b, a, opts, rec)
    if ka is Kind.DATE and kb is Kind.DATE:
        return a.payload == b.payload
    if ka is Kind.TIMESTAMP and kb is Kind.TIMESTAMP:
        return a.payload == b.payload
    if {ka, kb} == {Kind.DATE, Kind.TIMESTAMP}:
        d, ts = (a, b) if ka is Kind.DATE else (b, a)
        t = ts.payload
        if (t.hour, t.minute, t.second, t.microsecond) != (0, 0, 0, 0):
            return False
        if t.date() == d.payload:
            rec.type_norm = True
            return True
        return False
    if ka is Kind.TEXT and kb is Kind.TEXT:
        return a.payload == b.payload
    return False


def values_equal(a: CanonicalValue, b: CanonicalValue,
                 opts: EquivalenceOptions = DEFAULT_OPTIONS) -> bool:
    return _values_eq(a, b, opts, _Recorder())


def _rows_eq(r: Sequence[CanonicalValue], s: Sequence[CanonicalValue],
             opts: EquivalenceOptions, rec: _Recorder) -> bool:
    return len(r) == len(s) and all(
        _values_eq(x, y, opts, rec) for x, y in zip(r, s))


def _perfect_matching(left: Sequence, right: Sequence,
                      opts: EquivalenceOptions, rec: _Recorder) -> bool:
    """True iff a perfect bipartite matching exists under row equality.

    Kuhn's augmenting-path search: greedy assignment with backtracking,
    exact in the presence of non-transitive tolerance-based equality.
    """
    if len(left) != len(right):
        return False
    n = len(left)
    adj = [[j for j in range(n) if _rows_eq(left[i], right[j], opts, rec)]
           for i in range(n)]
    match_r = [-1] * n

    def try_assign(i: int, seen: list) -> bool:
        for j in adj[i]:
            if not seen[j]:
                seen[j] = True
                if match_r[j] == -1 or try_assign(match_r[j], seen):
                    match_r[j] = i
                    return True
        return False

    for i in range(n):
        if not try_assign(i, [False] * n):
            return False
    return True


def _has_duplicates(rows: Sequence, opts: EquivalenceOptions) -> bool:
    rec = _Recorder()
    return any(_rows_eq(rows[i], rows[j], opts, rec)
               for i in range(len(rows)) for j in range(i + 1, len(rows)))


def _covers(rows_a: Sequence, rows_b: Sequence, opts: EquivalenceOptions,
            rec: _Recorder) -> bool:
    return all(any(_rows_eq(r, s, opts, rec) for s in rows_b)
               for r in rows_a)


def multiset_rows_equal(a: CanonicalTable, b: CanonicalTable,
                        opts: EquivalenceOptions = DEFAULT_OPTIONS) -> bool:
    """Row multisets match under tolerant cell equality."""
    return _perfect_matching(list(a.rows), list(b.rows), opts, _Recorder())


def dedup_compare(a: CanonicalTable, b: CanonicalTable,
                  opts: EquivalenceOptions = DEFAULT_OPTIONS) -> bool:
    """Distinct-row sets match; callers gate on the one-side-has-duplicates
    precondition."""
    rec = _Recorder()
    return (_covers(list(a.rows), list(b.rows), opts, rec)
            and _covers(list(b.rows), list(a.rows), opts, rec))


def _rows_decide(left: Sequence, right: Sequence, opts: EquivalenceOptions,
                 rec: _Recorder) -> bool:
    if opts.order_sensitive:
        ok = len(left) == len(right) and all(
            _rows_eq(r, s, opts, rec) for r, s in zip(left, right))
    else:
        ok = _perfect_matching(left, right, opts, rec)
        if ok and len(left) > 1:
            rec.order = True
    if ok:
        return True
    if opts.dedup_enabled and left and right:
        la = _has_duplicates(left, opts)
        lb = _has_duplicates(right, opts)
        if la != lb:
            if _covers(left, right, opts, rec) and _covers(
                    right, left, opts, rec):
                rec.dedup = True
                return True
    return False


def project_superset_match(wide: CanonicalTable, narrow: CanonicalTable,
                           opts: EquivalenceOptions = DEFAULT_OPTIONS
                           ) -> Optional[Tuple[int, ...]]:
    """Find the lexicographically smallest order-preserving column subset of
    `wide` whose projection matches `narrow`'s rows."""
    if wide.arity > opts.max_projection_width:
        raise WidthExceeded(
            f"wide arity {wide.arity} exceeds cap {opts.max_projection_width}")
    if narrow.arity < 1 or narrow.arity >= wide.arity:
        return None
    narrow_rows = list(narrow.rows)
    for combo in itertools.combinations(range(wide.arity), narrow.arity):
        projected = [tuple(row[i] for i in combo) for row in wide.rows]
        if _rows_decide(projected, narrow_rows, opts, _Recorder()):
            return combo
    return None


def _interpretations(t: CanonicalTable) -> List[Tuple[list, bool]]:
    """Row-table readings of t: as parsed, and (for a single wide row) the
    transposed vector reading that makes a 1xN render match an N-list."""
    out = [(list(t.rows), False)]
    if t.n_rows == 1 and t.arity > 1:
        out.append(([(c,) for c in t.rows[0]], True))
    return out


def _attempt(rows_a: list, rows_b: list, opts: EquivalenceOptions,
             rec: _Recorder) -> bool:
    arity_a = len(rows_a[0]) if rows_a else 0
    arity_b = len(rows_b[0]) if rows_b else 0
    if arity_a == arity_b or not rows_a or not rows_b:
        return _rows_decide(rows_a, rows_b, opts, rec)
    if not opts.superset_enabled:
        return False
    (wide, narrow) = (rows_a, rows_b) if arity_a > arity_b else (rows_b, rows_a)
    w_arity = len(wide[0])
    n_arity = len(narrow[0])
    if w_arity > opts.max_projection_width:
        raise WidthExceeded(
            f"wide arity {w_arity} exceeds cap {opts.max_projection_width}")
    if n_arity < 1:
        return False
    for combo in itertools.combinations(range(w_arity), n_arity):
        projected = [tuple(row[i] for i in combo) for row in wide]
        sub = _Recorder()
        if _rows_decide(projected, narrow, opts, sub):
            rec.order |= sub.order
            rec.type_norm |= sub.type_norm
            rec.tolerance |= sub.tolerance
            rec.dedup |= sub.dedup
            rec.superset = True
            return True
    return False


def _witness_text(a: CanonicalTable, b: CanonicalTable,
                  opts: EquivalenceOptions) -> str:
    def fmt_row(row):
        return "(" + ", ".join(render_value(c) for c in row) + ")"

    if a.arity != b.arity and (a.rows and b.rows):
        return (f"arity mismatch: {a.arity} vs {b.arity} columns with no "
                f"matching projection")
    if a.n_rows != b.n_rows:
        return f"row count mismatch: {a.n_rows} vs {b.n_rows}"
    rec = _Recorder()
    if opts.order_sensitive:
        for i, (r, s) in enumerate(zip(a.rows, b.rows)):
            if not _rows_eq(r, s, opts, rec):
                return (f"row {i} differs under ordered comparison: "
                        f"{fmt_row(r)} vs {fmt_row(s)}")
    left_un = [r for r in a.rows
               if not any(_rows_eq(r, s, opts, rec) for s in b.rows)]
    right_un = [s for s in b.rows
                if not any(_rows_eq(s, r, opts, rec) for r in a.rows)]
    if left_un or right_un:
        parts = []
        if left_un:
            parts.append("unmatched in first: "
                         + "; ".join(fmt_row(r) for r in left_un[:4]))
        if right_un:
            parts.append("unmatched in second: "
                         + "; ".join(fmt_row(r) for r in right_un[:4]))
        return ", ".join(parts)
    return "row multiplicities differ"


def compare(pred: CanonicalTable, gold: CanonicalTable,
            opts: EquivalenceOptions = DEFAULT_OPTIONS) -> EquivalenceVerdict:
    """Full rule cascade; deterministic for fixed inputs and options."""
    a = flatten(pred)
    b = flatten(gold)
    capped = False
    for rows_a, trans_a in _interpretations(a):
        for rows_b, trans_b in _interpretations(b):
            rec = _Recorder()
            rec.structure = (trans_a or trans_b
                             or a.shape_class is not b.shape_class)
            try:
                if _attempt(rows_a, rows_b, opts, rec):
                    return EquivalenceVerdict("Equivalent", rec.trace())
            except WidthExceeded:
                capped = True
    if capped:
        return EquivalenceVerdict(
            "NotEquivalent", (RULE_CONTENT,), "projection width cap")
    return EquivalenceVerdict(
        "NotEquivalent", (RULE_CONTENT,), _witness_text(a, b, opts))
