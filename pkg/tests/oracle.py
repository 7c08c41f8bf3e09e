"""Exhaustive reference comparator used as the test oracle for the
equivalence engine.

Independent of the engine's search strategy: row multisets are checked by
enumerating every permutation, column projections by enumerating every
order-preserving subset, and de-duplication by explicit coverage checks.
Only the cell-level predicate (values_equal) is shared, since the oracle
targets table-structure semantics.
"""

import itertools

from paradigm_bench.canon import CanonicalTable, flatten
from paradigm_bench.equivalence import (DEFAULT_OPTIONS, EquivalenceOptions,
                                        values_equal)


def _row_eq(r, s, opts):
    return len(r) == len(s) and all(
        values_equal(x, y, opts) for x, y in zip(r, s))


def _permutation_match(left, right, opts):
    if len(left) != len(right):
        return False
    if not left:
        return True
    for perm in itertools.permutations(range(len(right))):
        if all(_row_eq(left[i], right[perm[i]], opts)
               for i in range(len(left))):
            return True
    return False


def _has_dups(rows, opts):
    return any(_row_eq(rows[i], rows[j], opts)
               for i in range(len(rows)) for j in range(i + 1, len(rows)))


def _covers(xs, ys, opts):
    return all(any(_row_eq(x, y, opts) for y in ys) for x in xs)


def _rows_decide(left, right, opts):
    if opts.order_sensitive:
        ok = len(left) == len(right) and all(
            _row_eq(r, s, opts) for r, s in zip(left, right))
    else:
        ok = _permutation_match(left, right, opts)
    if ok:
        return True
    if opts.dedup_enabled and left and right:
        if _has_dups(left, opts) != _has_dups(right, opts):
            return _covers(left, right, opts) and _covers(right, left, opts)
    return False


def _interps(t):
    rows = list(t.rows)
    out = [rows]
    if len(rows) == 1 and len(rows[0]) > 1:
        out.append([(c,) for c in rows[0]])
    return out


def _attempt(ra, rb, opts):
    wa = len(ra[0]) if ra else 0
    wb = len(rb[0]) if rb else 0
    if wa == wb or not ra or not rb:
        return _rows_decide(ra, rb, opts)
    if not opts.superset_enabled:
        return False
    wide, narrow = (ra, rb) if wa > wb else (rb, ra)
    ww, wn = max(wa, wb), min(wa, wb)
    if ww > opts.max_projection_width or wn < 1:
        return False
    for combo in itertools.combinations(range(ww), wn):
        projected = [tuple(row[i] for i in combo) for row in wide]
        if _rows_decide(projected, narrow, opts):
            return True
    return False


def oracle_equivalent(a: CanonicalTable, b: CanonicalTable,
                      opts: EquivalenceOptions = DEFAULT_OPTIONS) -> bool:
    fa, fb = flatten(a), flatten(b)
    return any(_attempt(ra, rb, opts)
               for ra in _interps(fa) for rb in _interps(fb))
