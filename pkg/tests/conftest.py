"""Shared fixtures: hand-built SQLite databases for the regression suite."""

import sqlite3
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def null_group_db(tmp_path_factory):
    """Four-row fixture whose grouping key contains a NULL.

    Hand-enumerated grouped counts: a -> 2, b -> 1, NULL -> 1. A grouped
    SQL query returns three groups; a default-behavior pandas groupby
    drops the NULL key and returns two.
    """
    path = tmp_path_factory.mktemp("dbs") / "grouping.sqlite"
    conn = sqlite3.connect(path)
    conn.execute("CREATE TABLE visits (city TEXT, amount INTEGER)")
    conn.executemany("INSERT INTO visits VALUES (?, ?)",
                     [("a", 1), ("a", 2), (None, 3), ("b", 4)])
    conn.commit()
    conn.close()
    return path


@pytest.fixture(scope="session")
def tie_break_db(tmp_path_factory):
    """Six towns with an enrollment tie spanning the rank-5 boundary."""
    path = tmp_path_factory.mktemp("dbs") / "towns.sqlite"
    conn = sqlite3.connect(path)
    conn.execute("CREATE TABLE towns (city TEXT, enrollment INTEGER)")
    conn.executemany("INSERT INTO towns VALUES (?, ?)", [
        ("Coulterville", 10), ("Pinecrest", 20), ("Shaver Lake", 30),
        ("Hyampom", 40), ("Emigrant Gap", 50), ("Woody", 50),
    ])
    conn.commit()
    conn.close()
    return path


@pytest.fixture(scope="session")
def granularity_db(tmp_path_factory):
    """Score table where the global maximum is a school-level row, so an
    inferred district-level filter changes the answer."""
    path = tmp_path_factory.mktemp("dbs") / "scores.sqlite"
    conn = sqlite3.connect(path)
    conn.execute("CREATE TABLE scores (name TEXT, rtype TEXT, "
                 "avg_read REAL, status TEXT)")
    conn.executemany("INSERT INTO scores VALUES (?, ?, ?, ?)", [
        ("Palo Alto Unified", "S", 642.0, "Active"),
        ("Santa Cruz County Office", "D", 638.0, "Active"),
        ("Elsewhere District", "D", 600.0, "Active"),
        ("Closed Academy", "S", 650.0, "Closed"),
    ])
    conn.commit()
    conn.close()
    return path


@pytest.fixture(scope="session")
def mini_db(tmp_path_factory):
    """Small two-table database for export/prompt plumbing."""
    path = tmp_path_factory.mktemp("dbs") / "mini.sqlite"
    conn = sqlite3.connect(path)
    conn.execute('CREATE TABLE schools (id INTEGER, name TEXT, '
                 '"Free Meal Count (Ages 5-17)" REAL)')
    conn.execute("CREATE TABLE city (id INTEGER, city TEXT)")
    conn.executemany("INSERT INTO schools VALUES (?, ?, ?)",
                     [(1, "Alpha", 10.5), (2, "Beta", None)])
    conn.executemany("INSERT INTO city VALUES (?, ?)",
                     [(1, "X"), (2, "Y, Z")])
    conn.commit()
    conn.close()
    return path


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One [PASS]/[FAIL] line per acceptance criterion, shown even when
    stdout capture is active."""
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok in RESULTS:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}")
