import os
import sys

import pytest

from syngen.binding import BindingSet, PairSet, UnmatchedSet
from syngen.loss import PieceAlignment

sys.path.insert(0, os.path.dirname(__file__))

DATA = os.path.join(os.path.dirname(__file__), "data")


def as_entries(sets):
    """Oracle-style ``(root, mods, pairs, unmatched)`` tuples -> package structures."""
    out = []
    for i, (root, mods, pairs, unmatched) in enumerate(sets, start=1):
        out.append((BindingSet(root, frozenset(mods), i), PairSet(tuple(pairs)), UnmatchedSet(frozenset(unmatched))))
    return out


def as_oracle(sets):
    return [(list(pairs), list(unmatched)) for _, _, pairs, unmatched in sets]


def alignment(pieces, n_rows):
    return PieceAlignment({w: tuple(p) for w, p in pieces.items()}, n_rows)


@pytest.fixture
def data_dir():
    return DATA


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
