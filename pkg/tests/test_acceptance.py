"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also repeated in the pytest terminal summary. Run standalone
with ``python3 tests/test_acceptance.py`` to get just the report.
"""
import contextlib
import io
import json
import logging
import os
import sys
import tempfile
import time

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from syngen.binding import extract_all, parse_conllu, read_conllu  # noqa: E402
from syngen.dvmp import (  # noqa: E402
    ANIMAL, COLORS, FRUIT, GENERAL, CoherenceError, PromptRecord, coherence_violations,
    generate_dataset, record_to_conllu, sample_prompt, swap_counterpart,
)
from syngen.harness import ScheduleConfig, run, separation_metrics  # noqa: E402
from syngen.loss import PieceAlignment, grad_scores, loss_neg, loss_pos, loss_total, softmax_maps  # noqa: E402
from syngen.metrics import AnnotationRecord, entity_neglect, improper_binding, load_annotations, proper_binding  # noqa: E402

from conftest import DATA, alignment, as_entries, as_oracle  # noqa: E402
from oracles import brute_force_losses, central_difference, random_instance  # noqa: E402

RESULTS = []


def report(name, ok, detail, elapsed, limit=None):
    timing = f"{elapsed:.2f}s" + (f" (limit {limit:g}s)" if limit else "")
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}; {timing}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


# ---------------------------------------------------------------------------
# 1


def check_extraction():
    t0 = time.perf_counter()
    graphs = read_conllu(os.path.join(DATA, "extraction.conllu"))
    with open(os.path.join(DATA, "extraction_expected.json"), encoding="utf-8") as f:
        expected = json.load(f)
    got = {}
    pairs_ok = True
    for i, g in enumerate(graphs, start=1):
        sets = []
        for b, pairs, u in extract_all(g):
            # pairs must be exactly (modifier, root) for each modifier, in token order
            pairs_ok &= list(pairs) == [(m, b.root_noun) for m in sorted(b.modifiers)]
            sets.append([g.token(b.root_noun).surface,
                         [g.token(m).surface for m in sorted(b.modifiers)],
                         [g.token(x).surface for x in sorted(u.tokens)]])
        got[f"fx{i:02d}"] = sets
    elapsed = time.perf_counter() - t0
    matched = sum(got.get(k) == v for k, v in expected.items())
    ok = len(expected) >= 30 and matched == len(expected) == len(got) and pairs_ok and elapsed < 1.0
    return ok, f"{matched}/{len(expected)} fixture sentences exact, pairs {'ok' if pairs_ok else 'WRONG'}", elapsed, 1


def test_c1_extraction():
    report("C1 extraction fixtures", *check_extraction())


# ---------------------------------------------------------------------------
# 2, 3


def check_loss_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240)
    worst = 0.0
    for _ in range(100):
        logits, sets, pieces, n_rows = random_instance(rng)
        maps = softmax_maps(logits)
        entries, align = as_entries(sets), alignment(pieces, n_rows)
        want = brute_force_losses(maps, as_oracle(sets), pieces)
        got = (loss_pos(maps, entries, align), loss_neg(maps, entries, align), loss_total(maps, entries, align).l_total)
        worst = max([worst] + [_rel(g, w) for g, w in zip(got, want) if w != 0 or g != 0])
    elapsed = time.perf_counter() - t0
    return worst < 1e-10 and elapsed < 5.0, f"100 instances, max rel err {worst:.2e} (< 1e-10)", elapsed, 5


def test_c2_loss_oracle():
    report("C2 loss formula oracle", *check_loss_oracle())


def check_gradient():
    t0 = time.perf_counter()
    rng = np.random.default_rng(31337)
    worst = 0.0
    checked = 0
    for _ in range(100):
        logits, sets, pieces, n_rows = random_instance(rng)
        g = grad_scores(logits, as_entries(sets), alignment(pieces, n_rows))
        fd = central_difference(logits, as_oracle(sets), pieces, h=1e-5)
        mask = np.abs(g) > 1e-8
        checked += int(mask.sum())
        if mask.any():
            worst = max(worst, float((np.abs(g - fd)[mask] / np.abs(g)[mask]).max()))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 30.0 and checked > 0
    return ok, f"{checked} coordinates, max rel err {worst:.2e} (< 1e-5)", elapsed, 30


def test_c3_gradient():
    report("C3 gradient vs finite differences", *check_gradient())


# ---------------------------------------------------------------------------
# 4, 5

CROWN = PromptRecord("a red crown and a golden strawberry", (("crown", ("red",)), ("strawberry", ("golden",))), 0)
_RUNS = {}


def toy_runs():
    """20 seeded toy runs on the 2-set prompt, shared by criteria 4 and 5."""
    if "runs" not in _RUNS:
        g = parse_conllu(record_to_conllu(CROWN))[0]
        sets = extract_all(g)
        align = PieceAlignment.identity(len(g))
        t0 = time.perf_counter()
        runs = [run(sets, align, ScheduleConfig.toy(rng_seed=seed), snapshots=False) for seed in range(20)]
        _RUNS["runs"] = runs
        _RUNS["elapsed"] = time.perf_counter() - t0
    return _RUNS["runs"], _RUNS["elapsed"]


def check_separation():
    runs, elapsed = toy_runs()
    separated = 0
    frozen = 0
    for traj in runs:
        sep = separation_metrics(traj)
        if sep["pair"][-1] < 0.5 * sep["pair"][0] and sep["unmatched"][-1] > 1.5 * sep["unmatched"][0]:
            separated += 1
        losses = traj.losses()
        frozen += int(losses[25] == losses[50] and len(losses) == 51)
    ok = separated >= 18 and frozen == 20 and elapsed < 60.0
    return ok, f"{separated}/20 runs separate (need 18), steps 25/50 bitwise equal in {frozen}/20", elapsed, 60


def test_c4_separation():
    report("C4 separation dynamics", *check_separation())


def check_descent():
    runs, _ = toy_runs()
    t0 = time.perf_counter()
    monotone = 0
    for traj in runs:
        losses = traj.losses()
        if all(losses[t + 1] <= losses[t] for t in range(25)):
            monotone += 1
    return monotone == 20, f"l_total non-increasing over steps 0..25 in {monotone}/20 runs", time.perf_counter() - t0, None


def test_c5_descent():
    report("C5 descent property", *check_descent())


# ---------------------------------------------------------------------------
# 6, 7


def check_dvmp():
    t0 = time.perf_counter()
    ds = generate_dataset(1, count=600)
    violations = sum(len(coherence_violations(r)) for r in ds)
    unique = len({r.text for r in ds})
    cards = ((len(GENERAL.entities), len(ANIMAL.entities), len(FRUIT.entities)),
             (len(GENERAL.category_modifiers), len(ANIMAL.category_modifiers), len(FRUIT.category_modifiers)),
             len(COLORS))
    round_trip = 0
    for r in ds[:50]:
        g = parse_conllu(record_to_conllu(r))[0]
        back = tuple((g.token(b.root_noun).surface, tuple(g.token(m).surface for m in sorted(b.modifiers)))
                     for b, _, _ in extract_all(g))
        round_trip += back == r.gold_sets
    elapsed = time.perf_counter() - t0
    ok = (len(ds) == 600 and unique == 600 and violations == 0 and cards == ((18, 16, 4), (7, 4, 2), 13)
          and round_trip == 50 and elapsed < 5.0)
    detail = f"600 prompts ({unique} unique), {violations} violations, pools {cards}, round trip {round_trip}/50"
    return ok, detail, elapsed, 5


def test_c6_dvmp():
    report("C6 DVMP generator", *check_dvmp())


def check_swap():
    t0 = time.perf_counter()
    bench = PromptRecord("a white bench in front of a green bush", (("bench", ("white",)), ("bush", ("green",))), 0)
    swapped = swap_counterpart(bench, 0)
    example = swapped.text == "a green bench in front of a white bush" and swap_counterpart(swapped, 0) == bench
    held = tried = 0
    seed = 0
    while tried < 100:
        r = sample_prompt(seed, 2)
        seed += 1
        try:
            s = swap_counterpart(r, r.seed)
        except CoherenceError:
            continue
        tried += 1
        held += swap_counterpart(s, r.seed) == r and s != r and not coherence_violations(s)
    ok = example and held == 100
    return ok, f"bench/bush example {'reproduced' if example else 'WRONG'}, involution {held}/100", time.perf_counter() - t0, None


def test_c7_swap():
    report("C7 swap counterpart", *check_swap())


# ---------------------------------------------------------------------------
# 8, 9


def check_metrics():
    t0 = time.perf_counter()
    corpus = load_annotations(os.path.join(DATA, "annotations.csv"))
    values = (proper_binding(corpus), improper_binding(corpus), entity_neglect(corpus))
    exact = values == (0.5, 0.5, 0.25)
    rng = np.random.default_rng(5)
    law = 0
    for trial in range(200):
        n = int(rng.integers(2, 12))
        recs = []
        for i in range(n):
            total = int(rng.integers(1, 6))
            ents = int(rng.integers(1, 5))
            recs.append(AnnotationRecord(f"r{i}", total, int(rng.integers(0, total + 1)), int(rng.integers(0, total + 1)),
                                         ents, int(rng.integers(0, ents + 1))))
        labels = rng.integers(0, int(rng.integers(2, n + 1)), size=n)
        parts = [[r for r, lab in zip(recs, labels) if lab == k] for k in set(labels.tolist())]
        good = True
        for fn, den in ((proper_binding, "total_attributes"), (improper_binding, "total_attributes"),
                        (entity_neglect, "entities_in_prompt")):
            w = [sum(getattr(r, den) for r in p) for p in parts]
            combined = sum(wi * fn(p) for wi, p in zip(w, parts)) / sum(w)
            good &= abs(fn(recs) - combined) <= 1e-12
        law += good
    ok = exact and law == 200
    return ok, f"(proper, improper, neglect) = {values}, composition law {law}/200 partitions", time.perf_counter() - t0, None


def test_c8_metrics():
    report("C8 metrics", *check_metrics())


def check_determinism():
    from test_cli import run_all_subcommands

    t0 = time.perf_counter()
    logging.disable(logging.WARNING)
    try:
        with tempfile.TemporaryDirectory() as tmp, contextlib.redirect_stdout(io.StringIO()):
            a = run_all_subcommands(os.path.join(tmp, "a"))
            b = run_all_subcommands(os.path.join(tmp, "b"))
    finally:
        logging.disable(logging.NOTSET)
    same = sorted(k for k in a if a[k] == b.get(k))
    ok = a.keys() == b.keys() and len(same) == len(a) and len(a) > 0
    return ok, f"{len(same)}/{len(a)} output files byte-identical across 5 subcommands", time.perf_counter() - t0, None


def test_c9_determinism():
    report("C9 CLI determinism", *check_determinism())


if __name__ == "__main__":
    checks = [("C1 extraction fixtures", check_extraction), ("C2 loss formula oracle", check_loss_oracle),
              ("C3 gradient vs finite differences", check_gradient), ("C4 separation dynamics", check_separation),
              ("C5 descent property", check_descent), ("C6 DVMP generator", check_dvmp),
              ("C7 swap counterpart", check_swap), ("C8 metrics", check_metrics),
              ("C9 CLI determinism", check_determinism)]
    failed = 0
    for name, fn in checks:
        try:
            report(name, *fn())
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
