"""DVMP prompt generator with gold entity/modifier bindings.

Prompts are coordinations of ``a/an {modifiers} {noun}`` phrases. Modifiers
for an entity come from the shared color list plus the modifiers of that
entity's category, which keeps prompts visually coherent (no "sliced bowl").
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

COLORS = (
    "red", "orange", "yellow", "green", "blue", "purple", "pink",
    "brown", "gray", "black", "white", "beige", "teal",
)


@dataclass(frozen=True)
class EntityPool:
    category: str
    entities: tuple[str, ...]
    category_modifiers: tuple[str, ...]


GENERAL = EntityPool(
    "general",
    ("backpack", "crown", "suitcase", "chair", "balloon", "bow", "car", "bowl", "bench",
     "clock", "camera", "umbrella", "guitar", "shoe", "hat", "surfboard", "skateboard", "bicycle"),
    ("modern", "spotted", "wooden", "metal", "curved", "spiky", "checkered"),
)
FRUIT = EntityPool(
    "fruit",
    ("apple", "tomato", "banana", "strawberry"),
    ("sliced", "skewered"),
)
ANIMAL = EntityPool(
    "animal",
    ("cat", "dog", "bird", "bear", "lion", "horse", "elephant", "monkey",
     "frog", "turtle", "rabbit", "mouse", "panda", "zebra", "gorilla", "penguin"),
    ("furry", "baby", "spotted", "sleepy"),
)
POOLS = (GENERAL, FRUIT, ANIMAL)
ENTITIES = tuple(e for pool in POOLS for e in pool.entities)
CATEGORY_OF = {e: pool for pool in POOLS for e in pool.entities}

# tagging used when rendering a record as a parse
NOUN_MODIFIERS = frozenset({"baby", "metal"})
PARTICIPLE_MODIFIERS = {"sliced": "slice", "skewered": "skewer"}

MAX_SWAP_ATTEMPTS = 100


class CoherenceError(ValueError):
    pass


def allowed_modifiers(entity: str) -> tuple[str, ...]:
    pool = CATEGORY_OF[entity]
    return COLORS + tuple(m for m in pool.category_modifiers if m not in COLORS)


def article(word: str) -> str:
    # letter rule is enough for these pools (no "unicorn"/"hour" cases)
    return "an" if word[:1].lower() in "aeiou" else "a"


def phrase(entity: str, modifiers) -> str:
    words = list(modifiers) + [entity]
    return f"{article(words[0])} {' '.join(words)}"


@dataclass(frozen=True)
class PromptRecord:
    text: str
    gold_sets: tuple[tuple[str, tuple[str, ...]], ...]
    seed: int
    n_entities: int = field(init=False)
    n_modifiers_total: int = field(init=False)

    def __post_init__(self):
        gold = tuple((e, tuple(m)) for e, m in self.gold_sets)
        object.__setattr__(self, "gold_sets", gold)
        object.__setattr__(self, "n_entities", len(gold))
        object.__setattr__(self, "n_modifiers_total", sum(len(m) for _, m in gold))

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "gold_sets": [{"entity": e, "modifiers": list(m)} for e, m in self.gold_sets],
            "seed": self.seed,
            "n_entities": self.n_entities,
            "n_modifiers_total": self.n_modifiers_total,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PromptRecord":
        gold = tuple((g["entity"], tuple(g["modifiers"])) for g in d["gold_sets"])
        return cls(d["text"], gold, int(d["seed"]))


def coherence_violations(record: PromptRecord) -> list[str]:
    """Human-readable problems with ``record``; empty when coherent."""
    problems = []
    for entity, mods in record.gold_sets:
        if entity not in CATEGORY_OF:
            problems.append(f"unknown entity {entity!r}")
            continue
        ok = set(allowed_modifiers(entity))
        for m in mods:
            if m not in ok:
                problems.append(f"{m!r} cannot modify {entity!r}")
        if len(set(mods)) != len(mods):
            problems.append(f"repeated modifier on {entity!r}")
    return problems


def sample_prompt(rng_seed, n_entities: int = 2, max_mods_per_entity: int = 3,
                  allow_repeat: bool = False, exact_mods: bool = False) -> PromptRecord:
    """Draw one prompt.

    Each entity gets between 1 and ``max_mods_per_entity`` modifiers (exactly
    ``max_mods_per_entity`` with ``exact_mods``), drawn without replacement
    in random order.
    """
    if not 1 <= n_entities <= 3:
        raise ValueError(f"n_entities must be in 1..3, got {n_entities}")
    if not 1 <= max_mods_per_entity <= 3:
        raise ValueError(f"max_mods_per_entity must be in 1..3, got {max_mods_per_entity}")
    rng = np.random.default_rng(rng_seed)
    picks = rng.choice(len(ENTITIES), size=n_entities, replace=allow_repeat)
    gold = []
    for idx in picks:
        entity = ENTITIES[int(idx)]
        pool = allowed_modifiers(entity)
        k = max_mods_per_entity if exact_mods else int(rng.integers(1, max_mods_per_entity + 1))
        if k > len(pool):
            raise CoherenceError(f"{entity!r} has only {len(pool)} coherent modifiers, {k} requested")
        mods = tuple(pool[int(i)] for i in rng.choice(len(pool), size=k, replace=False))
        gold.append((entity, mods))
    text = " and ".join(phrase(e, m) for e, m in gold)
    return PromptRecord(text, tuple(gold), int(rng_seed))


def _sub_seed(rng_seed: int, index: int, attempt: int) -> int:
    return int(np.random.SeedSequence([rng_seed, index, attempt]).generate_state(1)[0])


def generate_dataset(rng_seed: int, count: int = 600, entity_counts=(1, 2),
                     max_mods_per_entity: int = 3) -> list[PromptRecord]:
    """``count`` distinct prompts.

    Record ``i`` is drawn from a sub-seed derived from ``(rng_seed, i,
    attempt)``; the attempt counter only advances when the text duplicates an
    earlier record.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    seen = set()
    out = []
    for i in range(count):
        attempt = 0
        while True:
            sub = _sub_seed(rng_seed, i, attempt)
            n_ent = int(entity_counts[np.random.default_rng([sub, 7]).integers(len(entity_counts))])
            rec = sample_prompt(sub, n_ent, max_mods_per_entity)
            if rec.text not in seen:
                break
            attempt += 1
        seen.add(rec.text)
        out.append(rec)
    return out


# ---------------------------------------------------------------------------
# swapped counterparts


def _locate(words, gold):
    """Word positions of each entity's modifiers, searched left to right."""
    positions = []
    cursor = 0
    for entity, mods in gold:
        try:
            at = words.index(entity, cursor)
        except ValueError:
            raise ValueError(f"entity {entity!r} not found in text") from None
        start = at - len(mods)
        if start < 0 or tuple(words[start:at]) != tuple(mods):
            raise ValueError(f"modifiers {mods} do not directly precede {entity!r}")
        positions.append(list(range(start, at)))
        cursor = at + 1
    return positions


def fix_articles(words: list[str]) -> list[str]:
    out = list(words)
    for i in range(len(out) - 1):
        low = out[i].lower()
        if low in ("a", "an"):
            art = article(out[i + 1])
            out[i] = art.capitalize() if out[i][0].isupper() else art
    return out


def _swappable_into(entity: str) -> tuple[str, ...]:
    # entities outside the pools (hand-written records) only take colors
    return allowed_modifiers(entity) if entity in CATEGORY_OF else COLORS


def _swap_is_coherent(gold, a, i, b, j):
    ent_a, mods_a = gold[a]
    ent_b, mods_b = gold[b]
    x, y = mods_a[i], mods_b[j]
    if x == y or x in mods_b or y in mods_a:
        return False
    return y in _swappable_into(ent_a) and x in _swappable_into(ent_b)


def swap_counterpart(record: PromptRecord, rng_seed) -> PromptRecord:
    """Exchange one modifier between two entities of ``record``.

    The entity pair order and the candidate modifier positions are drawn from
    ``rng_seed`` using only the record's shape, so calling this again on the
    output with the same seed swaps the same positions back.
    """
    gold = record.gold_sets
    eligible = [k for k, (_, mods) in enumerate(gold) if mods]
    if len(eligible) < 2:
        raise ValueError("swap needs at least two entities with modifiers")
    rng = np.random.default_rng(rng_seed)
    pairs = list(combinations(eligible, 2))
    attempts = 0
    for p in rng.permutation(len(pairs)):
        a, b = pairs[int(p)]
        cands = [(i, j) for i in range(len(gold[a][1])) for j in range(len(gold[b][1]))]
        for c in rng.permutation(len(cands)):
            attempts += 1
            if attempts > MAX_SWAP_ATTEMPTS:
                break
            i, j = cands[int(c)]
            if _swap_is_coherent(gold, a, i, b, j):
                return _apply_swap(record, a, i, b, j)
    raise CoherenceError(f"no coherent modifier swap for {record.text!r}")


def _apply_swap(record, a, i, b, j):
    gold = [list(m) for _, m in record.gold_sets]
    words = record.text.split()
    pos = _locate(words, record.gold_sets)
    gold[a][i], gold[b][j] = gold[b][j], gold[a][i]
    words[pos[a][i]], words[pos[b][j]] = words[pos[b][j]], words[pos[a][i]]
    new_gold = tuple((e, tuple(m)) for (e, _), m in zip(record.gold_sets, gold))
    return PromptRecord(" ".join(fix_articles(words)), new_gold, record.seed)


# ---------------------------------------------------------------------------
# template parses and output


def record_to_conllu(record: PromptRecord) -> str:
    """Hand-built UD parse of a template prompt ("a m1 m2 n1 and a m3 n2")."""
    layout = []
    for k, (entity, mods) in enumerate(record.gold_sets):
        if k:
            layout.append(("cc", k, None))
        layout.append(("det", k, None))
        layout += [("mod", k, m) for m in mods]
        layout.append(("noun", k, entity))
    noun_at = {k: i for i, (kind, k, _) in enumerate(layout, start=1) if kind == "noun"}

    words = record.text.split()
    if len(words) != len(layout):
        raise ValueError(f"text {record.text!r} does not follow the coordination template")
    lines = [f"# text = {record.text}"]
    for i, ((kind, k, value), form) in enumerate(zip(layout, words), start=1):
        head = noun_at[k]
        if kind == "cc":
            cols = ("and", "CCONJ", "CC", "_", "cc")
        elif kind == "det":
            cols = (form.lower(), "DET", "DT", "Definite=Ind|PronType=Art", "det")
        elif kind == "noun":
            head = 0 if k == 0 else noun_at[0]
            cols = (value, "NOUN", "NN", "Number=Sing", "root" if k == 0 else "conj")
        elif value in NOUN_MODIFIERS:
            cols = (value, "NOUN", "NN", "Number=Sing", "compound")
        elif value in PARTICIPLE_MODIFIERS:
            cols = (PARTICIPLE_MODIFIERS[value], "VERB", "VBN", "Tense=Past|VerbForm=Part", "amod")
        else:
            cols = (value, "ADJ", "JJ", "Degree=Pos", "amod")
        lemma, upos, xpos, feats, rel = cols
        lines.append("\t".join(map(str, (i, form, lemma, upos, xpos, feats, head, rel, "_", "_"))))
    return "\n".join(lines) + "\n\n"


def write_dataset(records, text_path, jsonl_path) -> None:
    with open(text_path, "w", encoding="utf-8", newline="\n") as f:
        for r in records:
            f.write(r.text + "\n")
    with open(jsonl_path, "w", encoding="utf-8", newline="\n") as f:
        for r in records:
            f.write(json.dumps(r.to_dict(), ensure_ascii=False) + "\n")
