"""Dependency-parse ingestion and entity/modifier binding extraction.

Parses come from any UD-style parser as CoNLL-U text. From a parse we pull out
each top-level entity noun together with the modifiers bound to it, the
(modifier, noun) pairs used by the positive loss, and the unmatched content
words used by the negative loss.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from typing import Iterable

logger = logging.getLogger(__name__)

ID, FORM, LEMMA, UPOS, XPOS, FEATS, HEAD, DEPREL, DEPS, MISC = range(10)

NOMINAL = frozenset({"NOUN", "PROPN"})
CONTENT_UPOS = frozenset({"NOUN", "PROPN", "ADJ", "VERB", "NUM"})
MODIFIER_UPOS = frozenset({"ADJ", "NOUN", "PROPN", "VERB", "NUM"})

MODIFIER_RELS = frozenset({"amod", "nmod", "compound", "npadvmod", "acomp", "conj"})
# conj does not disqualify a noun from being top-level
TOP_LEVEL_BLOCKING_RELS = MODIFIER_RELS - {"conj"}
SUBJECT_RELS = frozenset({"nsubj", "nsubjpass", "nsubj:pass"})


class ConlluError(ValueError):
    """Malformed CoNLL-U input. ``lineno`` is 1-based."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class ConlluWarning(UserWarning):
    """A sentence was rejected (cyclic or otherwise invalid tree)."""


@dataclass(frozen=True)
class Token:
    index: int
    surface: str
    lemma: str
    upos: str
    head: int
    deprel: str
    xpos: str = "_"
    feats: str = "_"

    @property
    def base_rel(self) -> str:
        # "amod:xyz" -> "amod"; possessors are entities, not modifiers
        rel = self.deprel.lower()
        if rel == "nmod:poss":
            return "poss"
        return rel.split(":")[0]

    def is_participle(self) -> bool:
        if self.xpos in ("VBN", "VBG"):
            return True
        return "VerbForm=Part" in self.feats.split("|")


@dataclass(frozen=True)
class DependencyGraph:
    tokens: tuple[Token, ...]
    sentence_text: str = ""

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if not self.sentence_text:
            object.__setattr__(self, "sentence_text", " ".join(t.surface for t in self.tokens))

    def __len__(self):
        return len(self.tokens)

    def token(self, index: int) -> Token:
        return self.tokens[index - 1]

    def children(self, index: int) -> list[Token]:
        return [t for t in self.tokens if t.head == index]

    def validate(self) -> None:
        """Raise ValueError unless the arcs form a single-rooted tree."""
        n = len(self.tokens)
        for pos, tok in enumerate(self.tokens, start=1):
            if tok.index != pos:
                raise ValueError(f"token ids not contiguous: expected {pos}, got {tok.index}")
            if not 0 <= tok.head <= n:
                raise ValueError(f"token {tok.index} has head {tok.head} outside 0..{n}")
            if tok.head == tok.index:
                raise ValueError(f"token {tok.index} is its own head")
        for tok in self.tokens:
            seen = set()
            cur = tok.index
            while cur != 0:
                if cur in seen:
                    raise ValueError(f"cyclic head chain through token {tok.index}")
                seen.add(cur)
                cur = self.token(cur).head
        roots = [t.index for t in self.tokens if t.head == 0]
        if n and len(roots) != 1:
            raise ValueError(f"expected exactly one root, found {len(roots)}: {roots}")
        if "".join(self.sentence_text.split()) != "".join(t.surface for t in self.tokens):
            raise ValueError("token forms do not reconstruct the sentence text")


@dataclass(frozen=True)
class BindingSet:
    root_noun: int
    modifiers: frozenset[int]
    set_id: int = 1

    def members(self) -> frozenset[int]:
        return self.modifiers | {self.root_noun}


@dataclass(frozen=True)
class PairSet:
    pairs: tuple[tuple[int, int], ...]

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)


@dataclass(frozen=True)
class UnmatchedSet:
    tokens: frozenset[int] = field(default_factory=frozenset)

    def __iter__(self):
        return iter(sorted(self.tokens))

    def __len__(self):
        return len(self.tokens)


# ---------------------------------------------------------------------------
# CoNLL-U reading


def _sentence_text(lines, tokens):
    for line in lines:
        if line.startswith("# text") and "=" in line:
            return line.split("=", 1)[1].strip()
    parts = []
    for tok, misc in tokens:
        parts.append(tok.surface)
        if "SpaceAfter=No" not in misc.split("|"):
            parts.append(" ")
    return "".join(parts).strip()


def _parse_block(block):
    comments = []
    tokens = []
    for lineno, line in block:
        if line.startswith("#"):
            comments.append(line)
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluError(f"expected 10 tab-separated columns, found {len(cols)}", lineno)
        tid = cols[ID]
        if "-" in tid or "." in tid:
            # multiword token range or empty node
            continue
        try:
            index = int(tid)
            head = int(cols[HEAD])
        except ValueError:
            raise ConlluError(f"non-integer ID or HEAD ({tid!r}, {cols[HEAD]!r})", lineno) from None
        tok = Token(
            index=index,
            surface=cols[FORM],
            lemma=cols[LEMMA],
            upos=cols[UPOS],
            head=head,
            deprel=cols[DEPREL],
            xpos=cols[XPOS],
            feats=cols[FEATS],
        )
        tokens.append((tok, cols[MISC]))
    return DependencyGraph(tuple(t for t, _ in tokens), _sentence_text(comments, tokens))


def parse_conllu(document: str) -> list[DependencyGraph]:
    """Parse CoNLL-U text into one :class:`DependencyGraph` per sentence.

    Malformed lines raise :class:`ConlluError` carrying the line number.
    Sentences whose arcs do not form a rooted tree are dropped with a
    :class:`ConlluWarning`.
    """
    blocks = []
    current = []
    for lineno, raw in enumerate(document.split("\n"), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            if current:
                blocks.append(current)
                current = []
            continue
        current.append((lineno, line))
    if current:
        blocks.append(current)

    graphs = []
    for block in blocks:
        graph = _parse_block(block)
        if not graph.tokens:
            continue
        try:
            graph.validate()
        except ValueError as err:
            first = block[0][0]
            msg = f"sentence starting at line {first} rejected: {err}"
            logger.warning(msg)
            warnings.warn(msg, ConlluWarning, stacklevel=2)
            continue
        graphs.append(graph)
    return graphs


def read_conllu(path) -> list[DependencyGraph]:
    with open(path, encoding="utf-8") as f:
        return parse_conllu(f.read())


# ---------------------------------------------------------------------------
# extraction


def _is_modifier_token(tok: Token) -> bool:
    if tok.upos not in MODIFIER_UPOS:
        return False
    if tok.upos == "VERB":
        return tok.is_participle()
    return True


def _modifies_a_noun(graph: DependencyGraph, tok: Token) -> bool:
    # Walk up through modifier arcs; a noun found on the way means `tok`
    # is (possibly indirectly) a modifier of that noun.
    if tok.base_rel not in TOP_LEVEL_BLOCKING_RELS:
        return False
    cur = tok
    seen = {tok.index}
    while cur.head != 0 and cur.base_rel in MODIFIER_RELS:
        head = graph.token(cur.head)
        if head.upos in NOMINAL:
            return True
        if head.index in seen:
            break
        seen.add(head.index)
        cur = head
    return False


def extract_entity_nouns(graph: DependencyGraph) -> list[int]:
    """Indices of nouns that denote depicted entities.

    A noun is dropped when it hangs off another noun through a non-conj
    modifier relation (directly, or through intermediate modifiers as in
    "watermelon-styled chair").
    """
    return [
        t.index
        for t in graph.tokens
        if t.upos in NOMINAL and not _modifies_a_noun(graph, t)
    ]


def _collect_from(graph, start, entity_nouns, acc):
    stack = [start]
    while stack:
        cur = stack.pop()
        for child in graph.children(cur):
            if child.base_rel not in MODIFIER_RELS:
                continue
            if child.index in entity_nouns:
                # a conjoined noun is its own entity
                continue
            if not _is_modifier_token(child) or child.index in acc:
                continue
            acc.add(child.index)
            stack.append(child.index)


def collect_modifiers(graph: DependencyGraph, noun: int, set_id: int = 1,
                      entity_nouns: Iterable[int] | None = None) -> BindingSet:
    """Recursively gather the modifiers bound to ``noun``.

    Besides the arcs below the noun, an ``acomp`` of the verb that takes the
    noun as its subject is bound to the noun ("The apple is blue").
    """
    if entity_nouns is None:
        entity_nouns = extract_entity_nouns(graph)
    entity_nouns = set(entity_nouns)
    acc: set[int] = set()
    _collect_from(graph, noun, entity_nouns, acc)

    tok = graph.token(noun)
    if tok.deprel.lower() in SUBJECT_RELS and tok.head != 0:
        for sib in graph.children(tok.head):
            if sib.base_rel == "acomp" and _is_modifier_token(sib) and sib.index not in entity_nouns:
                acc.add(sib.index)
                _collect_from(graph, sib.index, entity_nouns, acc)

    acc.discard(noun)
    return BindingSet(root_noun=noun, modifiers=frozenset(acc), set_id=set_id)


def pair_set(bset: BindingSet) -> PairSet:
    return PairSet(tuple((m, bset.root_noun) for m in sorted(bset.modifiers)))


def unmatched_set(bset: BindingSet, graph: DependencyGraph) -> UnmatchedSet:
    """Content words of the sentence outside ``bset``."""
    members = bset.members()
    return UnmatchedSet(frozenset(
        t.index for t in graph.tokens if t.upos in CONTENT_UPOS and t.index not in members
    ))


def _warn_orphan_acomp(graph: DependencyGraph) -> None:
    for tok in graph.tokens:
        if tok.base_rel != "acomp" or tok.head == 0:
            continue
        head = graph.token(tok.head)
        if head.upos in NOMINAL:
            continue
        has_subject = any(
            c.deprel.lower() in SUBJECT_RELS and c.upos in NOMINAL for c in graph.children(head.index)
        )
        if not has_subject:
            logger.warning("acomp %r (token %d) has no nominal subject; dropped", tok.surface, tok.index)


def extract_all(graph: DependencyGraph) -> list[tuple[BindingSet, PairSet, UnmatchedSet]]:
    nouns = extract_entity_nouns(graph)
    _warn_orphan_acomp(graph)
    out = []
    for i, noun in enumerate(nouns, start=1):
        bset = collect_modifiers(graph, noun, set_id=i, entity_nouns=nouns)
        out.append((bset, pair_set(bset), unmatched_set(bset, graph)))
    return out


def _ref(graph, index):
    return {"index": index, "surface": graph.token(index).surface}


def bindings_to_dict(graph: DependencyGraph, extracted=None) -> dict:
    """JSON-ready record for one sentence. Indices are 1-based."""
    if extracted is None:
        extracted = extract_all(graph)
    sets = []
    for bset, pairs, unmatched in extracted:
        sets.append({
            "root": _ref(graph, bset.root_noun),
            "modifiers": [_ref(graph, m) for m in sorted(bset.modifiers)],
            "pairs": [[m, n] for m, n in pairs],
            "unmatched": [_ref(graph, u) for u in unmatched],
        })
    return {
        "sentence": graph.sentence_text,
        "tokens": [t.surface for t in graph.tokens],
        "sets": sets,
    }


def bindings_from_dict(doc: dict) -> list[tuple[BindingSet, PairSet, UnmatchedSet]]:
    """Inverse of :func:`bindings_to_dict` (surfaces are ignored)."""
    out = []
    for i, s in enumerate(doc["sets"], start=1):
        root = int(s["root"]["index"])
        mods = frozenset(int(m["index"]) for m in s["modifiers"])
        bset = BindingSet(root, mods, i)
        pairs = PairSet(tuple((int(m), int(n)) for m, n in s["pairs"]))
        unmatched = UnmatchedSet(frozenset(int(u["index"]) for u in s["unmatched"]))
        for m, n in pairs:
            if n != root or m not in mods:
                raise ValueError(f"set {i}: pair {(m, n)} inconsistent with root {root}")
        out.append((bset, pairs, unmatched))
    return out


def dumps_bindings(graphs: list[DependencyGraph]) -> str:
    docs = [bindings_to_dict(g) for g in graphs]
    payload = docs[0] if len(docs) == 1 else docs
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"
