"""Symmetric-KL attention losses and their analytic gradients.

Attention tensors are ``(N, D*D)`` arrays, one row per prompt token, each row
a distribution over image patches. Token-to-row lookup goes through a
:class:`PieceAlignment` so that words split into several word pieces are
handled by taking the piece pair with the largest distance.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

EPS_FLOOR = 1e-8


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class AttentionTensor:
    maps: np.ndarray
    grid_side: int | None  # None for flat, non-square test grids

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=float)
        if maps.ndim != 2:
            raise DimensionError(f"maps must be 2-D, got shape {maps.shape}")
        if self.grid_side is not None and maps.shape[1] != self.grid_side ** 2:
            raise DimensionError(f"rows have {maps.shape[1]} entries, grid side {self.grid_side} needs {self.grid_side ** 2}")
        object.__setattr__(self, "maps", maps)

    @property
    def n_tokens(self) -> int:
        return self.maps.shape[0]

    def __getitem__(self, i):
        return self.maps[i]


@dataclass(frozen=True)
class PieceAlignment:
    """Word index (1-based, as in the parse) to tensor row indices.

    Rows not covered by any word (e.g. start/end tokens) are simply never
    looked up.
    """

    pieces: Mapping[int, tuple[int, ...]]
    n_tokens: int

    def __post_init__(self):
        pieces = {int(w): tuple(int(p) for p in ps) for w, ps in self.pieces.items()}
        seen = set()
        for w, ps in pieces.items():
            if not ps:
                raise ValueError(f"word {w} has no pieces")
            for p in ps:
                if not 0 <= p < self.n_tokens:
                    raise ValueError(f"word {w}: piece {p} outside tensor of {self.n_tokens} rows")
                if p in seen:
                    raise ValueError(f"piece {p} assigned to more than one word")
                seen.add(p)
        object.__setattr__(self, "pieces", pieces)

    @classmethod
    def identity(cls, n_words: int) -> "PieceAlignment":
        return cls({w: (w - 1,) for w in range(1, n_words + 1)}, n_words)

    @classmethod
    def from_counts(cls, counts: Sequence[int], offset: int = 0, n_tokens: int | None = None) -> "PieceAlignment":
        """Consecutive pieces; ``counts[i]`` pieces for word ``i+1``.

        ``offset`` leading rows (a start-of-text token, say) are left unassigned.
        """
        pieces = {}
        row = offset
        for w, c in enumerate(counts, start=1):
            pieces[w] = tuple(range(row, row + c))
            row += c
        return cls(pieces, row if n_tokens is None else n_tokens)

    def __getitem__(self, word: int) -> tuple[int, ...]:
        try:
            return self.pieces[word]
        except KeyError:
            raise KeyError(f"word {word} not in alignment") from None


@dataclass
class LossReport:
    l_pos: float
    l_neg: float
    l_total: float
    per_pair: list = field(default_factory=list)
    per_unmatched: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "l_pos": self.l_pos,
            "l_neg": self.l_neg,
            "l_total": self.l_total,
            "pair_dists": {pair_key(p): d for p, d in self.per_pair},
            "unmatched_dists": {unmatched_key(p, u): d for (p, u), d in self.per_unmatched},
        }


def pair_key(pair) -> str:
    return f"{pair[0]}-{pair[1]}"


def unmatched_key(pair, u) -> str:
    return f"{pair[0]}-{pair[1]}:{u}"


# ---------------------------------------------------------------------------
# maps


def normalize_rows(raw_scores, grid_side: int | None = None, eps: float = EPS_FLOOR) -> AttentionTensor:
    """Row-normalize a tokens-to-patches score matrix into distributions.

    ``eps`` is added to every entry first so no probability is exactly zero.
    Pass the model-native patches-to-tokens matrix transposed.
    """
    raw = np.asarray(raw_scores, dtype=float)
    if raw.ndim != 2:
        raise DimensionError(f"expected a 2-D score matrix, got shape {raw.shape}")
    if grid_side is None:
        side = int(round(np.sqrt(raw.shape[1])))
        grid_side = side if side ** 2 == raw.shape[1] else None
    if np.any(raw < 0) or not np.all(np.isfinite(raw)):
        bad = int(np.argwhere((raw < 0) | ~np.isfinite(raw))[0, 0])
        raise ValueError(f"token {bad}: scores must be finite and non-negative")
    sums = raw.sum(axis=1)
    zero = np.flatnonzero(sums <= 0)
    if zero.size:
        raise ValueError(f"token {int(zero[0])}: all-zero attention row")
    floored = raw + eps
    return AttentionTensor(floored / floored.sum(axis=1, keepdims=True), grid_side)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_maps(logits, eps: float = EPS_FLOOR) -> np.ndarray:
    """Per-row softmax followed by the epsilon floor and renormalization."""
    z = np.asarray(logits, dtype=float)
    return (_softmax(z) + eps) / (1.0 + z.shape[1] * eps)


# ---------------------------------------------------------------------------
# distances


def sym_kl(a, b) -> float:
    """0.5 * KL(a||b) + 0.5 * KL(b||a), natural log."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionError(f"map sizes differ: {a.shape} vs {b.shape}")
    # 0.5*sum a log(a/b) + 0.5*sum b log(b/a) == 0.5*sum (a-b)(log a - log b)
    return float(0.5 * np.dot(a - b, np.log(a) - np.log(b)))


def _sym_kl_grad(a, b):
    """Gradients of sym_kl(a, b) with respect to a and b."""
    log_ratio = np.log(a) - np.log(b)
    ga = 0.5 * (log_ratio + 1.0 - b / a)
    gb = 0.5 * (-log_ratio + 1.0 - a / b)
    return ga, gb


def _word_distance_argmax(word_a, word_b, maps, align):
    if word_a == word_b:
        return 0.0, None
    pa = align[word_a]
    pb = align[word_b]
    best = -1.0
    best_pair = None
    # row-major scan keeps the lowest piece indices on ties
    for i in pa:
        for j in pb:
            d = sym_kl(maps[i], maps[j])
            if d > best:
                best = d
                best_pair = (i, j)
    return best, best_pair


def word_distance(word_a: int, word_b: int, tensor, align: PieceAlignment) -> float:
    """Distance between two words: max sym-KL over their piece pairs."""
    maps = tensor.maps if isinstance(tensor, AttentionTensor) else np.asarray(tensor)
    return _word_distance_argmax(word_a, word_b, maps, align)[0]


# ---------------------------------------------------------------------------
# losses


def _unpack(entry):
    # accepts (BindingSet, PairSet[, UnmatchedSet]) tuples
    bset, pairs = entry[0], entry[1]
    unmatched = entry[2] if len(entry) > 2 else ()
    return bset, pairs, unmatched


def _maps(tensor):
    return tensor.maps if isinstance(tensor, AttentionTensor) else np.asarray(tensor, dtype=float)


def loss_pos(tensor, sets, align: PieceAlignment) -> float:
    maps = _maps(tensor)
    total = 0.0
    for entry in sets:
        _, pairs, _ = _unpack(entry)
        for m, n in pairs:
            total += word_distance(m, n, maps, align)
    return total


def loss_neg(tensor, sets, align: PieceAlignment) -> float:
    maps = _maps(tensor)
    total = 0.0
    for entry in sets:
        _, pairs, unmatched = _unpack(entry)
        if not len(unmatched):
            continue
        inner = 0.0
        for m, n in pairs:
            for u in unmatched:
                inner += 0.5 * (word_distance(m, u, maps, align) + word_distance(u, n, maps, align))
        total -= inner / len(unmatched)
    return total


def loss_total(tensor, sets, align: PieceAlignment) -> LossReport:
    maps = _maps(tensor)
    per_pair = []
    per_unmatched = []
    l_pos = 0.0
    l_neg = 0.0
    for entry in sets:
        _, pairs, unmatched = _unpack(entry)
        for m, n in pairs:
            d = word_distance(m, n, maps, align)
            per_pair.append(((m, n), d))
            l_pos += d
        if not len(unmatched):
            continue
        inner = 0.0
        for m, n in pairs:
            for u in unmatched:
                avg = 0.5 * (word_distance(m, u, maps, align) + word_distance(u, n, maps, align))
                per_unmatched.append((((m, n), u), avg))
                inner += avg
        l_neg -= inner / len(unmatched)
    return LossReport(l_pos, l_neg, l_pos + l_neg, per_pair, per_unmatched)


def grad_maps(maps, sets, align: PieceAlignment) -> np.ndarray:
    """dL/dmaps. Word-piece maxima pass gradient through the argmax pair only."""
    maps = np.asarray(maps, dtype=float)
    g = np.zeros_like(maps)

    def add(word_a, word_b, coef):
        _, pair = _word_distance_argmax(word_a, word_b, maps, align)
        if pair is None:
            return
        i, j = pair
        ga, gb = _sym_kl_grad(maps[i], maps[j])
        g[i] += coef * ga
        g[j] += coef * gb

    for entry in sets:
        _, pairs, unmatched = _unpack(entry)
        for m, n in pairs:
            add(m, n, 1.0)
        if not len(unmatched):
            continue
        coef = -0.5 / len(unmatched)
        for m, n in pairs:
            for u in unmatched:
                add(m, u, coef)
                add(u, n, coef)
    return g


def grad_scores(logits, sets, align: PieceAlignment, eps: float = EPS_FLOOR) -> np.ndarray:
    """dL/dlogits for maps rendered by :func:`softmax_maps`.

    Chain rule through p = (softmax(z) + eps) / (1 + K*eps):
    dL/dz = s * (g - <g, s>) / (1 + K*eps), with g = dL/dp and s = softmax(z).
    """
    z = np.asarray(logits, dtype=float)
    s = _softmax(z)
    scale = 1.0 + z.shape[1] * eps
    g = grad_maps((s + eps) / scale, sets, align)
    inner = np.sum(g * s, axis=1, keepdims=True)
    return s * (g - inner) / scale


def loss_from_logits(logits, sets, align: PieceAlignment, eps: float = EPS_FLOOR) -> LossReport:
    return loss_total(softmax_maps(logits, eps), sets, align)


# ---------------------------------------------------------------------------
# serialization


def tensor_to_json(tensor: AttentionTensor) -> str:
    # json.dumps writes floats with repr(), the shortest round-trip form
    return json.dumps({"grid_side": tensor.grid_side, "maps": tensor.maps.tolist()}) + "\n"


def tensor_from_json(text: str, normalize: bool = True) -> AttentionTensor:
    doc = json.loads(text)
    if "grid_side" not in doc or "maps" not in doc:
        raise ValueError("attention JSON needs 'grid_side' and 'maps'")
    raw = np.asarray(doc["maps"], dtype=float)
    if raw.ndim != 2 or raw.shape[1] != int(doc["grid_side"]) ** 2:
        raise DimensionError(f"maps of shape {raw.shape} do not match grid side {doc['grid_side']}")
    if normalize:
        return normalize_rows(raw, int(doc["grid_side"]))
    return AttentionTensor(raw, int(doc["grid_side"]))


def tensor_to_csv(tensor: AttentionTensor) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in tensor.maps:
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def tensor_from_csv(text: str, grid_side: int | None = None, normalize: bool = True) -> AttentionTensor:
    rows = [[float(v) for v in r] for r in csv.reader(io.StringIO(text)) if r]
    raw = np.asarray(rows, dtype=float)
    if grid_side is None:
        grid_side = int(round(np.sqrt(raw.shape[1])))
    if normalize:
        return normalize_rows(raw, grid_side)
    return AttentionTensor(raw, grid_side)
