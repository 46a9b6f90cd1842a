"""
Reading modifier bindings off a dependency parse
================================================

Each entity noun in a prompt gets a binding set: the noun plus every word
that modifies it through amod, nmod, compound, npadvmod, acomp or conj arcs.
The words outside a set are its unmatched words.
"""
import os

from syngen.binding import extract_all, read_conllu

here = os.path.dirname(os.path.abspath(__file__))
graphs = read_conllu(os.path.join(here, "data", "prompts.conllu"))

# one line per binding set: root noun, its modifiers, then the unmatched words
for g in graphs:
    print(g.sentence_text)
    for bset, pairs, unmatched in extract_all(g):
        word = lambda i: g.token(i).surface  # noqa: E731
        mods = [word(m) for m in sorted(bset.modifiers)]
        print(f"  {word(bset.root_noun):>10}  mods={mods}  U={[word(u) for u in unmatched]}")
        print(f"  {'':>10}  pairs={[(word(m), word(n)) for m, n in pairs]}")

# "blue" reaches "apple" through the copula: acomp of the verb whose subject is
# the noun. "white" joins "black" via conj and so lands in the same set.
